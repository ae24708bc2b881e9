"""Cell-model interface and the explicit state update used by the tissue solver."""
from __future__ import annotations

import math
from importlib import resources

import numpy as np
import yaml

from .units import current_density


class IonicError(FloatingPointError):
    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


def load_manifest(name: str) -> dict:
    """Parsed parameter manifest shipped in ``cardiofem/ionic/manifests``."""
    text = resources.files("cardiofem.ionic").joinpath("manifests", f"{name}.yaml").read_text()
    return yaml.safe_load(text)


class CellModel:
    """Base class for membrane models.

    Subclasses define ``state_names``, ``rates(V, U)`` returning dU/dt with the
    same (n, d) shape as ``U``, and ``current(V, U)`` returning the total ionic
    current per unit membrane capacitance in uA/uF (numerically mV/ms, positive
    outward). Parameters live in ``self.params`` and may be read or written by
    name through :meth:`get_param` / :meth:`set_param`.

    ``max_euler_dt`` caps the forward-Euler step (ms); models whose stiffness
    depends on the potential refine it per node via :meth:`euler_dt_limit`, and
    :meth:`advance` sub-steps each node accordingly. Models may override
    :meth:`advance` with a specialised (e.g. compiled, multirate) update.
    ``quiescence_bound`` bounds ``|dU/dt|`` and ``|I|`` at the resting state.
    """

    name = "cell"
    state_names: tuple[str, ...] = ()
    max_euler_dt = math.inf
    quiescence_bound = 0.0

    def __init__(self, manifest: dict, **overrides):
        self.manifest = manifest
        self.params = {k: float(v["value"]) for k, v in manifest["parameters"].items()}
        for key, value in overrides.items():
            self.set_param(key, value)
        init = manifest["initial_state"]
        self.V_rest = float(init["V"]["value"])
        self._u0 = np.array([float(init[s]["value"]) for s in self.state_names])

    @property
    def state_dimension(self) -> int:
        return len(self.state_names)

    def get_param(self, name: str) -> float:
        return self.params[name]

    def set_param(self, name: str, value: float) -> None:
        if name not in self.params:
            raise KeyError(f"{self.name} has no parameter {name!r}")
        self.params[name] = float(value)

    def initial_state(self, n: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Resting potential and state for ``n`` cells: (V (n,), U (n, d))."""
        return np.full(n, self.V_rest), np.tile(self._u0, (n, 1))

    def set_initial_state(self, name: str, value: float) -> None:
        if name == "V":
            self.V_rest = float(value)
            return
        self._u0[self.state_names.index(name)] = float(value)

    def euler_dt_limit(self, V: np.ndarray, U: np.ndarray) -> np.ndarray:
        """Largest stable forward-Euler step per node (ms) at frozen ``V``."""
        return np.full(V.shape, self.max_euler_dt)

    def advance(self, V: np.ndarray, U: np.ndarray, dt: float) -> np.ndarray:
        """Forward-Euler update over ``dt`` at frozen ``V``, sub-stepped per node.

        Where ``dt`` exceeds :meth:`euler_dt_limit` at a node, that node's update
        is split into equal sub-steps. Counts are chosen per node, so the result
        at a node never depends on other nodes.
        """
        U = np.array(U, dtype=np.float64, copy=True)
        limit = np.broadcast_to(self.euler_dt_limit(V, U), V.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            counts = np.ceil(dt / limit - 1e-9)
        counts = np.where(np.isfinite(counts), np.maximum(counts, 1), 1).astype(np.int64)
        for c in np.unique(counts):
            sel = counts == c
            h = dt / c
            Vs, Us = V[sel], U[sel]
            with np.errstate(over="ignore"):  # saturating exponentials in gate kinetics
                for _ in range(c):
                    Us = Us + h * self.rates(Vs, Us)
            U[sel] = Us
        return U

    def rates(self, V: np.ndarray, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def current(self, V: np.ndarray, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def ionic_step(model: CellModel, V, U, dt: float, cm: float = 1.0):
    """Advance the states with forward Euler at frozen ``V`` and evaluate the current.

    Returns ``(U_next, I_ion)`` where ``U_next = U + dt*g(V, U)`` and
    ``I_ion`` is evaluated at the old potential and the *new* states, converted
    to a membrane current density with capacitance ``cm`` (uF/mm^2 gives
    uA/mm^2; the default ``cm=1`` returns uA/uF). Where ``dt`` exceeds the
    model's stable step at a node, the update is sub-stepped at the same frozen
    ``V`` (see :meth:`CellModel.advance`); nodes are updated independently.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    V = np.asarray(V, dtype=np.float64)
    U = np.array(U, dtype=np.float64, copy=True)
    if U.shape != (V.shape[0], model.state_dimension):
        raise ValueError(f"state array must be {(V.shape[0], model.state_dimension)}, got {U.shape}")
    if dt > 0 and V.size:
        U = model.advance(V, U, dt)
    with np.errstate(all="ignore"):
        I_ion = current_density(model.current(V, U), cm)
    bad = ~np.isfinite(I_ion) | ~np.isfinite(U).all(axis=1)
    if bad.any():
        raise IonicError(f"non-finite ionic state at node {int(np.flatnonzero(bad)[0])}", int(np.flatnonzero(bad)[0]))
    return U, I_ion

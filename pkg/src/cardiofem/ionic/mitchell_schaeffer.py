"""Mitchell-Schaeffer two-current model with an affine map to millivolts."""
from __future__ import annotations

import numpy as np

from .base import CellModel, load_manifest


class MitchellSchaeffer(CellModel):
    """Two-variable phenomenological model.

    Normalised potential ``v = (V - V_min) / (V_max - V_min)`` obeys
    ``dv/dt = w v^2 (1 - v) / tau_in - v / tau_out`` and the gate ``w``
    opens toward 1 with ``tau_open`` below ``v_gate`` and closes toward 0
    with ``tau_close`` above it. Forward Euler keeps ``w`` in [0, 1] for
    ``dt <= min(tau_open, tau_close)``; the potential equation is the
    tighter limit, hence ``max_euler_dt``.
    """

    name = "mitchell_schaeffer"
    state_names = ("w",)
    max_euler_dt = 0.1
    quiescence_bound = 1e-12

    def __init__(self, **overrides):
        super().__init__(load_manifest("mitchell_schaeffer"), **overrides)

    def normalised(self, V):
        p = self.params
        return (V - p["V_min"]) / (p["V_max"] - p["V_min"])

    @property
    def gate_stability_bound(self) -> float:
        return min(self.params["tau_open"], self.params["tau_close"])

    def rates(self, V, U):
        p = self.params
        v = self.normalised(V)
        w = U[:, 0]
        dw = np.where(v < p["v_gate"], (1.0 - w) / p["tau_open"], -w / p["tau_close"])
        return dw[:, None]

    def current(self, V, U):
        p = self.params
        v = self.normalised(V)
        w = U[:, 0]
        j_in = w * v * v * (1.0 - v) / p["tau_in"]
        j_out = -v / p["tau_out"]
        return -(p["V_max"] - p["V_min"]) * (j_in + j_out)


def make_mitchell_schaeffer(**overrides) -> MitchellSchaeffer:
    return MitchellSchaeffer(**overrides)

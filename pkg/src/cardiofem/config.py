"""File-backed run configuration (YAML).

Example::

    mesh:
      path: meshes/slab          # .pts/.elem/.lon base path, relative to this file
      unit_conversion: 1000      # file units per mm (um -> mm)
      # or: cuboid: {lx: 20, ly: 7, lz: 3, dx: 0.5}
    conductivity:                # region tag -> [sigma_l, sigma_t] in S/m
      0: [0.1334177, 0.0173515]
    ionic_model:
      name: ten_tusscher_panfilov
      options: {cell_type: epi}
      parameters: {g_to: 0.294}
    stimuli:
      - nodes_file: stim_corner.txt   # one zero-based node index per line
        start: 0.0
        duration: 2.0
        intensity: 50.0
        units: volumetric             # uA/mm^3 (divided by chi) or membrane (uA/mm^2)
    simulation:
      theta: 0.5
      dt: 0.005
      T_total: 100.0
      chi: 140.0
      Cm: 0.01
      output_interval: 10.0
      solver: {abs_tol: 1.0e-5, rel_tol: 1.0e-5, max_iters: 100}
    output_dir: out
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .ionic import CellModel, make_model, volumetric_to_membrane
from .mesh import Mesh, MeshError, generate_cuboid_mesh, load_mesh
from .monodomain import ConfigError, SimulationConfig, Stimulus
from .solver import SolverSettings

STIMULUS_UNITS = ("membrane", "volumetric")


@dataclass(frozen=True)
class MeshSpec:
    path: str | None = None
    unit_conversion: float = 1.0
    cuboid: dict | None = None

    def __post_init__(self):
        if (self.path is None) == (self.cuboid is None):
            raise ConfigError("mesh needs exactly one of 'path' or 'cuboid'")
        if not self.unit_conversion > 0:
            raise ConfigError("unit_conversion must be positive")
        if self.cuboid is not None and set(self.cuboid) != {"lx", "ly", "lz", "dx"}:
            raise ConfigError("cuboid needs exactly the keys lx, ly, lz, dx")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    options: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StimulusSpec:
    nodes_file: str
    start: float
    duration: float
    intensity: float
    units: str = "membrane"

    def __post_init__(self):
        if self.units not in STIMULUS_UNITS:
            raise ConfigError(f"stimulus units must be one of {STIMULUS_UNITS}")
        if not self.duration > 0:
            raise ConfigError("stimulus duration must be positive")


@dataclass(frozen=True)
class RunConfig:
    mesh: MeshSpec
    conductivity: dict[int, tuple[float, float]]
    ionic_model: ModelSpec
    stimuli: tuple[StimulusSpec, ...]
    simulation: SimulationConfig
    output_dir: str = "out"
    base_dir: Path = field(default=Path("."), compare=False)

    def resolve(self, relative: str) -> Path:
        p = Path(relative)
        return p if p.is_absolute() else self.base_dir / p


# ---------------------------------------------------------------- parse / serialise


def _section(raw: dict, key: str, required: bool = True):
    if key not in raw:
        if required:
            raise ConfigError(f"missing section '{key}'")
        return None
    return raw[key]


def _build(cls, data, what: str):
    if not isinstance(data, dict):
        raise ConfigError(f"'{what}' must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in '{what}': {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{what}': {exc}") from None


def config_from_dict(raw: dict, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(raw) - {"mesh", "conductivity", "ionic_model", "stimuli", "simulation", "output_dir"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    mesh = _build(MeshSpec, _section(raw, "mesh"), "mesh")
    cond_raw = _section(raw, "conductivity")
    if not isinstance(cond_raw, dict) or not cond_raw:
        raise ConfigError("'conductivity' must map region tags to [sigma_l, sigma_t]")
    conductivity = {}
    for tag, pair in cond_raw.items():
        try:
            sl, st = (float(v) for v in pair)
            conductivity[int(tag)] = (sl, st)
        except (TypeError, ValueError):
            raise ConfigError(f"conductivity for region {tag!r} must be two numbers") from None
        if not (sl > 0 and st > 0):
            raise ConfigError(f"conductivity for region {tag} must be positive")
    model = _build(ModelSpec, _section(raw, "ionic_model"), "ionic_model")
    stim_raw = raw.get("stimuli") or []
    if not isinstance(stim_raw, list):
        raise ConfigError("'stimuli' must be a list")
    stimuli = tuple(_build(StimulusSpec, s, "stimuli[]") for s in stim_raw)
    sim_raw = dict(_section(raw, "simulation"))
    solver = _build(SolverSettings, sim_raw.pop("solver", {}) or {}, "simulation.solver")
    sim = _build(SimulationConfig, {**sim_raw, "solver": solver}, "simulation")
    return RunConfig(mesh, conductivity, model, stimuli, sim, str(raw.get("output_dir", "out")), base_dir)


def config_to_dict(cfg: RunConfig) -> dict:
    mesh = {k: v for k, v in dataclasses.asdict(cfg.mesh).items() if v is not None}
    sim = dataclasses.asdict(cfg.simulation)
    return {
        "mesh": mesh,
        "conductivity": {int(k): [float(a), float(b)] for k, (a, b) in cfg.conductivity.items()},
        "ionic_model": dataclasses.asdict(cfg.ionic_model),
        "stimuli": [dataclasses.asdict(s) for s in cfg.stimuli],
        "simulation": sim,
        "output_dir": cfg.output_dir,
    }


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(raw, path.parent)


def dump_run_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))


# ---------------------------------------------------------------- materialise


def read_node_file(path) -> np.ndarray:
    """Zero-based node indices, one per line (blank lines ignored)."""
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"stimulus node file not found: {path}")
    try:
        return np.array([int(line) for line in path.read_text().split()], dtype=np.int64)
    except ValueError:
        raise MeshError(f"{path}: node indices must be integers") from None


def write_node_file(nodes, path) -> None:
    Path(path).write_text("".join(f"{int(i)}\n" for i in nodes))


def build_mesh(cfg: RunConfig) -> Mesh:
    if cfg.mesh.cuboid is not None:
        c = cfg.mesh.cuboid
        return generate_cuboid_mesh(c["lx"], c["ly"], c["lz"], c["dx"])
    return load_mesh(cfg.resolve(cfg.mesh.path), cfg.mesh.unit_conversion)


def build_model(cfg: RunConfig) -> CellModel:
    try:
        return make_model(cfg.ionic_model.name, **cfg.ionic_model.options, **cfg.ionic_model.parameters)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"ionic_model: {exc}") from None


def build_stimuli(cfg: RunConfig, n_nodes: int) -> list[Stimulus]:
    out = []
    for spec in cfg.stimuli:
        path = cfg.resolve(spec.nodes_file)
        nodes = read_node_file(path)
        if nodes.size and (nodes.min() < 0 or nodes.max() >= n_nodes):
            raise MeshError(f"{path}: node index outside mesh of {n_nodes} nodes")
        intensity = spec.intensity
        if spec.units == "volumetric":
            intensity = volumetric_to_membrane(intensity, cfg.simulation.chi)
        out.append(Stimulus(nodes, spec.start, spec.duration, intensity))
    return out


def check_regions(cfg: RunConfig, mesh: Mesh) -> None:
    missing = sorted(set(mesh.region_tags()) - set(cfg.conductivity))
    if missing:
        raise ConfigError(f"no conductivity given for region tags {missing}")

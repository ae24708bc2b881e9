"""Unstructured P1 meshes: the three-file text format and structured generators.

A mesh on disk is three companion files sharing a base path::

    <base>.pts   N, then N lines "x y z"
    <base>.elem  E, then E lines "Tr i j k tag" or "Tt i j k l tag" (zero-based)
    <base>.lon   E lines "fx fy fz" (any magnitude, normalised on load)

Internal length unit is the millimetre.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRIANGLE = "triangle"
TETRAHEDRON = "tetrahedron"

_ELEM_CODES = {"Tr": (TRIANGLE, 3), "Tt": (TETRAHEDRON, 4)}
_KIND_CODES = {TRIANGLE: "Tr", TETRAHEDRON: "Tt"}

# relative to the element's bounding-box scale
_DEGENERATE_TOL = 1e-14


class MeshError(ValueError):
    """Malformed, missing or geometrically invalid mesh input."""


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray  # (N, 3) float64, mm
    elements: np.ndarray  # (E, 3|4) int64
    regions: np.ndarray  # (E,) int64
    fibers: np.ndarray  # (E, 3) float64, unit length
    kind: str
    boundary_nodes: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("nodes", "elements", "regions", "fibers", "boundary_nodes"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def element_measures(self) -> np.ndarray:
        return np.abs(signed_measures(self.nodes, self.elements))

    def region_tags(self) -> list[int]:
        return sorted(int(t) for t in np.unique(self.regions))


def signed_measures(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Signed volume (tets) or area (triangles) of every element.

    Triangles lying in a z = const plane get the sign of their xy orientation;
    triangles embedded in 3D are unsigned since they have no global orientation.
    """
    p = nodes[elements]
    if elements.shape[1] == 4:
        d = p[:, 1:] - p[:, :1]
        return np.linalg.det(d) / 6.0
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    cross = np.cross(e1, e2)
    area = 0.5 * np.linalg.norm(cross, axis=1)
    planar = np.all(np.isclose(p[:, :, 2], p[:, :1, 2], rtol=0.0, atol=1e-12), axis=1)
    sign = np.where(planar & (cross[:, 2] < 0), -1.0, 1.0)
    return sign * area


def _orient(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Swap the last two indices of negatively oriented elements; reject degenerate ones."""
    elements = np.array(elements, dtype=np.int64, copy=True)
    meas = signed_measures(nodes, elements)
    p = nodes[elements]
    scale = np.ptp(p, axis=1).max(axis=1)
    dim = elements.shape[1] - 1
    bad = np.abs(meas) <= _DEGENERATE_TOL * np.maximum(scale, 1e-300) ** dim
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise MeshError(f"element {idx} has zero measure")
    neg = meas < 0
    elements[neg, -2], elements[neg, -1] = elements[neg, -1], elements[neg, -2].copy()
    return elements


def _normalise_fibers(fibers: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(fibers, axis=1)
    if np.any(norms == 0.0):
        idx = int(np.flatnonzero(norms == 0.0)[0])
        raise MeshError(f"zero-length fiber vector on element {idx}")
    return fibers / norms[:, None]


def make_mesh(nodes, elements, regions=None, fibers=None, boundary_nodes=None) -> Mesh:
    """Validate raw arrays and build an immutable :class:`Mesh`."""
    nodes = np.asarray(nodes, dtype=np.float64)
    if nodes.ndim != 2 or nodes.shape[1] not in (2, 3):
        raise MeshError(f"nodes must be (N, 3), got {nodes.shape}")
    if nodes.shape[1] == 2:
        nodes = np.column_stack([nodes, np.zeros(len(nodes))])
    elements = np.asarray(elements, dtype=np.int64)
    if elements.ndim != 2 or elements.shape[1] not in (3, 4):
        raise MeshError(f"elements must be (E, 3) or (E, 4), got {elements.shape}")
    n_elem = elements.shape[0]
    if elements.size and (elements.min() < 0 or elements.max() >= nodes.shape[0]):
        bad = int(np.flatnonzero((elements < 0).any(1) | (elements >= len(nodes)).any(1))[0])
        raise MeshError(f"element {bad} references a node outside [0, {len(nodes)})")
    regions = np.zeros(n_elem, dtype=np.int64) if regions is None else np.asarray(regions, dtype=np.int64)
    if fibers is None:
        fibers = np.tile([1.0, 0.0, 0.0], (n_elem, 1))
    fibers = np.asarray(fibers, dtype=np.float64)
    if regions.shape != (n_elem,) or fibers.shape != (n_elem, 3):
        raise MeshError("regions/fibers must have one entry per element")
    kind = TRIANGLE if elements.shape[1] == 3 else TETRAHEDRON
    if boundary_nodes is not None:
        boundary_nodes = np.asarray(boundary_nodes, dtype=np.int64)
    return Mesh(
        nodes=nodes,
        elements=_orient(nodes, elements),
        regions=regions,
        fibers=_normalise_fibers(fibers),
        kind=kind,
        boundary_nodes=boundary_nodes,
    )


# ---------------------------------------------------------------- file I/O


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise MeshError(f"missing mesh file: {path}")
    with open(path) as fh:
        return [ln for ln in (raw.strip() for raw in fh) if ln]


def _header_count(lines: list[str], path: Path) -> int:
    try:
        return int(lines[0].split()[0])
    except (IndexError, ValueError):
        raise MeshError(f"{path}: first line must be an integer count") from None


def load_mesh(base_path, unit_conversion: float = 1.0) -> Mesh:
    """Read ``<base>.pts/.elem/.lon`` and return a mesh in millimetres.

    Raw coordinates are divided by ``unit_conversion`` (1000 for a mesh in
    microns).
    """
    if not unit_conversion > 0:
        raise MeshError(f"unit_conversion must be positive, got {unit_conversion}")
    base = Path(base_path)
    pts_path, elem_path, lon_path = (base.with_name(base.name + ext) for ext in (".pts", ".elem", ".lon"))

    lines = _read_lines(pts_path)
    n_nodes = _header_count(lines, pts_path)
    if len(lines) - 1 != n_nodes:
        raise MeshError(f"{pts_path}: header says {n_nodes} nodes, body has {len(lines) - 1}")
    try:
        nodes = np.array([ln.split()[:3] for ln in lines[1:]], dtype=np.float64).reshape(n_nodes, 3)
    except ValueError as exc:
        raise MeshError(f"{pts_path}: {exc}") from None

    lines = _read_lines(elem_path)
    n_elem = _header_count(lines, elem_path)
    if len(lines) - 1 != n_elem:
        raise MeshError(f"{elem_path}: header says {n_elem} elements, body has {len(lines) - 1}")
    codes = {ln.split()[0] for ln in lines[1:]}
    if len(codes) != 1 or not codes <= _ELEM_CODES.keys():
        raise MeshError(f"{elem_path}: expected a single element type of Tr/Tt, found {sorted(codes)}")
    _, k = _ELEM_CODES[codes.pop()]
    try:
        body = np.array([ln.split()[1 : k + 2] for ln in lines[1:]], dtype=np.int64).reshape(n_elem, k + 1)
    except ValueError as exc:
        raise MeshError(f"{elem_path}: {exc}") from None
    elements, regions = body[:, :k], body[:, k]

    lines = _read_lines(lon_path)
    # tolerate the one-integer header some exporters write
    if len(lines) == n_elem + 1 and len(lines[0].split()) == 1:
        lines = lines[1:]
    if len(lines) != n_elem:
        raise MeshError(f"{lon_path}: expected {n_elem} fiber lines, found {len(lines)}")
    try:
        fibers = np.array([ln.split()[:3] for ln in lines], dtype=np.float64).reshape(n_elem, 3)
    except ValueError as exc:
        raise MeshError(f"{lon_path}: {exc}") from None

    return make_mesh(nodes / unit_conversion, elements, regions, fibers)


def save_mesh(mesh: Mesh, base_path, unit_conversion: float = 1.0) -> None:
    """Write ``mesh`` in the three-file format, scaling coordinates by ``unit_conversion``."""
    base = Path(base_path)
    base.parent.mkdir(parents=True, exist_ok=True)
    code = _KIND_CODES[mesh.kind]
    with open(base.with_name(base.name + ".pts"), "w") as fh:
        fh.write(f"{mesh.n_nodes}\n")
        np.savetxt(fh, mesh.nodes * unit_conversion, fmt="%.17g")
    with open(base.with_name(base.name + ".elem"), "w") as fh:
        fh.write(f"{mesh.n_elements}\n")
        for conn, tag in zip(mesh.elements, mesh.regions):
            fh.write(f"{code} {' '.join(map(str, conn))} {tag}\n")
    with open(base.with_name(base.name + ".lon"), "w") as fh:
        np.savetxt(fh, mesh.fibers, fmt="%.17g")


# ---------------------------------------------------------------- generators

# Kuhn split of the unit cube: one tet per axis permutation, all sharing the
# 000-111 diagonal. Corner index = i + 2j + 4k. Using the same diagonal in every
# cell makes neighbouring faces match, so the mesh is conforming.
_AXIS_BIT = (1, 2, 4)
KUHN_TETS = np.array(
    [
        [0, _AXIS_BIT[a], _AXIS_BIT[a] + _AXIS_BIT[b], 7]
        for a, b, _ in itertools.permutations(range(3))
    ],
    dtype=np.int64,
)


def _grid_count(length: float, dx: float, name: str) -> int:
    n = length / dx
    rounded = round(n)
    if rounded < 1 or abs(n - rounded) > 1e-9 * max(1.0, n):
        raise MeshError(f"{name}={length} is not a multiple of dx={dx}")
    return int(rounded)


def generate_cuboid_mesh(lx: float, ly: float, lz: float, dx: float) -> Mesh:
    """Structured tetrahedral mesh of ``[0,lx]x[0,ly]x[0,lz]`` with spacing ``dx``.

    Nodes are numbered x-fastest. Each hexahedral cell is cut into the six Kuhn
    tetrahedra (see ``KUHN_TETS``). Fibers are (1, 0, 0), region tag 0.
    """
    if not dx > 0:
        raise MeshError("dx must be positive")
    nx, ny, nz = (_grid_count(v, dx, name) for v, name in ((lx, "lx"), (ly, "ly"), (lz, "lz")))
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    zs = np.linspace(0.0, lz, nz + 1)
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def nid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    corners = np.stack(
        [nid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) for c in range(8)], axis=1
    )
    elements = corners[:, KUHN_TETS].reshape(-1, 4)
    return make_mesh(nodes, elements)


def generate_unit_square_mesh(n: int) -> Mesh:
    """Uniform triangulation of [0,1]^2 with ``n`` subdivisions per side.

    Each grid cell is split along its (i,j)-(i+1,j+1) diagonal. The returned
    mesh carries ``boundary_nodes`` (nodes with x or y in {0, 1}).
    """
    if n < 1:
        raise MeshError("n must be >= 1")
    s = np.linspace(0.0, 1.0, n + 1)
    Y, X = np.meshgrid(s, s, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    p00 = (i + (n + 1) * j).ravel()
    p10, p01 = p00 + 1, p00 + n + 1
    p11 = p01 + 1
    elements = np.concatenate([np.stack([p00, p10, p11], 1), np.stack([p00, p11, p01], 1)])
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    on_edge = (ii == 0) | (ii == n) | (jj == 0) | (jj == n)
    boundary = np.flatnonzero(on_edge.ravel())
    return make_mesh(nodes, elements, boundary_nodes=boundary)

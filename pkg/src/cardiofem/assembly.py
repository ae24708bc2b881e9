"""P1 finite-element assembly of mass and anisotropic stiffness matrices.

Matrices are ``scipy.sparse`` objects: element contributions are scattered
into COO triplets, duplicates are summed on conversion to CSR. Conductivities
are in S/m, which equals uA/(mV mm) in the mm/ms/mV unit system, so no
rescaling is needed.
"""
from __future__ import annotations

from collections import deque
from collections.abc import Mapping

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

ConductivityField = Mapping[int, tuple[float, float]]

_FIBER_TOL = 1e-9


class AssemblyError(ValueError):
    pass


def conductivity_tensor(fiber, sigma_l: float, sigma_t: float) -> np.ndarray:
    """Transversely isotropic tensor ``sigma_t*I + (sigma_l - sigma_t)*f f^T``."""
    f = np.asarray(fiber, dtype=np.float64)
    if abs(np.linalg.norm(f) - 1.0) > _FIBER_TOL:
        raise AssemblyError(f"fiber must be a unit vector, |f| = {np.linalg.norm(f)}")
    return sigma_t * np.eye(3) + (sigma_l - sigma_t) * np.outer(f, f)


def _tensors(fibers: np.ndarray, sigma_l: np.ndarray, sigma_t: np.ndarray) -> np.ndarray:
    ff = np.einsum("ei,ej->eij", fibers, fibers)
    return sigma_t[:, None, None] * np.eye(3) + (sigma_l - sigma_t)[:, None, None] * ff


def _check_conductivity(conductivity: ConductivityField, tags) -> None:
    for tag in tags:
        if tag not in conductivity:
            raise AssemblyError(f"no conductivity given for region tag {tag}")
        sl, st = conductivity[tag]
        if not (sl > 0 and st > 0):
            raise AssemblyError(f"region {tag}: conductivities must be positive, got {(sl, st)}")


# --------------------------------------------------------------- element level


def _gradients(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Basis-function gradients and measures for a batch of elements.

    ``p`` has shape (E, k, 3). Returns (grads (E, k, 3), measure (E,)).
    Triangles may be embedded in 3D; their gradients live in the element plane.
    """
    k = p.shape[1]
    edges = p[:, 1:] - p[:, :1]  # (E, k-1, 3) rows are edge vectors
    ref = np.vstack([-np.ones(k - 1), np.eye(k - 1)])  # reference gradients (k, k-1)
    if k == 4:
        J = np.transpose(edges, (0, 2, 1))  # columns are edges
        det = np.linalg.det(J)
        if np.any(np.abs(det) == 0.0):
            raise AssemblyError("degenerate tetrahedron")
        Jinv = np.linalg.inv(J)
        return ref @ Jinv, np.abs(det) / 6.0
    # metric tensor of the (possibly embedded) triangle: grad = J (J^T J)^{-1} ref
    G = edges @ np.transpose(edges, (0, 2, 1))  # (E, 2, 2)
    detG = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0]
    if np.any(detG <= 0.0):
        raise AssemblyError("degenerate triangle")
    Ginv = np.linalg.inv(G)
    return ref @ Ginv @ edges, 0.5 * np.sqrt(detG)


def _mass_batch(measure: np.ndarray, k: int) -> np.ndarray:
    pattern = (np.ones((k, k)) + np.eye(k)) / (12.0 if k == 3 else 20.0)
    return measure[:, None, None] * pattern


def _stiffness_batch(grads: np.ndarray, measure: np.ndarray, tensors: np.ndarray) -> np.ndarray:
    Ke = measure[:, None, None] * np.einsum("eai,eij,ebj->eab", grads, tensors, grads)
    return 0.5 * (Ke + np.transpose(Ke, (0, 2, 1)))


def _as_coords(coords) -> np.ndarray:
    p = np.asarray(coords, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] not in (3, 4):
        raise AssemblyError(f"expected 3 or 4 vertices, got shape {p.shape}")
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(p.shape[0])])
    return p


def local_mass_matrix(coords) -> np.ndarray:
    """Consistent P1 mass matrix of one triangle or tetrahedron."""
    p = _as_coords(coords)
    _, measure = _gradients(p[None])
    return _mass_batch(measure, p.shape[0])[0]


def local_stiffness_matrix(coords, tensor) -> np.ndarray:
    """``K_e[a, b] = |e| grad(phi_a)^T sigma grad(phi_b)`` for one element."""
    p = _as_coords(coords)
    grads, measure = _gradients(p[None])
    return _stiffness_batch(grads, measure, np.asarray(tensor, dtype=np.float64)[None])[0]


# --------------------------------------------------------------- global level


def _scatter(elements: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    k = elements.shape[1]
    rows = np.repeat(elements, k, axis=1).ravel()
    cols = np.tile(elements, (1, k)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    # (A + A^T)/2 is bitwise symmetric whatever order duplicates were summed in
    A = (0.5 * (A + A.T)).tocsr()
    A.sort_indices()
    return A


def assemble(
    mesh: Mesh, conductivity: ConductivityField, lumped: bool = False
) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Global mass ``M`` and stiffness ``K`` matrices in CSR form."""
    _check_conductivity(conductivity, mesh.region_tags())
    lut_l = {t: float(conductivity[t][0]) for t in mesh.region_tags()}
    lut_t = {t: float(conductivity[t][1]) for t in mesh.region_tags()}
    sigma_l = np.array([lut_l[int(t)] for t in mesh.regions]) if mesh.n_elements else np.empty(0)
    sigma_t = np.array([lut_t[int(t)] for t in mesh.regions]) if mesh.n_elements else np.empty(0)

    k = mesh.elements.shape[1]
    grads, measure = _gradients(mesh.nodes[mesh.elements])
    Me = _mass_batch(measure, k)
    Ke = _stiffness_batch(grads, measure, _tensors(mesh.fibers, sigma_l, sigma_t))
    n = mesh.n_nodes
    M = _scatter(mesh.elements, Me, n)
    if lumped:
        M = sp.diags(np.asarray(M.sum(axis=1)).ravel(), format="csr")
    return M, _scatter(mesh.elements, Ke, n)


# --------------------------------------------------------------- reordering


def bandwidth(A) -> int:
    A = sp.coo_matrix(A)
    if A.nnz == 0:
        return 0
    return int(np.abs(A.row - A.col).max())


def rcm_permutation(pattern) -> np.ndarray:
    """Reverse Cuthill-McKee ordering of a structurally symmetric pattern.

    Each connected component starts from its lowest-degree node (lowest index
    on ties); neighbours are visited by ascending degree, then index. Returns
    ``p`` such that new index ``i`` holds old node ``p[i]``.
    """
    A = sp.csr_matrix(pattern)
    n, m = A.shape
    if n != m:
        raise AssemblyError(f"pattern must be square, got {A.shape}")
    indptr, indices = A.indptr, A.indices
    rows = np.repeat(np.arange(n), np.diff(indptr))
    offdiag = indices != rows
    degree = np.bincount(rows[offdiag], minlength=n)

    visited = np.zeros(n, dtype=bool)
    order: list[int] = []
    starts = np.lexsort((np.arange(n), degree))
    cursor = 0
    while len(order) < n:
        while visited[starts[cursor]]:
            cursor += 1
        root = int(starts[cursor])
        visited[root] = True
        queue = deque([root])
        while queue:
            node = queue.popleft()
            order.append(node)
            nbrs = indices[indptr[node] : indptr[node + 1]]
            nbrs = np.unique(nbrs[~visited[nbrs]])
            if nbrs.size:
                nbrs = nbrs[np.lexsort((nbrs, degree[nbrs]))]
                visited[nbrs] = True
                queue.extend(nbrs.tolist())
    return np.array(order[::-1], dtype=np.int64)


def _check_permutation(p, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=np.int64)
    if p.shape != (n,) or not np.array_equal(np.sort(p), np.arange(n)):
        raise AssemblyError("not a valid permutation")
    return p


def inverse_permutation(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.int64)
    inv = np.empty_like(p)
    inv[p] = np.arange(p.size)
    return inv


def permute_system(M, K, p):
    """Symmetrically permute ``M`` and ``K``: ``M'[i, j] = M[p[i], p[j]]``.

    Returns ``(M', K', p, p_inverse)``. Vectors go into the permuted system as
    ``x[p]`` and come back as ``x_perm[p_inverse]``.
    """
    p = _check_permutation(p, M.shape[0])
    Mp = sp.csr_matrix(M)[p][:, p].tocsr()
    Kp = sp.csr_matrix(K)[p][:, p].tocsr()
    Mp.sort_indices()
    Kp.sort_indices()
    return Mp, Kp, p, inverse_permutation(p)

"""Finite-difference assembly of the particle and boson operators.

Every divergence-form operator ``-div(M grad)`` is assembled from its quadratic
form cell by cell. On each lattice cell the matrix field is averaged over the
cell corners; the diagonal part of the form uses the mean of the squared edge
differences, the off-diagonal part the product of mean edge differences. The
per-cell form dominates ``g^T M_c g`` by Jensen's inequality, so the assembled
matrix is positive semidefinite for any elliptic field, and with ``M = Id`` it
reduces exactly to the standard ``(2d + 1)``-point Laplacian.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .grid import CoefficientSpec, Grid, SpecError

KINDS = ("K0", "K", "H0FIELD", "H", "OMEGA", "L", "OTHER")
DENSE_CAP = 4096


class DenseCapError(RuntimeError):
    """The requested dense computation exceeds the configured size cap."""


def check_cap(n: int, cap: int | None = None) -> None:
    cap = DENSE_CAP if cap is None else cap
    if n > cap:
        raise DenseCapError(f"dense size {n} exceeds cap {cap}")


@dataclass(frozen=True, eq=False)
class LatticeOperator:
    matrix: np.ndarray
    kind: str
    grid: Grid
    spec: CoefficientSpec | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("operator matrix must be square")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def asymmetry(self) -> float:
        """``max|M - M^T| / max|M|``."""
        scale = np.max(np.abs(self.matrix)) or 1.0
        return float(np.max(np.abs(self.matrix - self.matrix.T)) / scale)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return self.asymmetry() <= tol

    @cached_property
    def spectrum(self):
        from .spectral import eigendecompose

        return eigendecompose(self)


def _edge_operators(grid: Grid):
    """Sparse edge-difference and cell-to-node maps on the full node lattice.

    Returns ``(E, corners)`` where ``E[j]`` is a list of the ``2^{d-1}``
    difference matrices ``(n_cells, n_nodes)`` along axis ``j`` and
    ``corners`` is the ``(n_cells, 2^d)`` array of corner node indices.
    """
    d, N = grid.d, grid.N
    periodic = grid.boundary == "periodic"
    nc = N if periodic else N - 1
    cells = np.stack(
        np.unravel_index(np.arange(nc**d), (nc,) * d), axis=-1
    )  # lower corners
    n_cells = cells.shape[0]
    rows = np.arange(n_cells)

    def node(offset):
        idx = cells + np.asarray(offset)
        if periodic:
            idx = idx % N
        return np.ravel_multi_index(tuple(idx.T), (N,) * d)

    offsets = list(itertools.product((0, 1), repeat=d))
    corners = np.stack([node(o) for o in offsets], axis=1)
    E = []
    for j in range(d):
        mats = []
        for o in offsets:
            if o[j]:
                continue
            hi = list(o)
            hi[j] = 1
            lo_n, hi_n = node(o), node(hi)
            data = np.concatenate([np.ones(n_cells), -np.ones(n_cells)])
            mats.append(
                sp.csr_matrix(
                    (data, (np.concatenate([rows, rows]), np.concatenate([hi_n, lo_n]))),
                    shape=(n_cells, N**d),
                )
            )
        E.append(mats)
    return E, corners


def _interior_selector(grid: Grid) -> np.ndarray:
    """Full-lattice indices of the unknowns, ordered like ``grid.points``."""
    N, d = grid.N, grid.d
    if grid.boundary == "periodic":
        return np.arange(N**d)
    mi = grid.multi_index(np.arange(grid.n_points)) + 1
    return np.ravel_multi_index(tuple(mi.T), (N,) * d)


def form_matrix(grid: Grid, field_values: np.ndarray) -> np.ndarray:
    """Dimensionless form matrix ``Q`` with ``f^T Q f = sum_cells form_c(f)``.

    ``field_values`` holds the symmetric matrix field at all ``N^d`` nodes.
    The divergence-form operator is ``Q / dx^2`` on the interior unknowns.
    """
    d = grid.d
    E, corners = _edge_operators(grid)
    Mc = field_values[corners].mean(axis=1)  # (n_cells, d, d)
    n_nodes = grid.n_nodes
    Q = sp.csr_matrix((n_nodes, n_nodes))
    w_edge = 1.0 / 2 ** (d - 1)
    G = []
    for j in range(d):
        diag = sp.diags(Mc[:, j, j] * w_edge)
        for Ej in E[j]:
            Q = Q + Ej.T @ diag @ Ej
        G.append(sum(E[j]) * w_edge)
    for j in range(d):
        for k in range(d):
            if j == k:
                continue
            mjk = Mc[:, j, k]
            if np.any(mjk != 0):
                Q = Q + G[j].T @ sp.diags(mjk) @ G[k]
    sel = _interior_selector(grid)
    Qi = Q.tocsr()[sel][:, sel].toarray()
    return 0.5 * (Qi + Qi.T)


def divergence_form(grid: Grid, field_values: np.ndarray) -> np.ndarray:
    """Matrix of ``-div(M grad)`` on the interior points."""
    return form_matrix(grid, field_values) / grid.dx**2


def assemble_k0(grid: Grid, spec: CoefficientSpec) -> LatticeOperator:
    """``K_0 = -1/2 div(A grad)`` with Dirichlet walls eliminated."""
    spec.check_matrix(grid, "A")
    A = spec.sample(grid, "A", where="nodes")
    return LatticeOperator(0.5 * divergence_form(grid, A), "K0", grid, spec)


def assemble_k(grid: Grid, spec: CoefficientSpec, confining: bool = False) -> LatticeOperator:
    """``K = K_0 + V``. With ``confining`` the confinement gate is enforced too."""
    spec.check_potential(grid)
    if confining:
        spec.check_confining(grid)
    K0 = assemble_k0(grid, spec)
    V = spec.sample(grid, "V")
    return LatticeOperator(K0.matrix + np.diag(V), "K", grid, spec)


def assemble_h0(grid: Grid, spec: CoefficientSpec) -> LatticeOperator:
    """``h_0 = -c^{-1} div(a grad) c^{-1}``."""
    spec.check_boson(grid)
    a = spec.sample(grid, "a", where="nodes")
    inv_c = 1.0 / spec.sample(grid, "c")
    M = inv_c[:, None] * divergence_form(grid, a) * inv_c[None, :]
    return LatticeOperator(M, "H0FIELD", grid, spec)


def assemble_h(grid: Grid, spec: CoefficientSpec) -> LatticeOperator:
    """``h = h_0 + m^2``."""
    h0 = assemble_h0(grid, spec)
    m = spec.sample(grid, "m")
    return LatticeOperator(h0.matrix + np.diag(m * m), "H", grid, spec)


def flat_laplacian(grid: Grid) -> np.ndarray:
    """Standard ``(2d + 1)``-point ``-Laplacian`` on the interior (Kronecker form)."""
    m = grid.m
    t = 2 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)
    if grid.boundary == "periodic":
        t[0, -1] -= 1
        t[-1, 0] -= 1
    t = t / grid.dx**2
    out = np.zeros((grid.n_points, grid.n_points))
    for j in range(grid.d):
        mats = [np.eye(m)] * grid.d
        mats[j] = t
        term = mats[0]
        for M in mats[1:]:
            term = np.kron(term, M)
        out += term
    return out

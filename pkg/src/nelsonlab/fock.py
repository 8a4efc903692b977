"""Exact diagonalization of the particle-field Hamiltonian in a truncated Fock space.

Particle sector: the lowest ``n_part`` eigenvectors of ``K``. Field sector: the
lowest ``n_modes`` eigenmodes of ``omega`` with total occupation at most ``n_max``.
``phi(v) = (a(v) + a*(v)) / sqrt(2)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .operators import DenseCapError
from .pairpot import SmearedCharge

FOCK_CAP = 20000


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """``g[x, j] = (e_j | omega^{-1/2} rho_x)`` for the kept modes ``j``."""

    omegas: np.ndarray
    g: np.ndarray
    full_norm: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.omegas.size

    @property
    def deficit(self) -> np.ndarray:
        """Relative Parseval deficit ``1 - sum_j g_j(x)^2 / ||omega^{-1/2} rho_x||^2`` per node."""
        return 1.0 - np.sum(self.g**2, axis=1) / self.full_norm


def build_mode_basis(omega_spec, charges: SmearedCharge, n_modes: int) -> ModeBasis:
    w = np.asarray(omega_spec.values, float)
    if n_modes > w.size:
        raise ValueError("more modes requested than lattice points")
    if w.min() <= 0:
        raise ValueError("omega must be strictly positive")
    amp = charges.rho @ omega_spec.vectors * np.sqrt(charges.grid.cell_volume)
    g_all = amp / np.sqrt(w)
    return ModeBasis(w[:n_modes].copy(), g_all[:, :n_modes].copy(), np.sum(g_all**2, axis=1))


class FockBasis:
    """Occupation vectors with ``sum n_j <= n_max`` times ``n_part`` particle states."""

    def __init__(self, n_modes: int, n_max: int, n_part: int):
        self.n_modes, self.n_max, self.n_part = n_modes, n_max, n_part
        occ = [o for o in itertools.product(range(n_max + 1), repeat=n_modes) if sum(o) <= n_max]
        occ.sort(key=lambda o: (sum(o), tuple(-x for x in o)))
        self.occupations = np.array(occ, dtype=np.int64).reshape(len(occ), n_modes)
        self.index = {tuple(o): i for i, o in enumerate(occ)}

    @property
    def n_boson(self) -> int:
        return len(self.occupations)

    @property
    def dim(self) -> int:
        return self.n_part * self.n_boson

    @staticmethod
    def expected_dim(n_modes: int, n_max: int, n_part: int) -> int:
        return n_part * comb(n_modes + n_max, n_max)

    def number(self) -> np.ndarray:
        return self.occupations.sum(axis=1)

    def annihilator(self, j: int) -> np.ndarray:
        """Matrix of ``a_j`` on the boson sector."""
        B = self.n_boson
        a = np.zeros((B, B))
        for col, o in enumerate(self.occupations):
            if o[j] > 0:
                lower = o.copy()
                lower[j] -= 1
                a[self.index[tuple(lower)], col] = np.sqrt(o[j])
        return a

    def vacuum(self) -> int:
        return self.index[(0,) * self.n_modes]


@dataclass(frozen=True, eq=False)
class FockOperator:
    matrix: np.ndarray
    kind: str
    basis: FockBasis
    particle_energies: np.ndarray

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)))

    @property
    def reference_state(self) -> np.ndarray:
        """``psi_p (x) Omega``: particle ground state times the Fock vacuum."""
        v = np.zeros(self.basis.dim)
        v[self.basis.vacuum()] = 1.0  # particle index 0 is the slowest block
        return v


def build_H(modes: ModeBasis, K_spec, n_part: int, n_max: int, q: float, cap: int = FOCK_CAP) -> FockOperator:
    """``K (x) 1 + 1 (x) dGamma(omega) + q phi(omega^{-1/2} rho_x)`` on the truncated space."""
    n_part = min(n_part, K_spec.n)
    dim = FockBasis.expected_dim(modes.n_modes, n_max, n_part)
    if dim > cap:
        raise DenseCapError(f"Fock dimension {dim} exceeds cap {cap}")
    basis = FockBasis(modes.n_modes, n_max, n_part)
    E = np.asarray(K_spec.values[:n_part], float)
    phi = K_spec.vectors[:, :n_part]
    occ_energy = basis.occupations @ modes.omegas
    B = basis.n_boson
    H = np.kron(np.diag(E), np.eye(B)) + np.kron(np.eye(n_part), np.diag(occ_energy))
    if q != 0:
        for j in range(modes.n_modes):
            G = phi.T @ (modes.g[:, j, None] * phi)
            a = basis.annihilator(j)
            H += (q / np.sqrt(2.0)) * np.kron(G, a + a.T)
    H = 0.5 * (H + H.T)
    return FockOperator(H, "H", basis, E)


def number_operator(basis: FockBasis) -> np.ndarray:
    return np.diag(basis.number().astype(float))


@dataclass
class NumberBound:
    lhs_annihilation: float
    lhs_creation: float
    norm_v: float

    @property
    def lhs(self) -> float:
        return max(self.lhs_annihilation, self.lhs_creation)

    @property
    def passed(self) -> bool:
        return self.lhs <= self.norm_v * (1 + 1e-10)


def number_bound_check(basis: FockBasis, v) -> NumberBound:
    """Largest singular values of ``a(v) (N+1)^{-1/2}`` and ``a*(v) (N+1)^{-1/2}``."""
    v = np.asarray(v, float)
    if v.size != basis.n_modes:
        raise ValueError("v must have one entry per mode")
    a = sum(v[j] * basis.annihilator(j) for j in range(basis.n_modes))
    damp = np.diag(1.0 / np.sqrt(basis.number() + 1.0))
    la = float(np.linalg.norm(a @ damp, 2))
    lc = float(np.linalg.norm(a.T @ damp, 2))
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    norm_v = scale * float(np.linalg.norm(v / scale)) if scale > 0 else 0.0
    return NumberBound(la, lc, norm_v)


@dataclass
class Overlap:
    E: float
    overlap: float
    T: np.ndarray
    matrix_elements: np.ndarray
    gap: float
    energies: np.ndarray
    E0: float = 0.0
    weights: np.ndarray | None = None

    def gamma(self, T) -> np.ndarray:
        """Exact ``gamma(T) = m(T)^2 / m(2T)`` from the spectral weights."""
        T = np.atleast_1d(np.asarray(T, float))
        return self._m(T) ** 2 / self._m(2 * T)

    def _m(self, T):
        return np.exp(-np.outer(T, self.energies - self.E0)) @ self.weights


def overlap_oracle(H: FockOperator, T_grid, degeneracy_tol: float = 1e-9) -> Overlap:
    """Ground energy, ground-space overlap with ``psi_p (x) Omega`` and ``(1|e^{-TH}1)``.

    Energies are measured from the particle ground energy so the matrix
    elements are the path-integral normalization.
    """
    vals, vecs = np.linalg.eigh(H.matrix)
    ref = H.reference_state
    c2 = (vecs.T @ ref) ** 2
    E = float(vals[0])
    ground = vals <= E + degeneracy_tol * max(1.0, abs(E))
    E0 = float(H.particle_energies[0])
    T = np.asarray(T_grid, float)
    m = np.exp(-np.outer(T, vals - E0)) @ c2
    gap = float(vals[~ground][0] - E) if (~ground).any() else np.inf
    return Overlap(E, float(c2[ground].sum()), T, m, gap, vals, E0, c2)


def displaced_oscillator_energy(omega: float, coupling: float, n_max: int | None = None) -> float:
    """Ground energy of ``omega a*a + coupling (a + a*)/sqrt(2)``.

    ``n_max=None`` gives the exact ``-coupling^2 / (2 omega)``; a finite
    ``n_max`` diagonalizes the truncated tridiagonal matrix.
    """
    if n_max is None:
        return -(coupling**2) / (2 * omega)
    n = np.arange(n_max + 1)
    off = coupling / np.sqrt(2.0) * np.sqrt(n[1:])
    M = np.diag(omega * n.astype(float)) + np.diag(off, 1) + np.diag(off, -1)
    return float(np.linalg.eigvalsh(M)[0])

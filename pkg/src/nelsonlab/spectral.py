"""Eigenanalysis, ground state transform and ``omega = h^{1/2}``.

Conventions: node vectors ``f`` represent functions; the L2 inner product is
``(f|g) = sum f g dx^d``. Matrices act on node vectors (matrix convention), so
the transformed semigroup ``exp(-tL)`` is row-stochastic as stored.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid
from .linalg import expm_nonneg, is_z_matrix
from .operators import LatticeOperator, check_cap

log = logging.getLogger(__name__)

GAP_TOL = 1e-12
PSI_FLOOR = 1e-300


class OracleError(RuntimeError):
    """The spectral oracle failed one of its integrity certificates."""


class GroundStateError(RuntimeError):
    """No unique strictly positive ground state on the lattice."""


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    orth_defect: float
    kind: str
    grid: Grid
    matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.values.size

    def function(self, fn) -> np.ndarray:
        """``f(M) = V diag(f(lambda)) V^T`` in matrix convention."""
        w = np.asarray(fn(self.values), float)
        return (self.vectors * w) @ self.vectors.T

    def semigroup(self, t: float, shift: float = 0.0) -> np.ndarray:
        """``exp(-t (M - shift))`` in matrix convention."""
        return self.function(lambda lam: np.exp(-t * (lam - shift)))


def eigendecompose(op, tol: float = 1e-10, cap: int | None = None) -> SpectralDecomposition:
    """Full ascending eigensystem with residual and orthonormality certificates.

    Accepts a :class:`LatticeOperator` or a bare symmetric array.
    """
    if isinstance(op, LatticeOperator):
        M, kind, grid = op.matrix, op.kind, op.grid
    else:
        M, kind, grid = np.asarray(op, float), "OTHER", None
    n = M.shape[0]
    check_cap(n, cap)
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    res = np.linalg.norm(M @ vecs - vecs * vals, axis=0)
    orth = float(np.max(np.abs(vecs.T @ vecs - np.eye(n))))
    if np.max(res) > tol * scale:
        raise OracleError(f"eigen residual {np.max(res):.3g} exceeds {tol:g} * |M|")
    if orth > tol:
        raise OracleError(f"orthonormality defect {orth:.3g} exceeds {tol:g}")
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralDecomposition(vals, vecs, res, orth, kind, grid, M)


@dataclass(frozen=True, eq=False)
class GroundState:
    """Positive ground state ``psi`` (unit L2 norm with ``dx^d``) of ``K``."""

    psi: np.ndarray
    E0: float
    gap: float
    grid: Grid
    delta: float | None = None
    refined: bool = False

    @property
    def mu(self) -> np.ndarray:
        return self.psi**2 * self.grid.cell_volume

    @property
    def unit_vector(self) -> np.ndarray:
        """Ground state as an l2-normalized node vector."""
        return self.psi * np.sqrt(self.grid.cell_volume)


def ground_state(
    K_spec: SpectralDecomposition,
    delta: float | None = None,
    refine: str | bool = "auto",
    refine_below: float = 1e-6,
) -> GroundState:
    """Sign-fixed positive ground state of ``K``.

    With ``refine`` enabled and a Z-matrix ``K``, the eigenvector is replaced
    by a column of ``exp(-tau (K - E0))`` for ``tau * gap = 40``, which carries
    small relative error even where ``psi`` is many orders below its maximum.
    ``"auto"`` refines only when ``min psi / max psi < refine_below``.
    """
    if K_spec.n >= 2:
        gap = float(K_spec.values[1] - K_spec.values[0])
        if gap <= GAP_TOL * max(1.0, abs(float(K_spec.values[0]))):
            raise GroundStateError(f"ground state not simple (gap {gap:.3g})")
    else:
        gap = np.inf
    grid = K_spec.grid
    e0 = np.array(K_spec.vectors[:, 0], float)
    if e0.sum() < 0:
        e0 = -e0
    E0 = float(K_spec.values[0])
    amax = np.max(np.abs(e0))
    want = refine is True or (
        refine == "auto" and np.min(e0) < refine_below * amax
    )
    refined = False
    if want and K_spec.matrix is not None and is_z_matrix(K_spec.matrix) and K_spec.n >= 2:
        X = K_spec.matrix - E0 * np.eye(K_spec.n)
        col = expm_nonneg(X, 40.0 / gap)[:, int(np.argmax(e0))]
        e0 = col / np.linalg.norm(col)
        refined = True
    bad = np.flatnonzero(e0 <= 0)
    if bad.size:
        raise GroundStateError(
            f"ground state not strictly positive at node {int(bad[0])} ({e0[bad[0]]:.3g})"
        )
    dv = grid.cell_volume if grid is not None else 1.0
    psi = e0 / np.sqrt(dv)
    psi.setflags(write=False)
    return GroundState(psi, E0, gap, grid, delta, refined)


def omega_sqrt(h_spec: SpectralDecomposition, neg_tol: float = 1e-12) -> LatticeOperator:
    """``omega = h^{1/2}``; its spectrum is attached to the returned operator."""
    lam = np.asarray(h_spec.values, float)
    if np.min(lam) < -neg_tol * max(1.0, np.max(np.abs(lam))):
        raise OracleError(f"h has a negative eigenvalue {np.min(lam):.3g}")
    root = np.sqrt(np.clip(lam, 0.0, None))
    W = (h_spec.vectors * root) @ h_spec.vectors.T
    op = LatticeOperator(0.5 * (W + W.T), "OMEGA", h_spec.grid)
    spec = SpectralDecomposition(
        root, h_spec.vectors, h_spec.residuals, h_spec.orth_defect, "OMEGA", h_spec.grid, op.matrix
    )
    op.__dict__["spectrum"] = spec
    return op


@dataclass(frozen=True, eq=False)
class TransformedGenerator:
    """``L = psi^{-1} (K - E0) psi`` with stationary weights ``mu = psi^2 dx^d``."""

    matrix: np.ndarray
    mu: np.ndarray
    ground: GroundState
    K_spec: SpectralDecomposition

    @property
    def n(self) -> int:
        return self.mu.size

    @property
    def values(self) -> np.ndarray:
        return self.K_spec.values - self.ground.E0

    @property
    def modes(self) -> np.ndarray:
        """Eigenfunctions of ``L``, orthonormal in ``l2(mu)``; column 0 is ``1``."""
        phi = self.K_spec.vectors / self.ground.unit_vector[:, None]
        phi[:, 0] *= np.sign(phi[:, 0].sum())
        return phi

    def apply_function(self, fn) -> np.ndarray:
        """``fn(L)`` in matrix convention via the K oracle."""
        u = self.ground.unit_vector
        F = self.K_spec.function(lambda lam: fn(lam - self.ground.E0))
        return F * (u[None, :] / u[:, None])

    def semigroup(self, t: float, accurate: bool = False) -> np.ndarray:
        """``exp(-tL)``. ``accurate`` uses the nonnegative exponential when possible."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        if accurate and self.K_spec.matrix is not None and is_z_matrix(self.K_spec.matrix):
            u = self.ground.unit_vector
            X = self.K_spec.matrix - self.ground.E0 * np.eye(self.n)
            return expm_nonneg(X, t) * (u[None, :] / u[:, None])
        return self.apply_function(lambda lam: np.exp(-t * lam))

    def inner(self, f, g) -> float:
        return float(np.sum(self.mu * np.asarray(f) * np.asarray(g)))


def build_L(K_spec: SpectralDecomposition, ground: GroundState) -> TransformedGenerator:
    psi = ground.psi
    if np.any(psi < PSI_FLOOR):
        raise GroundStateError("ground state below positivity floor")
    if K_spec.matrix is None:
        X = K_spec.function(lambda lam: lam)
    else:
        X = np.asarray(K_spec.matrix)
    X = X - ground.E0 * np.eye(K_spec.n)
    L = X * (psi[None, :] / psi[:, None])
    L.setflags(write=False)
    mu = ground.mu
    mu.setflags(write=False)
    return TransformedGenerator(L, mu, ground, K_spec)


@dataclass(frozen=True)
class DecayReport:
    passed: bool
    exponent: float
    beta: float
    beta_fixed: float
    weighted_norm: float
    edge_envelope: float
    n_fit: int
    residual_rms: float


def _fit_envelope(r, y, p):
    Xd = np.stack([np.ones_like(r), -(r**p)], axis=1)
    coef, *_ = np.linalg.lstsq(Xd, y, rcond=None)
    res = y - Xd @ coef
    return coef, float(np.sqrt(np.mean(res**2)))


def decay_check(
    ground: GroundState,
    delta: float,
    window: tuple[float, float] = (0.5, 1.0),
    wall_layers: int = 2,
    p_grid: np.ndarray | None = None,
) -> DecayReport:
    """Fit ``log psi ~ a - beta |x|^p`` on the outer part of the box.

    The window is given as fractions of ``R``; the ``wall_layers`` outermost
    point layers are dropped because the Dirichlet wall pins ``psi`` to zero.
    The exponent ``p`` is fitted by scanning ``p_grid``; ``beta`` is also
    refitted at the fixed exponent ``1 + delta``.
    """
    grid = ground.grid
    pts = grid.points
    r = np.linalg.norm(pts, axis=1)
    inner_lim = grid.R - wall_layers * grid.dx
    cheb = np.max(np.abs(pts), axis=1)
    sel = (r >= window[0] * grid.R) & (r <= window[1] * grid.R) & (cheb <= inner_lim + 1e-12)
    rr, y = r[sel], np.log(ground.psi[sel])
    if rr.size < 3:
        nan = float("nan")
        return DecayReport(False, nan, nan, nan, nan, nan, int(rr.size), nan)
    if p_grid is None:
        p_grid = np.linspace(0.5, 4.0, 351)
    fits = [(_fit_envelope(rr, y, p)[1], p) for p in p_grid]
    _, p_best = min(fits)
    (a, beta), _ = _fit_envelope(rr, y, p_best)
    p_fix = 1.0 + delta
    (a_fix, beta_fix), rms = _fit_envelope(rr, y, p_fix)
    w = np.exp(2 * beta_fix * r**p_fix) if beta_fix > 0 else np.ones_like(r)
    with np.errstate(over="ignore"):
        norm = float(np.sum(w * ground.psi**2) * grid.cell_volume)
    edge = float(beta_fix * np.max(rr) ** p_fix)
    passed = bool(beta_fix > 0 and beta > 0 and p_best > 1.0 and np.isfinite(norm))
    return DecayReport(passed, float(p_best), float(beta), float(beta_fix), norm, edge, int(sel.sum()), rms)

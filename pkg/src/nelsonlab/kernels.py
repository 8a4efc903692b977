"""Heat kernels, Gaussian sandwich fits, log-convexity, Trotter and subordination checks."""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import Grid
from .linalg import expm_nonneg, is_z_matrix
from .operators import LatticeOperator

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class HeatKernelSlice:
    """``exp(-t Op)`` at one time.

    ``convention == "kernel"`` stores matrix entries divided by ``dx^d``;
    ``"matrix"`` stores the raw matrix. ``min_entry`` records the most
    negative entry (eigen ringing) and ``method`` how the slice was computed.
    """

    t: float
    G: np.ndarray
    convention: str
    grid: Grid
    method: str = "eigen"
    min_entry: float = 0.0
    positive: bool = True

    def as_kernel(self) -> np.ndarray:
        return self.G if self.convention == "kernel" else self.G / self.grid.cell_volume

    def as_matrix(self) -> np.ndarray:
        return self.G if self.convention == "matrix" else self.G * self.grid.cell_volume


def heat_kernel(
    op: LatticeOperator,
    t: float,
    convention: str = "kernel",
    method: str = "eigen",
    neg_tol: float = 1e-10,
) -> HeatKernelSlice:
    """``exp(-t op)`` from the dense spectral oracle (or ``method="nonneg"``).

    Entries below ``-neg_tol`` (in kernel units) flip the ``positive`` flag.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if convention not in ("kernel", "matrix"):
        raise ValueError("convention must be 'kernel' or 'matrix'")
    if method == "auto":
        method = "nonneg" if is_z_matrix(op.matrix) else "eigen"
    if method == "eigen":
        spec = op.spectrum
        M = spec.semigroup(t)
    elif method == "nonneg":
        op.spectrum  # dense cap and oracle certificates still apply
        M = expm_nonneg(op.matrix, t)
    else:
        raise ValueError(f"unknown method {method!r}")
    M = 0.5 * (M + M.T)
    G = M / op.grid.cell_volume if convention == "kernel" else M
    m = float(np.min(M) / op.grid.cell_volume)
    G.setflags(write=False)
    return HeatKernelSlice(float(t), G, convention, op.grid, method, m, m >= -neg_tol)


def free_heat_kernel(x, y, T: float, d: int | None = None) -> np.ndarray:
    """Whole-space kernel ``(4 pi T)^{-d/2} exp(-|x - y|^2 / (4T))``.

    ``x`` and ``y`` broadcast over leading axes; the last axis is space.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if d is None:
        d = x.shape[-1] if x.ndim else 1
    if x.ndim == 0:
        r2 = (x - y) ** 2
    else:
        r2 = np.sum((x - y) ** 2, axis=-1)
    return (4 * np.pi * T) ** (-d / 2) * np.exp(-r2 / (4 * T))


# ---------------------------------------------------------------------------
# Gaussian sandwich


def _lap1d(grid: Grid) -> np.ndarray:
    m = grid.m
    t = 2 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)
    return t / grid.dx**2


class FlatComparator:
    """Log kernel of ``exp(c t Delta)`` for the flat lattice Laplacian on the same box.

    Built separably from one-dimensional nonnegative exponentials, so every
    entry carries small relative error.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.lap = _lap1d(grid)
        self._cache: dict = {}

    def log_kernel(self, c: float, t: float) -> np.ndarray:
        key = (float(c), float(t))
        if key in self._cache:
            return self._cache[key]
        g = self.grid
        with np.errstate(divide="ignore"):
            l1 = np.log(expm_nonneg(self.lap, c * t))
        out = l1
        for _ in range(g.d - 1):
            m_sofar = out.shape[0]
            out = (out[:, None, :, None] + l1[None, :, None, :]).reshape(
                m_sofar * g.m, m_sofar * g.m
            )
        out = out - np.log(g.cell_volume)
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = out
        return out


class _NoTail(Exception):
    pass


@dataclass
class BoundFit:
    tag: str
    verified: bool
    C: float
    c: float
    margin: float
    tail_slope: float
    n_compared: int
    reason: str = ""
    scan: list = field(default_factory=list, repr=False)


def _l1_distance(grid: Grid) -> np.ndarray:
    mi = grid.multi_index(np.arange(grid.n_points))
    return np.sum(np.abs(mi[:, None, :] - mi[None, :, :]), axis=-1)


def gaussian_bound_fit(
    slices,
    tag: str,
    c_box: tuple[float, float] = (1e-2, 1e2),
    n_scan: int = 81,
    floor: float | None = None,
    C_box: tuple[float, float] = (1e-6, 1e6),
    slope_tol: float = 1e-9,
) -> BoundFit:
    """Fit ``C exp(c t Delta)`` below (``tag="lower"``) or above (``"upper"``) the slices.

    On a finite box every rate admits *some* constant, so the rate is fixed
    by admissibility at large separation. On the earliest slice, in the tail
    regime along axis-aligned rays (a unique minimal lattice path, with the
    separation exceeding three times the kernel's own one-axis hopping
    intensity), a one-hop
    outward step multiplies both kernels by the local hopping rate, so the
    log ratio ``log(kernel / comparator)`` changes by roughly
    ``log(a_bond / c)``. A rate is admissible for the lower bound when no
    outward step decreases the log ratio (and for the upper bound when none
    increases it), i.e. when the bound would extend to arbitrary separation. The fitted rate is the largest admissible rate for
    the lower bound and the smallest for the upper bound. The constant is then
    ``exp(min log ratio)`` (lower) or ``exp(max log ratio)`` (upper) over all
    slices at that rate.

    Entries are compared where the kernel exceeds ``floor`` times its slice
    maximum; the default floor is ``1e-250`` for nonnegative-exponential
    slices and ``1e-10`` for eigen slices, whose absolute error is of order
    ``1e-16`` times the maximum. The fit is not verified when no admissible
    rate lies strictly inside ``c_box``, when ``C`` leaves ``C_box``, or when
    the kernel is nonpositive at an entry where the comparator is above the
    floor.
    """
    if tag not in ("lower", "upper"):
        raise ValueError("tag must be 'lower' or 'upper'")
    slices = sorted(slices, key=lambda s: s.t)
    grid = slices[0].grid
    comp = FlatComparator(grid)
    data = []
    for s in slices:
        K = s.as_kernel()
        fl = floor if floor is not None else (1e-250 if s.method == "nonneg" else 1e-10)
        thr = fl * np.max(K)
        mask = K > thr
        bad = (~mask) & (K <= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logK = np.where(mask, np.log(np.where(mask, K, 1.0)), -np.inf)
        data.append((s.t, logK, mask, bad, np.log(thr) if thr > 0 else -np.inf))
    n_cmp = int(sum(m.sum() for _, _, m, _, _ in data))
    dist = _l1_distance(grid)
    is_lower = tag == "lower"

    def ratio(c, item):
        t, logK, mask, bad, lthr = item
        lf = comp.log_kernel(c, t)
        use = mask & np.isfinite(lf)
        broken = bool(np.any(bad & (lf > lthr)))
        return logK - lf, use, broken

    shape = (grid.n_points,) + grid.shape
    mi = grid.multi_index(np.arange(grid.n_points))
    # per-axis separations, shaped (x, y_1, ..., y_d)
    sep = [np.abs(mi[:, None, j] - mi[None, :, j]).reshape(shape) for j in range(grid.d)]
    t0 = data[0][0]
    # one-axis hopping intensity of the kernel itself, read off its diagonal decay
    diag = np.diag(slices[0].as_matrix())
    z = float(np.max(-np.log(np.clip(diag, 1e-300, None)))) / grid.d
    d0 = max(3, int(np.ceil(3.0 * z)) + 1)

    def slope(c):
        """Extreme per-hop change of the log ratio over outward tail steps."""
        r, use, broken = ratio(c, data[0])
        if broken:
            return -np.inf if is_lower else np.inf
        r = np.where(use, r, np.nan).reshape(shape)
        ext = []
        for j in range(grid.d):
            ax = 1 + j
            dr = np.diff(r, axis=ax)
            dS = np.diff(sep[j], axis=ax)
            start = np.minimum(np.delete(sep[j], -1, axis=ax), np.delete(sep[j], 0, axis=ax))
            inc = np.where(dS > 0, dr, -dr)
            # axis-aligned rays only: a unique minimal lattice path
            keep_base = start >= d0
            ray = np.ones_like(keep_base)
            for k in range(grid.d):
                if k != j:
                    ray &= np.delete(sep[k], -1, axis=ax) == 0
            keep = keep_base & ray & np.isfinite(inc)
            if keep.any():
                ext.append(inc[keep].min() if is_lower else inc[keep].max())
        if not ext:
            raise _NoTail
        return float(min(ext) if is_lower else max(ext))

    def admissible(c):
        s = slope(c)
        return s >= -slope_tol if is_lower else s <= slope_tol

    def fail(reason):
        return BoundFit(tag, False, np.nan, np.nan, np.nan, np.nan, n_cmp, reason, scan)

    ys = np.linspace(np.log(c_box[0]), np.log(c_box[1]), n_scan)
    scan = []
    try:
        flags = np.array([admissible(np.exp(y)) for y in ys])
    except _NoTail:
        return fail(f"box too small for the tail regime (separation >= {d0} along an axis)")
    scan = [(float(np.exp(y)), bool(f)) for y, f in zip(ys, flags)]

    # lower: admissible set is an initial segment of the scan; upper: a final one
    if is_lower:
        if not flags[0]:
            return fail("no admissible rate in the search box")
        if flags[-1]:
            return fail("admissible rate reaches the search-box edge")
        j = int(np.argmin(flags))  # first inadmissible
        a, b = ys[j - 1], ys[j]
    else:
        if not flags[-1]:
            return fail("no admissible rate in the search box")
        if flags[0]:
            return fail("admissible rate reaches the search-box edge")
        j = int(np.argmax(flags))  # first admissible
        a, b = ys[j - 1], ys[j]
    # bisection on the admissibility boundary (a: lower side, b: upper side)
    good, badside = (a, b) if is_lower else (b, a)
    if admissible(1.0) and a <= 0.0 <= b:
        # exact self-comparison produces a zero slope at c = 1
        if is_lower and not admissible(np.exp(1e-9)):
            good = badside = 0.0
        if not is_lower and not admissible(np.exp(-1e-9)):
            good = badside = 0.0
    for _ in range(60):
        if abs(good - badside) < 1e-10:
            break
        mid = 0.5 * (good + badside)
        if admissible(np.exp(mid)):
            good = mid
        else:
            badside = mid
    c_best = float(np.exp(good))
    worst = np.inf if is_lower else -np.inf
    for item in data:
        r, use, broken = ratio(c_best, item)
        if broken:
            return fail("kernel nonpositive where the comparator is above the floor")
        if use.any():
            worst = min(worst, float(r[use].min())) if is_lower else max(worst, float(r[use].max()))
    C = float(np.exp(worst))
    margin = np.inf
    for item in data:
        r, use, _ = ratio(c_best, item)
        if use.any():
            slack = (r[use] - worst) if is_lower else (worst - r[use])
            margin = min(margin, float(slack.min()))
    reason = ""
    if not (C_box[0] <= C <= C_box[1]):
        reason = f"constant {C:.3g} outside {C_box}"
    return BoundFit(tag, reason == "" and margin >= 0, C, c_best, float(margin), slope(c_best), n_cmp, reason, scan)


# ---------------------------------------------------------------------------
# log-convexity


@dataclass
class ConvexityReport:
    passed: bool
    n_checked: int
    worst_excess: float
    triples: list


def _semigroup(M: np.ndarray, t: float) -> np.ndarray:
    if is_z_matrix(M):
        return expm_nonneg(M, t)
    vals, vecs = np.linalg.eigh(M)
    return (vecs * np.exp(-t * vals)) @ vecs.T


def log_convexity_check(
    h0: LatticeOperator,
    w,
    lambdas,
    t: float = 1.0,
    floor: float = 1e-14,
    slack: float = 1e-9,
    diagonal_only: bool = False,
) -> ConvexityReport:
    """Check ``lambda -> exp(-t(h0 + lambda w))(x, y)`` is log-convex on a grid.

    Every ordered triple from ``lambdas`` is tested on entries whose kernel
    value exceeds ``floor``.
    """
    lam = np.sort(np.asarray(lambdas, float))
    if lam.size < 3:
        raise ValueError("need at least three lambda values")
    w = np.asarray(w, float)
    dv = h0.grid.cell_volume
    kern = {float(l): _semigroup(h0.matrix + l * np.diag(w), t) / dv for l in lam}
    worst = -np.inf
    n = 0
    triples = []
    for l1, l2, l3 in itertools.combinations(lam, 3):
        th = (l3 - l2) / (l3 - l1)
        G1, G2, G3 = kern[float(l1)], kern[float(l2)], kern[float(l3)]
        mask = (G1 > floor) & (G2 > floor) & (G3 > floor)
        if diagonal_only:
            mask &= np.eye(mask.shape[0], dtype=bool)
        lhs = np.log(G2[mask])
        rhs = th * np.log(G1[mask]) + (1 - th) * np.log(G3[mask])
        excess = float(np.max(lhs - rhs)) if mask.any() else -np.inf
        triples.append((float(l1), float(l2), float(l3), excess))
        worst = max(worst, excess)
        n += int(mask.sum())
    return ConvexityReport(bool(worst <= np.log1p(slack)), n, worst, triples)


# ---------------------------------------------------------------------------
# Trotter product


@dataclass
class TrotterReport:
    n: list
    errors: list
    ratios: list
    commutator_norm: float


def trotter_check(K0: LatticeOperator, V, t: float, n_list) -> TrotterReport:
    """Operator 2-norm error of ``(exp(-t/n K0) exp(-t/n V))^n`` against ``exp(-tK)``."""
    V = np.asarray(V, float)
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    s0 = K0.spectrum
    vals, vecs = np.linalg.eigh(K0.matrix + np.diag(V))
    exact = (vecs * np.exp(-t * vals)) @ vecs.T
    errs = []
    for n in n_list:
        step = s0.semigroup(t / n) * np.exp(-t / n * V)[None, :]
        prod = np.linalg.matrix_power(step, n)
        errs.append(float(np.linalg.norm(prod - exact, 2)))
    ratios = [b / a if a > 0 else 0.0 for a, b in zip(errs, errs[1:])]
    comm = K0.matrix * V[None, :] - V[:, None] * K0.matrix
    return TrotterReport(n_list, errs, ratios, float(np.linalg.norm(comm, 2)))


# ---------------------------------------------------------------------------
# Bernstein subordination


def subordination_nodes(t: float, lam_min: float, n_nodes: int = 200, cut: float = 700.0):
    """Trapezoid nodes ``s_i`` and weights ``w_i`` for ``int g(s) dm(s)``.

    Uses ``s = e^y``; the density of ``dm`` in ``y`` is
    ``exp(-e^{-y}/4 - y/2) / (2 sqrt(pi))``, which decays doubly
    exponentially at ``y -> -inf`` and is cut where ``e^{-y}/4 = cut``; the
    upper end is where ``s t^2 lam_min = cut``.
    """
    y_lo = -np.log(4 * cut)
    y_hi = np.log(cut / max(t * t * lam_min, 1e-300))
    y = np.linspace(y_lo, y_hi, n_nodes)
    h = y[1] - y[0]
    dens = np.exp(-np.exp(-y) / 4 - y / 2) / (2 * np.sqrt(np.pi))
    w = dens * h
    w[0] *= 0.5
    w[-1] *= 0.5
    return np.exp(y), w


def subordinated_scalar(lam, t: float, n_nodes: int = 200) -> np.ndarray:
    """Quadrature of ``int exp(-s t^2 lam) dm(s)`` (equals ``exp(-t sqrt(lam))``)."""
    lam = np.atleast_1d(np.asarray(lam, float))
    if t == 0:
        return np.ones_like(lam)
    s, w = subordination_nodes(t, float(np.min(lam)), n_nodes)
    return np.exp(-np.outer(lam, s) * t * t) @ w


@dataclass(frozen=True, eq=False)
class SubordinationResult:
    matrix: np.ndarray
    max_deviation: float
    scalar_residual: float


def subordination_semigroup(
    h_spec, t: float, n_nodes: int = 200, warn_tol: float = 1e-6
) -> SubordinationResult:
    """Rebuild ``exp(-t omega)`` as a weighted sum of heat semigroups ``exp(-s t^2 h)``.

    ``h_spec`` is the spectral decomposition of ``h``; its heat semigroups
    are combined with the subordinator weights, and the result is compared
    entrywise with the spectral ``exp(-t sqrt(h))``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    lam = np.clip(np.asarray(h_spec.values, float), 0.0, None)
    if t == 0:
        eye = np.eye(lam.size)
        return SubordinationResult(eye, 0.0, 0.0)
    approx = subordinated_scalar(lam, t, n_nodes)
    truth = np.exp(-t * np.sqrt(lam))
    resid = float(np.max(np.abs(approx - truth)))
    if resid > warn_tol:
        warnings.warn(f"subordination quadrature residual {resid:.3g}", RuntimeWarning)
    M = h_spec.function(lambda _l: approx)
    ref = h_spec.function(lambda _l: truth)
    return SubordinationResult(M, float(np.max(np.abs(M - ref))), resid)

"""Path-integral estimates of ``(1|e^{-TH}1)``, ``Z_T`` and ``gamma(T)``.

Integrating out the field turns every expectation into a kernel-chain average
of ``exp((q^2/2) S)`` where ``S`` is a double time integral of the pair
potential along the path. All exponential means are taken in log domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import PathEnsemble
from .pairpot import ModalPairPotential, PairPotentialTable
from .spectral import TransformedGenerator
from .stats import batch_means, ess, log_mean_exp, weighted_mean

ESS_MIN = 30.0


def default_lambda(delta: float) -> float:
    """Midpoint of the admissible window ``(1/(delta+1), 1)``."""
    return 0.5 * (1.0 / (delta + 1.0) + 1.0)


def check_lambda(lam: float, delta: float) -> None:
    if not 1.0 / (delta + 1.0) < lam < 1.0:
        raise ValueError(f"lambda={lam} outside (1/(delta+1), 1) for delta={delta}")


def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    if n == 1:
        return np.zeros(1)
    w[[0, -1]] *= 0.5
    return w


@dataclass(frozen=True, eq=False)
class PathWeights:
    """Per-path double integrals over ``[0,T]^2``, ``[-T,0]^2``, ``[-T,T]^2`` and the cross block."""

    T: float
    S_plus: np.ndarray
    S_minus: np.ndarray
    S_full: np.ndarray
    S_cross: np.ndarray
    in_A: np.ndarray
    lam: float

    @property
    def M(self) -> int:
        return self.S_plus.size

    @property
    def S_plus_sym(self) -> np.ndarray:
        return 0.5 * (self.S_plus + self.S_minus)

    def identity_defect(self) -> float:
        """``max |S_full - 2 S_plus_sym - 2 S_cross|`` relative to ``max S_full``."""
        d = np.abs(self.S_full - 2 * self.S_plus_sym - 2 * self.S_cross)
        return float(d.max() / max(np.abs(self.S_full).max(), 1e-300))


def _modal_form(pot: ModalPairPotential, states: np.ndarray, w: np.ndarray, dt: float) -> np.ndarray:
    """``sum_{i,k} w_i w_k W(X_i, X_k, |i-k| dt)`` per path via the semiseparable recursion."""
    r = np.exp(-pot.omegas * dt)
    c = 1.0 / (2 * pot.omegas)
    M = states.shape[0]
    J = pot.n_modes
    S = np.zeros((M, J))
    acc = np.zeros((M, J))
    u_prev = np.zeros((M, J))
    for i in range(states.shape[1]):
        u = pot.amplitudes[states[:, i]] * w[i]
        S = r * (S + u_prev)
        acc += u * (u + 2 * S)
        u_prev = u
    return acc @ c


def _modal_cross(pot: ModalPairPotential, states: np.ndarray, K: int, dt: float) -> np.ndarray:
    """``sum_{i<=K<=k} w-_i w+_k W`` factorized mode by mode."""
    r = np.exp(-pot.omegas * dt)
    c = 1.0 / (2 * pot.omegas)
    M = states.shape[0]
    left = np.zeros((M, pot.n_modes))
    right = np.zeros((M, pot.n_modes))
    wh = trapezoid_weights(K + 1, dt)
    for j in range(K + 1):
        left += pot.amplitudes[states[:, K - j]] * (wh[j] * r**j)
        right += pot.amplitudes[states[:, K + j]] * (wh[j] * r**j)
    return (left * right) @ c


def _table_form(table: PairPotentialTable, states: np.ndarray, w: np.ndarray, rows=None, cols=None):
    n = states.shape[1]
    rows = range(n) if rows is None else rows
    cols = range(n) if cols is None else cols
    out = np.zeros(states.shape[0])
    for i in rows:
        for k in cols:
            out += w[i] * w[k] * table.W[states[:, i], states[:, k], abs(i - k)]
    return out


def path_weights(ens: PathEnsemble, pot, lam: float, T: float | None = None, grid=None) -> PathWeights:
    """Double time integrals of the pair potential along each two-sided path.

    ``pot`` is a :class:`ModalPairPotential` (any ``dt``) or a
    :class:`PairPotentialTable` whose time grid must be the ensemble lag grid.
    """
    if not ens.two_sided:
        raise ValueError("path weights need a two-sided ensemble")
    if T is not None:
        ens = ens.window(T)
    K = ens.zero_index
    T = K * ens.dt
    dt = ens.dt
    X = ens.states
    wp = np.zeros(2 * K + 1)
    wm = np.zeros(2 * K + 1)
    wp[K:] = trapezoid_weights(K + 1, dt)
    wm[: K + 1] = trapezoid_weights(K + 1, dt)
    if isinstance(pot, ModalPairPotential):
        S_plus = _modal_form(pot, X[:, K:], wp[K:], dt)
        S_minus = _modal_form(pot, X[:, : K + 1], wm[: K + 1], dt)
        S_full = _modal_form(pot, X, wp + wm, dt)
        S_cross = _modal_cross(pot, X, K, dt)
    elif isinstance(pot, PairPotentialTable):
        lags = np.arange(2 * K + 1) * dt
        if pot.t_grid.size < 2 * K + 1 or not np.allclose(pot.t_grid[: 2 * K + 1], lags, atol=1e-12):
            raise ValueError("pair-potential time grid does not match the ensemble grid")
        S_plus = _table_form(pot, X, wp, range(K, 2 * K + 1), range(K, 2 * K + 1))
        S_minus = _table_form(pot, X, wm, range(K + 1), range(K + 1))
        S_full = _table_form(pot, X, wp + wm)
        S_cross = np.zeros(X.shape[0])
        for i in range(K + 1):
            for k in range(K, 2 * K + 1):
                S_cross += wm[i] * wp[k] * pot.W[X[:, i], X[:, k], k - i]
    else:
        raise TypeError("pot must be a ModalPairPotential or PairPotentialTable")
    grid = grid or ens.grid
    radius = np.linalg.norm(grid.points, axis=1)
    in_A = radius[X].max(axis=1) <= T**lam
    return PathWeights(T, S_plus, S_minus, S_full, S_cross, in_A, lam)


@dataclass
class LogEstimate:
    log_value: float
    se_log: float
    ess: float

    @property
    def value(self) -> float:
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_value))

    @property
    def reliable(self) -> bool:
        return self.ess >= ESS_MIN


def estimate_numerator(weights: PathWeights, q: float, n_batches: int = 32) -> LogEstimate:
    """``(1|e^{-TH}1)`` as the mean of ``exp((q^2/2) S_plus)``."""
    if q == 0:
        return LogEstimate(0.0, 0.0, float(weights.M))
    lw = 0.5 * q * q * weights.S_plus
    lm, se = log_mean_exp(lw, n_batches)
    return LogEstimate(lm, se, ess(lw))


def estimate_Z(weights: PathWeights, q: float, n_batches: int = 32) -> LogEstimate:
    """``Z_T = (1|e^{-2TH}1)`` as the mean of ``exp((q^2/2) S_full)``."""
    if q == 0:
        return LogEstimate(0.0, 0.0, float(weights.M))
    lw = 0.5 * q * q * weights.S_full
    lm, se = log_mean_exp(lw, n_batches)
    return LogEstimate(lm, se, ess(lw))


def linearized_numerator(weights: PathWeights, q: float) -> float:
    """First-order expansion ``1 + (q^2/2) E[S_plus]``."""
    return float(1.0 + 0.5 * q * q * weights.S_plus.mean())


def _joint_log_gamma_se(weights: PathWeights, q: float, n_batches: int) -> float:
    a = 0.5 * q * q * weights.S_plus
    b = 0.5 * q * q * weights.S_full
    ea = np.exp(a - a.max())
    eb = np.exp(b - b.max())
    resid = 2 * ea / ea.mean() - eb / eb.mean()
    _, se = batch_means(resid, n_batches)
    return float(se[0])


@dataclass
class GammaPoint:
    T: float
    numerator: LogEstimate
    Z: LogEstimate
    log_gamma: float
    se_log: float

    @property
    def gamma(self) -> float:
        return float(np.exp(self.log_gamma))

    @property
    def reliable(self) -> bool:
        return self.numerator.reliable and self.Z.reliable


@dataclass
class GammaCurve:
    points: list
    q: float
    M: int
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> np.ndarray:
        return np.array([p.T for p in self.points])

    @property
    def gamma(self) -> np.ndarray:
        return np.array([p.gamma for p in self.points])

    @property
    def se_log(self) -> np.ndarray:
        return np.array([p.se_log for p in self.points])

    @property
    def reliable(self) -> bool:
        return all(p.reliable for p in self.points)

    def rows(self):
        for p in self.points:
            yield {
                "T": p.T,
                "numerator": p.numerator.value,
                "Z_T": p.Z.value,
                "gamma": p.gamma,
                "log_gamma": p.log_gamma,
                "se_log": p.se_log,
                "ESS": min(p.numerator.ess, p.Z.ess),
                "reliable": int(p.reliable),
            }

    def strictly_decreasing(self, k_se: float = 1.0) -> bool:
        """Consecutive log-gamma drops exceed ``k_se`` combined standard errors."""
        lg = np.log(self.gamma)
        se = self.se_log
        return bool(all(lg[i] - lg[i + 1] > k_se * np.hypot(se[i], se[i + 1]) for i in range(lg.size - 1)))

    def nonincreasing(self, k_se: float = 3.0) -> bool:
        lg = np.log(self.gamma)
        se = self.se_log
        return bool(all(lg[i + 1] - lg[i] <= k_se * np.hypot(se[i], se[i + 1]) for i in range(lg.size - 1)))


def gamma_point(weights: PathWeights, q: float, n_batches: int = 32) -> GammaPoint:
    num = estimate_numerator(weights, q, n_batches)
    Z = estimate_Z(weights, q, n_batches)
    if q == 0:
        return GammaPoint(weights.T, num, Z, 0.0, 0.0)
    lg = 2 * num.log_value - Z.log_value
    return GammaPoint(weights.T, num, Z, lg, _joint_log_gamma_se(weights, q, n_batches))


def estimate_gamma(
    ens: PathEnsemble, pot, q: float, T_grid, lam: float, n_batches: int = 32, grid=None
) -> GammaCurve:
    """``gamma(T)`` on every window ``[-T, T]`` of one two-sided ensemble.

    The numerator uses the forward half ``[0, T]`` and the denominator the
    full window, so the Cauchy-Schwarz structure is kept exactly.
    """
    pts = [gamma_point(path_weights(ens, pot, lam, T, grid), q, n_batches) for T in T_grid]
    return GammaCurve(pts, float(q), ens.M, ens.seed, {"lambda": lam})


def z_shift_check(ens: PathEnsemble, pot, q: float, T: float, lam: float, k_se: float = 3.0, grid=None) -> dict:
    """``Z_T`` from ``[-T, T]`` against ``[0, 2T]`` (forward half of a ``2T`` window)."""
    full = estimate_Z(path_weights(ens, pot, lam, T, grid), q)
    shifted = estimate_numerator(path_weights(ens, pot, lam, 2 * T, grid), q)
    diff = full.log_value - shifted.log_value
    se = float(np.hypot(full.se_log, shifted.se_log))
    return {"log_Z": full.log_value, "log_Z_shifted": shifted.log_value, "se": se,
            "passed": bool(abs(diff) <= k_se * se + 1e-12)}


@dataclass
class UpperBound:
    T: float
    on_A: float
    off_A: float
    se_on: float
    se_off: float
    gamma: float
    se_gamma: float
    ess: float

    @property
    def total(self) -> float:
        return self.on_A + self.off_A

    @property
    def se_total(self) -> float:
        return float(np.hypot(self.se_on, self.se_off))

    @property
    def reliable(self) -> bool:
        return self.ess >= ESS_MIN

    @property
    def holds(self) -> bool:
        return self.gamma <= self.total + 3 * np.hypot(self.se_total, self.se_gamma)


def upper_bound_decomposition(weights: PathWeights, q: float, n_batches: int = 32) -> UpperBound:
    """``mu_T`` expectations of ``exp(-q^2 S_cross)`` on ``A_T`` and its complement.

    ``mu_T`` is the stationary path law reweighted by ``exp((q^2/2) S_full) / Z_T``.
    """
    lw = 0.5 * q * q * weights.S_full
    damp = np.exp(-q * q * weights.S_cross)
    A = weights.in_A.astype(float)
    on, se_on = weighted_mean(lw, damp * A, n_batches)
    off, se_off = weighted_mean(lw, damp * (1 - A), n_batches)
    g = gamma_point(weights, q, n_batches)
    return UpperBound(weights.T, on, off, se_on, se_off, g.gamma, g.gamma * g.se_log, ess(lw))


def tail_bound_constants(L: TransformedGenerator, grid, lam: float, delta: float, T_list):
    """``a, b`` of the fitted tail form, as maxima of the exit-bound constants over ``T_list``."""
    r = np.linalg.norm(grid.points, axis=1)
    a = b = 0.0
    for T in T_list:
        f = np.where(r >= T**lam, r, 0.0)
        boost = np.exp(2 * T ** (lam * (delta + 1)))
        a = max(a, np.e**2 * L.inner(f, f) * boost)
        b = max(b, np.e**2 * max(L.inner(f, L.matrix @ f), 0.0) * boost)
    return a, b


def tail_bound(T, a: float, b: float, lam: float, delta: float, two_sided: bool = True):
    """``T^{-lam} (a + bT)^{1/2} exp(-T^{lam(delta+1)})``, doubled for ``sup`` over ``[-T, T]``."""
    T = np.asarray(T, float)
    val = T**-lam * np.sqrt(a + b * T) * np.exp(-(T ** (lam * (delta + 1))))
    return 2 * val if two_sided else val


@dataclass
class TailReport:
    T: np.ndarray
    empirical: np.ndarray
    se: np.ndarray
    bound: np.ndarray
    a: float
    b: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.empirical <= self.bound + 3 * self.se))

    def decreasing(self) -> bool:
        e, s = self.empirical, self.se
        return bool(all(e[i] - e[i + 1] > np.hypot(s[i], s[i + 1]) or e[i] == 0 for i in range(e.size - 1)))


def tail_probability_check(ens: PathEnsemble, L, grid, lam: float, delta: float, T_list, n_batches: int = 32):
    """Empirical ``P(A_T^c)`` on each window against the fitted bound form."""
    check_lambda(lam, delta)
    r = np.linalg.norm(grid.points, axis=1)
    emp, se = [], []
    for T in T_list:
        w = ens.window(T)
        out = (r[w.states].max(axis=1) > T**lam).astype(float)
        m, s = batch_means(out, n_batches)
        emp.append(m[0])
        se.append(s[0])
    a, b = tail_bound_constants(L, grid, lam, delta, T_list)
    return TailReport(np.asarray(T_list, float), np.array(emp), np.array(se),
                      tail_bound(T_list, a, b, lam, delta), a, b)

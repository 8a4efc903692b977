"""Path samplers for the particle diffusion and the ground-state transformed process.

Two generators:

* ``SDE``: Euler-Maruyama for ``dX = b dt + sigma dB`` with ``b_k = 1/2 sum_j d_j A^{jk}``
  and ``sigma = A^{1/2}``; the generator of this process is ``-K_0``.
* ``KERNEL_CHAIN``: the stationary two-sided Markov chain on lattice points with
  transition matrix ``exp(-dt L)``, started from ``mu = psi^2 dx^d``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .grid import CoefficientSpec, Grid
from .spectral import TransformedGenerator
from .stats import batch_means

log = logging.getLogger(__name__)


class KernelError(RuntimeError):
    """The lattice transition matrix failed its stochasticity certificate."""


# ---------------------------------------------------------------------------
# Euler-Maruyama


@dataclass(frozen=True)
class SDEConfig:
    dt: float
    T: float
    M: int
    seed: int
    spec: CoefficientSpec
    grid: Grid
    workers: int = 1
    chunk: int = 2048
    fd_step: float = 1e-5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.M < 1:
            raise ValueError("need at least one path")

    @property
    def n_steps(self) -> int:
        n = int(round(self.T / self.dt))
        if abs(n * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError("T must be a multiple of dt")
        return n

    def drift(self, x: np.ndarray) -> np.ndarray:
        """``b_k(x) = 1/2 sum_j d_j A^{jk}(x)`` by central differences."""
        n, d = x.shape
        b = np.zeros((n, d))
        h = self.fd_step
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            dA = (self.spec.A(x + e) - self.spec.A(x - e)) / (2 * h)  # (n, d, d)
            b += 0.5 * dA[:, j, :]
        return b

    def sigma(self, x: np.ndarray) -> np.ndarray:
        A = self.spec.A(x)
        w, U = np.linalg.eigh(A)
        return (U * np.sqrt(np.clip(w, 0, None))[:, None, :]) @ np.swapaxes(U, 1, 2)

    def sigma_defect(self, x: np.ndarray) -> float:
        """``max |sigma sigma^T - A|`` over the given points."""
        s = self.sigma(x)
        return float(np.max(np.abs(s @ np.swapaxes(s, 1, 2) - self.spec.A(x))))

    def constant_coefficients(self, x: np.ndarray) -> bool:
        A = self.spec.A(x)
        return bool(np.allclose(A, np.eye(x.shape[1])[None], atol=0, rtol=0))


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Discretized paths. ``states`` holds node indices (chain) or positions (SDE)."""

    times: np.ndarray
    states: np.ndarray
    kind: str
    seed: int
    dt: float
    grid: Grid
    zero_index: int = 0
    reflections: int = 0
    streams: str = "philox(seed, path << 3 | purpose)"

    @property
    def M(self) -> int:
        return self.states.shape[0]

    @property
    def two_sided(self) -> bool:
        return self.zero_index > 0

    def col(self, t: float) -> int:
        k = int(round(t / self.dt)) + self.zero_index
        if not (0 <= k < self.times.size) or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the ensemble grid")
        return k

    def positions(self, cols=None) -> np.ndarray:
        """Continuum positions ``(M, n_t, d)``."""
        s = self.states if cols is None else self.states[:, cols]
        if self.kind == "KERNEL_CHAIN":
            return self.grid.points[s]
        return s

    def window(self, T: float) -> "PathEnsemble":
        """Sub-ensemble on ``[-T, T]`` (or ``[0, T]``)."""
        k = int(round(T / self.dt))
        lo = self.zero_index - k if self.two_sided else 0
        if lo < 0 or self.zero_index + k >= self.times.size:
            raise ValueError("window exceeds the ensemble horizon")
        sl = slice(lo, self.zero_index + k + 1)
        return PathEnsemble(
            self.times[sl], self.states[:, sl], self.kind, self.seed, self.dt, self.grid,
            self.zero_index - lo, self.reflections, self.streams,
        )


def _reflect(x: np.ndarray, R: float):
    """Specular reflection into ``[-R, R]``; returns positions and the number of reflections."""
    over = np.abs(x) > R
    n = int(over.sum())
    if n:
        x = np.where(x > R, 2 * R - x, x)
        x = np.where(x < -R, -2 * R - x, x)
        x = np.clip(x, -R, R)
    return x, n


def _em_step(cfg: SDEConfig, x, dW, constant):
    if constant:
        return x + dW
    flat = x.reshape(-1, x.shape[-1])
    b = cfg.drift(flat)
    s = cfg.sigma(flat)
    inc = b * cfg.dt + np.einsum("nij,nj->ni", s, dW.reshape(flat.shape))
    return (flat + inc).reshape(x.shape)


def euler_maruyama(cfg: SDEConfig, x0, record_every: int = 1) -> PathEnsemble:
    """``M`` Euler-Maruyama paths from ``x0`` with specular reflection at the box wall."""
    d = cfg.grid.d
    x0 = np.asarray(x0, float).reshape(d)
    n = cfg.n_steps
    rec = list(range(0, n + 1, record_every))
    constant = cfg.constant_coefficients(x0[None])
    sq = np.sqrt(cfg.dt)

    def run(idx):
        dW = rng.normals(cfg.seed, "sde", idx, (n, d)) * sq
        x = np.repeat(x0[None], len(idx), axis=0)
        out = np.empty((len(idx), len(rec), d))
        out[:, 0] = x
        refl = 0
        r = 1
        for k in range(1, n + 1):
            x = _em_step(cfg, x, dW[:, k - 1], constant)
            x, c = _reflect(x, cfg.grid.R)
            refl += c
            if r < len(rec) and rec[r] == k:
                out[:, r] = x
                r += 1
        return out, refl

    parts = rng.parallel_map(run, rng.chunks(cfg.M, cfg.chunk), cfg.workers)
    states = np.concatenate([p[0] for p in parts])
    refl = sum(p[1] for p in parts)
    times = np.array(rec, float) * cfg.dt
    return PathEnsemble(times, states, "SDE", cfg.seed, cfg.dt * record_every, cfg.grid, 0, refl)


@dataclass
class FKEstimate:
    value: np.ndarray
    se: np.ndarray
    reflections: int


def feynman_kac_estimate(
    cfg: SDEConfig, f, V, t: float | None = None, starts=None, n_batches: int = 32
) -> FKEstimate:
    """Monte Carlo ``E[f(X_t) exp(-int_0^t V(X_s) ds)]`` from every start point.

    ``f`` and ``V`` are callables on ``(n, d)`` positions. All start points
    share the same Brownian increments per path index (common random numbers),
    and ``int V`` is the trapezoid sum on the ``dt`` grid.
    """
    if t is not None and abs(t - cfg.T) > 1e-12:
        cfg = SDEConfig(cfg.dt, t, cfg.M, cfg.seed, cfg.spec, cfg.grid, cfg.workers, cfg.chunk)
    d = cfg.grid.d
    starts = cfg.grid.points if starts is None else np.atleast_2d(np.asarray(starts, float))
    S = starts.shape[0]
    n = cfg.n_steps
    dt = cfg.dt
    sq = np.sqrt(dt)
    constant = cfg.constant_coefficients(starts)

    def run(idx):
        m = len(idx)
        dW = rng.normals(cfg.seed, "sde", idx, (n, d)) * sq  # (m, n, d)
        x = np.broadcast_to(starts[None], (m, S, d)).copy()
        vprev = V(x.reshape(-1, d)).reshape(m, S)
        I = np.zeros((m, S))
        refl = 0
        for k in range(n):
            x = _em_step(cfg, x, np.broadcast_to(dW[:, k, None, :], (m, S, d)), constant)
            x, c = _reflect(x, cfg.grid.R)
            refl += c
            vnew = V(x.reshape(-1, d)).reshape(m, S)
            I += 0.5 * dt * (vprev + vnew)
            vprev = vnew
        vals = f(x.reshape(-1, d)).reshape(m, S) * np.exp(-I)
        return vals, refl

    parts = rng.parallel_map(run, rng.chunks(cfg.M, cfg.chunk), cfg.workers)
    vals = np.concatenate([p[0] for p in parts])
    mean, se = batch_means(vals, n_batches)
    return FKEstimate(mean, se, sum(p[1] for p in parts))


# ---------------------------------------------------------------------------
# kernel chain


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    dt: float
    P: np.ndarray
    cum: np.ndarray
    clip_mass: float
    renorm_defect: float
    mu: np.ndarray
    mu_cum: np.ndarray

    @property
    def n(self) -> int:
        return self.P.shape[0]


def _cumrows(P: np.ndarray) -> np.ndarray:
    c = np.cumsum(P, axis=-1)
    c[..., -1] = 1.0
    return c


def build_transition_kernel(
    L: TransformedGenerator, dt: float, accurate: bool = True, neg_tol: float = 1e-9
) -> TransitionKernel:
    """Row-stochastic ``P = exp(-dt L)`` with clip-and-renormalize bookkeeping."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    P = np.array(L.semigroup(dt, accurate=accurate))
    neg = float(-np.sum(np.where(P < 0, P, 0.0), axis=1).max())
    if neg > neg_tol:
        raise KernelError(f"negative transition mass {neg:.3g}; increase dt")
    P = np.clip(P, 0.0, None)
    rows = P.sum(axis=1)
    defect = float(np.max(np.abs(rows - 1.0)))
    if defect > neg_tol:
        raise KernelError(f"row sums deviate from one by {defect:.3g}")
    P /= rows[:, None]
    mu = np.array(L.mu) / np.sum(L.mu)
    P.setflags(write=False)
    return TransitionKernel(float(dt), P, _cumrows(P), neg, defect, mu, _cumrows(mu[None])[0])


def chapman_kolmogorov_defect(L: TransformedGenerator, dt: float, accurate: bool = True) -> float:
    P1 = L.semigroup(dt, accurate=accurate)
    P2 = L.semigroup(2 * dt, accurate=accurate)
    return float(np.max(np.abs(P1 @ P1 - P2)))


def inverse_cdf(cum: np.ndarray, rows: np.ndarray | None, u: np.ndarray) -> np.ndarray:
    """First column ``j`` with ``cum[row, j] >= u`` (vectorized bisection)."""
    n = cum.shape[-1]
    lo = np.zeros(u.shape, dtype=np.int64)
    hi = np.full(u.shape, n - 1, dtype=np.int64)
    while True:
        active = lo < hi
        if not active.any():
            return lo
        mid = (lo + hi) // 2
        vals = cum[mid] if rows is None else cum[rows, mid]
        go = vals < u
        lo = np.where(active & go, mid + 1, lo)
        hi = np.where(active & ~go, mid, hi)


def run_chain(kernel: TransitionKernel, x0: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Advance chains from ``x0`` with uniforms ``u`` of shape ``(m, K)``; returns ``(m, K)``."""
    m, K = u.shape
    out = np.empty((m, K), dtype=np.int64)
    s = x0
    for k in range(K):
        s = inverse_cdf(kernel.cum, s, u[:, k])
        out[:, k] = s
    return out


def sample_stationary_two_sided(
    kernel: TransitionKernel,
    T: float,
    M: int,
    seed: int,
    workers: int = 1,
    chunk: int = 1024,
    one_sided: bool = False,
    grid: Grid | None = None,
) -> PathEnsemble:
    """Stationary chain on ``t_k = k dt``, ``k = -K..K``, with ``X_0 ~ mu``.

    The forward and backward halves are driven by independent streams keyed
    by path index; the backward half uses the same kernel (reversibility).
    """
    K = int(round(T / kernel.dt))
    if abs(K * kernel.dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be a multiple of the kernel step")

    def run(idx):
        u0 = rng.uniforms_open(seed, "init", idx, 1)[:, 0]
        x0 = inverse_cdf(kernel.mu_cum, None, u0)
        fwd = run_chain(kernel, x0, rng.uniforms_open(seed, "forward", idx, K))
        if one_sided:
            return np.concatenate([x0[:, None], fwd], axis=1)
        bwd = run_chain(kernel, x0, rng.uniforms_open(seed, "backward", idx, K))
        return np.concatenate([bwd[:, ::-1], x0[:, None], fwd], axis=1)

    parts = rng.parallel_map(run, rng.chunks(M, chunk), workers)
    states = np.concatenate(parts)
    if one_sided:
        times = np.arange(K + 1) * kernel.dt
        z = 0
    else:
        times = np.arange(-K, K + 1) * kernel.dt
        z = K
    return PathEnsemble(times, states, "KERNEL_CHAIN", seed, kernel.dt, grid, z)


def attach_grid(ens: PathEnsemble, grid: Grid) -> PathEnsemble:
    return PathEnsemble(ens.times, ens.states, ens.kind, ens.seed, ens.dt, grid, ens.zero_index, ens.reflections)


# ---------------------------------------------------------------------------
# checks on ensembles


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    reference: float
    se: float
    detail: dict = field(default_factory=dict)


def _null_tv(mu: np.ndarray, M: int, reps: int, seed: int, two_sample: bool = False):
    g = rng.stream(seed, 0, "misc")
    tv = np.empty(reps)
    for r in range(reps):
        a = g.multinomial(M, mu) / M
        b = g.multinomial(M, mu) / M if two_sample else mu
        tv[r] = 0.5 * np.abs(a - b).sum()
    return float(tv.mean()), float(tv.std(ddof=1))


def stationarity_check(ens: PathEnsemble, mu: np.ndarray, reps: int = 200, seed: int = 7) -> Check:
    """Total-variation distance of every time marginal to ``mu`` against its multinomial null.

    Passes iff every marginal TV is within mean + 3 SD of the null TV distribution.
    """
    n = mu.size
    m0, sd = _null_tv(mu, ens.M, reps, seed)
    tvs = np.array([0.5 * np.abs(np.bincount(ens.states[:, k], minlength=n) / ens.M - mu).sum()
                    for k in range(ens.times.size)])
    lim = m0 + 3 * sd
    return Check("stationarity", bool(np.all(tvs <= lim)), float(tvs.max()), lim, sd,
                 {"tv": tvs.tolist(), "null_mean": m0})


def time_reversal_check(ens: PathEnsemble, mu: np.ndarray, reps: int = 200, seed: int = 11) -> Check:
    """Laws of ``X_{-t}`` and ``X_t`` agree: TV between the two empirical marginals vs a two-sample null."""
    n = mu.size
    m0, sd = _null_tv(mu, ens.M, reps, seed, two_sample=True)
    z = ens.zero_index
    tvs = []
    for k in range(1, z + 1):
        a = np.bincount(ens.states[:, z + k], minlength=n) / ens.M
        b = np.bincount(ens.states[:, z - k], minlength=n) / ens.M
        tvs.append(0.5 * np.abs(a - b).sum())
    tvs = np.array(tvs)
    lim = m0 + 3 * sd
    return Check("time_reversal", bool(np.all(tvs <= lim)), float(tvs.max()), lim, sd, {"tv": tvs.tolist()})


def sandwich_exact(L: TransformedGenerator, f_list, t_list, accurate: bool = True) -> float:
    """``int dmu f_0 exp(-(t_1-t_0)L) f_1 ... f_n`` with times sorted (reversibility)."""
    order = np.argsort(t_list, kind="stable")
    ts = np.asarray(t_list, float)[order]
    fs = [np.asarray(f_list[i], float) for i in order]
    v = fs[-1].copy()
    for i in range(len(fs) - 2, -1, -1):
        dt = ts[i + 1] - ts[i]
        if dt > 0:
            v = L.semigroup(dt, accurate=accurate) @ v
        v = fs[i] * v
    return float(np.sum(L.mu * v) / np.sum(L.mu))


def finite_dim_distribution_check(
    ens: PathEnsemble, f_list, t_list, L: TransformedGenerator, n_batches: int = 32, k_se: float = 3.0
) -> Check:
    """Monte Carlo product moment against the exact spectral sandwich."""
    prod = np.ones(ens.M)
    for f, t in zip(f_list, t_list):
        prod *= np.asarray(f)[ens.states[:, ens.col(t)]]
    mean, se = batch_means(prod[:, None], n_batches)
    ref = sandwich_exact(L, f_list, t_list)
    ok = abs(mean[0] - ref) <= k_se * se[0] + 1e-12
    return Check("finite_dim", bool(ok), float(mean[0]), ref, float(se[0]), {"t": list(map(float, t_list))})


def shift_invariance_check(ens, f, g, h, shifts, L, k_se: float = 3.0) -> Check:
    """``E[f(X_s) g(X_{s+h})]`` is the same exact number for every shift ``s``."""
    results = [finite_dim_distribution_check(ens, [f, g], [s, s + h], L, k_se=k_se) for s in shifts]
    worst = max(results, key=lambda c: abs(c.value - c.reference) / max(c.se, 1e-300))
    return Check("shift_invariance", all(c.passed for c in results), worst.value, worst.reference, worst.se,
                 {"shifts": list(map(float, shifts))})


def reversibility_check(ens, f, g, s: float, t: float, n_batches: int = 32, k_se: float = 3.0) -> Check:
    """``E[f(X_s) g(X_t)] = E[g(X_s) f(X_t)]`` within batch-means SE of the difference."""
    a = np.asarray(f)[ens.states[:, ens.col(s)]] * np.asarray(g)[ens.states[:, ens.col(t)]]
    b = np.asarray(g)[ens.states[:, ens.col(s)]] * np.asarray(f)[ens.states[:, ens.col(t)]]
    mean, se = batch_means((a - b)[:, None], n_batches)
    return Check("reversibility", bool(abs(mean[0]) <= k_se * se[0] + 1e-12), float(mean[0]), 0.0, float(se[0]))


def markov_check(ens: PathEnsemble, kernel: TransitionKernel, min_visits: int = 200) -> Check:
    """One-step transition frequencies out of well-visited nodes vs the kernel rows.

    Pooled chi-square over nodes; bins with expected count below 5 are merged.
    Passes iff ``chi2 <= df + 3 sqrt(2 df)``.
    """
    src = ens.states[:, ens.zero_index:-1].ravel()
    dst = ens.states[:, ens.zero_index + 1:].ravel()
    n = kernel.n
    chi2, df = 0.0, 0
    counts = np.bincount(src, minlength=n)
    for x in np.flatnonzero(counts >= min_visits):
        obs = np.bincount(dst[src == x], minlength=n).astype(float)
        exp = kernel.P[x] * counts[x]
        big = exp >= 5
        o = list(obs[big]) + [obs[~big].sum()]
        e = list(exp[big]) + [exp[~big].sum()]
        o, e = np.array(o), np.array(e)
        keep = e > 0
        if keep.sum() < 2:
            continue
        chi2 += float(np.sum((o[keep] - e[keep]) ** 2 / e[keep]))
        df += int(keep.sum() - 1)
    lim = df + 3 * np.sqrt(2 * max(df, 1))
    return Check("markov", bool(chi2 <= lim), chi2, float(lim), 0.0, {"df": df})


def moment_bound_check(ens: PathEnsemble, n: int = 1, max_lag: int | None = None, tol: float = 1.2) -> Check:
    """``C = sup_lag E|X_{t+lag} - X_t|^{2n} / lag^n`` on the grid and on the 2x coarser grid.

    Passes iff ``C`` is finite and the two refinements agree within a factor ``tol``.
    """
    X = ens.positions()
    nt = X.shape[1]
    max_lag = max_lag or max(2, (nt - 1) // 4)

    def fit(step):
        vals = []
        for lag in range(step, max_lag + 1, step):
            dX = X[:, lag:] - X[:, :-lag]
            m = np.mean(np.sum(dX * dX, axis=-1) ** n)
            vals.append(m / (lag * ens.dt) ** n)
        return float(np.max(vals))

    c1, c2 = fit(1), fit(2)
    ratio = c1 / c2 if c2 > 0 else np.inf
    ok = np.isfinite(c1) and 1 / tol <= ratio <= tol
    return Check(f"moment_n{n}", bool(ok), c1, c2, 0.0, {"ratio": ratio})


def exit_probability_check(
    ens: PathEnsemble, f, Lam: float, T: float, L: TransformedGenerator, n_batches: int = 32
) -> Check:
    """``P(sup_{0<=s<=T} |f(X_s)| >= Lam) <= (e/Lam) sqrt((f|f) + T (f|Lf))`` in ``mu`` weighting."""
    f = np.asarray(f, float)
    k0, k1 = ens.col(0.0), ens.col(T)
    hit = (np.abs(f[ens.states[:, k0:k1 + 1]]).max(axis=1) >= Lam).astype(float)
    mean, se = batch_means(hit[:, None], n_batches)
    Lf = L.matrix @ f
    form = max(L.inner(f, Lf), 0.0)
    rhs = float(np.e / Lam * np.sqrt(L.inner(f, f) + T * form))
    return Check("exit_probability", bool(mean[0] <= rhs + 3 * se[0]), float(mean[0]), rhs, float(se[0]))


def stopping_time_estimate(
    ens: PathEnsemble, G, n_sub: int, rho: float, psi, L: TransformedGenerator, T: float,
    n_batches: int = 32,
) -> Check:
    """Both sides of ``int dmu (E^x rho^tau)^2 <= (psi|psi) + r/(1-r) (psi|(1 - e^{-(T/n)L}) psi)``.

    ``r = rho^{T/n}``. The left side is estimated without bias as
    ``E[rho^{tau_fwd} rho^{tau_bwd}]`` because the two halves are independent
    given ``X_0`` and share its law.
    """
    if not 0 < rho < 1:
        raise ValueError("need 0 < rho < 1")
    G = np.asarray(G, bool)
    psi = np.asarray(psi, float)
    if np.any(psi < 0) or np.any(psi[G] < 1):
        raise ValueError("psi must be nonnegative and at least 1 on G")
    h = T / n_sub
    cols_f = [ens.col(j * h) for j in range(n_sub + 1)]
    cols_b = [ens.col(-j * h) for j in range(n_sub + 1)]

    def disc(cols):
        inG = G[ens.states[:, cols]]  # (M, n+1)
        first = np.where(inG.any(axis=1), inG.argmax(axis=1), -1)
        return np.where(first >= 0, rho ** (np.maximum(first, 0) * h), 0.0)

    prod = disc(cols_f) * disc(cols_b)
    mean, se = batch_means(prod[:, None], n_batches)
    r = rho**h
    Pm = L.semigroup(h, accurate=True)
    rhs = L.inner(psi, psi) + r / (1 - r) * L.inner(psi, psi - Pm @ psi)
    return Check("stopping_time", bool(mean[0] <= rhs + 3 * se[0]), float(mean[0]), float(rhs), float(se[0]))

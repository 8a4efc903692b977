"""End-to-end check pipelines shared by the command line and the acceptance tests.

Each ``run_*`` function takes a :class:`~nelsonlab.presets.Preset` and returns
a report dict with a ``checks`` mapping of named pass/fail entries plus any
tabular rows for CSV output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import diffusion as dif
from . import fock as fk
from . import gamma as gm
from . import pairpot as pp
from .grid import Gaussian
from .kernels import (
    gaussian_bound_fit,
    heat_kernel,
    log_convexity_check,
    subordinated_scalar,
    subordination_semigroup,
    trotter_check,
)
from .operators import assemble_h, assemble_h0, assemble_k, assemble_k0
from .presets import Preset
from .spectral import build_L, decay_check, ground_state, omega_sqrt


def _check(passed, **info) -> dict:
    return {"passed": bool(passed), **info}


def _finish(report: dict) -> dict:
    report["passed"] = all(c["passed"] for c in report["checks"].values())
    return report


@dataclass
class Particle:
    K: object
    K_spec: object
    ground: object
    L: object


@dataclass
class Field:
    h: object
    omega: object
    charges: object
    modal: object


def particle(p: Preset) -> Particle:
    K = assemble_k(p.grid, p.spec, confining=p.confining)
    Ks = K.spectrum
    gs = ground_state(Ks, p.spec.delta)
    return Particle(K, Ks, gs, build_L(Ks, gs))


def boson_field(p: Preset, n_modes: int | None = None) -> Field:
    h = assemble_h(p.grid, p.spec)
    om = omega_sqrt(h.spectrum)
    ch = pp.smeared_charges(p.grid, p.spec)
    return Field(h, om, ch, pp.modal_pair_potential(om.spectrum, ch, n_modes))


# ---------------------------------------------------------------------------
# spectrum


def run_spectrum(p: Preset) -> dict:
    part = particle(p)
    fld = boson_field(p)
    Ks, gs, L = part.K_spec, part.ground, part.L
    hs = fld.h.spectrum
    checks, skipped = {}, []
    checks["residuals"] = _check(max(Ks.residuals.max(), hs.residuals.max()) <= 1e-10 * max(1, np.abs(Ks.values).max()),
                                 K=float(Ks.residuals.max()), h=float(hs.residuals.max()))
    checks["psi_positive"] = _check(gs.psi.min() > 0, min_psi=float(gs.psi.min()))
    checks["gap"] = _check(gs.gap > 1e-12, gap=gs.gap)
    h = fld.h.matrix
    om = fld.omega.matrix
    dev = float(np.max(np.abs(om @ om - h)) / np.max(np.abs(h)))
    checks["omega_squared"] = _check(dev <= 1e-9, deviation=dev)
    one = np.ones(L.n)
    checks["L_one"] = _check(np.max(np.abs(L.matrix @ one)) <= 1e-9 * max(1, np.abs(L.matrix).max()),
                             defect=float(np.max(np.abs(L.matrix @ one))))
    stoch = max(float(np.max(np.abs(L.semigroup(t, accurate=True) @ one - 1))) for t in (0.1, 1.0, 10.0))
    checks["semigroup_stochastic"] = _check(stoch <= 1e-9, defect=stoch)
    P = L.semigroup(1.0, accurate=True)
    flux = L.mu[:, None] * P
    db = float(np.max(np.abs(flux - flux.T)))
    checks["detailed_balance"] = _check(db <= 1e-9, defect=db)
    u = gs.unit_vector
    sim = (u[:, None] * L.matrix / u[None, :]) - (part.K.matrix - gs.E0 * np.eye(L.n))
    checks["similarity"] = _check(np.max(np.abs(sim)) <= 1e-10 * max(1, np.abs(part.K.matrix).max()),
                                  defect=float(np.max(np.abs(sim))))
    if p.spec.delta:
        dr = decay_check(gs, p.spec.delta)
        if dr.n_fit >= 3:
            checks["decay"] = _check(dr.passed, exponent=dr.exponent, beta=dr.beta)
        else:
            skipped.append("decay: fewer than 3 points in the fit window")
    rows = [{"index": i, "K": float(Ks.values[i]), "h": float(hs.values[i]), "omega": float(np.sqrt(max(hs.values[i], 0)))}
            for i in range(Ks.n)]
    pts = p.grid.points
    psi_rows = [{**{f"x{j}": float(pts[i, j]) for j in range(p.grid.d)}, "psi": float(gs.psi[i]),
                 "mu": float(gs.mu[i])} for i in range(pts.shape[0])]
    return _finish({"preset": p.name, "E0": gs.E0, "gap": gs.gap, "refined": gs.refined,
                    "checks": checks, "skipped": skipped, "rows": rows, "psi_rows": psi_rows})


# ---------------------------------------------------------------------------
# kernels


def run_kernel_check(p: Preset, t_grid=None) -> dict:
    t_grid = np.asarray(t_grid if t_grid is not None else p.settings.get("t_grid", np.geomspace(0.05, 5.0, 8)), float)
    grid, spec = p.grid, p.spec
    K0 = assemble_k0(grid, spec)
    h0 = assemble_h0(grid, spec)
    h = assemble_h(grid, spec)
    checks, fits = {}, {}
    for kind, op in (("K0", K0), ("h", h)):
        t0 = time.perf_counter()
        sl = [heat_kernel(op, t, method="nonneg") for t in t_grid]
        lo = gaussian_bound_fit(sl, "lower")
        up = gaussian_bound_fit(sl, "upper")
        lo_t, hi_t = p.rate_targets.get(kind, (np.nan, np.nan))
        bracket = lo.verified and up.verified and lo.c <= lo_t * (1 + 1e-9) and up.c >= hi_t * (1 - 1e-9)
        fits[kind] = {"lower": {"C": lo.C, "c": lo.c, "verified": lo.verified, "reason": lo.reason},
                      "upper": {"C": up.C, "c": up.c, "verified": up.verified, "reason": up.reason},
                      "target": [lo_t, hi_t], "seconds": time.perf_counter() - t0}
        if p.bound_fit:
            checks[f"gaussian_bound_{kind}"] = _check(bracket, **fits[kind])
        eig = [heat_kernel(op, t, method="eigen") for t in (0.1, 0.4, 0.5)]
        neg = min(s.min_entry for s in eig)
        checks[f"positivity_{kind}"] = _check(neg >= -1e-10, min_entry=neg)
        Gs, Gt, Gst = (s.as_matrix() for s in eig)
        sg = float(np.max(np.abs(Gs @ Gt - Gst)) / np.max(np.abs(Gst)))
        checks[f"semigroup_{kind}"] = _check(sg <= 1e-9, defect=sg)
    Gm = heat_kernel(h, 1.0, method="nonneg").as_matrix()
    G0 = heat_kernel(h0, 1.0, method="nonneg").as_matrix()
    checks["mass_monotone"] = _check(np.all(Gm <= G0 * (1 + 1e-12) + 1e-300),
                                     worst=float(np.max(Gm - G0)))
    V = spec.sample(grid, "V")
    m2 = spec.sample(grid, "m") ** 2
    perturb = [w / np.abs(w).max() for w in (m2 + 1.0, V) if np.abs(w).max() > 0]
    cv = [log_convexity_check(h0, w, np.linspace(-1.0, 1.0, 5)) for w in perturb]
    checks["log_convexity"] = _check(all(c.passed for c in cv), worst=max(c.worst_excess for c in cv))
    tr = trotter_check(K0, V, min(1.0, 10.0 / max(np.abs(V).max(), 1e-300)), [16, 32, 64])
    checks["trotter"] = _check(all(0.4 <= r <= 0.6 for r in tr.ratios), errors=tr.errors, ratios=tr.ratios)
    sub = subordination_semigroup(h.spectrum, 0.5)
    scal = float(abs(subordinated_scalar(np.array([1.0]), 1.0)[0] - np.exp(-1.0)))
    checks["subordination"] = _check(sub.max_deviation <= 1e-6 and scal <= 1e-8, deviation=sub.max_deviation,
                                     scalar=scal)
    return _finish({"preset": p.name, "t_grid": t_grid.tolist(), "fits": fits, "checks": checks})


# ---------------------------------------------------------------------------
# Feynman-Kac


def run_fk_check(p: Preset, workers: int = 1, seed: int | None = None) -> dict:
    s = p.settings
    t = float(s.get("fk_t", 1.0))
    K = assemble_k(p.grid, p.spec, confining=p.confining)
    exact_all = K.spectrum.semigroup(t) @ np.ones(p.grid.n_points)
    pts = p.grid.points
    sel = np.linalg.norm(pts, axis=1) <= float(s.get("fk_radius", 3.0)) + 1e-12
    cfg = dif.SDEConfig(float(s.get("fk_dt", 1e-3)), t, int(s.get("fk_M", 20000)),
                        int(seed if seed is not None else p.seed), p.spec, p.grid, workers=workers)
    t0 = time.perf_counter()
    est = dif.feynman_kac_estimate(cfg, lambda x: np.ones(len(x)), lambda x: p.spec.V(x), starts=pts[sel])
    secs = time.perf_counter() - t0
    exact = exact_all[sel]
    z = (est.value - exact) / est.se
    rel = np.abs(est.value / exact - 1)
    rows = [{**{f"x{j}": float(pts[sel][i, j]) for j in range(p.grid.d)}, "mc": float(est.value[i]),
             "se": float(est.se[i]), "spectral": float(exact[i]), "z": float(z[i]), "rel": float(rel[i])}
            for i in range(exact.size)]
    checks = {
        "within_3se": _check(np.all(np.abs(z) <= 3), max_abs_z=float(np.abs(z).max())),
        "within_2pct": _check(np.all(rel <= 0.02), max_rel=float(rel.max()),
                              worst_x=float(np.linalg.norm(pts[sel][np.argmax(rel)]))),
    }
    return _finish({"preset": p.name, "M": cfg.M, "dt": cfg.dt, "reflections": est.reflections, "seconds": secs,
                    "checks": checks, "rows": rows})


# ---------------------------------------------------------------------------
# stationary L-chain


def _test_functions(p: Preset):
    r = np.linalg.norm(p.grid.points, axis=1)
    scale = max(r.max(), 1e-12)
    f = np.exp(-((r / (0.3 * scale)) ** 2))
    g = np.cos(np.pi * p.grid.points[:, 0] / (2 * p.grid.R)) * (r <= 0.5 * scale + 1e-12)
    k = (p.grid.points[:, 0] >= 0).astype(float)
    return f, g, k


def stationary_ensemble(p: Preset, part: Particle | None = None, T: float | None = None, M: int | None = None,
                        workers: int = 1, seed: int | None = None):
    part = part or particle(p)
    s = p.settings
    ker = dif.build_transition_kernel(part.L, float(s.get("dt", 0.05)))
    T = float(T if T is not None else s.get("T", 2.0))
    ens = dif.sample_stationary_two_sided(ker, T, int(M if M is not None else s.get("M", 10000)),
                                          int(seed if seed is not None else p.seed), workers=workers, grid=p.grid)
    return part, ker, ens


def run_paths(p: Preset, workers: int = 1, seed: int | None = None, T: float | None = None,
              M: int | None = None) -> dict:
    t0 = time.perf_counter()
    part, ker, ens = stationary_ensemble(p, T=T, M=M, workers=workers, seed=seed)
    L = part.L
    T = ens.zero_index * ens.dt
    f, g, k = _test_functions(p)
    h1 = ens.dt * max(1, int(round(0.5 * T / ens.dt)) // 2)
    checks = {}
    checks["kernel_stochastic"] = _check(np.max(np.abs(ker.P.sum(axis=1) - 1)) <= 1e-12,
                                         clip_mass=ker.clip_mass, renorm=ker.renorm_defect)
    ck = dif.chapman_kolmogorov_defect(L, ker.dt)
    checks["chapman_kolmogorov"] = _check(ck <= 1e-9, defect=ck)
    st = dif.stationarity_check(ens, ker.mu)
    checks["stationarity"] = _check(st.passed, max_tv=st.value, limit=st.reference)
    tr = dif.time_reversal_check(ens, ker.mu)
    checks["time_reversal"] = _check(tr.passed, max_tv=tr.value, limit=tr.reference)
    sh = dif.shift_invariance_check(ens, f, g, h1, [-T + h1, -h1, 0.0, T - 2 * h1], L)
    checks["shift_invariance"] = _check(sh.passed, value=sh.value, exact=sh.reference, se=sh.se)
    fd = {}
    for name, fl, tl in (("n1", [f], [h1]), ("n2", [f, g], [0.0, 2 * h1]), ("n3", [f, g, k], [-2 * h1, 0.0, 2 * h1])):
        c = dif.finite_dim_distribution_check(ens, fl, tl, L)
        fd[name] = c
        checks[f"finite_dim_{name}"] = _check(c.passed, value=c.value, exact=c.reference, se=c.se, times=tl)
    rv = dif.reversibility_check(ens, f, k, -h1, 2 * h1)
    checks["reversibility"] = _check(rv.passed, value=rv.value, se=rv.se)
    mk = dif.markov_check(ens, ker)
    checks["markov"] = _check(mk.passed, chi2=mk.value, limit=mk.reference, df=mk.detail["df"])
    secs = time.perf_counter() - t0
    return _finish({"preset": p.name, "M": ens.M, "T": T, "dt": ens.dt, "seconds": secs, "checks": checks,
                    "ensemble": ens})


def run_inequalities(p: Preset, workers: int = 1, seed: int | None = None, M: int | None = None,
                     T: float = 4.0) -> dict:
    """Exit-probability, stopping-time and moment bounds on one stationary ensemble."""
    part, ker, ens = stationary_ensemble(p, T=T, M=M, workers=workers, seed=seed)
    L = part.L
    r = np.linalg.norm(p.grid.points, axis=1)
    lam = float(p.settings.get("lam", gm.default_lambda(p.spec.delta or 1.0)))
    checks = {}
    for TT in (1.0, 2.0, T):
        f = np.where(r >= TT**lam, r, 0.0)
        ex = dif.exit_probability_check(ens, f, TT**lam, TT, L)
        checks[f"exit_T{TT:g}"] = _check(ex.passed, lhs=ex.value, rhs=ex.reference, se=ex.se)
    ones = np.ones(L.n)
    ex1 = dif.exit_probability_check(ens, ones, 0.5, T, L)
    checks["exit_constant"] = _check(ex1.passed and ex1.value == 1.0, lhs=ex1.value, rhs=ex1.reference)
    # outer shell carrying about a quarter of the stationary mass
    order = np.argsort(r)[::-1]
    rG = r[order][np.searchsorted(np.cumsum(L.mu[order]), 0.25)]
    G = r >= rG
    psi = r / max(rG, 1e-12)
    for n_sub, rho in ((4, 0.5), (8, 0.9)):
        stp = dif.stopping_time_estimate(ens, G, n_sub, rho, psi, L, T)
        checks[f"stopping_n{n_sub}"] = _check(stp.passed, lhs=stp.value, rhs=stp.reference, se=stp.se)
    mb = dif.moment_bound_check(ens, 1)
    checks["moment_n1"] = _check(mb.passed, C=mb.value, C_coarse=mb.reference, ratio=mb.detail["ratio"])
    return _finish({"preset": p.name, "M": ens.M, "T": T, "checks": checks})


# ---------------------------------------------------------------------------
# pair potential


def run_pairpot(p: Preset, t_grid=None) -> dict:
    fld = boson_field(p)
    t_short = np.asarray(t_grid if t_grid is not None else [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0], float)
    spec_tab = pp.compute_W(fld.omega.spectrum, fld.charges, t_short, "SPECTRAL")
    sub_tab = pp.compute_W(fld.omega.spectrum, fld.charges, t_short, "SUBORDINATION")
    c = spec_tab.check()
    scale = float(np.abs(spec_tab.W).max())
    agree = float(np.max(np.abs(spec_tab.W - sub_tab.W)) / scale)
    checks = {
        "nonnegative": _check(c["nonnegative"], min=c["min"]),
        "symmetric": _check(c["asymmetry"] <= 1e-12 * scale, asymmetry=c["asymmetry"]),
        "monotone": _check(c["max_increase"] <= 1e-12 * scale, max_increase=c["max_increase"]),
        "methods_agree": _check(agree <= 1e-6, relative=agree),
    }
    xi_val = pp.xi_constant(lambda k: np.exp(-k * k))
    checks["xi_gaussian_profile"] = _check(abs(xi_val - np.pi**1.5) <= 1e-8, xi=xi_val)
    al = pp.double_time_integral_bound_check(1.0, np.sqrt(2.0))
    checks["double_integral_log2"] = _check(al.passed and abs(al.rhs - np.log(2.0)) <= 1e-12, lhs=al.lhs, rhs=al.rhs)
    report = {"preset": p.name, "t_grid": t_short.tolist(), "checks": checks}
    if p.grid.d == 3 and isinstance(p.spec.rho, Gaussian):
        rho = p.spec.rho
        worst = 0.0
        for D in (0.0, 1.0, 2.0):
            for t in (0.0, 1.0):
                _, rel = pp.W_infinity_checked(rho, [D, 0, 0], t)
                worst = max(worst, rel)
        checks["W_inf_methods"] = _check(worst <= 1e-6, relative=worst)
        dt = float(p.settings.get("dt", 0.25))
        Tm = max(p.settings.get("T_grid", [1.0]))
        lags = np.arange(int(round(2 * Tm / dt)) + 1) * dt
        sf = pp.sandwich_fit((fld.modal, lags), p.grid, rho)
        checks["sandwich"] = _check(sf.verified, C1=sf.C1, C2=sf.C2, C3=sf.C3, C4=sf.C4, min_W=sf.min_W,
                                    reason=sf.reason, lattice_discrepancy=sf.lattice_discrepancy)
    report["table"] = spec_tab
    return _finish(report)


# ---------------------------------------------------------------------------
# gamma


def gamma_inputs(p: Preset, workers: int = 1, seed: int | None = None, M: int | None = None,
                 n_modes: int | None = None):
    part = particle(p)
    fld = boson_field(p, n_modes)
    T_grid = [float(t) for t in p.settings.get("T_grid", [1.0, 2.0])]
    _, ker, ens = stationary_ensemble(p, part, T=max(T_grid), M=M, workers=workers, seed=seed)
    return part, fld, ens, T_grid


def run_gamma(p: Preset, workers: int = 1, seed: int | None = None, q: float | None = None,
              M: int | None = None, full_modes: bool = True, tail: bool = True) -> dict:
    t0 = time.perf_counter()
    n_modes = None if full_modes else int(p.settings.get("n_modes", 8))
    part, fld, ens, T_grid = gamma_inputs(p, workers, seed, M, n_modes)
    q = float(p.spec.q if q is None else q)
    lam = float(p.settings.get("lam", gm.default_lambda(p.spec.delta or 1.0)))
    gm.check_lambda(lam, p.spec.delta or 1.0)
    weights = {T: gm.path_weights(ens, fld.modal, lam, T) for T in T_grid}
    curve = gm.GammaCurve([gm.gamma_point(weights[T], q) for T in T_grid], q, ens.M, ens.seed,
                          {"lambda": lam, "n_modes": fld.modal.n_modes})
    checks = {}
    defect = max(w.identity_defect() for w in weights.values())
    checks["weight_identity"] = _check(defect <= 1e-10, defect=defect)
    checks["weights_nonnegative"] = _check(min(min(w.S_plus.min(), w.S_full.min()) for w in weights.values()) >= -1e-14)
    g_ok = all(np.isfinite(pt.log_gamma) and pt.log_gamma <= 3 * pt.se_log for pt in curve.points)
    checks["gamma_in_unit_interval"] = _check(g_ok, gamma=curve.gamma.tolist(), se_log=curve.se_log.tolist())
    checks["reliable"] = _check(curve.reliable, ess=[min(pt.numerator.ess, pt.Z.ess) for pt in curve.points])
    ups = [gm.upper_bound_decomposition(weights[T], q) for T in T_grid]
    checks["upper_bound"] = _check(all(u.holds for u in ups),
                                   total=[u.total for u in ups], gamma=[u.gamma for u in ups])
    if len(T_grid) >= 2 and 2 * T_grid[-2] <= T_grid[-1] + 1e-12:
        zs = gm.z_shift_check(ens, fld.modal, q, T_grid[-2], lam)
        checks["z_shift"] = _check(zs["passed"], **{k: v for k, v in zs.items() if k != "passed"})
    tail_rep = None
    if tail and p.spec.delta:
        tail_rep = gm.tail_probability_check(ens, part.L, p.grid, lam, p.spec.delta, T_grid)
        checks["tail_bound"] = _check(tail_rep.passed, empirical=tail_rep.empirical.tolist(),
                                      bound=tail_rep.bound.tolist())
    rows = list(curve.rows())
    for r, u in zip(rows, ups):
        r.update({"upper_A": u.on_A, "upper_Ac": u.off_A, "upper_total": u.total})
    return _finish({"preset": p.name, "q": q, "M": ens.M, "seed": ens.seed, "seconds": time.perf_counter() - t0,
                    "checks": checks, "rows": rows, "curve": curve, "upper": ups, "tail": tail_rep})


# ---------------------------------------------------------------------------
# Fock space


def run_fock(p: Preset, q: float | None = None, T_grid=None, n_max: int | None = None) -> dict:
    part = particle(p)
    fld = boson_field(p)
    s = p.settings
    q = float(p.spec.q if q is None else q)
    n_modes, n_part = int(s.get("n_modes", 8)), int(s.get("n_part", 6))
    n_max = int(n_max if n_max is not None else s.get("n_max", 4))
    cap = int(s.get("cap", fk.FOCK_CAP))
    T_grid = [float(t) for t in (T_grid if T_grid is not None else s.get("T_grid", [0.5, 1.0, 2.0]))]
    mb = fk.build_mode_basis(fld.omega.spectrum, fld.charges, n_modes)
    H = fk.build_H(mb, part.K_spec, n_part, n_max, q, cap=cap)
    ov = fk.overlap_oracle(H, T_grid)
    H1 = fk.build_H(mb, part.K_spec, n_part, n_max + 1, q, cap=cap)
    ov1 = fk.overlap_oracle(H1, [])
    checks = {}
    checks["symmetric"] = _check(H.asymmetry() == 0.0)
    checks["variational"] = _check(ov.E <= part.ground.E0 + 1e-12, E=ov.E, E0=part.ground.E0)
    checks["truncation_stable"] = _check(abs(ov1.overlap / ov.overlap - 1) < 0.01, overlap=ov.overlap,
                                         overlap_next=ov1.overlap)
    Hm = fk.build_H(mb, part.K_spec, n_part, n_max, -q, cap=cap)
    sym = float(np.max(np.abs(np.linalg.eigvalsh(Hm.matrix) - ov.energies)))
    checks["charge_sign_symmetry"] = _check(sym <= 1e-9 * max(1.0, abs(ov.E)), defect=sym)
    single = fk.FockBasis(1, max(n_max, 1), 1)
    nb1 = fk.number_bound_check(single, [1.0])
    rng = np.random.default_rng(p.seed)
    nbr = fk.number_bound_check(fk.FockBasis(3, 5, 1), rng.normal(size=3))
    checks["number_bound"] = _check(nb1.passed and nbr.passed and abs(nb1.lhs_creation - 1) <= 1e-12,
                                    single=nb1.lhs, random=nbr.lhs, random_norm=nbr.norm_v)
    rows = [{"T": T, "matrix_element": float(m), "gamma_exact": float(ov.gamma([T])[0])}
            for T, m in zip(T_grid, ov.matrix_elements)]
    return _finish({"preset": p.name, "q": q, "dim": H.basis.dim, "E": ov.E, "overlap": ov.overlap,
                    "gap": ov.gap, "deficit_max": float(mb.deficit.max()), "checks": checks, "rows": rows,
                    "oracle": ov})


def run_fock_crosscheck(p: Preset, workers: int = 1, seed: int | None = None, M: int | None = None) -> dict:
    """Mode-truncated path-integral numerator against the exact truncated-Fock matrix elements."""
    fr = run_fock(p)
    g = run_gamma(p, workers, seed, M=M, full_modes=False, tail=False)
    checks = dict(fr["checks"])
    rows = []
    for pt, row in zip(g["curve"].points, fr["rows"]):
        mc, se = pt.numerator.value, pt.numerator.value * pt.numerator.se_log
        ok = abs(mc - row["matrix_element"]) <= 3 * se
        checks[f"numerator_T{pt.T:g}"] = _check(ok, mc=mc, se=se, exact=row["matrix_element"])
        rows.append({"T": pt.T, "mc": mc, "se": se, "exact": row["matrix_element"]})
    return _finish({"preset": p.name, "checks": checks, "rows": rows, "fock": fr, "gamma": g})


def run_dichotomy(massive: Preset, decaying: Preset, workers: int = 1, seed: int | None = None,
                  M: int | None = None) -> dict:
    t0 = time.perf_counter()
    gmas = run_gamma(massive, workers, seed, M=M)
    gmas_t = run_gamma(massive, workers, seed, M=M, full_modes=False, tail=False)
    gdec = run_gamma(decaying, workers, seed, M=M)
    fr = run_fock(massive, T_grid=massive.settings.get("T_grid"))
    cm, cd = gmas["curve"], gdec["curve"]
    plateau = float(cm.gamma[-1])
    plateau_t = float(gmas_t["curve"].gamma[-1])
    lg, se = np.log(cm.gamma), cm.se_log
    flat = abs(lg[-1] - lg[-2]) <= 3 * np.hypot(se[-1], se[-2])
    checks = {
        "massive_plateau": _check(flat and plateau > 0, last=cm.gamma[-2:].tolist()),
        "massive_matches_fock": _check(abs(plateau / fr["overlap"] - 1) <= 0.05 and abs(plateau_t / fr["overlap"] - 1) <= 0.05,
                                       gamma=plateau, gamma_truncated=plateau_t, overlap=fr["overlap"]),
        "decay_strictly_decreasing": _check(cd.strictly_decreasing(1.0), gamma=cd.gamma.tolist(),
                                            se_log=cd.se_log.tolist()),
        "massive_reliable": _check(cm.reliable and gmas_t["curve"].reliable),
        "decay_reliable": _check(cd.reliable),
    }
    rows = [{"T": a.T, "gamma_massive": a.gamma, "se_log_massive": a.se_log, "gamma_decay": b.gamma,
             "se_log_decay": b.se_log} for a, b in zip(cm.points, cd.points)]
    return _finish({"checks": checks, "rows": rows, "massive": gmas, "decay": gdec, "fock": fr,
                    "seconds": time.perf_counter() - t0})

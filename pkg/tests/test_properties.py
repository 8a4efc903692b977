import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from nelsonlab import config as cfgmod
from nelsonlab import fock as fk
from nelsonlab import pairpot as pp
from nelsonlab import rng
from nelsonlab.grid import CoefficientSpec, Gaussian, Grid, PowerMass, random_metric
from nelsonlab.kernels import heat_kernel
from nelsonlab.operators import assemble_h, assemble_h0
from nelsonlab.spectral import omega_sqrt
from nelsonlab.stats import batch_means, ess, log_mean_exp

FAST = settings(max_examples=25, deadline=None)

grids = st.builds(lambda d, n, R: Grid(d, R, n), st.sampled_from([1, 2]), st.integers(5, 9),
                  st.floats(1.0, 4.0))


@FAST
@given(grids, st.floats(0.2, 1.0), st.floats(1.0, 3.0), st.integers(0, 2**31))
def test_random_metric_operator_is_symmetric_positive(grid, lo, span, seed):
    A = random_metric(grid, lo, lo * span, seed)
    op = assemble_h0(grid, CoefficientSpec(A=A, a=A, C0=min(lo, 1.0), C1=max(lo * span, 1.0)))
    M = op.matrix
    assert np.array_equal(M, M.T)
    assert np.linalg.eigvalsh(M)[0] > 0
    if grid.d == 1:
        # off-diagonal metric entries break the sign pattern only for d > 1
        assert (M - np.diag(np.diag(M))).max() <= 0


@FAST
@given(grids, st.floats(0.01, 2.0), st.floats(0.01, 2.0))
def test_kernel_positive_and_semigroup(grid, s, t):
    h = assemble_h(grid, CoefficientSpec(m=PowerMass(1.0, 1.0)))
    Gs = heat_kernel(h, s, convention="matrix").G
    Gt = heat_kernel(h, t, convention="matrix").G
    Gst = heat_kernel(h, s + t, convention="matrix").G
    assert np.max(np.abs(Gs @ Gt - Gst)) <= 1e-9 * max(1.0, np.max(Gst))
    assert heat_kernel(h, s, method="nonneg").G.min() >= 0


@FAST
@given(st.lists(st.floats(-50, 50), min_size=4, max_size=200), st.floats(-300, 300))
def test_log_mean_exp_shift_and_ess(xs, c):
    x = np.array(xs)
    lm, _ = log_mean_exp(x)
    lm2, _ = log_mean_exp(x + c)
    assert abs(lm2 - (lm + c)) <= 1e-9 * max(1.0, abs(lm) + abs(c))
    assert x.max() + 1e-12 >= lm >= np.log(np.mean(np.exp(x - x.max()))) + x.max() - 1e-9
    e = ess(x)
    assert 1 - 1e-9 <= e <= x.size + 1e-9
    assert abs(ess(np.zeros(x.size)) - x.size) <= 1e-9 * x.size


@FAST
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=300), st.integers(2, 40))
def test_batch_means_mean_is_plain_mean(xs, nb):
    v = np.array(xs)
    mean, se = batch_means(v, nb)
    assert abs(mean[0] - v.mean()) <= 1e-9 * max(1.0, np.abs(v).max())
    assert se[0] >= 0


@FAST
@given(st.integers(0, 2**63), st.integers(1, 200), st.integers(1, 60))
def test_streams_do_not_depend_on_chunking(seed, M, chunk):
    whole = rng.normals(seed, "sde", np.arange(M), 3)
    parts = np.concatenate([rng.normals(seed, "sde", c, 3) for c in rng.chunks(M, chunk)])
    assert np.array_equal(whole, parts)
    u = rng.uniforms_open(seed, "forward", np.arange(min(M, 20)), 5)
    assert u.min() > 0 and u.max() <= 1


@FAST
@given(st.floats(0.3, 1.5), st.integers(6, 14), st.floats(0.2, 2.0))
def test_pair_potential_symmetric_nonnegative(width, N, mass):
    g = Grid(1, 3.0, N)
    spec = CoefficientSpec(m=PowerMass(mass, 1.0), rho=Gaussian(width))
    om = omega_sqrt(assemble_h(g, spec).spectrum)
    tab = pp.compute_W(om.spectrum, pp.smeared_charges(g, spec), [0.0, 0.5, 2.0])
    c = tab.check()
    assert c["asymmetry"] == 0.0 and c["nonnegative"]
    assert c["max_increase"] <= 1e-14 * np.abs(tab.W).max()


@FAST
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=3), st.integers(1, 4))
def test_number_bound_random(v, n_max):
    b = fk.FockBasis(len(v), n_max, 1)
    assert fk.number_bound_check(b, v).passed


@FAST
@given(st.permutations(["[run]\nseed = 3\n", "[sampler]\nM = 100\ndt = 0.01\n", "[gamma]\nq = 0.5\n"]))
def test_config_hash_ignores_section_order(blocks):
    ref = cfgmod.parse_text("[run]\nseed = 3\n[sampler]\ndt = 0.01\nM = 100\n[gamma]\nq = 0.5\n").hash
    assert cfgmod.parse_text("".join(blocks)).hash == ref

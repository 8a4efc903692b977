import numpy as np
import pytest

from nelsonlab import experiments as ex
from nelsonlab.diffusion import (
    SDEConfig,
    build_transition_kernel,
    chapman_kolmogorov_defect,
    euler_maruyama,
    exit_probability_check,
    feynman_kac_estimate,
    finite_dim_distribution_check,
    moment_bound_check,
    sample_stationary_two_sided,
    stationarity_check,
    stopping_time_estimate,
)
from nelsonlab.grid import CoefficientSpec, Grid
from nelsonlab.stats import batch_means


@pytest.fixture(scope="module")
def chain(harmonic):
    part = ex.particle(harmonic)
    ker = build_transition_kernel(part.L, 0.1)
    ens = sample_stationary_two_sided(ker, 2.0, 4000, seed=3, grid=harmonic.grid)
    return part, ker, ens


def brownian(d=1, M=4000, T=1.0, dt=0.01, seed=5, workers=1):
    return SDEConfig(dt, T, M, seed, CoefficientSpec(), Grid(d, 50.0, 11), workers)


def test_brownian_variance():
    ens = euler_maruyama(brownian(), [0.0])
    np.testing.assert_array_equal(ens.states[:, 0, 0], 0.0)
    sq = ens.states[:, -1, 0] ** 2
    mean, se = batch_means(sq[:, None], 32)
    assert abs(mean[0] - 1.0) <= 3 * se[0]
    assert ens.reflections == 0


def test_sde_config_validation():
    with pytest.raises(ValueError):
        brownian(dt=0.0)
    with pytest.raises(ValueError):
        brownian(T=1.005).n_steps


def test_constant_potential_factors_out():
    cfg = brownian(M=256, T=0.5, dt=0.05)
    est = feynman_kac_estimate(cfg, lambda x: np.ones(len(x)), lambda x: np.full(len(x), 0.8),
                               starts=np.zeros((3, 1)))
    np.testing.assert_allclose(est.value, np.exp(-0.4), rtol=1e-12)
    np.testing.assert_allclose(est.se, 0.0, atol=1e-14)


def test_sde_determinism_across_workers():
    a = euler_maruyama(brownian(M=600, T=0.2, workers=1), [0.3]).states
    b = euler_maruyama(brownian(M=600, T=0.2, workers=3), [0.3]).states
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("d, n, target, tol", [(1, 1, 1.0, 0.10), (2, 1, 2.0, 0.10), (1, 2, 3.0, 0.25),
                                               (2, 2, 8.0, 0.25)])
def test_moment_constant_of_brownian_motion(d, n, target, tol):
    ens = euler_maruyama(brownian(d=d, M=3000, T=0.4, dt=0.02), np.zeros(d))
    chk = moment_bound_check(ens, n)
    assert chk.passed
    # the sup over lags sits a little above the Gaussian moment
    assert target * (1 - tol) <= chk.value <= target * (1 + tol)


def test_ergodic_rows_and_chapman_kolmogorov(chain):
    part, ker, _ = chain
    P = part.L.semigroup(50.0 / part.ground.gap, accurate=True)
    mu = part.L.mu / part.L.mu.sum()
    assert np.max(np.abs(P - mu[None, :])) <= 1e-6
    assert chapman_kolmogorov_defect(part.L, 0.1) <= 1e-10
    np.testing.assert_allclose(ker.P.sum(axis=1), 1.0, atol=1e-12)
    assert ker.P.min() >= 0
    with pytest.raises(ValueError):
        build_transition_kernel(part.L, 0.0)


def test_chain_shape_and_stationarity(chain):
    part, ker, ens = chain
    assert ens.states.shape == (4000, 41) and ens.zero_index == 20
    assert stationarity_check(ens, ker.mu).passed
    one = np.ones(ker.n)
    c = finite_dim_distribution_check(ens, [one, one], [0.0, 1.0], part.L)
    assert c.value == 1.0 and c.reference == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        ens.col(0.05)


def test_chain_determinism_across_workers(chain):
    _, ker, ens = chain
    again = sample_stationary_two_sided(ker, 2.0, 4000, seed=3, workers=4, chunk=300)
    np.testing.assert_array_equal(ens.states, again.states)


def test_exit_probability_extremes(chain):
    part, _, ens = chain
    r = np.abs(part.ground.grid.points[:, 0])
    huge = exit_probability_check(ens, r, 1e6, 1.0, part.L)
    assert huge.value == 0.0 and huge.passed


def test_stopping_time_extremes(chain):
    part, ker, ens = chain
    one = np.ones(ker.n)
    full = stopping_time_estimate(ens, np.ones(ker.n, bool), 5, 0.5, one, part.L, 1.0)
    assert full.value == 1.0
    assert full.reference == pytest.approx(1.0, abs=1e-10)
    empty = stopping_time_estimate(ens, np.zeros(ker.n, bool), 5, 0.5, one, part.L, 1.0)
    assert empty.value == 0.0
    with pytest.raises(ValueError):
        stopping_time_estimate(ens, np.ones(ker.n, bool), 5, 1.5, one, part.L, 1.0)
    with pytest.raises(ValueError):
        stopping_time_estimate(ens, np.ones(ker.n, bool), 5, 0.5, 0.5 * one, part.L, 1.0)

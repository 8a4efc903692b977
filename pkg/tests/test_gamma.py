import numpy as np
import pytest

from nelsonlab import experiments as ex
from nelsonlab import gamma as gm
from nelsonlab.diffusion import PathEnsemble
from nelsonlab.grid import Grid
from nelsonlab.pairpot import ModalPairPotential, PairPotentialTable


@pytest.fixture(scope="module")
def tiny_inputs(tiny):
    part, fld, ens, T_grid = ex.gamma_inputs(tiny, M=2000, seed=21)
    return part, fld, ens, T_grid


def constant_ensemble(K, dt, M=2, node=0, grid=None):
    grid = grid or Grid(1, 1.0, 5)
    times = np.arange(-K, K + 1) * dt
    return PathEnsemble(times, np.full((M, 2 * K + 1), node), "KERNEL_CHAIN", 0, dt, grid, K)


def test_zero_potential_gives_zero_weights():
    ens = constant_ensemble(10, 0.1)
    pot = ModalPairPotential(np.zeros((3, 2)), np.array([1.0, 2.0]), ens.grid)
    w = gm.path_weights(ens, pot, 0.75)
    for S in (w.S_plus, w.S_minus, w.S_full, w.S_cross):
        np.testing.assert_array_equal(S, 0.0)


def test_constant_path_single_mode_quadrature():
    # int_0^T int_0^T a^2 e^{-w|t-s|} / (2w) = a^2 (wT - 1 + e^{-wT}) / w^3
    a, w, T, dt = 0.8, 1.5, 2.0, 0.002
    ens = constant_ensemble(int(round(T / dt)), dt)
    pot = ModalPairPotential(np.full((3, 1), a), np.array([w]), ens.grid)
    weights = gm.path_weights(ens, pot, 0.75)
    exact = a * a * (w * T - 1 + np.exp(-w * T)) / w**3
    assert weights.S_plus[0] == pytest.approx(exact, rel=1e-5)
    assert weights.S_minus[0] == pytest.approx(exact, rel=1e-5)
    full = a * a * (2 * w * T - 1 + np.exp(-2 * w * T)) / w**3
    assert weights.S_full[0] == pytest.approx(full, rel=1e-5)


def test_modal_recursion_matches_table(tiny_inputs):
    part, fld, ens, _ = tiny_inputs
    win = ens.window(0.2)
    sub = PathEnsemble(win.times, win.states[:50], win.kind, win.seed, win.dt, win.grid, win.zero_index)
    lags = np.arange(2 * sub.zero_index + 1) * sub.dt
    table = PairPotentialTable(lags, fld.modal.table(lags), "SPECTRAL")
    a = gm.path_weights(sub, fld.modal, 0.75)
    b = gm.path_weights(sub, table, 0.75)
    for name in ("S_plus", "S_minus", "S_full", "S_cross"):
        np.testing.assert_allclose(getattr(a, name), getattr(b, name), rtol=1e-10)
    with pytest.raises(ValueError):
        gm.path_weights(sub, PairPotentialTable(lags[:3], table.W[:, :, :3], "SPECTRAL"), 0.75)


def test_identity_and_one_sided_rejection(tiny_inputs):
    _, fld, ens, T_grid = tiny_inputs
    for T in T_grid:
        assert gm.path_weights(ens, fld.modal, 0.75, T).identity_defect() <= 1e-12
    one = PathEnsemble(ens.times[ens.zero_index:], ens.states[:, ens.zero_index:], ens.kind, 0, ens.dt, ens.grid)
    with pytest.raises(ValueError):
        gm.path_weights(one, fld.modal, 0.75)


def test_zero_coupling(tiny_inputs):
    _, fld, ens, T_grid = tiny_inputs
    curve = gm.estimate_gamma(ens, fld.modal, 0.0, T_grid, 0.75)
    np.testing.assert_array_equal(curve.gamma, 1.0)
    np.testing.assert_array_equal(curve.se_log, 0.0)
    up = gm.upper_bound_decomposition(gm.path_weights(ens, fld.modal, 0.75, 1.0), 0.0)
    assert up.total == pytest.approx(1.0, abs=1e-12)
    assert up.gamma == 1.0 and up.holds


def test_small_coupling_is_linear(tiny_inputs):
    _, fld, ens, _ = tiny_inputs
    w = gm.path_weights(ens, fld.modal, 0.75, 1.0)
    for q in (1e-2, 1e-3):
        num = gm.estimate_numerator(w, q).value
        lin = gm.linearized_numerator(w, q)
        assert abs(num - lin) <= 10 * q**4 * np.mean(w.S_plus**2)


def test_gamma_bounded_and_z_shift(tiny_inputs):
    _, fld, ens, T_grid = tiny_inputs
    curve = gm.estimate_gamma(ens, fld.modal, 2.0, T_grid, 0.75)
    assert curve.reliable
    assert np.all(curve.gamma <= np.exp(3 * curve.se_log))
    assert gm.z_shift_check(ens, fld.modal, 2.0, 1.0, 0.75)["passed"]
    ups = [gm.upper_bound_decomposition(gm.path_weights(ens, fld.modal, 0.75, T), 2.0) for T in T_grid]
    assert all(u.holds for u in ups)


def test_lambda_window():
    assert gm.default_lambda(1.0) == pytest.approx(0.75)
    gm.check_lambda(0.75, 1.0)
    for bad in (0.5, 0.3, 1.0):
        with pytest.raises(ValueError):
            gm.check_lambda(bad, 1.0)


def test_tail_form_is_superexponential():
    T = np.array([1.0, 2.0, 4.0, 8.0])
    b = gm.tail_bound(T, 1.0, 1.0, 0.75, 1.0)
    assert np.all(np.diff(b) < 0)
    # log decay beats any linear rate
    assert np.all(np.diff(np.log(b)) / np.diff(T) < np.diff(np.log(b))[0] / np.diff(T)[0] + 1e-12)
    np.testing.assert_allclose(gm.tail_bound(T, 1.0, 1.0, 0.75, 1.0, two_sided=False), b / 2)


def test_tail_report_on_harmonic(harmonic):
    part, _, ens = ex.stationary_ensemble(harmonic, T=4.0, M=2000, seed=5)
    rep = gm.tail_probability_check(ens, part.L, harmonic.grid, 0.75, 1.0, [1.0, 2.0, 4.0])
    assert rep.passed
    assert rep.decreasing()

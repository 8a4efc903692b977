import numpy as np
import pytest

from nelsonlab import experiments as ex
from nelsonlab import presets
from nelsonlab.grid import CoefficientSpec, Constant, Grid, PowerMass
from nelsonlab.operators import assemble_h, assemble_k0
from nelsonlab.spectral import (
    GroundStateError,
    OracleError,
    build_L,
    decay_check,
    eigendecompose,
    ground_state,
    omega_sqrt,
)


def test_dirichlet_chain_closed_form():
    g = Grid(1, 1.0, 6)
    vals = eigendecompose(assemble_k0(g, CoefficientSpec())).values
    k = np.arange(1, 5)
    expected = 0.5 * 2 * (1 - np.cos(k * np.pi / 5)) / g.dx**2
    np.testing.assert_allclose(vals, expected, rtol=1e-12)


def test_identity_and_certificates(rng):
    sp = eigendecompose(np.eye(5))
    np.testing.assert_allclose(sp.values, 1.0)
    assert sp.orth_defect <= 1e-14
    X = rng.normal(size=(6, 6))
    sp = eigendecompose(X + X.T)
    assert np.max(sp.residuals) <= 1e-10 * np.max(np.abs(sp.values))
    assert np.all(np.diff(sp.values) >= 0)


def test_residual_certificate_trips():
    # a strongly non-symmetric input is symmetrized for eigh but fails the residual check
    with pytest.raises(OracleError):
        eigendecompose(np.array([[1.0, 5.0], [0.0, 2.0]]))


def test_ground_state_positive_and_even(harmonic):
    part = ex.particle(harmonic)
    psi = part.ground.psi
    assert np.all(psi > 0)
    np.testing.assert_allclose(psi, psi[harmonic.grid.reflect_index()], rtol=1e-8)
    assert np.sum(psi**2) * harmonic.grid.cell_volume == pytest.approx(1.0, abs=1e-12)
    assert part.ground.gap > 0


def test_degenerate_ground_rejected():
    with pytest.raises(GroundStateError):
        ground_state(eigendecompose(np.diag([1.0, 1.0, 2.0])))


def test_omega_is_square_root():
    om = omega_sqrt(eigendecompose(np.eye(4)))
    np.testing.assert_allclose(om.matrix, np.eye(4), atol=1e-14)
    g = Grid(2, 2.0, 8)
    h = assemble_h(g, CoefficientSpec(m=PowerMass(1.0, 2.0)))
    w = omega_sqrt(h.spectrum).matrix
    assert np.max(np.abs(w @ w - h.matrix)) <= 1e-9 * np.max(np.abs(h.matrix))


def test_constant_mass_shifts_omega_squared():
    g = Grid(1, 2.0, 12)
    w0 = omega_sqrt(assemble_h(g, CoefficientSpec()).spectrum).spectrum.values
    w1 = omega_sqrt(assemble_h(g, CoefficientSpec(m=Constant(0.7))).spectrum).spectrum.values
    np.testing.assert_allclose(w1**2 - w0**2, 0.49, atol=1e-10)


def test_omega_rejects_negative_spectrum():
    with pytest.raises(OracleError):
        omega_sqrt(eigendecompose(np.diag([-1.0, 1.0])))


def test_transformed_generator(harmonic):
    part = ex.particle(harmonic)
    L = part.L
    one = np.ones(L.n)
    np.testing.assert_allclose(L.matrix @ one, 0.0, atol=1e-9 * np.max(np.abs(L.matrix)))
    for t in (0.1, 1.0, 10.0):
        np.testing.assert_allclose(L.semigroup(t) @ one, 1.0, atol=1e-9)
    P = L.semigroup(1.0)
    flow = L.mu[:, None] * P
    np.testing.assert_allclose(flow, flow.T, atol=1e-12)
    np.testing.assert_allclose(L.modes[:, 0], 1.0, rtol=1e-8)
    assert L.inner(one, one) == pytest.approx(1.0, abs=1e-12)
    # similarity: psi^{-1} exp(-t(K - E0)) psi
    u = part.ground.unit_vector
    S = part.K_spec.semigroup(1.0, shift=part.ground.E0) * (u[None, :] / u[:, None])
    np.testing.assert_allclose(P, S, atol=1e-10)


def test_build_L_rejects_vanishing_psi(harmonic):
    part = ex.particle(harmonic)
    bad = type(part.ground)(np.zeros_like(part.ground.psi), part.ground.E0, part.ground.gap, part.ground.grid)
    with pytest.raises(GroundStateError):
        build_L(part.K_spec, bad)


def test_decay_exponent_and_steeper_envelope(harmonic):
    r2 = decay_check(ex.particle(harmonic).ground, harmonic.spec.delta)
    assert r2.passed
    assert r2.exponent == pytest.approx(2.0, abs=0.2)
    quartic = presets.get("quartic-1d")
    r3 = decay_check(ex.particle(quartic).ground, quartic.spec.delta)
    assert r3.passed and r3.exponent > r2.exponent


def test_decay_window_too_small(tiny):
    assert not decay_check(ex.particle(tiny).ground, tiny.spec.delta).passed

import numpy as np
import pytest

from nelsonlab.grid import (
    Bump,
    CoefficientSpec,
    Confining,
    Constant,
    Grid,
    ScalarIdentity,
    SpecError,
    random_metric,
)
from nelsonlab.operators import (
    DenseCapError,
    LatticeOperator,
    assemble_h,
    assemble_h0,
    assemble_k,
    assemble_k0,
    check_cap,
    flat_laplacian,
)


def test_grid_basics():
    g = Grid(2, 3.0, 7)
    assert g.dx == pytest.approx(1.0)
    assert g.n_nodes == 49
    assert g.n_points == 25
    assert np.all(np.abs(g.nodes) <= g.R)
    idx = np.arange(g.n_points)
    assert np.array_equal(g.flat_index(g.multi_index(idx)), idx)


@pytest.mark.parametrize("kw", [dict(d=4, R=1.0, N=5), dict(d=1, R=1.0, N=1), dict(d=1, R=-1.0, N=5)])
def test_grid_rejects_bad_shapes(kw):
    with pytest.raises(ValueError):
        Grid(**kw)


def test_single_interior_node():
    g = Grid(1, 1.0, 3)
    K0 = assemble_k0(g, CoefficientSpec())
    assert K0.matrix.shape == (1, 1)
    assert K0.matrix[0, 0] == pytest.approx(1.0)


@pytest.mark.parametrize("d,N", [(1, 9), (2, 7), (3, 5)])
def test_identity_metric_is_half_standard_laplacian(d, N):
    g = Grid(d, 2.0, N)
    K0 = assemble_k0(g, CoefficientSpec())
    np.testing.assert_allclose(K0.matrix, 0.5 * flat_laplacian(g), atol=1e-12)


def test_random_metric_symmetric_psd():
    g = Grid(2, 2.0, 9)
    A = random_metric(g, 0.5, 2.0, seed=3)
    K0 = assemble_k0(g, CoefficientSpec(A=A, C0=0.5, C1=2.0))
    assert K0.asymmetry() <= 1e-12
    assert np.linalg.eigvalsh(K0.matrix).min() >= -1e-10


def test_v_zero_gives_k0():
    g = Grid(1, 2.0, 11)
    spec = CoefficientSpec()
    np.testing.assert_array_equal(assemble_k(g, spec).matrix, assemble_k0(g, spec).matrix)


def test_harmonic_ground_energy_within_two_percent():
    # continuum oracle: -1/2 d^2 + x^2 has ground energy sqrt(2)/2
    g = Grid(1, 6.0, 128)
    K = assemble_k(g, CoefficientSpec(V=Confining(1.0, 1.0, shift=1.0)))
    E0 = K.spectrum.values[0]
    assert abs(E0 / (np.sqrt(2) / 2) - 1) <= 0.02


def test_confinement_gate():
    g = Grid(1, 3.0, 13)
    ok = CoefficientSpec(V=Confining(1.0, 1.0), delta=1.0, b0=1.0)
    assemble_k(g, ok, confining=True)
    with pytest.raises(SpecError):
        assemble_k(g, ok.replace(delta=0.0), confining=True)


def test_negative_potential_rejected():
    g = Grid(1, 3.0, 13)
    with pytest.raises(SpecError):
        assemble_k(g, CoefficientSpec(V=Constant(-1.0)))


def test_ellipticity_violation_reports_node():
    g = Grid(1, 3.0, 13)
    spec = CoefficientSpec(A=ScalarIdentity(Bump(1.0, -0.9, 0.5)), C0=0.5)
    with pytest.raises(SpecError) as e:
        assemble_k0(g, spec)
    assert e.value.node is not None


def test_nonpositive_c_rejected():
    g = Grid(1, 3.0, 13)
    with pytest.raises(SpecError):
        assemble_h(g, CoefficientSpec(c=Constant(0.0), C0=0.0))


def test_h_without_c_and_mass_is_divergence_form():
    g = Grid(2, 2.0, 7)
    spec = CoefficientSpec(a=random_metric(g, 0.8, 1.25, seed=1), C0=0.8, C1=1.25)
    h = assemble_h(g, spec)
    np.testing.assert_allclose(h.matrix, 2 * assemble_k0(g, spec.replace(A=spec.a)).matrix, atol=1e-12)


def test_constant_mass_shifts_spectrum():
    g = Grid(1, 2.0, 15)
    spec = CoefficientSpec(m=Constant(0.7))
    shifted = assemble_h(g, spec).spectrum.values
    base = assemble_h0(g, spec).spectrum.values
    np.testing.assert_allclose(shifted, base + 0.49, atol=1e-12)


def test_variable_c_symmetric_positive_definite():
    g = Grid(1, 3.0, 31)
    spec = CoefficientSpec(c=Bump(1.0, 0.1, 1.0), C0=1.0, C1=1.1)
    h = assemble_h(g, spec)
    assert h.asymmetry() <= 1e-12
    assert h.spectrum.values.min() > 0


def test_dense_cap():
    with pytest.raises(DenseCapError):
        check_cap(5000)
    check_cap(5000, cap=6000)


def test_operator_kind_validated():
    with pytest.raises(ValueError):
        LatticeOperator(np.eye(2), "NOPE", Grid(1, 1.0, 4))

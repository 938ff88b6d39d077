import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbm_lab.covariance import (InterpolatedCovariance, check_decay_bound, complex_from_real,
                                covariance, covariance_invariants, ds_derivative_check,
                                interpolate_covariance, schur_mass_check)
from rbm_lab.lattice import BlockPartition, TorusLattice, laplacian
from rbm_lab.saddle import DomainError


def test_J_row_sum_is_one():
    J = covariance(TorusLattice(16, 3.0), "J")
    assert np.allclose(J.row_sums(), 1.0, atol=1e-12)


def test_C_mass_at_E1():
    C = covariance(TorusLattice(8, 2.0), "C", 1.0)
    assert C.mr2 == pytest.approx(1.5)
    assert np.allclose(C.row_sums(), 2.0 / 3.0, atol=1e-12)


def test_C_entries_against_direct_inversion():
    # oracle: inverse of -Delta + 1.5 from the sparse Laplacian, L=4, W=1
    C = covariance(TorusLattice(4, 1.0), "C", 1.0).dense()
    assert C[0, 0] == pytest.approx(0.22118933697881069, abs=1e-14)
    assert C[0, 1] == pytest.approx(0.05413533834586466, abs=1e-14)


def test_B_bounded_by_C():
    lat = TorusLattice(32, 4.0)
    B = covariance(lat, "B", 1.0)
    C = covariance(lat, "C", 1.0)
    assert np.all(np.abs(B.kernel) <= C.kernel * (1 + 1e-12))


def test_B_inverse_is_C_inverse_plus_imaginary_mass():
    lat = TorusLattice(4, 2.0)
    C = covariance(lat, "C", 1.2).dense()
    B = covariance(lat, "B", 1.2)
    lhs = np.linalg.inv(B.dense())
    assert np.allclose(lhs, np.linalg.inv(C) + 1j * B.kappa * np.eye(16), atol=1e-10)


def test_complex_from_real_matches_spectral_B():
    lat = TorusLattice(6, 2.0)
    C = covariance(lat, "C", 0.7)
    B = covariance(lat, "B", 0.7)
    assert np.allclose(complex_from_real(C).dense(), B.dense(), atol=1e-13)
    Cr = C.restrict(np.arange(36))
    assert np.allclose(complex_from_real(Cr).dense(), B.dense(), atol=1e-12)


@pytest.mark.parametrize("kind", ["C", "B", "C_f"])
def test_band_edge_is_a_domain_error(kind):
    with pytest.raises(DomainError):
        covariance(TorusLattice(4), kind, 2.0, f=0.5)


def test_C_f_and_neumann_are_positive_definite():
    lat = TorusLattice(6, 2.0)
    Cf = covariance(lat, "C_f", 1.0, f=0.5)
    assert Cf.mass == pytest.approx(0.75)
    assert np.linalg.eigvalsh(Cf.dense())[0] > 0
    N = covariance(lat, "NeumannC", 1.0, partition=BlockPartition.strips(lat, 3))
    assert np.linalg.eigvalsh(N.dense())[0] > 0
    with pytest.raises(ValueError):
        covariance(lat, "C_f", 1.0, f=1.0)


@settings(max_examples=25, deadline=None)
@given(L=st.integers(2, 12), W=st.floats(1.0, 8.0), E=st.floats(-1.9, 1.9))
def test_invariants_hold_on_random_parameters(L, W, E):
    r = covariance_invariants(TorusLattice(L, W), E)
    assert r["J_rowsum_err"] <= 1e-12
    assert r["C_rowsum_err"] <= 1e-12
    assert r["dense_vs_spectral_err"] <= 1e-10
    assert r["B_le_C_violations"] == 0
    assert r["min_eig"] > 0


def test_sampler_covariance():
    C = covariance(TorusLattice(4, 2.0), "C", 1.0)
    x = C.sample(np.random.default_rng(3), 200000)
    emp = x.T @ x / len(x)
    assert np.max(np.abs(emp - C.dense())) < 0.01


def test_decay_report_moderate_size():
    d = check_decay_bound(covariance(TorusLattice(64, 4.0), "C", 1.0))
    assert d.valid and d.positive
    assert d.violations == 0
    assert d.fitted_rate >= 0.9 * d.bound_rate
    assert d.diag_lower_fit["K1"] > 0
    js = d.to_json()
    assert set(js) == {"kind", "L", "W", "E", "fitted_K", "fitted_rate", "bound_rate",
                       "violations", "diag_lower_fit"}
    json.dumps(js)


def test_decay_regime_flag():
    d = check_decay_bound(covariance(TorusLattice(4, 8.0), "C", 1.0))
    assert not d.valid


def test_diagonal_grows_with_W():
    c8 = covariance(TorusLattice(64, 8.0), "C", 1.0).kernel[0, 0]
    c16 = covariance(TorusLattice(64, 16.0), "C", 1.0).kernel[0, 0]
    # compare the log-regime amplitude W^2 C_jj
    assert 16 ** 2 * c16 > 8 ** 2 * c8


# ------------------------------------------------------------- interpolation

@pytest.fixture
def strips3():
    lat = TorusLattice(6, 2.0)
    return covariance(lat, "C", 1.0), BlockPartition.strips(lat, 2)


def test_interpolation_at_one_is_C(strips3):
    C, part = strips3
    Cs, Bs, Gs = interpolate_covariance(C, part, [1.0, 1.0])
    assert np.array_equal(Cs, C.dense())
    assert np.allclose(Bs, covariance(C.lattice, "B", 1.0).dense(), atol=1e-12)
    assert len(Gs) == 2


def test_first_parameter_zero_decouples_root(strips3):
    C, part = strips3
    Cs = interpolate_covariance(C, part, [0.0, 0.7])[0]
    root = part.sites(part.labels[0])
    rest = np.setdiff1d(np.arange(C.lattice.n_sites), root)
    assert np.all(Cs[np.ix_(root, rest)] == 0)
    assert np.all(Cs[np.ix_(root, root)] == C.dense()[np.ix_(root, root)])


def test_G_matches_B_over_C():
    lat = TorusLattice(6, 2.0)
    C = covariance(lat, "C", 1.0)
    ic = InterpolatedCovariance(C, BlockPartition.strips(lat, 2), [0.3, 0.6])
    assert np.allclose(ic.G() @ ic.C_s(), ic.B_s(), atol=1e-12)
    # G_q ignores parameters beyond q
    assert np.allclose(ic.G(1), InterpolatedCovariance(C, ic.partition, [0.3, 1.0]).G(), atol=1e-12)


def test_parameters_outside_unit_interval_rejected(strips3):
    C, part = strips3
    with pytest.raises(ValueError):
        InterpolatedCovariance(C, part, [1.2, 0.5])


@settings(max_examples=25, deadline=None)
@given(s=st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2))
def test_interpolated_C_is_dominated_and_positive(s):
    lat = TorusLattice(6, 2.0)
    C = covariance(lat, "C", 1.0)
    Cs = InterpolatedCovariance(C, BlockPartition.strips(lat, 2), s).C_s()
    assert np.all(Cs <= C.dense() + 1e-15)
    assert np.linalg.eigvalsh(Cs)[0] > 0


def test_single_block_derivative_is_zero():
    lat = TorusLattice(4, 2.0)
    part = BlockPartition(lat, np.zeros(16, dtype=int))
    assert ds_derivative_check(covariance(lat, "C", 1.0), part, 1, []) == 0.0


def test_derivative_two_and_three_blocks():
    lat = TorusLattice(8, 2.0)
    C = covariance(lat, "C", 1.0)
    assert ds_derivative_check(C, BlockPartition.strips(lat, 4), 1, [0.5]) <= 1e-6
    s = np.random.default_rng(1).uniform(0.1, 0.9, 2)
    part3 = BlockPartition.strips(lat, 3)
    assert max(ds_derivative_check(C, part3, q, s) for q in (1, 2)) <= 1e-6


# ------------------------------------------------------------------- Schur

def test_schur_full_volume_at_zero_energy():
    lat = TorusLattice(8, 4.0)
    B = covariance(lat, "B", 0.0)
    assert schur_mass_check(B, np.arange(64)) >= 2.0 - 1e-9


def test_schur_single_site():
    B = covariance(TorusLattice(8, 4.0), "B", 1.0)
    assert (1.0 / B.dense()[5, 5]).real >= 1.5
    assert schur_mass_check(B, [5]) >= 1.5


def test_schur_random_half_volume():
    rng = np.random.default_rng(7)
    B = covariance(TorusLattice(8, 4.0), "B", 1.0)
    for _ in range(20):
        Y = np.sort(rng.choice(64, 32, replace=False))
        assert schur_mass_check(B, Y) >= 1.5 - 1e-9
    with pytest.raises(ValueError):
        schur_mass_check(B, [])


def test_neumann_dominated_by_periodic_inverse():
    # removing edges lowers the quadratic form, so Neumann C >= periodic C in Loewner order
    lat = TorusLattice(6, 1.0)
    part = BlockPartition.strips(lat, 3)
    Cn = covariance(lat, "NeumannC", 1.0, partition=part).dense()
    Cp = covariance(lat, "C", 1.0).dense()
    assert np.linalg.eigvalsh(Cn - Cp)[0] > -1e-12
    A = laplacian(lat, "neumann", part).toarray() + 1.5 * np.eye(36)
    assert np.allclose(Cn @ A, np.eye(36), atol=1e-12)

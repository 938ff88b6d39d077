import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbm_lab.covariance import covariance
from rbm_lab.grassmann import CapacityError, GrassmannElement as G
from rbm_lab.lattice import TorusLattice
from rbm_lab.supermatrix import (SuperMatrix, SuperVector, fermionic_determinant,
                                 potential_element, random_site_matrices, sdet_integral,
                                 sdet_integral_check, sdet_str, site_matrix,
                                 supermatrix_potential_check, susy_rep_check)
from rbm_lab.susy import D_term, potential_V

seeds = st.integers(0, 2**32 - 1)


def test_diagonal_supermatrix():
    M = SuperMatrix.diag(2, 3.0, 1.5)
    s, d = sdet_str(M)
    assert s.body == pytest.approx(1.5)
    assert d.body == pytest.approx(2.0)
    assert d.soul().max_abs() == 0


def test_parity_enforced():
    g = 2
    with pytest.raises(ValueError):
        SuperMatrix(G.generator(g, 0), G(g), G(g), G.scalar(g, 1.0))
    with pytest.raises(ValueError):
        SuperMatrix(G.scalar(g, 1.0), G.scalar(g, 1.0), G(g), G.scalar(g, 1.0))


@settings(max_examples=20, deadline=None)
@given(s1=seeds, s2=seeds)
def test_sdet_multiplicative_and_inverse(s1, s2):
    M1 = SuperMatrix.random(4, np.random.default_rng(s1))
    M2 = SuperMatrix.random(4, np.random.default_rng(s2))
    prod = M1.sdet() * M2.sdet()
    assert (M1 @ M2).sdet().allclose(prod, atol=1e-10 * prod.max_abs())
    assert (M1.sdet() * M1.inv().sdet()).allclose(G.scalar(4, 1.0), atol=1e-10)
    assert ((M1 @ M2).str() - (M2 @ M1).str()).max_abs() <= 1e-10
    I = M1 @ M1.inv()
    assert I.a.allclose(G.scalar(4, 1.0), atol=1e-10) and I.sigma.max_abs() <= 1e-10


def test_singular_fermion_block():
    with pytest.raises(ZeroDivisionError):
        SuperMatrix.diag(2, 1.0, 0.0).sdet()


def test_single_site_sdet_integral_diagonal():
    # Bosonic 2 pi / a times Fermionic b / (2 pi) = b / a
    M = SuperMatrix.diag(2, 2.0, 0.7 + 0.2j)
    val = sdet_integral([M], 0)
    assert val.body == pytest.approx((0.7 + 0.2j) / 2.0)
    # unit Berezin normalization moves the 2 pi into the measure; same Sdet
    assert sdet_integral([M], 0, unit=True).body == pytest.approx((0.7 + 0.2j) / 2.0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_sdet_integral_random(k):
    rng = np.random.default_rng(k)
    for _ in range(5):
        assert sdet_integral_check(random_site_matrices(k, 4, rng), 4) <= 1e-9


def test_sdet_integral_rejects_nonconvergent():
    with pytest.raises(ValueError):
        sdet_integral([SuperMatrix.diag(2, -1.0, 1.0)], 0)


def test_supervector_pairing_and_form():
    g = 2
    phi = SuperVector.from_complex(g, 1 + 2j, 0, 1)
    assert phi.adjoint_consistent()
    p = phi.pairing()
    assert p.body == pytest.approx(5.0)
    assert p.coefficient([0, 1]) == 1
    f = phi.form(SuperMatrix.identity(g))
    assert f.allclose(p)


# ---------------------------------------------------------------- potential

def test_potential_vanishes_at_saddle():
    V = potential_element(site_matrix(0.0, 0.0, 2, 0, 1), 1.0)
    assert V.max_abs() == 0


def test_potential_coefficients_frozen_point():
    r = supermatrix_potential_check(0.3, -0.4, 1.0, tform=True)
    assert r["body_err"] <= 1e-10 and r["soul_err"] <= 1e-10
    assert r["soul"] == pytest.approx(0.18073448341689008 - 0.3972103255906928j, abs=1e-12)
    # the rhobar rho coefficient carries the opposite sign
    assert r["rhobar_rho_coeff"] == pytest.approx(-r["soul"])
    assert max(r["literal_err"], r["tform_err"], r["literal_tform_err"]) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-1.5, 1.5), b=st.floats(-1.5, 1.5), E=st.sampled_from([0.5, 1.0, 1.5, -1.0]))
def test_potential_body_and_soul(a, b, E):
    r = supermatrix_potential_check(a, b, E)
    assert r["body_err"] <= 1e-10
    assert r["soul_err"] <= 1e-10
    assert r["body_ref"] == pytest.approx(potential_V(a, E) - potential_V(1j * b, E))
    assert r["soul_ref"] == pytest.approx(complex(D_term(a, b, E)))


# -------------------------------------------------- Fermionic representation

def test_fermionic_determinant_trivial_and_normalized():
    B = covariance(TorusLattice(2, 1.0), "B", 1.0).dense()
    assert fermionic_determinant(np.zeros(4), B) == pytest.approx(1.0, abs=1e-13)
    rng = np.random.default_rng(0)
    R = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    Bc = R @ R.conj().T + 3 * np.eye(3)
    assert fermionic_determinant(np.zeros(3), Bc) == pytest.approx(1.0, abs=1e-12)


def test_fermionic_determinant_is_det_one_plus_DB():
    rng = np.random.default_rng(3)
    B = covariance(TorusLattice(2, 1.0), "B", 1.0).dense()
    D = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    ref = np.linalg.det(np.eye(4) + D[:, None] * B)
    assert fermionic_determinant(D, B) == pytest.approx(ref, rel=1e-10)


@settings(max_examples=10, deadline=None)
@given(seed=seeds, E=st.sampled_from([0.5, 1.0, 1.5]))
def test_susy_representation(seed, E):
    rng = np.random.default_rng(seed)
    r = susy_rep_check(TorusLattice(2, 1.0), rng.standard_normal(4), rng.standard_normal(4), E)
    assert r["rel_err"] <= 1e-10
    assert r["norm_err"] <= 1e-12


def test_susy_representation_capacity():
    with pytest.raises(CapacityError):
        susy_rep_check(TorusLattice(3, 1.0), np.zeros(9), np.zeros(9), 1.0)

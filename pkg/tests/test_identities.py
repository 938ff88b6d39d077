import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbm_lab.covariance import covariance
from rbm_lab.identities import (Poly, hs_exact_single, hs_grassmann_check, hs_identity_check,
                                hs_rhs, ibp_check, ibp_sides, selection_functionals, str_M,
                                _block_cov)
from rbm_lab.lattice import TorusLattice


def test_wick_moments():
    x = Poly.var(1, 0)
    assert (x * x * x * x).gaussian_mean([[2.0]]) == pytest.approx(3 * 4.0)
    assert (x * x * x).gaussian_mean([[2.0]]) == 0
    y = Poly.var(2, 1)
    xy = Poly.var(2, 0) * y
    cov = np.array([[1.0, 0.3], [0.3, 2.0]])
    # E[x^2 y^2] = s_xx s_yy + 2 s_xy^2
    assert (xy * xy).gaussian_mean(cov) == pytest.approx(2.0 + 2 * 0.09)


def test_poly_evaluation_and_derivative():
    p = Poly.var(2, 0) * Poly.var(2, 0) * 3.0 + Poly.var(2, 1, 2j)
    assert p(np.array([[2.0, 1.0]]))[0] == pytest.approx(12 + 2j)
    assert p.deriv(0)(np.array([[2.0, 0.0]]))[0] == pytest.approx(12)
    assert p.degree == 2


def test_constant_functional_both_sides_zero():
    J = covariance(TorusLattice(2, 1.0), "J").dense()
    S = _block_cov(J)
    lhs, std, pr = ibp_sides(Poly.const(8), J, 0)
    assert lhs.gaussian_mean(S) == 0
    assert std.gaussian_mean(S) == 0 and pr.gaussian_mean(S) == 0


def test_wick_oracle_selects_standard_reading():
    r = ibp_check(TorusLattice(2, 1.0), 0, samples=20000, seed=1)
    assert r["verdict"] == "standard"
    assert r["oracle_max_err"]["standard"] <= 1e-12
    assert r["oracle_max_err"]["printed"] > 0.1
    assert r["pass"]
    # cross-covariance functional: lhs = sum_k J_0k <Str M_k Str M_0>-type weight
    row = r["oracle"]["StrM_k"]
    assert row["lhs"] == pytest.approx(row["standard"])


def test_printed_reading_fails_on_a_k():
    J = covariance(TorusLattice(2, 1.0), "J").dense()
    F = selection_functionals(4, 0)["a_k"]
    lhs, std, pr = ibp_sides(F, J, 0)
    S = _block_cov(J)
    assert lhs.gaussian_mean(S) == pytest.approx(J[0, 1])
    assert pr.gaussian_mean(S) == 0


def test_str_m_is_a_minus_ib():
    p = str_M(2, 1)
    assert p(np.array([[0.0, 2.0, 0.0, 3.0]]))[0] == pytest.approx(2 - 3j)


# -------------------------------------------------------------------- HS

def test_hs_trivial_cases():
    assert hs_rhs([[1.0]], [0.0]) == 1
    lhs, rhs = hs_exact_single(1.0)
    assert rhs == pytest.approx(math.exp(-0.5))
    assert abs(lhs - rhs) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(re=st.floats(-1.2, 1.2), im=st.floats(-1.2, 1.2), J=st.floats(0.2, 2.0))
def test_hs_single_site_exact(re, im, J):
    lhs, rhs = hs_exact_single(complex(re, im), J)
    assert abs(lhs - rhs) <= 1e-12


def test_hs_mc_small():
    z = np.array([0.3 + 0.1j, -0.2j, 0.5, 0.1 - 0.4j])
    r = hs_identity_check(TorusLattice(2, 1.0), z, samples=20000, seed=3)
    assert r["pass"]
    with pytest.raises(ValueError):
        hs_identity_check(TorusLattice(3, 1.0), np.zeros(9))
    with pytest.raises(ValueError):
        hs_identity_check(TorusLattice(2, 1.0), z, samples=10)


@settings(max_examples=20, deadline=None)
@given(re=st.floats(-1.5, 1.5), im=st.floats(-1.5, 1.5), J=st.floats(0.2, 2.0))
def test_hs_grassmann_variant(re, im, J):
    assert hs_grassmann_check(complex(re, im), J)["max_abs_err"] <= 1e-12

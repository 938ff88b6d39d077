import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbm_lab import grassmann as gm
from rbm_lab.grassmann import CapacityError, GrassmannElement as G, berezin_integrate

S2PI = 1 / math.sqrt(2 * math.pi)


def laplace_det(M):
    """Determinant by cofactor expansion along the first row (brute force)."""
    n = len(M)
    if n == 0:
        return 1.0
    if n == 1:
        return M[0][0]
    total = 0
    for c in range(n):
        sub = [row[:c] + row[c + 1:] for row in M[1:]]
        total += (-1) ** c * M[0][c] * laplace_det(sub)
    return total


def elements(g, parity=None):
    return st.integers(0, 2**32 - 1).map(
        lambda s: G.random(g, np.random.default_rng(s), parity, density=0.6))


# ------------------------------------------------------------------ algebra

@settings(max_examples=30, deadline=None)
@given(x=elements(5), y=elements(5), z=elements(5))
def test_associative_and_bilinear(x, y, z):
    assert ((x * y) * z).allclose(x * (y * z), atol=1e-12)
    assert (x * (y + z)).allclose(x * y + x * z, atol=1e-12)
    assert ((x + y) * 2.5j).allclose(x * 2.5j + y * 2.5j, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(e=elements(5, "even"), x=elements(5))
def test_even_elements_are_central(e, x):
    assert (e * x).allclose(x * e, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(u=elements(5, "odd"), v=elements(5, "odd"))
def test_odd_elements_anticommute(u, v):
    assert (u * v).allclose(-(v * u), atol=1e-12)
    assert (u * u).allclose(G(5), atol=1e-12)


def test_generators_anticommute_and_square_to_zero():
    g = 4
    for i in range(g):
        ai = G.generator(g, i)
        assert (ai * ai).max_abs() == 0
        for j in range(g):
            aj = G.generator(g, j)
            assert (ai * aj + aj * ai).max_abs() == 0


def test_monomial_ordering_sign():
    g = 3
    assert G.monomial(g, [2, 0]).coefficient([0, 2]) == -1
    assert G.monomial(g, [1, 1]).max_abs() == 0
    a0, a2 = G.generator(g, 0), G.generator(g, 2)
    assert (a2 * a0).coefficient([0, 2]) == -1


def test_parts_and_parity():
    x = G.random(4, np.random.default_rng(0))
    assert (x.even_part() + x.odd_part()).allclose(x)
    assert x.even_part().is_even() and x.odd_part().is_odd()
    assert x.soul().body == 0


@settings(max_examples=25, deadline=None)
@given(x=elements(4, "even"))
def test_nilpotent_series(x):
    if abs(x.body) < 0.2:
        return
    assert (x * x.inv()).allclose(G.scalar(4, 1.0), atol=1e-10)
    assert x.log().exp().allclose(x, atol=1e-9 * max(1, x.max_abs()))
    y = x.soul()
    assert (y.exp() * (-y).exp()).allclose(G.scalar(4, 1.0), atol=1e-10)


def test_exp_terminates_exactly():
    a, b = G.generator(2, 0), G.generator(2, 1)
    n = a * b
    assert n.exp().allclose(G.scalar(2, 1.0) + n)
    assert (n * n).max_abs() == 0


def test_capacity_limit():
    with pytest.raises(CapacityError):
        G(gm.MAX_GENERATORS + 1)
    with pytest.raises(CapacityError):
        gm.fermionic_gaussian(np.eye(gm.MAX_GAUSSIAN_N + 1))


# ----------------------------------------------------------------- Berezin

def test_berezin_basic_integrals():
    one = G.scalar(1, 1.0)
    a = G.generator(1, 0)
    assert berezin_integrate(one, [0]).body == 0
    assert berezin_integrate(a, [0]).body == pytest.approx(S2PI)
    assert berezin_integrate(a, [0], unit=True).body == pytest.approx(1.0)


def test_differentials_anticommute():
    g = 2
    abar_a = G.generator(g, 0) * G.generator(g, 1)
    x = berezin_integrate(abar_a, [0, 1]).body
    y = berezin_integrate(abar_a, [1, 0]).body
    assert x == pytest.approx(-y)
    assert abs(x) == pytest.approx(1 / (2 * math.pi))


def test_partial_integration_leaves_other_generators():
    g = 3
    x = G.generator(g, 0) * G.generator(g, 2)
    # d alpha_2 passes alpha_0 before acting
    assert berezin_integrate(x, [2]).allclose(G.generator(g, 0) * -S2PI)
    assert berezin_integrate(x, [0]).allclose(G.generator(g, 2) * S2PI)


# -------------------------------------------------------- Gaussian formulas

def test_fermionic_gaussian_examples():
    val, ref, err = gm.fermionic_gaussian_check(np.array([[2.5]]))
    assert val == pytest.approx(2.5 / (2 * math.pi))
    assert gm.fermionic_gaussian(np.eye(2)) == pytest.approx((2 * math.pi) ** -2)
    assert gm.fermionic_gaussian(np.eye(2), unit=True) == pytest.approx(1.0)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_fermionic_gaussian_is_determinant(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    val = gm.fermionic_gaussian(M)
    ref = laplace_det(M.tolist()) * (2 * math.pi) ** -n
    assert abs(val - ref) <= 1e-10 * max(abs(ref), 1e-300)


def test_minor_cofactor_example():
    M = np.array([[1, 2, 0], [0.5, 1, 1], [1, 0, 3]], dtype=complex)
    val, sign, det = gm.minor_formula_check(M, (0,), (1,))
    # row 1 and column 0 removed: det [[2, 0], [0, 3]] = 6 with cofactor sign -1
    assert (sign, det) == (-1, 6)
    assert val * (2 * math.pi) ** 3 == pytest.approx(-6.0)


def test_minor_mismatched_sizes_vanish():
    M = np.random.default_rng(0).standard_normal((3, 3))
    val, sign, _ = gm.minor_formula_check(M, (0, 1), (2,))
    assert sign == 0 and val == 0


def test_minor_empty_sets_give_full_determinant():
    M = np.random.default_rng(1).standard_normal((3, 3)) + 0j
    val, sign, det = gm.minor_formula_check(M, (), ())
    assert sign == 1
    assert val == pytest.approx(gm.fermionic_gaussian(M))
    assert det == pytest.approx(np.linalg.det(M))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_minor_formula_all_pairs_against_laplace(n):
    rng = np.random.default_rng(n)
    M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    for I, J in gm.all_index_pairs(n):
        val = gm.minor_integral(M, I, J)
        if len(I) != len(J):
            assert abs(val) == 0
            continue
        rows = [r for r in range(n) if r not in J]
        cols = [c for c in range(n) if c not in I]
        sub = [[M[r, c] for c in cols] for r in rows]
        ref = laplace_det(sub) * (2 * math.pi) ** -n
        # the engine fixes the sign; it must be +-1 and match the closed form
        ratio = val / ref
        assert abs(abs(ratio) - 1) <= 1e-10
        assert round(ratio.real) == gm.minor_sign(I, J)


def test_quadratic_form_layout():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    q = gm.quadratic_form(M)
    assert q.coefficient([gm.chi_bar(0), gm.chi(1)]) == 2.0
    assert q.coefficient([gm.chi_bar(1), gm.chi(0)]) == 3.0

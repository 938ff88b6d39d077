"""Finite Grassmann algebra with Berezin integration.

An element over g generators stores 2^g complex coefficients indexed by
bitmask; bit i set means alpha_i occurs. Monomials are kept in ascending
generator order, so alpha_1 alpha_0 is stored as -1 at mask 0b11.
"""
from __future__ import annotations

import math
from itertools import combinations

import numpy as np

MAX_GENERATORS = 24
MAX_GAUSSIAN_N = 6
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class CapacityError(ValueError):
    """Requested algebra exceeds the supported generator count."""


def _popcount(x):
    return np.bitwise_count(np.asarray(x, dtype=np.uint64)).astype(np.int64)


def _masks(g):
    return np.arange(1 << g, dtype=np.uint64)


def _crossings_left_fixed(A: int, Bs: np.ndarray) -> np.ndarray:
    """Pairs (a in A, b in B) with a > b, for fixed left mask A."""
    out = np.zeros(Bs.shape, dtype=np.int64)
    a = A
    while a:
        i = a.bit_length() - 1
        out += _popcount(Bs & np.uint64((1 << i) - 1))
        a &= ~(1 << i)
    return out


def _crossings_right_fixed(As: np.ndarray, B: int) -> np.ndarray:
    """Pairs (a in A, b in B) with a > b, for fixed right mask B."""
    out = np.zeros(As.shape, dtype=np.int64)
    b = B
    while b:
        j = b.bit_length() - 1
        out += _popcount(As >> np.uint64(j + 1))
        b &= ~(1 << j)
    return out


def _sort_sign(indices) -> tuple[int, int]:
    """(mask, sign) of the product alpha_{i1} ... alpha_{ik} in the given order."""
    idx = list(indices)
    if len(set(idx)) != len(idx):
        return 0, 0
    inv = sum(1 for x, y in combinations(idx, 2) if x > y)
    mask = 0
    for i in idx:
        mask |= 1 << i
    return mask, (-1) ** inv


class GrassmannElement:
    """Immutable element of the Grassmann algebra on ``g`` generators."""

    __slots__ = ("g", "c")

    def __init__(self, g: int, coeffs=None):
        if not 0 <= g <= MAX_GENERATORS:
            raise CapacityError(f"generator count {g} outside [0, {MAX_GENERATORS}]")
        self.g = int(g)
        if coeffs is None:
            coeffs = np.zeros(1 << g, dtype=complex)
        c = np.array(coeffs, dtype=complex)
        if c.shape != (1 << g,):
            raise ValueError(f"expected {1 << g} coefficients, got {c.shape}")
        c.flags.writeable = False
        self.c = c

    # -- constructors
    @classmethod
    def scalar(cls, g: int, value=1.0) -> "GrassmannElement":
        c = np.zeros(1 << g, dtype=complex)
        c[0] = value
        return cls(g, c)

    @classmethod
    def generator(cls, g: int, i: int) -> "GrassmannElement":
        if not 0 <= i < g:
            raise IndexError(f"generator {i} not in 0..{g - 1}")
        c = np.zeros(1 << g, dtype=complex)
        c[1 << i] = 1.0
        return cls(g, c)

    @classmethod
    def monomial(cls, g: int, indices, coeff=1.0) -> "GrassmannElement":
        """coeff * alpha_{i1} alpha_{i2} ... in the order given."""
        mask, sign = _sort_sign(indices)
        c = np.zeros(1 << g, dtype=complex)
        if sign:
            c[mask] = sign * coeff
        return cls(g, c)

    @classmethod
    def random(cls, g: int, rng: np.random.Generator, parity: str | None = None,
               density: float = 1.0, body: bool = True) -> "GrassmannElement":
        c = rng.standard_normal(1 << g) + 1j * rng.standard_normal(1 << g)
        if density < 1.0:
            c *= rng.random(1 << g) < density
        deg = _popcount(_masks(g))
        if parity == "even":
            c[deg % 2 == 1] = 0
        elif parity == "odd":
            c[deg % 2 == 0] = 0
        if not body:
            c[0] = 0
        return cls(g, c)

    # -- inspection
    @property
    def body(self) -> complex:
        return complex(self.c[0])

    def soul(self) -> "GrassmannElement":
        c = self.c.copy()
        c[0] = 0
        return GrassmannElement(self.g, c)

    def coefficient(self, indices) -> complex:
        """Coefficient of alpha_{i1} ... alpha_{ik} written in the given order."""
        mask, sign = _sort_sign(indices)
        return complex(sign * self.c[mask]) if sign else 0j

    def nonzero(self) -> np.ndarray:
        return np.flatnonzero(self.c)

    def _parity_masks(self):
        return _popcount(_masks(self.g)) % 2

    def is_even(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.c[self._parity_masks() == 1]) <= tol))

    def is_odd(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.c[self._parity_masks() == 0]) <= tol))

    def even_part(self) -> "GrassmannElement":
        return GrassmannElement(self.g, np.where(self._parity_masks() == 0, self.c, 0))

    def odd_part(self) -> "GrassmannElement":
        return GrassmannElement(self.g, np.where(self._parity_masks() == 1, self.c, 0))

    def allclose(self, other, atol: float = 1e-12, rtol: float = 0.0) -> bool:
        other = self._coerce(other)
        return bool(np.allclose(self.c, other.c, atol=atol, rtol=rtol))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.c)))

    def __repr__(self):
        terms = []
        for m in self.nonzero()[:8]:
            gens = [str(i) for i in range(self.g) if m >> i & 1]
            terms.append(f"({self.c[m]:.4g})" + ("*a" + "a".join(gens) if gens else ""))
        more = " + ..." if len(self.nonzero()) > 8 else ""
        return f"GrassmannElement(g={self.g}: {' + '.join(terms) or '0'}{more})"

    # -- arithmetic
    def _coerce(self, other) -> "GrassmannElement":
        if isinstance(other, GrassmannElement):
            if other.g != self.g:
                raise ValueError(f"generator counts differ: {self.g} vs {other.g}")
            return other
        return GrassmannElement.scalar(self.g, complex(other))

    def __add__(self, other):
        return GrassmannElement(self.g, self.c + self._coerce(other).c)

    __radd__ = __add__

    def __sub__(self, other):
        return GrassmannElement(self.g, self.c - self._coerce(other).c)

    def __rsub__(self, other):
        return GrassmannElement(self.g, self._coerce(other).c - self.c)

    def __neg__(self):
        return GrassmannElement(self.g, -self.c)

    def __mul__(self, other):
        if not isinstance(other, GrassmannElement):
            return GrassmannElement(self.g, self.c * complex(other))
        other = self._coerce(other)
        return GrassmannElement(self.g, _product(self.c, other.c, self.g))

    def __rmul__(self, other):
        return GrassmannElement(self.g, self.c * complex(other))

    def __truediv__(self, other):
        if isinstance(other, GrassmannElement):
            return self * other.inv()
        return GrassmannElement(self.g, self.c / complex(other))

    def __rtruediv__(self, other):
        return self.inv() * complex(other)

    def __pow__(self, k: int):
        k = int(k)
        if k < 0:
            return self.inv() ** (-k)
        out = GrassmannElement.scalar(self.g, 1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # -- functions of nilpotent arguments
    def _series(self, coeffs_fn) -> "GrassmannElement":
        """sum_k coeffs_fn(k) * soul^k, which terminates at k = g."""
        s = self.soul()
        out = GrassmannElement.scalar(self.g, coeffs_fn(0))
        p = GrassmannElement.scalar(self.g, 1.0)
        for k in range(1, self.g + 1):
            p = p * s
            if not np.any(p.c):
                break
            out = out + p * coeffs_fn(k)
        return out

    def exp(self) -> "GrassmannElement":
        e0 = np.exp(self.body)
        return self._series(lambda k: e0 / math.factorial(k))

    def log(self) -> "GrassmannElement":
        z = self.body
        if z == 0:
            raise ZeroDivisionError("log of an element with zero body")
        return self._series(lambda k: np.log(z) if k == 0 else (-1) ** (k + 1) / (k * z ** k))

    def log1p(self) -> "GrassmannElement":
        """log(1 + x), accurate when the body of x is small."""
        w = 1.0 + self.body
        if w == 0:
            raise ZeroDivisionError("log1p of an element with body -1")
        z0 = np.log1p(self.body)
        return self._series(lambda k: z0 if k == 0 else (-1) ** (k + 1) / (k * w ** k))

    def inv(self) -> "GrassmannElement":
        z = self.body
        if z == 0:
            raise ZeroDivisionError("element with zero body is not invertible")
        return self._series(lambda k: (-1) ** k / z ** (k + 1))

    # -- integration
    def integrate(self, generators, unit: bool = False) -> "GrassmannElement":
        """Berezin integral with differentials d alpha_{i1} ... d alpha_{ik}.

        The last differential is innermost and is applied first.
        """
        return berezin_integrate(self, generators, unit=unit)


def _product(a: np.ndarray, b: np.ndarray, g: int) -> np.ndarray:
    out = np.zeros(1 << g, dtype=complex)
    na, nb = np.flatnonzero(a), np.flatnonzero(b)
    if na.size == 0 or nb.size == 0:
        return out
    if na.size <= nb.size:
        Bs = nb.astype(np.uint64)
        bv = b[nb]
        for A in na.tolist():
            free = (Bs & np.uint64(A)) == 0
            Bf = Bs[free]
            sign = 1 - 2 * (_crossings_left_fixed(A, Bf) & 1)
            out[Bf | np.uint64(A)] += sign * a[A] * bv[free]
    else:
        As = na.astype(np.uint64)
        av = a[na]
        for B in nb.tolist():
            free = (As & np.uint64(B)) == 0
            Af = As[free]
            sign = 1 - 2 * (_crossings_right_fixed(Af, B) & 1)
            out[Af | np.uint64(B)] += sign * av[free] * b[B]
    return out


def berezin_integrate(element: GrassmannElement, generators, unit: bool = False) -> GrassmannElement:
    """int d alpha_{i1} ... d alpha_{ik} element, innermost (last) first.

    Each integral removes alpha_i after moving it to the front of the
    monomial, and multiplies by 1/sqrt(2 pi) (or 1 with ``unit=True``).
    """
    gens = list(generators)
    for i in gens:
        if not 0 <= i < element.g:
            raise IndexError(f"generator {i} not in 0..{element.g - 1}")
    norm = 1.0 if unit else INV_SQRT_2PI
    c = element.c
    masks = _masks(element.g)
    for i in reversed(gens):
        bit = np.uint64(1 << i)
        has = (masks & bit) != 0
        src = masks[has]
        sign = 1 - 2 * (_popcount(src & np.uint64((1 << i) - 1)) & 1)
        new = np.zeros_like(c)
        new[(src ^ bit).astype(np.int64)] = sign * c[has] * norm
        c = new
    return GrassmannElement(element.g, c)


# ------------------------------------------------------------- Gaussian checks

def chi_bar(i: int) -> int:
    return 2 * i


def chi(i: int) -> int:
    return 2 * i + 1


def measure_order(n: int) -> list[int]:
    """Differentials d chibar_1 d chi_1 ... d chibar_n d chi_n."""
    return [k for i in range(n) for k in (chi_bar(i), chi(i))]


def quadratic_form(M, g: int | None = None, offset: int = 0) -> GrassmannElement:
    """(chibar, M chi) = sum_ij chibar_i M_ij chi_j."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    g = 2 * n + offset if g is None else g
    c = np.zeros(1 << g, dtype=complex)
    for i in range(n):
        for j in range(n):
            mask, sign = _sort_sign([offset + chi_bar(i), offset + chi(j)])
            c[mask] += sign * M[i, j]
    return GrassmannElement(g, c)


def _check_n(n):
    if n > MAX_GAUSSIAN_N:
        raise CapacityError(f"n = {n} exceeds the Gaussian check capacity {MAX_GAUSSIAN_N}")


def _rel_err(x, y) -> float:
    return abs(x - y) / max(abs(y), 1e-300)


def fermionic_gaussian(M, unit: bool = False) -> complex:
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    _check_n(n)
    f = (-quadratic_form(M)).exp()
    return berezin_integrate(f, measure_order(n), unit=unit).body


def fermionic_gaussian_check(M, unit: bool = False) -> tuple[complex, complex, float]:
    """(engine value, (2 pi)^-n det M, rel err)."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    val = fermionic_gaussian(M, unit)
    ref = np.linalg.det(M) * (1.0 if unit else (2 * math.pi) ** -n)
    return val, ref, _rel_err(val, ref)


def minor_integral(M, I, J, unit: bool = False) -> complex:
    """int e^{-(chibar, M chi)} prod_{i in I} chi_i prod_{j in J} chibar_j (ascending)."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    _check_n(n)
    g = 2 * n
    f = (-quadratic_form(M)).exp()
    ins = GrassmannElement.monomial(g, [chi(i) for i in sorted(I)] + [chi_bar(j) for j in sorted(J)])
    return berezin_integrate(f * ins, measure_order(n), unit=unit).body


def minor_sign(I, J) -> int:
    """Sign in the minor formula for the ordering used by ``minor_integral``.

    For |I| = |J| = k: (-1)^(sum(I) + sum(J) + k(k-1)/2), with 0-based
    indices shifted to 1-based in the sums (the shift is even).
    """
    k = len(I)
    return (-1) ** ((sum(I) + sum(J) + k * (k - 1) // 2) % 2)


def minor_det(M, I, J) -> complex:
    """det of M with rows J and columns I removed; empty minor is 1."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    rows = [r for r in range(n) if r not in set(J)]
    cols = [c for c in range(n) if c not in set(I)]
    if not rows:
        return 1.0 + 0j
    return complex(np.linalg.det(M[np.ix_(rows, cols)]))


def minor_formula_check(M, I, J, unit: bool = False) -> tuple[complex, int, complex]:
    """(engine value, sign, minor determinant); sign is 0 when |I| != |J|."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    val = minor_integral(M, I, J, unit)
    if len(I) != len(J):
        return val, 0, 0j
    return val, minor_sign(I, J), minor_det(M, I, J)


def all_index_pairs(n: int):
    subsets = [s for k in range(n + 1) for s in combinations(range(n), k)]
    for I in subsets:
        for J in subsets:
            yield I, J

"""p = q = 1 supermatrices over the Grassmann engine and the identities built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .covariance import covariance
from .grassmann import CapacityError, GrassmannElement, berezin_integrate, _rel_err
from .lattice import TorusLattice
from .saddle import saddle_data
from .susy import D_term, potential_V


def _as_elem(x, g: int) -> GrassmannElement:
    return x if isinstance(x, GrassmannElement) else GrassmannElement.scalar(g, complex(x))


@dataclass(frozen=True)
class SuperMatrix:
    """[[a, sigma], [rho, b]] with a, b even and sigma, rho odd."""

    a: GrassmannElement
    sigma: GrassmannElement
    rho: GrassmannElement
    b: GrassmannElement

    def __post_init__(self):
        g = self.g
        for name in ("a", "sigma", "rho", "b"):
            object.__setattr__(self, name, _as_elem(getattr(self, name), g))
        if not (self.a.is_even(1e-300) and self.b.is_even(1e-300)):
            raise ValueError("diagonal entries must be even")
        if not (self.sigma.is_odd(1e-300) and self.rho.is_odd(1e-300)):
            raise ValueError("off-diagonal entries must be odd")

    @property
    def g(self) -> int:
        for x in (self.a, self.sigma, self.rho, self.b):
            if isinstance(x, GrassmannElement):
                return x.g
        raise ValueError("need at least one GrassmannElement entry to fix the algebra")

    @classmethod
    def diag(cls, g: int, a, b) -> "SuperMatrix":
        z = GrassmannElement(g)
        return cls(_as_elem(a, g), z, z, _as_elem(b, g))

    @classmethod
    def identity(cls, g: int) -> "SuperMatrix":
        return cls.diag(g, 1.0, 1.0)

    def str(self) -> GrassmannElement:
        return self.a - self.b

    def _schur(self) -> GrassmannElement:
        if self.b.body == 0:
            raise ZeroDivisionError("Fermion-Fermion block has zero body")
        return self.a - self.sigma * self.b.inv() * self.rho

    def sdet(self) -> GrassmannElement:
        return self._schur() * self.b.inv()

    def inv(self) -> "SuperMatrix":
        binv = self.b.inv()
        s = self._schur()
        if s.body == 0:
            raise ZeroDivisionError("Boson-Boson Schur complement has zero body")
        sinv = s.inv()
        return SuperMatrix(sinv, -(sinv * self.sigma * binv), -(binv * self.rho * sinv),
                           binv + binv * self.rho * sinv * self.sigma * binv)

    def __matmul__(self, o: "SuperMatrix") -> "SuperMatrix":
        return SuperMatrix(self.a * o.a + self.sigma * o.rho, self.a * o.sigma + self.sigma * o.b,
                           self.rho * o.a + self.b * o.rho, self.rho * o.sigma + self.b * o.b)

    def __add__(self, o: "SuperMatrix") -> "SuperMatrix":
        return SuperMatrix(self.a + o.a, self.sigma + o.sigma, self.rho + o.rho, self.b + o.b)

    def __sub__(self, o: "SuperMatrix") -> "SuperMatrix":
        return SuperMatrix(self.a - o.a, self.sigma - o.sigma, self.rho - o.rho, self.b - o.b)

    def scale(self, c) -> "SuperMatrix":
        return SuperMatrix(self.a * c, self.sigma * c, self.rho * c, self.b * c)

    @classmethod
    def random(cls, g: int, rng: np.random.Generator, soul_scale: float = 0.5) -> "SuperMatrix":
        def even():
            x = GrassmannElement.random(g, rng, "even", body=False) * soul_scale
            return x + complex(rng.uniform(0.5, 2.0), rng.uniform(-1, 1))

        def odd():
            return GrassmannElement.random(g, rng, "odd") * soul_scale

        return cls(even(), odd(), odd(), even())


@dataclass(frozen=True)
class SuperVector:
    """Site pair (z, chi) with adjoint (zbar, chibar); z, zbar even, chi, chibar odd."""

    z: GrassmannElement
    chi: GrassmannElement
    zbar: GrassmannElement
    chibar: GrassmannElement

    def __post_init__(self):
        if not (self.z.is_even() and self.zbar.is_even()):
            raise ValueError("Bosonic entries must be even")
        if not (self.chi.is_odd() and self.chibar.is_odd()):
            raise ValueError("Fermionic entries must be odd")

    @classmethod
    def from_complex(cls, g: int, z: complex, chibar_gen: int, chi_gen: int) -> "SuperVector":
        return cls(GrassmannElement.scalar(g, z), GrassmannElement.generator(g, chi_gen),
                   GrassmannElement.scalar(g, complex(z).conjugate()),
                   GrassmannElement.generator(g, chibar_gen))

    def adjoint_consistent(self) -> bool:
        return np.allclose(self.zbar.c, self.z.c.conj())

    def pairing(self, other: "SuperVector | None" = None) -> GrassmannElement:
        """Phi* Phi' = zbar z' + chibar chi'."""
        o = self if other is None else other
        return self.zbar * o.z + self.chibar * o.chi

    def form(self, M: SuperMatrix) -> GrassmannElement:
        """(Phibar, M Phi)."""
        return (self.zbar * M.a * self.z + self.zbar * M.sigma * self.chi
                + self.chibar * M.rho * self.z + self.chibar * M.b * self.chi)


def sdet_str(M: SuperMatrix) -> tuple[GrassmannElement, GrassmannElement]:
    return M.str(), M.sdet()


# --------------------------------------------------------- Sdet as an integral

def site_generators(t: int, j: int) -> tuple[int, int]:
    """(chibar_j, chi_j) generator indices after t external generators."""
    return t + 2 * j, t + 2 * j + 1


def sdet_integral(Ms: list[SuperMatrix], t: int, unit: bool = False) -> GrassmannElement:
    """int prod_j dPhi_j* dPhi_j exp(-sum_j (Phibar_j, M_j Phi_j)).

    Entries of each M_j live on the first ``t`` generators; chi's follow.
    The z integral uses the analytic Gaussian formula with even sources,
    the chi integral is done by the engine.
    """
    if not Ms:
        raise ValueError("need at least one site")
    g = Ms[0].g
    k = len(Ms)
    if t + 2 * k > g:
        raise CapacityError(f"{k} sites need {t + 2 * k} generators, algebra has {g}")
    out = GrassmannElement.scalar(g, 1.0)
    order = []
    for j, M in enumerate(Ms):
        if not M.a.body.real > 0:
            raise ValueError("Bosonic block needs a positive real part for convergence")
        cb, c = site_generators(t, j)
        xb, x = GrassmannElement.generator(g, cb), GrassmannElement.generator(g, c)
        ainv = M.a.inv()
        bos = ainv * (2 * math.pi) * (xb * M.rho * ainv * M.sigma * x).exp()
        out = out * bos * (-(xb * M.b * x)).exp()
        order += [cb, c]
    return berezin_integrate(out, order, unit=unit) / ((2 * math.pi) ** k if unit else 1.0)


def sdet_integral_check(Ms: list[SuperMatrix], t: int) -> float:
    """Max coefficient error of the integral against prod_j Sdet(M_j^-1), relative."""
    val = sdet_integral(Ms, t)
    ref = GrassmannElement.scalar(val.g, 1.0)
    for M in Ms:
        ref = ref * M.inv().sdet()
    return float(np.max(np.abs(val.c - ref.c)) / max(ref.max_abs(), 1e-300))


def random_site_matrices(k: int, t: int, rng: np.random.Generator, soul_scale: float = 0.5):
    """k per-site supermatrices whose entries use only the first t generators."""
    g = t + 2 * k
    sub = [SuperMatrix.random(t, rng, soul_scale) for _ in range(k)]

    def lift(x):
        c = np.zeros(1 << g, dtype=complex)
        c[: 1 << t] = x.c
        return GrassmannElement(g, c)

    return [SuperMatrix(lift(m.a), lift(m.sigma), lift(m.rho), lift(m.b)) for m in sub]


# ------------------------------------------------------- supersymmetric potential

def site_matrix(a: float, b: float, g: int, rbar: int, r: int) -> SuperMatrix:
    """M_j = [[a, rhobar], [rho, i b]]."""
    return SuperMatrix(GrassmannElement.scalar(g, a), GrassmannElement.generator(g, rbar),
                       GrassmannElement.generator(g, r), GrassmannElement.scalar(g, 1j * b))


def potential_element_literal(M: SuperMatrix, E) -> GrassmannElement:
    """-ln Sdet[conj(calE) - M] - calE Str M - calE^2/2 Str M^2, evaluated as written."""
    sd = saddle_data(E)
    e = sd.calE
    g = M.g
    shifted = SuperMatrix.identity(g).scale(e.conjugate()) - M
    return -shifted.sdet().log() - M.str() * e - (M @ M).str() * (e * e / 2)


def potential_element(M: SuperMatrix, E, series_radius: float = 0.5) -> GrassmannElement:
    """Same potential, computed without the O(M) cancellation of the literal form.

    With X = calE M (|calE| = 1) and ln Sdet = Str ln, the potential is
    sum_{k>=3} Str X^k / k; that series is used when the bodies of a and b
    are below ``series_radius``. Otherwise Sdet[1 - X] goes through log1p.
    """
    e = saddle_data(E).calE
    if max(abs(M.a.body), abs(M.b.body)) < series_radius:
        X = M.scale(e)
        P = X @ X
        out = GrassmannElement(M.g)
        for k in range(3, 200):
            P = P @ X
            term = P.str() / k
            out = out + term
            if term.max_abs() <= 1e-18 * max(out.max_abs(), 1e-300):
                break
        return out
    A = M.a * (-e)
    sig = M.sigma * (-e)
    rho = M.rho * (-e)
    Bf = M.b * (-e)
    schur_m1 = A - sig * (Bf + 1.0).inv() * rho
    log_sdet = schur_m1.log1p() - Bf.log1p()
    return -log_sdet - M.str() * e - (M @ M).str() * (e * e / 2)


def potential_element_tform(M: SuperMatrix, E) -> GrassmannElement:
    """int_0^1 (1-t)^2 Str[M^3 (conj(calE) - t M)^-3] dt, coefficientwise."""
    sd = saddle_data(E)
    g = M.g
    eb = sd.calE.conjugate()
    M3 = M @ M @ M

    def f(t):
        R = (SuperMatrix.identity(g).scale(eb) - M.scale(t)).inv()
        v = (M3 @ R @ R @ R).str().c * (1 - t) ** 2
        return np.concatenate([v.real, v.imag])

    val, _ = integrate.quad_vec(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12)
    n = 1 << g
    return GrassmannElement(g, val[:n] + 1j * val[n:])


def supermatrix_potential_check(a: float, b: float, E, tform: bool = False) -> dict:
    """Body and rho rhobar coefficient of V(M_j) against V(a) - V(ib) and D(a, b).

    Generators: 0 = rhobar, 1 = rho. The soul is the coefficient of
    rho * rhobar; it equals minus the rhobar * rho coefficient.
    """
    M = site_matrix(a, b, 2, 0, 1)
    V = potential_element(M, E)
    body_ref = complex(potential_V(a, E) - potential_V(1j * b, E))
    soul_ref = complex(D_term(a, b, E))
    out = {
        "body": V.body, "body_ref": body_ref, "body_err": _rel_err(V.body, body_ref),
        "soul": V.coefficient([1, 0]), "soul_ref": soul_ref,
        "soul_err": _rel_err(V.coefficient([1, 0]), soul_ref),
        "rhobar_rho_coeff": V.coefficient([0, 1]),
    }
    if tform:
        scale = max(V.max_abs(), 1e-300)
        Vl = potential_element_literal(M, E)
        Vt = potential_element_tform(M, E)
        out["literal_err"] = float(np.max(np.abs(Vl.c - V.c)) / scale)
        out["tform_err"] = float(np.max(np.abs(Vt.c - V.c)) / scale)
        out["literal_tform_err"] = float(np.max(np.abs(Vt.c - Vl.c)) / scale)
    return out


# ------------------------------------------------------ Fermionic representation

MAX_SUSY_SITES = 4


def fermionic_determinant(D, B, unit: bool = False) -> complex:
    """int dmu_B(rhobar, rho) exp(sum_j D_j rho_j rhobar_j), rhobar_j = 2j, rho_j = 2j+1."""
    D = np.asarray(D, dtype=complex)
    B = np.asarray(B, dtype=complex)
    n = D.size
    if n > MAX_SUSY_SITES:
        raise CapacityError(f"|Lambda| = {n} exceeds {MAX_SUSY_SITES}")
    g = 2 * n
    Binv = np.linalg.inv(B)
    expo = GrassmannElement(g)
    for i in range(n):
        for j in range(n):
            expo = expo - GrassmannElement.monomial(g, [2 * i, 2 * j + 1], Binv[i, j])
        expo = expo + GrassmannElement.monomial(g, [2 * i + 1, 2 * i], D[i])
    order = list(range(g))
    pref = np.linalg.det(B) * (1.0 if unit else (2 * math.pi) ** n)
    return complex(pref * berezin_integrate(expo.exp(), order, unit=unit).body)


def susy_rep_check(lattice: TorusLattice, a, b, E) -> dict:
    """Fermionic integral of exp(soul of V(M)) against det[1 + D B]."""
    if lattice.n_sites > MAX_SUSY_SITES:
        raise CapacityError(f"|Lambda| = {lattice.n_sites} exceeds {MAX_SUSY_SITES}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    B = covariance(lattice, "B", E).dense()
    souls = np.array([supermatrix_potential_check(a[j], b[j], E)["soul"] for j in range(a.size)])
    val = fermionic_determinant(souls, B)
    ref = complex(np.linalg.det(np.eye(a.size) + np.asarray(D_term(a, b, E))[:, None] * B))
    norm = fermionic_determinant(np.zeros(a.size), B)
    return {"value": val, "det_ref": ref, "rel_err": _rel_err(val, ref),
            "normalization": norm, "norm_err": abs(norm - 1)}

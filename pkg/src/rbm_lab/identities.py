"""Integration-by-parts convention and Hubbard-Stratonovich checks."""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from .covariance import CovOperator, covariance
from .ensemble import sample_H
from .grassmann import GrassmannElement
from .lattice import TorusLattice
from .mc import MCEstimate, sample_map, sigma_distance
from .supermatrix import SuperVector


class Poly:
    """Polynomial in 2N real variables (a_0..a_{N-1}, b_0..b_{N-1})."""

    def __init__(self, nvar: int, terms=None):
        self.nvar = nvar
        self.terms = defaultdict(complex)
        for k, v in (terms or {}).items():
            if v != 0:
                self.terms[tuple(k)] += v

    @classmethod
    def const(cls, nvar, c=1.0):
        return cls(nvar, {(0,) * nvar: complex(c)})

    @classmethod
    def var(cls, nvar, i, c=1.0):
        e = [0] * nvar
        e[i] = 1
        return cls(nvar, {tuple(e): complex(c)})

    def __add__(self, o):
        o = o if isinstance(o, Poly) else Poly.const(self.nvar, o)
        out = Poly(self.nvar, dict(self.terms))
        for k, v in o.terms.items():
            out.terms[k] += v
        return out

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, o):
        return self + (-o if isinstance(o, Poly) else -complex(o))

    def __mul__(self, o):
        if not isinstance(o, Poly):
            return Poly(self.nvar, {k: v * complex(o) for k, v in self.terms.items()})
        out = Poly(self.nvar)
        for k1, v1 in self.terms.items():
            for k2, v2 in o.terms.items():
                out.terms[tuple(x + y for x, y in zip(k1, k2))] += v1 * v2
        return out

    __rmul__ = __mul__

    def deriv(self, i):
        out = Poly(self.nvar)
        for k, v in self.terms.items():
            if k[i]:
                e = list(k)
                e[i] -= 1
                out.terms[tuple(e)] += v * k[i]
        return out

    @property
    def degree(self):
        return max((sum(k) for k, v in self.terms.items() if v != 0), default=0)

    def __call__(self, x):
        """Evaluate on samples x of shape (..., nvar)."""
        x = np.asarray(x)
        out = np.zeros(x.shape[:-1], dtype=complex)
        for k, v in self.terms.items():
            t = np.full(x.shape[:-1], v, dtype=complex)
            for i, p in enumerate(k):
                if p:
                    t = t * x[..., i] ** p
            out += t
        return out

    def gaussian_mean(self, cov) -> complex:
        """Exact mean under N(0, cov) by Wick pairings."""
        cov = np.asarray(cov)
        total = 0j
        for k, v in self.terms.items():
            idx = [i for i, p in enumerate(k) for _ in range(p)]
            total += v * _wick(idx, cov)
        return total


def _wick(idx, cov):
    if not idx:
        return 1.0
    if len(idx) % 2:
        return 0.0
    first, rest = idx[0], idx[1:]
    s = 0.0
    for m, j in enumerate(rest):
        c = cov[first, j]
        if c != 0:
            s += c * _wick(rest[:m] + rest[m + 1:], cov)
    return s


def str_M(N: int, j: int) -> Poly:
    """Str M_j = a_j - i b_j."""
    return Poly.var(2 * N, j) + Poly.var(2 * N, N + j, -1j)


def str_d(F: Poly, N: int, k: int) -> Poly:
    """Str d_{M_k} F = (d_{a_k} - i d_{b_k}) F on the Bosonic sector."""
    return F.deriv(k) - F.deriv(N + k) * 1j


def ibp_sides(F: Poly, J, j: int):
    """(lhs, standard rhs, printed rhs) as polynomials.

    standard: sum_k J_jk Str d_{M_k} F; printed: sum_k J_kj Str d_{M_j} F.
    """
    J = np.asarray(J)
    N = J.shape[0]
    lhs = str_M(N, j) * F
    std = Poly(2 * N)
    for k in range(N):
        std = std + str_d(F, N, k) * J[j, k]
    printed = str_d(F, N, j) * float(J[:, j].sum())
    return lhs, std, printed


def _block_cov(J):
    N = J.shape[0]
    S = np.zeros((2 * N, 2 * N))
    S[:N, :N] = J
    S[N:, N:] = J
    return S


def selection_functionals(N: int, j: int) -> dict:
    """Functionals for the Wick-oracle convention vote at site j."""
    k = (j + 1) % N
    v = lambda i, c=1.0: Poly.var(2 * N, i, c)
    return {
        "one": Poly.const(2 * N),
        "StrM_j": str_M(N, j),
        "StrM_k": str_M(N, k),
        "a_k": v(k),
        "b_k": v(N + k),
        "a_k^2 b_j": v(k) * v(k) * v(N + j),
        "a_j a_k b_k^2": v(j) * v(k) * v(N + k) * v(N + k),
    }


def validation_functionals(N: int) -> dict:
    v = lambda i, c=1.0: Poly.var(2 * N, i, c)
    last = N - 1
    return {
        "a_1 a_2 b_3": v(1 % N) * v(2 % N) * v(N + 3 % N),
        "a_3^3": v(last) * v(last) * v(last),
        "b_0^2 a_1 + a_2": v(N) * v(N) * v(1 % N) + v(2 % N),
        "a_0 b_1 a_2 b_3": v(0) * v(N + 1 % N) * v(2 % N) * v(N + 3 % N),
        "(a_0 + a_1)^2 b_2^2": (v(0) + v(1 % N)) * (v(0) + v(1 % N)) * v(N + 2 % N) * v(N + 2 % N),
    }


def _ibp_worker(rng, m, Lc, polys):
    x = rng.standard_normal((m, Lc.shape[0])) @ Lc.T
    return np.stack([p(x) for p in polys], axis=1)


def ibp_check(lattice: TorusLattice | None = None, j: int = 0, samples: int = 200000,
              seed: int = 0, workers=1, J=None) -> dict:
    """Decide the IBP index convention by Wick oracle, then validate it by MC.

    Test functionals are Bosonic polynomials; the Fermionic block of the
    super-derivative does not act on them.
    """
    lattice = lattice or TorusLattice(2, 1.0)
    Jd = np.asarray(J) if J is not None else covariance(lattice, "J").dense()
    N = Jd.shape[0]
    S = _block_cov(Jd)
    oracle = {}
    worst = {"standard": 0.0, "printed": 0.0}
    for name, F in selection_functionals(N, j).items():
        lhs, std, pr = ibp_sides(F, Jd, j)
        L, R1, R2 = lhs.gaussian_mean(S), std.gaussian_mean(S), pr.gaussian_mean(S)
        oracle[name] = {"lhs": L, "standard": R1, "printed": R2}
        worst["standard"] = max(worst["standard"], abs(L - R1))
        worst["printed"] = max(worst["printed"], abs(L - R2))
    holds = {k: v <= 1e-12 for k, v in worst.items()}
    verdict = "standard" if holds["standard"] and not holds["printed"] else \
        "printed" if holds["printed"] and not holds["standard"] else \
        "both" if all(holds.values()) else "neither"
    chosen = "printed" if verdict == "printed" else "standard"

    polys, names = [], []
    for name, F in validation_functionals(N).items():
        lhs, std, pr = ibp_sides(F, Jd, j)
        polys.append(lhs - (std if chosen == "standard" else pr))
        names.append(name)
    Lc = np.linalg.cholesky(S)
    vals = sample_map(_ibp_worker, samples, seed, workers, (Lc, polys), chunk=50000)
    mc = {}
    for i, name in enumerate(names):
        est = MCEstimate.from_samples(vals[:, i])
        dist, _ = sigma_distance(est, 0.0)
        mc[name] = {"diff": est.to_json(), "sigma": dist, "pass": dist <= 3.0}
    return {"j": j, "oracle_max_err": worst, "oracle": oracle, "verdict": verdict,
            "convention": chosen, "mc": mc, "pass": verdict == "standard" and
            all(r["pass"] for r in mc.values())}


# ------------------------------------------------------------ Hubbard-Stratonovich

def hs_rhs(J, z) -> complex:
    """exp(-1/2 sum_ij J_ij |z_i|^2 |z_j|^2)."""
    w = np.abs(np.asarray(z, dtype=complex)) ** 2
    return complex(np.exp(-0.5 * w @ np.asarray(J) @ w))


def hs_exact_single(z: complex, J: float = 1.0, nodes: int = 120) -> tuple[complex, complex]:
    """|Lambda| = 1: E[exp(-i h |z|^2)], h ~ N(0, J), by Gauss-Hermite, and the closed form."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    s = abs(z) ** 2
    lhs = complex(np.sum(w * np.exp(-1j * math.sqrt(J) * x * s)) / math.sqrt(2 * math.pi))
    return lhs, hs_rhs([[J]], [z])


def _hs_worker(rng, m, Jd, z):
    H = sample_H(Jd, rng, m)
    q = np.einsum("i,nij,j->n", z.conj(), H, z)
    return np.exp(-1j * q)


def hs_identity_check(lattice: TorusLattice, z, samples: int = 100000, seed: int = 0,
                      workers=1) -> dict:
    if lattice.n_sites > 4:
        raise ValueError("HS check is limited to |Lambda| <= 4")
    if samples < 1000:
        raise ValueError("need at least 1000 draws")
    Jd = covariance(lattice, "J").dense()
    z = np.asarray(z, dtype=complex)
    vals = sample_map(_hs_worker, samples, seed, workers, (Jd, z), chunk=20000)
    est = MCEstimate.from_samples(vals)
    ref = hs_rhs(Jd, z)
    dist, _ = sigma_distance(est, ref)
    return {"mc": est.to_json(), "closed_form": [ref.real, ref.imag], "sigma": dist,
            "pass": dist <= 3.0}


def _normal_moment(m: int, var: float) -> float:
    return 0.0 if m % 2 else var ** (m // 2) * math.prod(range(m - 1, 0, -2))


def hs_grassmann_check(z: complex, J: float = 1.0) -> dict:
    """|Lambda| = 1 with a Fermionic component: E_h[exp(-i h Phi*Phi)] vs exp(-J/2 (Phi*Phi)^2).

    The left side is expanded termwise: with Phi*Phi = s + n (n nilpotent),
    E[h^k e^{-ihs}] = e^{-J s^2/2} E[(h - iJs)^k].
    """
    g = 2
    phi = SuperVector.from_complex(g, z, 0, 1)
    X = phi.pairing()
    s = X.body.real
    n = X.soul()
    lhs = GrassmannElement(g)
    nk = GrassmannElement.scalar(g, 1.0)
    c = -1j * J * s
    for k in range(g + 1):
        mom = sum(math.comb(k, m) * _normal_moment(m, J) * c ** (k - m) for m in range(k + 1))
        lhs = lhs + nk * ((-1j) ** k * mom / math.factorial(k))
        nk = nk * n
    lhs = lhs * math.exp(-J * s * s / 2)
    rhs = (X * X * (-J / 2)).exp()
    return {"lhs": lhs.c.tolist(), "rhs": rhs.c.tolist(),
            "max_abs_err": float(np.max(np.abs(lhs.c - rhs.c)))}

"""Dual functional-integral representations of the averaged resolvent.

Fields (a, b) are real arrays whose last axis runs over sites; leading axes
are sample batches.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .covariance import CovOperator, covariance
from .ensemble import sample_H
from .lattice import TorusLattice
from .mc import MCEstimate, sample_map, batch_se
from .saddle import SaddleData, saddle_data


def _sd(E) -> SaddleData:
    return E if isinstance(E, SaddleData) else saddle_data(E)


# ------------------------------------------------------------ potential and D

def potential_V(x, E):
    """V(x) = -ln(1 - x calE) - x calE - (x calE)^2 / 2 (calE = 1/conj(calE)).

    Uses the power series sum_{k>=3} u^k / k for |u| < 0.1 to avoid cancellation.
    """
    sd = _sd(E)
    u = np.asarray(x, dtype=complex) * sd.calE
    out = -np.log1p(-u) - u - 0.5 * u * u
    small = np.abs(u) < 0.1
    if np.any(small):
        us = u[small] if u.ndim else u
        ser = np.zeros_like(us)
        p = us ** 3
        for k in range(3, 20):
            ser = ser + p / k
            p = p * us
        if u.ndim:
            out[small] = ser
        else:
            out = ser
    return out if np.ndim(out) else complex(out)


def potential_V_quad(x, E) -> complex:
    """V(x) by adaptive quadrature of x^3 (1-t)^2 / (conj(calE) - t x)^3 on [0, 1]."""
    sd = _sd(E)
    x = complex(x)
    eb = sd.calE.conjugate()

    def f(t):
        return x ** 3 * (1 - t) ** 2 / (eb - t * x) ** 3

    re = integrate.quad(lambda t: f(t).real, 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    im = integrate.quad(lambda t: f(t).imag, 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return complex(re, im)


def calV(a, b, E):
    """Sum over sites of V(a_j) - V(i b_j)."""
    return np.sum(potential_V(a, E) - potential_V(1j * np.asarray(b), E), axis=-1)


def D_term(a, b, E):
    """D_j = calE^2 - 1/((conj calE - a)(conj calE - i b)), in cancellation-free form."""
    sd = _sd(E)
    e = sd.calE
    eb = e.conjugate()
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    num = 1j * e * e * a * b - e * (a + 1j * b)
    return num / ((eb - a) * (eb - 1j * b))


def D_term_literal(a, b, E):
    sd = _sd(E)
    eb = sd.calE.conjugate()
    return sd.calE ** 2 - 1.0 / ((eb - np.asarray(a)) * (eb - 1j * np.asarray(b)))


def D_term_quad(a: float, b: float, E) -> complex:
    """D_j from its t-integral representation."""
    sd = _sd(E)
    eb = sd.calE.conjugate()

    def f(t):
        return -(a / ((eb - t * a) ** 2 * (eb - 1j * t * b))
                 + 1j * b / ((eb - t * a) * (eb - 1j * t * b) ** 2))

    re = integrate.quad(lambda t: f(t).real, 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    im = integrate.quad(lambda t: f(t).imag, 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return complex(re, im)


def _warn_E0(sd):
    if sd.E == 0:
        warnings.warn("E = 0 lies outside the analysed energy window; the remainder has a "
                      "removable singularity at b_j = 1", RuntimeWarning, stacklevel=3)


def log_det_1_plus_DB(D, Bd):
    """log det(1 + diag(D) B) for batched D, via LU with phase."""
    M = np.eye(Bd.shape[0]) + D[..., :, None] * Bd
    sign, logabs = np.linalg.slogdet(M)
    return logabs + 1j * np.angle(sign)


def remainder_R(a, b, E, B, log: bool = False):
    """R(a, b) = det[1 + D B] exp(calV(a, b))."""
    sd = _sd(E)
    _warn_E0(sd)
    Bd = B.dense() if isinstance(B, CovOperator) else np.asarray(B)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lr = log_det_1_plus_DB(D_term(a, b, sd), Bd) + calV(a, b, sd)
    return lr if log else np.exp(lr)


# -------------------------------------------------------- undeformed dual form

def dual_integrand(a, b, E: float, eps: float, J, log: bool = False):
    """prod_j (E_eps - i b_j)/(E_eps - a_j) * det[1 - F J], F_jj = 1/((E_eps-a_j)(E_eps-i b_j))."""
    if not eps > 0:
        raise ValueError("dual integrand needs eps > 0")
    Jd = J.dense() if isinstance(J, CovOperator) else np.asarray(J)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    z = complex(E, eps)
    za = z - a
    zb = z - 1j * b
    if eps < 1e-12 and np.any(np.abs(za) < 1e-12):
        raise ZeroDivisionError("field sits on the pole a_j = E_eps")
    # zb_j folded into row j: det(diag(zb) - diag(1/za) J) / prod za, finite at zb_j = 0
    M = zb[..., :, None] * np.eye(Jd.shape[0]) - Jd / za[..., :, None]
    sign, logabs = np.linalg.slogdet(M)
    lv = logabs + 1j * np.angle(sign) - np.sum(np.log(za), axis=-1)
    return lv if log else np.exp(lv)


OBSERVABLES = ("one", "a0", "a0_sum", "derivative")


def dual_observable(a, b, observable: str, n: int = 1):
    """Observable inserted in the dual integral.

    "a0_sum" is a_0 S^n with S = sum_j (a_j - i b_j). "derivative" is the
    polynomial whose dual average equals the n-th E-derivative of the mean
    trace: 1 - a_0 S for n = 1 and a_0 S^2 - 2 S for n = 2. It comes from
    Gaussian integration by parts against the translation a -> a + E, which
    also differentiates the a_0 factor.
    """
    a = np.asarray(a)
    if observable == "one":
        return np.ones(a.shape[:-1])
    if observable == "a0":
        return a[..., 0]
    S = np.sum(a - 1j * np.asarray(b), axis=-1)
    if observable == "a0_sum":
        return a[..., 0] * S ** n
    if observable == "derivative":
        if n == 1:
            return 1.0 - a[..., 0] * S
        if n == 2:
            return a[..., 0] * S ** 2 - 2.0 * S
        raise ValueError("derivative observable is implemented for n <= 2")
    raise ValueError(f"unknown observable {observable!r}")


def _dual_worker(rng, m, J, E, eps, observable, n):
    a = J.sample(rng, m)
    b = J.sample(rng, m)
    return dual_integrand(a, b, E, eps, J) * dual_observable(a, b, observable, n)


def _chunk_for(N):
    return int(max(16, min(20000, 4e7 // max(N * N, 1))))


def dual_expectation(lattice: TorusLattice, E: float, eps: float, observable: str = "a0",
                     samples: int = 10000, seed: int = 0, n: int = 1, workers=1,
                     J: CovOperator | None = None) -> MCEstimate:
    """MC average of the dual integrand times an observable under dmu_J(a) dmu_J(b).

    ``J`` overrides the lattice covariance, e.g. with ``J.restrict(sites)``.
    """
    if not eps > 0:
        raise ValueError("dual expectation needs eps > 0")
    if observable in ("a0_sum", "derivative") and n > 2:
        raise ValueError("derivative observables are limited to n <= 2")
    J = covariance(lattice, "J") if J is None else J
    N = J.dense().shape[0]
    vals = sample_map(_dual_worker, samples, seed, workers, (J, E, eps, observable, n),
                      chunk=_chunk_for(N))
    return MCEstimate.from_samples(vals)


def _direct_worker(rng, m, Jd, E, eps, h):
    H = sample_H(Jd, rng, m)
    ev = np.linalg.eigvalsh(H)
    if h is None:
        return np.mean(1.0 / (complex(E, eps) - ev), axis=-1)
    up = np.mean(1.0 / (complex(E + h, eps) - ev), axis=-1)
    dn = np.mean(1.0 / (complex(E - h, eps) - ev), axis=-1)
    return (up - dn) / (2 * h)


def direct_expectation(lattice: TorusLattice, E: float, eps: float, samples: int = 10000,
                       seed: int = 0, workers=1, J: CovOperator | None = None,
                       fd_step: float | None = None) -> MCEstimate:
    """MC average over H of (1/N) Tr (E_eps - H)^-1.

    With ``fd_step`` the per-sample central difference in E is averaged instead
    (common random numbers for both energies).
    """
    if not eps > 0:
        raise ValueError("direct expectation needs eps > 0")
    J = covariance(lattice, "J") if J is None else J
    Jd = J.dense()
    N = Jd.shape[0]
    vals = sample_map(_direct_worker, samples, seed, workers, (Jd, E, eps, fd_step),
                      chunk=_chunk_for(N))
    return MCEstimate.from_samples(vals)


def _gauss(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def duality_quadrature(E: float = 1.0, eps: float = 1.0, J: float = 1.0, observable: str = "a0",
                       cutoff: float = 12.0) -> tuple[complex, complex]:
    """Single-site (|Lambda| = 1) sides of the duality by adaptive quadrature.

    Returns (direct, dual): E[1/(E_eps - h)] over h ~ N(0, J) (its E-derivative
    for observable "derivative"), and the 2D integral of the scalar dual
    integrand times the observable over N(0, J)^2.
    """
    if not eps > 0:
        raise ValueError("quadrature needs eps > 0")
    z = complex(E, eps)
    sj = math.sqrt(J)
    lim = cutoff
    opts = {"epsabs": 1e-13, "epsrel": 1e-12, "limit": 200}

    p = 2 if observable == "derivative" else 1
    sgn = -1.0 if observable == "derivative" else 1.0
    direct = integrate.quad(lambda x: sgn * _gauss(x) / (z - sj * x) ** p, -lim, lim,
                            complex_func=True, **opts)[0]

    obs = {"one": lambda a, b: 1.0, "a0": lambda a, b: a,
           "derivative": lambda a, b: 1.0 - a * (a - 1j * b)}[observable]

    def inner(x):
        a = sj * x

        def f(y):
            b = sj * y
            za, zb = z - a, z - 1j * b
            return _gauss(y) * (zb / za - J / (za * za)) * obs(a, b)
        return _gauss(x) * integrate.quad(f, -lim, lim, complex_func=True, **opts)[0]

    dual = integrate.quad(inner, -lim, lim, complex_func=True, **opts)[0]
    return complex(direct), complex(dual)


def richardson(estimates, eps_list):
    """Quadratic extrapolation to eps = 0 from three estimates; returns (value, se)."""
    eps = np.asarray(eps_list, dtype=float)
    if len(eps) != 3:
        raise ValueError("need three broadenings")
    coef = np.array([np.prod([(0 - eps[m]) / (eps[k] - eps[m]) for m in range(3) if m != k])
                     for k in range(3)])
    val = sum(c * e.mean for c, e in zip(coef, estimates))
    se_re = math.sqrt(sum((c * e.se_re) ** 2 for c, e in zip(coef, estimates)))
    se_im = math.sqrt(sum((c * e.se_im) ** 2 for c, e in zip(coef, estimates)))
    n = sum(e.n for e in estimates)
    return MCEstimate(complex(val), complex(se_re, se_im), n)


# ----------------------------------------------------------- deformed form

@dataclass
class _Proposal:
    """Real Gaussian proposal for dmu_B, optionally mixed with a copy shifted in b."""

    C: CovOperator
    Bd: np.ndarray
    K: np.ndarray | float      # Im(B^-1); scalar kappa on the torus
    log_det_ratio: complex     # log det(B^-1 C)
    shift: float
    u: np.ndarray              # C^-1 1

    def draw(self, rng, m, mixture):
        a = self.C.sample(rng, m)
        b = self.C.sample(rng, m)
        if mixture:
            pick = rng.random(m) < 0.5
            b[pick] += self.shift
            loglr = self.shift * (b @ self.u) - 0.5 * self.shift ** 2 * np.sum(self.u)
            log_q = np.logaddexp(0.0, loglr) - math.log(2.0)
        else:
            log_q = np.zeros(m)
        return a, b, log_q

    def log_complex_weight(self, a, b):
        if np.ndim(self.K) == 0:
            quad = self.K * (np.sum(a * a, -1) + np.sum(b * b, -1))
        else:
            quad = np.einsum("si,ij,sj->s", a, self.K, a) + np.einsum("si,ij,sj->s", b, self.K, b)
        return self.log_det_ratio - 0.5j * quad


def _proposal(lattice, sd, sites=None) -> _Proposal:
    C = covariance(lattice, "C", sd.E)
    B = covariance(lattice, "B", sd.E)
    shift = 2.0 * sd.calE_i
    if sites is None:
        lam = C.multipliers
        log_det = complex(np.sum(np.log1p(1j * sd.kappa * lam)))
        u = np.full(lattice.n_sites, sd.mr2)
        return _Proposal(C, B.dense(), sd.kappa, log_det, shift, u)
    Bd = B.restrict(sites).dense()
    Binv = np.linalg.inv(Bd)
    Cinv = 0.5 * (Binv.real + Binv.real.T)
    Cd = np.linalg.inv(Cinv)
    Cd = 0.5 * (Cd + Cd.T)
    Cp = CovOperator("C", lattice, sd.E, None, sd.mr2, sd.mi2, sd.sigma, None, Cd)
    K = 0.5 * (Binv.imag + Binv.imag.T)
    sgn, la = np.linalg.slogdet(Binv @ Cd)
    u = Cinv @ np.ones(len(sites))
    return _Proposal(Cp, Bd, K, complex(la + 1j * np.angle(sgn)), shift, u)


def _deformed_worker(rng, m, prop, sd, observable, n, mixture):
    a, b, log_q = prop.draw(rng, m, mixture)
    lw = prop.log_complex_weight(a, b) - log_q
    lr = log_det_1_plus_DB(D_term(a, b, sd), prop.Bd) + calV(a, b, sd)
    w = np.exp(lw)
    f = np.exp(lr)
    if observable == "one":
        obs = 1.0
    elif observable == "a0":
        obs = a[:, 0]
    elif observable == "derivative" and n == 1:
        obs = a[:, 0] * np.sum(a - 1j * b, axis=-1)
    else:
        raise ValueError(f"unsupported deformed observable {observable!r}")
    return np.stack([w * f * obs, np.abs(w) + 0j], axis=1)


def deformed_expectation(lattice: TorusLattice, E: float, samples: int = 10000, seed: int = 0,
                         observable: str = "a0", workers=1, mixture: bool = True,
                         sites=None, n: int = 1) -> MCEstimate:
    """The eps -> 0 limit via the contour-shifted integral under dmu_B.

    observable "a0": a_s^+ + int dmu_B R a_0 (the mean trace); "one": int dmu_B R;
    "derivative" (n = 1): 1 - int dmu_B R a_0 S.

    dmu_B is sampled as dmu_C (or, with ``mixture``, the equal mixture of dmu_C
    and dmu_C shifted by 2 calE_i in every b_j, which also covers the second
    saddle) times the exact complex density ratio. ``sites`` restricts B to a
    sub-volume.
    """
    sd = saddle_data(E)
    _warn_E0(sd)
    if sites is not None:
        sites = np.asarray(sites, dtype=int)
    prop = _proposal(lattice, sd, sites)
    N = prop.Bd.shape[0]
    out = sample_map(_deformed_worker, samples, seed, workers,
                     (prop, sd, observable, n, mixture), chunk=_chunk_for(N))
    vals, absw = out[:, 0], out[:, 1].real
    est = MCEstimate.from_samples(vals)
    ess = float(absw.sum() ** 2 / np.sum(absw ** 2))
    est.ess = ess
    est.weight_var = float(np.var(absw) / np.mean(absw) ** 2)
    est.flagged = ess < 0.01 * len(absw)
    if observable == "a0":
        est.mean += sd.a_plus
    elif observable == "derivative":
        est.mean = 1.0 - est.mean
    return est


# ----------------------------------------------------------------- regions

@dataclass
class RegionLabel:
    region: int
    j0: int | None
    j0p: int | None
    delta: float


def classify_regions(a, b, delta: float, E):
    """Vectorised region labels 1..5 for batched fields.

    Checked in the order I3, I4, then the small-field cases I1, I2, I5; I1 is
    preferred when the I1 and I2 windows overlap.
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    sd = _sd(E)
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    a_small = np.all(np.abs(a) <= delta, axis=-1)
    b_flat = (b.max(axis=-1) - b.min(axis=-1)) <= delta
    near0 = np.abs(b[:, 0]) <= 2 * delta
    near2 = np.abs(b[:, 0] - 2 * sd.calE_i) <= 2 * delta
    lab = np.full(a.shape[0], 5)
    lab[a_small & b_flat & near2] = 2
    lab[a_small & b_flat & near0] = 1
    lab[a_small & ~b_flat] = 4
    lab[~a_small] = 3
    return lab


def classify_region(a, b, delta: float, E) -> RegionLabel:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lab = int(classify_regions(a[None], b[None], delta, E)[0])
    j0 = j0p = None
    if lab == 3:
        j0 = int(np.argmax(np.abs(a)))
    elif lab == 4:
        j0, j0p = int(np.argmax(b)), int(np.argmin(b))
    return RegionLabel(lab, j0, j0p, float(delta))


def _region_worker(rng, m, prop, sd, delta, mixture, B00):
    a, b, log_q = prop.draw(rng, m, mixture)
    D = D_term(a, b, sd)
    logv = (B00 * np.sum(D, axis=-1)).real + calV(a, b, sd).real - log_q
    lab = classify_regions(a, b, delta, sd)
    return np.stack([np.exp(logv), np.exp(-log_q), lab.astype(float)], axis=1)


def region_report(lattice: TorusLattice, E: float, delta: float | None = None,
                  samples: int = 20000, seed: int = 0, workers=1, mixture: bool = True) -> dict:
    """Split int dmu_C exp(Re Tr DB) |exp(calV)| over the regions I1..I5.

    Probabilities are dmu_C masses; contributions share one set of samples so
    they add up to the total.
    """
    W = float(lattice.W)
    delta = W ** -0.5 if delta is None else float(delta)
    sd = saddle_data(E)
    prop = _proposal(lattice, sd)
    B00 = complex(prop.Bd[0, 0])
    out = sample_map(_region_worker, samples, seed, workers, (prop, sd, delta, mixture, B00),
                     chunk=_chunk_for(lattice.n_sites))
    val, pw, lab = out[:, 0], out[:, 1], out[:, 2].astype(int)
    total = float(val.mean())
    regions = {}
    for s in range(1, 6):
        mask = lab == s
        regions[f"I{s}"] = {
            "probability": float(np.mean(pw * mask)),
            "probability_se": float(batch_se(pw * mask)),
            "contribution": float(np.mean(val * mask)),
            "contribution_se": float(batch_se(val * mask)),
            "count": int(mask.sum()),
        }
    csum = sum(r["contribution"] for r in regions.values())
    return {"L": lattice.L, "W": W, "E": float(E), "delta": delta, "samples": int(samples),
            "total": total, "total_se": float(batch_se(val)), "sum_of_regions": csum,
            "partition_error": abs(csum - total), "regions": regions}


# ------------------------------------------------------------------ bounds

def det_bound_slack(A) -> float:
    """log(|e^{Tr A}| e^{Tr A*A / 2}) - log|det(1 + A)|; nonnegative when the bound holds."""
    A = np.asarray(A)
    n = A.shape[-1]
    logdet = np.linalg.slogdet(np.eye(n) + A)[1]
    rhs = np.trace(A, axis1=-2, axis2=-1).real + 0.5 * np.sum(np.abs(A) ** 2, axis=(-2, -1))
    return rhs - logdet


def det_bound_suite(trials: int = 1000, nmax: int = 16, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    worst = math.inf
    viol = 0
    for _ in range(trials):
        n = int(rng.integers(1, nmax + 1))
        scale = 10 ** rng.uniform(-2, 0.5)
        A = scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(n)
        s = float(det_bound_slack(A))
        worst = min(worst, s)
        viol += s < -1e-9 * (1 + abs(s))
    return {"trials": trials, "violations": int(viol), "min_slack": worst}


def remainder_det_bound(lattice, E, trials: int = 1000, seed: int = 0, scale: float = 1.0) -> dict:
    """|det(1 + DB)| <= |e^{Tr DB}| e^{Tr (DB)*(DB)/2} on random real fields."""
    sd = saddle_data(E)
    Bd = covariance(lattice, "B", E).dense()
    rng = np.random.default_rng(seed)
    a = scale * rng.standard_normal((trials, lattice.n_sites))
    b = scale * rng.standard_normal((trials, lattice.n_sites))
    D = D_term(a, b, sd)
    A = D[:, :, None] * Bd
    s = det_bound_slack(A)
    return {"trials": trials, "violations": int(np.sum(s < -1e-9)), "min_slack": float(s.min())}


def measure_log_det(lattice, E) -> float:
    """log|det(1 + i kappa C)| from the spectrum of C."""
    sd = saddle_data(E)
    lam = covariance(lattice, "C", E).multipliers
    return float(np.sum(np.log(np.abs(1 + 1j * sd.kappa * lam))))


def measure_bound_suite(instances: int = 1000, seed: int = 0) -> dict:
    """|det(1 + i kappa C)| <= exp(kappa^2 Tr C^2 / 2) on random (L, W, E)."""
    rng = np.random.default_rng(seed)
    viol = 0
    Ks = []
    for _ in range(instances):
        L = int(rng.integers(2, 17))
        W = float(rng.uniform(1, 6))
        E = float(rng.uniform(0.05, 1.95) * rng.choice([-1, 1]))
        lat = TorusLattice(L, W)
        sd = saddle_data(E)
        lam = covariance(lat, "C", E).multipliers
        ld = float(np.sum(np.log(np.abs(1 + 1j * sd.kappa * lam))))
        rhs = 0.5 * sd.kappa ** 2 * float(np.sum(lam ** 2))
        viol += ld > rhs + 1e-12
        Ks.append(W * W * ld / lat.n_sites)
    return {"instances": instances, "violations": int(viol), "fitted_K": float(max(Ks))}


def measure_scaling(W: float, E: float, Ls=(8, 12, 16, 24, 32, 48)) -> dict:
    """Linear fit of log|det(1 + i kappa C)| against |Lambda| at fixed W."""
    x = np.array([L * L for L in Ls], dtype=float)
    y = np.array([measure_log_det(TorusLattice(L, W), E) for L in Ls])
    slope, icpt = np.polyfit(x, y, 1)
    pred = slope * x + icpt
    r2 = 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)
    return {"W": W, "E": E, "L": list(Ls), "log_det": y.tolist(), "slope": float(slope),
            "r2": float(r2), "fitted_K": float(W * W * slope)}


def normalization_change(lattice, E, f: float) -> dict:
    """log det[C^-1 / C_f^-1] against the zero-mode factor 1/(1-f) plus the bulk term."""
    sd = saddle_data(E)
    W2 = float(lattice.W) ** 2
    lam = lattice.laplacian_eigenvalues
    ld = float(np.sum(np.log((W2 * lam + sd.mr2) / (W2 * lam + (1 - f) * sd.mr2))))
    zero = -math.log(1 - f)
    bulk = f * lattice.n_sites / W2 * math.log(W2 / (1 - f)) if W2 / (1 - f) > 1 else float("nan")
    K = (ld - zero) / bulk if bulk and bulk == bulk else float("nan")
    return {"L": lattice.L, "W": lattice.W, "E": E, "f": f, "log_ratio": ld,
            "zero_mode": zero, "K_needed": K}


def brascamp_lieb_check(C: CovOperator, lam: float, moments=(1, 2, 3, 4), samples: int = 100000,
                        seed: int = 0, v=None, site: int = 0) -> dict:
    """Moments under dmu_C exp(-lam/2 sum x^4) (normalised) against Gaussian moments.

    Self-normalised importance sampling from dmu_C; a violation is an excess
    over the Gaussian value beyond 3 SE.
    """
    if lam < 0:
        raise ValueError("quartic strength must be >= 0")
    rng = np.random.default_rng(seed)
    x = C.sample(rng, samples)
    w = np.exp(-0.5 * lam * np.sum(x ** 4, axis=1))
    wm = w.mean()
    cii = float(C.dense()[site, site])
    rows = []

    def ratio(fv):
        r = np.mean(w * fv) / wm
        se = float(batch_se(w * (fv - r)) / wm)
        return float(r), se

    for n in moments:
        r, se = ratio(np.abs(x[:, site]) ** n)
        g = cii ** (n / 2) * 2 ** (n / 2) * math.gamma((n + 1) / 2) / math.sqrt(math.pi)
        rows.append({"test": f"moment{n}", "value": r, "se": se, "gaussian": g,
                     "violation": bool(r > g + 3 * se)})
    if v is not None:
        v = np.asarray(v, dtype=float)
        r, se = ratio(np.exp(x @ v))
        g = math.exp(0.5 * v @ C.dense() @ v)
        rows.append({"test": "exponential", "value": r, "se": se, "gaussian": g,
                     "violation": bool(r > g + 3 * se)})
    return {"lambda": lam, "rows": rows, "violations": int(sum(r["violation"] for r in rows))}

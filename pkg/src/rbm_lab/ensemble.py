"""Gaussian band matrix ensemble, resolvent traces and the averaged DOS."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .covariance import covariance, CovOperator
from .lattice import TorusLattice
from .mc import sample_map, batch_se


def semicircle(E):
    """(1/pi) sqrt(1 - E^2/4) on |E| <= 2, zero outside."""
    E = np.asarray(E, dtype=float)
    out = np.sqrt(np.clip(1.0 - E * E / 4.0, 0.0, None)) / np.pi
    return out if out.ndim else float(out)


def sample_H(J, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Hermitian draws with H_ii ~ N(0, J_ii) and E|H_ij|^2 = J_ij.

    ``J`` is a CovOperator or a dense real symmetric matrix. Returns (N, N),
    or (n, N, N) when n is given.
    """
    Jd = J.dense() if isinstance(J, CovOperator) else np.asarray(J)
    N = Jd.shape[0]
    m = 1 if n is None else n
    iu = np.triu_indices(N, 1)
    scale = np.sqrt(Jd[iu] / 2.0)
    off = (rng.standard_normal((m, iu[0].size)) + 1j * rng.standard_normal((m, iu[0].size))) * scale
    diag = rng.standard_normal((m, N)) * np.sqrt(np.diag(Jd))
    H = np.zeros((m, N, N), dtype=complex)
    H[:, iu[0], iu[1]] = off
    H[:, iu[1], iu[0]] = off.conj()
    H[:, np.arange(N), np.arange(N)] = diag
    return H[0] if n is None else H


def _check_eps(eps):
    if not eps > 0:
        raise ValueError(f"broadening must be > 0, got {eps}")


def resolvent_trace(H, E, eps: float, method: str = "eigen", probes: int = 64,
                    rng: np.random.Generator | None = None):
    """(1/N) Tr (E + i eps - H)^-1 for each E.

    ``method``: "eigen" sums 1/(E_eps - lambda_j); "inverse" forms the
    resolvent matrix; "stochastic" uses Rademacher probes with LU solves and
    also returns the probe SE.
    """
    _check_eps(eps)
    E = np.atleast_1d(np.asarray(E, dtype=float))
    H = np.asarray(H)
    N = H.shape[-1]
    z = E + 1j * eps
    if method == "eigen":
        ev = np.linalg.eigvalsh(H)
        return np.mean(1.0 / (z[:, None] - ev[None, :]), axis=1)
    if method == "inverse":
        return np.array([np.trace(np.linalg.inv(zz * np.eye(N) - H)) / N for zz in z])
    if method == "stochastic":
        if rng is None:
            raise ValueError("stochastic trace needs an rng")
        V = rng.choice([-1.0, 1.0], size=(N, probes))
        vals = np.empty((len(z), probes), dtype=complex)
        for k, zz in enumerate(z):
            lu = sla.lu_factor(zz * np.eye(N) - H, check_finite=False)
            X = sla.lu_solve(lu, V, check_finite=False)
            vals[k] = np.sum(V * X, axis=0) / N
        se = (vals.real.std(axis=1, ddof=1) + 1j * vals.imag.std(axis=1, ddof=1)) / math.sqrt(probes)
        return vals.mean(axis=1), se
    raise ValueError(f"unknown trace method {method!r}")


def lorentzian_dos(eigs, E, eps):
    """Broadened eigenvalue density (1/N) sum eps/pi/((E-l)^2 + eps^2)."""
    E = np.atleast_1d(np.asarray(E, dtype=float))
    d = E[:, None] - np.asarray(eigs)[None, :]
    return np.mean(eps / np.pi / (d * d + eps * eps), axis=1)


@dataclass
class EnsembleConfig:
    L: int
    W: float
    E: list
    eps: float = 0.05
    samples: int = 20
    seed: int = 42
    method: str = "eigen"
    probes: int = 64

    def __post_init__(self):
        _check_eps(self.eps)
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not np.all(np.isfinite(self.E)):
            raise ValueError("energies must be finite")
        if self.method not in ("eigen", "stochastic"):
            raise ValueError(f"unknown trace method {self.method!r}")


def _dos_worker(rng, m, Jd, E, eps, method, probes):
    out = np.empty((m, len(E)), dtype=complex)
    for k in range(m):
        H = sample_H(Jd, rng)
        if method == "eigen":
            out[k] = resolvent_trace(H, E, eps, "eigen")
        else:
            out[k] = resolvent_trace(H, E, eps, "stochastic", probes, rng)[0]
    return out


@dataclass
class SpectralEstimate:
    E: np.ndarray
    mean: np.ndarray          # complex mean trace per E
    se: np.ndarray            # complex: SE of real / imag parts
    n: int
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def rho(self):
        return -self.mean.imag / np.pi

    @property
    def rho_se(self):
        return self.se.imag / np.pi


def averaged_trace(cfg: EnsembleConfig, workers: int | None = 1) -> SpectralEstimate:
    lat = TorusLattice(cfg.L, cfg.W)
    Jd = covariance(lat, "J").dense()
    E = np.asarray(cfg.E, dtype=float)
    vals = sample_map(_dos_worker, cfg.samples, cfg.seed, workers,
                      (Jd, E, cfg.eps, cfg.method, cfg.probes), chunk=16)
    return SpectralEstimate(E, vals.mean(axis=0), batch_se(vals), cfg.samples, vals)


def averaged_dos(cfg: EnsembleConfig, workers: int | None = 1):
    """Per-E rows (E, rho_mean, rho_se) of the broadened averaged DOS."""
    est = averaged_trace(cfg, workers)
    return [(float(e), float(r), float(s)) for e, r, s in zip(est.E, est.rho, est.rho_se)]


@dataclass
class ScanRow:
    E: float
    W: float
    L: int
    eps: float
    samples: int
    rho_mean: float
    rho_se: float
    rho_sc: float
    abs_err: float
    in_I: bool

    def as_tuple(self):
        return (self.E, self.W, self.L, self.eps, self.samples, self.rho_mean,
                self.rho_se, self.rho_sc, self.abs_err)


CSV_COLUMNS = ("E", "W", "L", "eps", "samples", "rho_mean", "rho_se", "rho_sc", "abs_err")


def dos_error_scan(Ws, Ls, Es, eps: float = 0.05, samples=20, seed: int = 42,
                   method: str = "eigen", probes: int = 64, workers: int | None = 1,
                   eta: float = 0.0):
    """|rho_bar - rho_SC| over matched (W, L) pairs.

    Returns (rows, summary). Points with |E| outside (eta, 1.8] are tagged
    ``in_I = False`` but still computed.
    """
    if len(Ws) == 0 or len(Ws) != len(Ls) or len(Es) == 0:
        raise ValueError("need matched nonempty W and L lists and a nonempty E list")
    counts = list(samples) if np.ndim(samples) else [int(samples)] * len(Ws)
    seqs = np.random.SeedSequence(int(seed)).spawn(len(Ws))
    rows = []
    for W, L, n, sq in zip(Ws, Ls, counts, seqs):
        cfg = EnsembleConfig(int(L), float(W), list(Es), eps, int(n), 0, method, probes)
        lat = TorusLattice(cfg.L, cfg.W)
        Jd = covariance(lat, "J").dense()
        vals = sample_map(_dos_worker, n, sq, workers,
                          (Jd, np.asarray(Es, float), eps, method, probes), chunk=16)
        mean, se = vals.mean(axis=0), batch_se(vals)
        for k, e in enumerate(Es):
            rho = -mean[k].imag / np.pi
            sc = semicircle(e)
            rows.append(ScanRow(float(e), float(W), int(L), float(eps), int(n), float(rho),
                                float(se[k].imag / np.pi), float(sc), float(abs(rho - sc)),
                                bool(eta < abs(e) <= 1.8)))
    summary = {}
    for e in Es:
        sub = sorted((r for r in rows if r.E == e), key=lambda r: r.W)
        errs = [r.abs_err for r in sub]
        slope = float(np.polyfit(np.log([r.W for r in sub]), np.log(errs), 1)[0]) \
            if len(sub) > 1 and min(errs) > 0 else float("nan")
        summary[float(e)] = {"monotone": bool(all(a > b for a, b in zip(errs, errs[1:]))),
                             "loglog_slope": slope}
    return rows, summary


def err_decrease_significant(small: ScanRow, large: ScanRow, nsigma: float = 3.0) -> bool:
    """True if err(large W) < err(small W) by more than nsigma combined SEs."""
    return small.abs_err - large.abs_err > nsigma * math.hypot(small.rho_se, large.rho_se)

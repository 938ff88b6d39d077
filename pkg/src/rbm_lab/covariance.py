"""Lattice covariances J, C, B, C_f, their Neumann and interpolated variants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .lattice import TorusLattice, BlockPartition, laplacian
from .saddle import saddle_data, DomainError

KINDS = ("J", "C", "B", "C_f", "NeumannC")


@dataclass(frozen=True, eq=False)
class CovOperator:
    """A covariance on a torus.

    Translation-invariant kinds carry ``multipliers`` on the [ky, kx] Fourier
    grid; the dense matrix is built from them by inverse FFT and cached.
    """

    kind: str
    lattice: TorusLattice
    E: float | None = None
    f: float | None = None
    mr2: float = 1.0
    mi2: float = 0.0
    sigma: float = 0.0
    multipliers: np.ndarray | None = field(default=None, repr=False)
    _dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def mass(self) -> complex:
        """Mass term added to W^2(-Delta)."""
        if self.kind == "J":
            return 1.0
        if self.kind == "B":
            return complex(self.mr2, self.sigma * self.mi2)
        if self.kind == "C_f":
            return (1.0 - self.f) * self.mr2
        return self.mr2

    @property
    def kappa(self) -> float:
        return self.sigma * self.mi2

    @property
    def is_real(self) -> bool:
        return self.kind != "B"

    @property
    def translation_invariant(self) -> bool:
        return self.multipliers is not None

    @cached_property
    def kernel(self) -> np.ndarray:
        """C(0, r) on the [dy, dx] grid."""
        if self.multipliers is None:
            raise ValueError(f"{self.kind} has no spectral form")
        k = np.fft.ifft2(self.multipliers)
        return k.real.copy() if self.is_real else k

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        lat = self.lattice
        x, y = lat.coords.T
        dx = (x[:, None] - x[None, :]) % lat.L
        dy = (y[:, None] - y[None, :]) % lat.L
        m = self.kernel[dy, dx]
        object.__setattr__(self, "_dense", m)
        return m

    def apply(self, v):
        """Covariance times site vectors (..., N)."""
        v = np.asarray(v)
        if self.multipliers is None:
            return v @ self.dense().T
        lat = self.lattice
        out = np.fft.ifft2(self.multipliers * np.fft.fft2(lat.to_grid(v)))
        if self.is_real and np.isrealobj(v):
            out = out.real
        return lat.from_grid(out)

    def row_sums(self) -> np.ndarray:
        return self.apply(np.ones(self.lattice.n_sites))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n independent real Gaussian fields with this covariance, shape (n, N)."""
        if not self.is_real:
            raise ValueError("complex covariance has no real sampler")
        lat = self.lattice
        if self.multipliers is None:
            xi = rng.standard_normal((n, self.dense().shape[0]))
            return xi @ self.cholesky().T
        xi = rng.standard_normal((n, lat.n_sites))
        g = np.fft.ifft2(np.sqrt(self.multipliers) * np.fft.fft2(lat.to_grid(xi)))
        return lat.from_grid(g.real)

    @cached_property
    def _chol(self):
        return np.linalg.cholesky(self.dense())

    def cholesky(self) -> np.ndarray:
        return self._chol

    def restrict(self, sites) -> "CovOperator":
        """Covariance restricted to a sub-volume: the principal submatrix on ``sites``."""
        sites = np.asarray(sites, dtype=int)
        sub = self.dense()[np.ix_(sites, sites)]
        return CovOperator(self.kind, self.lattice, self.E, self.f, self.mr2, self.mi2,
                           self.sigma, None, sub)


def _check_E(E):
    if E is None:
        raise ValueError("E is required for mass-dependent covariances")
    try:
        return saddle_data(E)
    except DomainError as exc:
        raise DomainError(f"covariance needs |E| < 2: {exc}") from None


def covariance(lattice: TorusLattice, kind: str, E: float | None = None,
               f: float | None = None, partition: BlockPartition | None = None) -> CovOperator:
    """Build J, C, B, C_f or NeumannC on ``lattice``."""
    if kind not in KINDS:
        raise ValueError(f"unknown covariance kind {kind!r}")
    W2 = float(lattice.W) ** 2
    lam = lattice.laplacian_eigenvalues
    if kind == "J":
        return CovOperator("J", lattice, E, None, 1.0, 0.0, 0.0, 1.0 / (W2 * lam + 1.0))
    sd = _check_E(E)
    common = dict(lattice=lattice, E=sd.E, mr2=sd.mr2, mi2=sd.mi2, sigma=sd.sigma)
    if kind == "C":
        return CovOperator("C", multipliers=1.0 / (W2 * lam + sd.mr2), **common)
    if kind == "B":
        return CovOperator("B", multipliers=1.0 / (W2 * lam + sd.complex_mass), **common)
    if kind == "C_f":
        if f is None or not 0 <= f < 1:
            raise ValueError("C_f needs 0 <= f < 1")
        return CovOperator("C_f", f=float(f),
                           multipliers=1.0 / (W2 * lam + (1.0 - f) * sd.mr2), **common)
    # NeumannC
    if partition is None:
        raise ValueError("NeumannC needs a partition")
    A = W2 * laplacian(lattice, "neumann", partition).toarray()
    A[np.diag_indices_from(A)] += sd.mr2
    return CovOperator("NeumannC", _dense=np.linalg.inv(A), **common)


def complex_from_real(C: CovOperator) -> CovOperator:
    """B with B^-1 = C^-1 + i kappa, for a real C of kind C (any representation)."""
    kap = C.kappa
    if C.multipliers is not None:
        mult = 1.0 / (1.0 / C.multipliers + 1j * kap)
        return CovOperator("B", C.lattice, C.E, None, C.mr2, C.mi2, C.sigma, mult)
    Cd = C.dense()
    n = Cd.shape[0]
    Bd = np.linalg.solve(np.eye(n) + 1j * kap * Cd, Cd)
    return CovOperator("B", C.lattice, C.E, None, C.mr2, C.mi2, C.sigma, None, Bd)


# ---------------------------------------------------------------- decay report

@dataclass
class DecayReport:
    kind: str
    L: int
    W: float
    E: float
    valid: bool
    positive: bool
    fitted_K: float
    K_log: float
    K_tail: float
    fitted_rate: float
    bound_rate: float
    violations: int
    max_rel_violation: float
    diag_lower_fit: dict
    tail_profile: list = field(default_factory=list)

    def to_json(self) -> dict:
        keys = ("kind", "L", "W", "E", "fitted_K", "fitted_rate", "bound_rate",
                "violations", "diag_lower_fit")
        d = asdict(self)
        return {k: d[k] for k in keys}


def _diag_fit(lattice, E, kind, W_ladder):
    xs, ys = [], []
    for w in W_ladder:
        lat = TorusLattice(lattice.L, w)
        c = covariance(lat, kind, E)
        xs.append(math.log(w / math.sqrt(c.mr2)))
        ys.append(w * w * abs(c.kernel[0, 0]))
    K1, K2 = np.polyfit(xs, ys, 1)
    return {"K1": float(K1), "K2": float(K2), "W": [float(w) for w in W_ladder],
            "W2_Cjj": [float(y) for y in ys]}


def check_decay_bound(cov: CovOperator, W_ladder=None, tail_max_frac: float = 0.3) -> DecayReport:
    """Fit the constants of the log / exponential decay bound for C or |B|.

    The tail rate is the least-squares slope of log(C r^1/2) over
    W/m_r < r <= tail_max_frac * L; K is the smallest constant making both
    branches of the bound hold on every entry of one row.
    """
    if cov.kind not in ("C", "B"):
        raise ValueError("decay check is defined for kinds C and B")
    lat = cov.lattice
    W, mr = float(lat.W), math.sqrt(cov.mr2)
    valid = mr * lat.L / W > 1
    row = np.abs(cov.kernel).ravel() if cov.kind == "B" else cov.kernel.ravel()
    r = _row_distances(lat)
    positive = bool(np.all(row > 0))
    xi = W / mr

    near = r <= xi
    # the log branch is floored at 1 where ln(W / (m_r (1 + r))) gets small
    logterm = np.maximum(np.log(W / (mr * (1.0 + r))), 1.0)
    K_log = float(np.max(W * W * row[near] / logterm[near]))
    far = ~near
    tail = row[far] * np.sqrt(r[far]) * W ** 1.5 * np.exp(mr / W * r[far])
    K_tail = float(tail.max()) if far.any() else 0.0
    K = max(K_log, K_tail)

    fit = far & (r <= tail_max_frac * lat.L)
    if fit.sum() >= 2:
        slope = np.polyfit(r[fit], np.log(row[fit] * np.sqrt(r[fit])), 1)[0]
        rate = float(-slope)
    else:
        rate = float("nan")

    with np.errstate(divide="ignore"):
        bound = np.where(near, K / W ** 2 * logterm,
                         K / (np.sqrt(r) * W ** 1.5) * np.exp(-mr / W * r))
    excess = (row - bound) / bound
    violations = int(np.sum(excess > 1e-12)) + (0 if positive else 1)

    if W_ladder is None:
        W_ladder = [w for w in (W / 4, W / 2, W, 2 * W) if w >= 1]
    diag = _diag_fit(lat, cov.E, "C", W_ladder)

    order = np.argsort(r[fit])
    prof = [[float(a), float(b)] for a, b in zip(r[fit][order], row[fit][order])]
    return DecayReport(cov.kind, lat.L, W, float(cov.E), bool(valid), positive, K, K_log,
                       K_tail, rate, mr / W, violations, float(max(excess.max(), 0.0)),
                       diag, prof)


def _row_distances(lat):
    c = lat.coords
    d = np.abs(c - c[0])
    d = np.minimum(d, lat.L - d)
    return np.sqrt(np.sum(d ** 2, axis=-1))


# ---------------------------------------------------------- interpolation

class InterpolatedCovariance:
    """C(s) = s_ij * C_ij for a sequence of block extractions.

    The root block (holding site 0) is layer 0, the blocks extracted at step q
    form layer q and everything left over is layer r+1. For sites in layers
    a <= b the weight is the product of s_p over a < p <= min(b, r).
    """

    def __init__(self, C: CovOperator, partition: BlockPartition, s, order=None):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s < 0) or np.any(s > 1):
            raise ValueError("interpolation parameters must lie in [0, 1]")
        self.C = C
        self.partition = partition
        root = int(partition.labels[0])
        if order is None:
            order = [[b] for b in range(partition.n_blocks) if b != root]
        order = [list(step) for step in order]
        if len(s) != len(order):
            raise ValueError(f"need {len(order)} parameters, got {len(s)}")
        r = len(order)
        block_layer = np.full(partition.n_blocks, r + 1)
        block_layer[root] = 0
        for q, step in enumerate(order, start=1):
            for b in step:
                if b == root or block_layer[b] != r + 1:
                    raise ValueError("each non-root block may be extracted once")
                block_layer[b] = q
        self.order = order
        self.r = r
        self.s = s
        self.layer = block_layer[partition.labels]
        la = self.layer[:, None]
        lb = self.layer[None, :]
        self._lo = np.minimum(la, lb)
        self._hi = np.minimum(np.maximum(la, lb), r)

    def _in_range(self, p):
        # step p separates layers < p from layers >= p
        return (self._lo < p) & (self._hi >= p)

    def weights(self, s=None) -> np.ndarray:
        s = self.s if s is None else np.asarray(s, dtype=float)
        w = np.ones(self._lo.shape)
        for p in range(1, self.r + 1):
            w = np.where(self._in_range(p), w * s[p - 1], w)
        return w

    def weight_derivative(self, q: int) -> np.ndarray:
        s = self.s.copy()
        s[q - 1] = 1.0
        return np.where(self._in_range(q), self.weights(s), 0.0)

    def C_s(self, s=None) -> np.ndarray:
        return self.weights(s) * self.C.dense()

    def G(self, q: int | None = None, s=None) -> np.ndarray:
        """(1 + i kappa C(s))^-1, with s_p = 1 for p > q when q is given."""
        s = self.s if s is None else np.asarray(s, dtype=float)
        if q is not None:
            s = s.copy()
            s[q:] = 1.0
        Cs = self.C_s(s)
        n = Cs.shape[0]
        return np.linalg.inv(np.eye(n) + 1j * self.C.kappa * Cs)

    def B_s(self, s=None) -> np.ndarray:
        Cs = self.C_s(s)
        n = Cs.shape[0]
        return np.linalg.solve(np.eye(n) + 1j * self.C.kappa * Cs, Cs)

    def dB(self, q: int) -> np.ndarray:
        """d B(s) / d s_q = G(s) (dC(s)/ds_q) G(s)."""
        G = self.G()
        dC = self.weight_derivative(q) * self.C.dense()
        return G @ dC @ G


def interpolate_covariance(C: CovOperator, partition: BlockPartition, s, order=None):
    """Return (C(s), B(s), [G_1(s), ..., G_r(s)])."""
    ic = InterpolatedCovariance(C, partition, s, order)
    return ic.C_s(), ic.B_s(), [ic.G(q) for q in range(1, ic.r + 1)]


def ds_derivative_check(C: CovOperator, partition: BlockPartition, q: int, s,
                        order=None, h: float = 1e-5) -> float:
    """Max relative error of the analytic d_{s_q} B(s) against central differences."""
    ic = InterpolatedCovariance(C, partition, s, order)
    if ic.r == 0:
        return 0.0
    an = ic.dB(q)
    sp_, sm_ = ic.s.copy(), ic.s.copy()
    sp_[q - 1] += h
    sm_[q - 1] -= h
    fd = (ic.B_s(sp_) - ic.B_s(sm_)) / (2 * h)
    scale = np.max(np.abs(an))
    if scale == 0:
        return float(np.max(np.abs(fd)))
    return float(np.max(np.abs(an - fd)) / scale)


def schur_mass_check(B: CovOperator | np.ndarray, Y) -> float:
    """lambda_min of Re((B_Y)^-1) for the principal submatrix on Y."""
    Bd = B.dense() if isinstance(B, CovOperator) else np.asarray(B)
    Y = np.asarray(Y, dtype=int)
    if Y.size == 0:
        raise ValueError("Y must be nonempty")
    inv = np.linalg.inv(Bd[np.ix_(Y, Y)])
    herm = 0.5 * (inv.real + inv.real.T)
    return float(sla.eigvalsh(herm)[0])


DEFAULT_GRID = {"L": (2, 4, 8, 16, 32), "W": (1.0, 2.0, 4.0, 8.0), "E": (0.5, 1.0, 1.5)}


def covariance_invariants(lattice: TorusLattice, E: float, dense_max: int = 1024) -> dict:
    """Row sums, spectral-vs-inversion agreement, |B| <= C and positivity.

    The reference dense matrices come from inverting W^2 (-Delta) + mass
    built from the sparse Laplacian, independently of the FFT path.
    """
    W2 = float(lattice.W) ** 2
    N = lattice.n_sites
    J = covariance(lattice, "J")
    C = covariance(lattice, "C", E)
    B = covariance(lattice, "B", E)
    out = {
        "L": lattice.L, "W": float(lattice.W), "E": float(E),
        "J_rowsum_err": float(np.max(np.abs(J.row_sums() - 1.0))),
        "C_rowsum_err": float(np.max(np.abs(C.row_sums() - 1.0 / C.mr2))),
        "B_le_C_violations": int(np.sum(np.abs(B.kernel) > C.kernel * (1 + 1e-12) + 1e-15)),
        "min_multiplier_J": float(J.multipliers.min()),
        "min_multiplier_C": float(C.multipliers.min()),
    }
    if N <= dense_max:
        A = W2 * laplacian(lattice).toarray()
        err = 0.0
        min_eig = math.inf
        for cov, mass in ((J, 1.0), (C, C.mr2), (B, B.mass)):
            ref = np.linalg.inv(A + mass * np.eye(N))
            err = max(err, float(np.max(np.abs(cov.dense() - ref))))
            if cov.is_real:
                min_eig = min(min_eig, float(np.linalg.eigvalsh(cov.dense())[0]))
        out["dense_vs_spectral_err"] = err
        out["min_eig"] = min_eig
    out["pass"] = bool(out["J_rowsum_err"] <= 1e-10 and out["C_rowsum_err"] <= 1e-10
                       and out["B_le_C_violations"] == 0 and out["min_multiplier_C"] > 0
                       and out.get("dense_vs_spectral_err", 0.0) <= 1e-10
                       and out.get("min_eig", 1.0) > 0)
    return out

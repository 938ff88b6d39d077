"""Random streams, deterministic parallel sampling and batch-means errors."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

N_BATCHES = 100


def resolve_workers(workers: int | None = None) -> int:
    """Flag value wins; otherwise RBM_LAB_WORKERS; otherwise 1."""
    if workers is None:
        env = os.environ.get("RBM_LAB_WORKERS")
        workers = int(env) if env else 1
    workers = int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def worker_streams(seed, workers: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in _seed_sequence(seed).spawn(workers)]


def _chunk_sizes(n: int, parts: int) -> list[int]:
    base, extra = divmod(n, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _run_worker(fn, seq, n, args, chunk):
    rng = np.random.default_rng(seq)
    out = []
    done = 0
    while done < n:
        m = min(chunk, n - done)
        out.append(np.asarray(fn(rng, m, *args)))
        done += m
    if not out:
        return None
    return np.concatenate(out, axis=0)


def sample_map(fn, samples: int, seed, workers: int | None = 1, args=(), chunk: int = 10000):
    """Evaluate ``fn(rng, m, *args) -> array(m, ...)`` over ``samples`` draws.

    Worker w gets the w-th child of SeedSequence(seed) and a contiguous block
    of the sample range; blocks are concatenated in worker order, so the
    result depends only on (seed, samples, workers).
    """
    workers = resolve_workers(workers)
    seqs = _seed_sequence(seed).spawn(workers)
    sizes = _chunk_sizes(int(samples), workers)
    if workers == 1:
        parts = [_run_worker(fn, seqs[0], sizes[0], args, chunk)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_run_worker, fn, sq, n, args, chunk) for sq, n in zip(seqs, sizes)]
            parts = [f.result() for f in futs]
    parts = [p for p in parts if p is not None]
    return np.concatenate(parts, axis=0)


def batch_se(values, n_batches: int = N_BATCHES, axis: int = 0):
    """Batch-means standard error of the mean along ``axis``.

    Complex input gives a complex result whose real/imag parts are the SEs of
    the real/imag parts.
    """
    v = np.moveaxis(np.asarray(values), axis, 0)
    n = v.shape[0]
    nb = min(n_batches, n)
    if nb < 2:
        return np.zeros(v.shape[1:], dtype=v.dtype) if v.ndim > 1 else v.dtype.type(0)
    means = np.stack([b.mean(axis=0) for b in np.array_split(v, nb)])
    if np.iscomplexobj(means):
        return (means.real.std(axis=0, ddof=1) + 1j * means.imag.std(axis=0, ddof=1)) / math.sqrt(nb)
    return means.std(axis=0, ddof=1) / math.sqrt(nb)


@dataclass
class MCEstimate:
    mean: complex
    se: complex              # real part: SE of Re(mean); imag part: SE of Im(mean)
    n: int
    weight_var: float | None = None
    ess: float | None = None
    flagged: bool = False

    @classmethod
    def from_samples(cls, values, **kw) -> "MCEstimate":
        v = np.asarray(values, dtype=complex)
        return cls(complex(v.mean()), complex(batch_se(v)), int(v.size), **kw)

    @property
    def se_re(self) -> float:
        return self.se.real

    @property
    def se_im(self) -> float:
        return self.se.imag

    def to_json(self) -> dict:
        d = {"re": self.mean.real, "im": self.mean.imag, "se_re": self.se_re,
             "se_im": self.se_im, "n": self.n}
        if self.weight_var is not None:
            d["weight_var"] = self.weight_var
        if self.ess is not None:
            d["ess"] = self.ess
        d["flagged"] = self.flagged
        return d


def sigma_distance(x, y) -> tuple[float, complex]:
    """Componentwise distance in combined SEs; returns (max distance, combined SE).

    Either argument may be an MCEstimate or an exact number.
    """
    def parts(z):
        if isinstance(z, MCEstimate):
            return z.mean, z.se
        return complex(z), 0j

    mx, sx = parts(x)
    my, sy = parts(y)
    se = complex(math.hypot(sx.real, sy.real), math.hypot(sx.imag, sy.imag))
    d = mx - my
    dist = 0.0
    for delta, s in ((d.real, se.real), (d.imag, se.imag)):
        if s > 0:
            dist = max(dist, abs(delta) / s)
        elif abs(delta) > 0:
            dist = math.inf
    return dist, se

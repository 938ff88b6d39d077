"""Periodic square lattice, discrete Laplacians and block partitions."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class TorusLattice:
    """L x L torus with band parameter W.

    Sites are indexed row-major, ``i = x + L*y``.
    """

    L: int
    W: float = 1.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L!r}")
        if not self.W >= 1:
            raise ValueError(f"W must be >= 1, got {self.W!r}")

    @property
    def n_sites(self) -> int:
        return self.L * self.L

    @cached_property
    def coords(self) -> np.ndarray:
        """(N, 2) integer array of (x, y)."""
        idx = np.arange(self.n_sites)
        return np.stack([idx % self.L, idx // self.L], axis=1)

    def index(self, x, y):
        return np.mod(x, self.L) + self.L * np.mod(y, self.L)

    @cached_property
    def neighbors(self) -> np.ndarray:
        """(N, 4) neighbor table: +x, -x, +y, -y. Repeats allowed for L <= 2."""
        x, y = self.coords.T
        return np.stack(
            [self.index(x + 1, y), self.index(x - 1, y),
             self.index(x, y + 1), self.index(x, y - 1)], axis=1)

    def offsets(self, i, j):
        """Minimal-image coordinate differences between sites i and j."""
        d = np.abs(self.coords[np.asarray(j)] - self.coords[np.asarray(i)])
        return np.minimum(d, self.L - d)

    def distance(self, i, j):
        return np.sqrt(np.sum(self.offsets(i, j) ** 2, axis=-1))

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        c = self.coords
        d = np.abs(c[:, None, :] - c[None, :, :])
        d = np.minimum(d, self.L - d)
        return np.sqrt(np.sum(d ** 2, axis=-1))

    @cached_property
    def laplacian_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of -Delta on the (L, L) Fourier grid, layout [ky, kx]."""
        c = 2.0 * (1.0 - np.cos(2 * np.pi * np.arange(self.L) / self.L))
        return c[:, None] + c[None, :]

    def to_grid(self, v):
        """Reshape site vectors (..., N) to (..., L, L) with [y, x] layout."""
        v = np.asarray(v)
        return v.reshape(v.shape[:-1] + (self.L, self.L))

    def from_grid(self, g):
        g = np.asarray(g)
        return g.reshape(g.shape[:-2] + (self.n_sites,))


def build_torus(L: int, W: float = 1.0) -> TorusLattice:
    return TorusLattice(L, W)


@dataclass(frozen=True)
class BlockPartition:
    """Assignment of every lattice site to a block id 0..n_blocks-1."""

    lattice: TorusLattice
    labels: np.ndarray = field(repr=False)
    side: int | None = None

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=int)
        if lab.shape != (self.lattice.n_sites,):
            raise ValueError("labels must have one entry per site")
        uniq = np.unique(lab)
        if uniq[0] != 0 or uniq[-1] != len(uniq) - 1:
            raise ValueError("block ids must be 0..n_blocks-1 without gaps")
        object.__setattr__(self, "labels", lab)

    @property
    def n_blocks(self) -> int:
        return int(self.labels.max()) + 1

    def sites(self, block: int) -> np.ndarray:
        return np.flatnonzero(self.labels == block)

    @classmethod
    def cubes(cls, lattice: TorusLattice, side: int) -> "BlockPartition":
        """Square blocks of the given side; edge blocks are truncated if side does not divide L."""
        side = int(side)
        if side < 1:
            raise ValueError("side must be >= 1")
        nb = -(-lattice.L // side)
        x, y = lattice.coords.T
        return cls(lattice, (x // side) + nb * (y // side), side)

    @classmethod
    def strips(cls, lattice: TorusLattice, width: int) -> "BlockPartition":
        """Vertical strips of the given width along x."""
        width = int(width)
        if width < 1:
            raise ValueError("width must be >= 1")
        return cls(lattice, lattice.coords[:, 0] // width, None)

    @classmethod
    def default(cls, lattice: TorusLattice, alpha: float = 0.5) -> "BlockPartition":
        return cls.cubes(lattice, default_cube_side(lattice.W, alpha))


def default_cube_side(W: float, alpha: float = 0.5) -> int:
    """Side of a block with area ~ W^2 (ln W)^alpha."""
    lw = np.log(W) if W > 1 else 0.0
    return max(1, int(round(W * lw ** (alpha / 2))))


def laplacian(lattice: TorusLattice, bc: str = "periodic",
              partition: BlockPartition | None = None) -> sp.csr_matrix:
    """Sparse matrix of -Delta.

    ``bc="neumann"`` drops every edge joining two different blocks of
    ``partition``, so each block carries its own free-boundary Laplacian.
    """
    n = lattice.n_sites
    nb = lattice.neighbors
    rows = np.repeat(np.arange(n), 4)
    cols = nb.ravel()
    if bc == "periodic":
        keep = np.ones(rows.size, dtype=bool)
    elif bc == "neumann":
        if partition is None:
            raise ValueError("neumann boundary conditions need a partition")
        keep = partition.labels[rows] == partition.labels[cols]
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    r, c = rows[keep], cols[keep]
    deg = np.bincount(r, minlength=n).astype(float)
    adj = sp.coo_matrix((np.ones(r.size), (r, c)), shape=(n, n)).tocsr()
    return (sp.diags(deg) - adj).tocsr()

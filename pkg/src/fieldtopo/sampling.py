"""Stratified quasi-Monte Carlo sampling over box domains and 1D parameter
ranges. One jittered sample per grid cell; constant integration weight
|domain| / n per sample."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ExcludedRegion:
    """Circular / spherical subregion where the density is constrained."""

    center: tuple[float, ...]
    radius: float
    value: float = 0.0

    def contains(self, points: np.ndarray) -> np.ndarray:
        d = points - np.asarray(self.center)
        return np.einsum("nd,nd->n", d, d) <= self.radius**2


@dataclass(frozen=True)
class DomainSpec:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    excluded: tuple[ExcludedRegion, ...] = ()

    def __post_init__(self):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError(f"bad domain box lo={self.lo} hi={self.hi}")
        for reg in self.excluded:
            c, r = np.asarray(reg.center), reg.radius
            if np.any(c - r < lo) or np.any(c + r > hi):
                raise ValueError(f"excluded region {reg} outside domain box")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def extents(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=np.float64) - np.asarray(self.lo, dtype=np.float64)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extents))

    def normalize(self, points: np.ndarray) -> np.ndarray:
        """Map physical coordinates to the [-1, 1] box the networks see."""
        points = np.atleast_2d(points)
        return 2.0 * (points - np.asarray(self.lo)) / self.extents - 1.0


@dataclass
class SampleBatch:
    positions: np.ndarray  # (n, dim)
    weight: float  # |domain| / n, identical for every sample
    grid_dims: tuple[int, ...]
    seed: int
    # per-sample columns filled in by downstream stages
    density: np.ndarray | None = None
    sensitivity: np.ndarray | None = None
    filtered: np.ndarray | None = None
    target: np.ndarray | None = None
    hole_mask: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.positions.shape[0]


def stratified_batch(domain: DomainSpec, grid_dims, seed) -> SampleBatch:
    """One uniformly jittered sample per cell of a grid_dims grid."""
    grid_dims = tuple(int(g) for g in grid_dims)
    if any(g <= 0 for g in grid_dims):
        raise ValueError(f"grid dims must be positive, got {grid_dims}")
    if len(grid_dims) != domain.dim:
        raise ValueError(f"grid dims {grid_dims} do not match domain dim {domain.dim}")
    rng = np.random.default_rng(seed)
    n = int(np.prod(grid_dims))
    lo = np.asarray(domain.lo, dtype=np.float64)
    cell = domain.extents / np.asarray(grid_dims)
    axes = np.meshgrid(*[np.arange(g) for g in grid_dims], indexing="ij")
    corners = np.stack([a.reshape(-1) for a in axes], axis=-1)  # integer cell ids
    jitter = rng.uniform(0.0, 1.0, size=(n, domain.dim))
    positions = lo + (corners + jitter) * cell
    return SampleBatch(positions, domain.volume / n, grid_dims, seed)


def cell_index(batch: SampleBatch, domain: DomainSpec) -> np.ndarray:
    """Integer cell coordinates of each sample, shape (n, dim)."""
    cell = domain.extents / np.asarray(batch.grid_dims)
    rel = (batch.positions - np.asarray(domain.lo)) / cell
    idx = np.floor(rel).astype(np.int64)
    return np.clip(idx, 0, np.asarray(batch.grid_dims) - 1)


def sample_parameters(lo: float, hi: float, count: int, seed) -> np.ndarray:
    """Stratified draw of `count` values covering [lo, hi]."""
    if hi <= lo:
        raise ValueError(f"empty parameter range [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    edges = np.linspace(lo, hi, count + 1)
    return edges[:-1] + rng.uniform(0.0, 1.0, count) * (edges[1:] - edges[:-1])


def batch_seed(master_seed: int, stream: int, counter: int) -> list[int]:
    """Deterministic per-(stream, counter) seed derived from the master seed."""
    return [master_seed, stream, counter]

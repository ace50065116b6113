"""Continuous sensitivity filtering, realized per batch as the exact
discrete kernel sum over grid-bucketed neighborhoods.

The bucketing is an indexing optimization only: results must agree with the
all-pairs evaluation to machine precision. The kernel is the linear hat
H(dw) = max(0, r - ||dw||).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampling import DomainSpec, SampleBatch, cell_index


@dataclass(frozen=True)
class FilterSpec:
    radius: float  # length units of the domain
    epsilon: float = 1e-3  # density floor in the denominator

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"filter radius must be positive, got {self.radius}")


def default_radius(domain: DomainSpec, grid_dims) -> float:
    """2.5 x the cell diagonal of the sampling grid."""
    cell = domain.extents / np.asarray(grid_dims)
    return 2.5 * float(np.linalg.norm(cell))


def _offset_stencil(batch: SampleBatch, radius: float, domain: DomainSpec) -> np.ndarray:
    """Integer cell offsets whose cells can intersect the radius ball."""
    grid = np.asarray(batch.grid_dims)
    cell = domain.extents / grid
    reach = np.minimum(np.ceil(radius / cell).astype(np.int64), grid - 1)
    return np.stack(
        np.meshgrid(*[np.arange(-r, r + 1) for r in reach], indexing="ij"), axis=-1
    ).reshape(-1, len(grid))


def _cell_sample_map(batch: SampleBatch, domain: DomainSpec):
    """Stratification gives exactly one sample per cell; map cell -> sample."""
    grid = np.asarray(batch.grid_dims)
    cells = cell_index(batch, domain)
    flat = np.ravel_multi_index(cells.T, grid)
    if np.unique(flat).size != batch.n:
        raise ValueError("batch is not stratified: cells hold multiple samples")
    id_map = np.full(int(np.prod(grid)), -1, dtype=np.int64)
    id_map[flat] = np.arange(batch.n)
    return cells, id_map


def build_neighborhoods(batch: SampleBatch, radius: float, domain: DomainSpec):
    """For each sample j, indices of samples within the kernel footprint.

    Returns (neighbors, offsets) in CSR layout: neighbors[offsets[j]:offsets[j+1]]
    holds every k with ||w_j - w_k|| < radius (the self term is always in).
    """
    pts = batch.positions
    grid = np.asarray(batch.grid_dims)
    cells, id_map = _cell_sample_map(batch, domain)
    stencil = _offset_stencil(batch, radius, domain)
    per_sample = [[] for _ in range(batch.n)]
    for off in stencil:
        tgt = cells + off
        valid = np.all((tgt >= 0) & (tgt < grid), axis=1)
        j = np.nonzero(valid)[0]
        k = id_map[np.ravel_multi_index(tgt[j].T, grid)]
        dist = np.linalg.norm(pts[j] - pts[k], axis=1)
        for jj, kk in zip(j[dist < radius], k[dist < radius]):
            per_sample[jj].append(kk)
    counts = np.array([len(p) for p in per_sample])
    offsets = np.concatenate([[0], np.cumsum(counts)])
    neighbors = np.concatenate([np.sort(p) for p in per_sample])
    return neighbors, offsets


def filter_sensitivities(batch: SampleBatch, spec: FilterSpec, domain: DomainSpec) -> np.ndarray:
    """Filtered sensitivities s~ for one batch (rho and s columns set).

    Vectorized over the cell-offset stencil; numerically equal to the
    all-pairs reference up to summation order.
    """
    rho, s = batch.density, batch.sensitivity
    if rho is None or s is None:
        raise ValueError("batch is missing density or sensitivity columns")
    pts = batch.positions
    grid = np.asarray(batch.grid_dims)
    cells, id_map = _cell_sample_map(batch, domain)
    stencil = _offset_stencil(batch, spec.radius, domain)
    num = np.zeros(batch.n)
    den = np.zeros(batch.n)
    for off in stencil:
        tgt = cells + off
        valid = np.all((tgt >= 0) & (tgt < grid), axis=1)
        j = np.nonzero(valid)[0]
        k = id_map[np.ravel_multi_index(tgt[j].T, grid)]
        h = spec.radius - np.linalg.norm(pts[j] - pts[k], axis=1)
        inside = h > 0.0
        j, k, h = j[inside], k[inside], h[inside]
        num[j] += h * rho[k] * s[k]
        den[j] += h
    return num / (np.maximum(spec.epsilon, rho) * den)


def filter_sensitivities_bruteforce(batch: SampleBatch, spec: FilterSpec) -> np.ndarray:
    """O(n^2) all-pairs reference; the oracle the bucketed path must match."""
    pts = batch.positions
    rho, s = batch.density, batch.sensitivity
    diff = pts[:, None, :] - pts[None, :, :]
    h = np.maximum(0.0, spec.radius - np.linalg.norm(diff, axis=-1))
    num = h @ (rho * s)
    den = h.sum(axis=1)
    return num / (np.maximum(spec.epsilon, rho) * den)

"""Density field evaluation, SIMP modulus, and the pointwise density-space
sensitivity of the compliance objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import networks
from .networks import NetworkParams
from .sampling import DomainSpec, ExcludedRegion

SIGMOID_SCALE = 5.0  # fixed part of the density contract, not configurable


@dataclass(frozen=True)
class Material:
    young: float = 1.0
    poisson: float = 0.3
    simp_exponent: float = 3.0
    modulus_floor_ratio: float = 1e-4  # E_min = ratio * young

    def __post_init__(self):
        if self.young <= 0 or not (0.0 <= self.poisson < 0.5) or self.simp_exponent < 1:
            raise ValueError(f"bad material {self}")

    @property
    def modulus_floor(self) -> float:
        return self.modulus_floor_ratio * self.young


@dataclass
class DensityField:
    network: NetworkParams
    domain: DomainSpec
    holes: tuple[ExcludedRegion, ...] = ()
    q_range: tuple[float, float] | None = None  # physical q range, mapped to [-1, 1]

    def normalize_q(self, q: np.ndarray) -> np.ndarray:
        if self.q_range is None:
            return q
        lo, hi = self.q_range
        return 2.0 * (np.asarray(q) - lo) / (hi - lo) - 1.0

    def __call__(self, points: np.ndarray, q: np.ndarray | None = None) -> np.ndarray:
        return density(points, self, q=None if q is None else self.normalize_q(q))


def squash(raw: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-SIGMOID_SCALE * raw))


def density(points: np.ndarray, field: DensityField, q: np.ndarray | None = None) -> np.ndarray:
    """sigmoid(5 * Phi_rho), overridden to the constraint value inside holes.

    q, when given, is appended to the coordinates (solution-space mode);
    holes are evaluated on the spatial coordinates only.
    """
    points = np.atleast_2d(points)
    xn = field.domain.normalize(points)
    if q is not None:
        qcol = np.asarray(q, dtype=np.float64).reshape(points.shape[0], -1)
        inputs = np.concatenate([xn, qcol], axis=1)
    else:
        inputs = xn
    rho = squash(networks.forward(field.network, inputs)[:, 0])
    return apply_holes(rho, points, field.holes)


def apply_holes(rho: np.ndarray, points: np.ndarray, holes) -> np.ndarray:
    for hole in holes:
        rho = np.where(hole.contains(points), hole.value, rho)
    return rho


def hole_mask(points: np.ndarray, holes) -> np.ndarray:
    mask = np.zeros(points.shape[0], dtype=bool)
    for hole in holes:
        mask |= hole.contains(points)
    return mask


def simp_modulus(rho: np.ndarray, material: Material) -> np.ndarray:
    """E(rho) = E_min + rho^p (E1 - E_min); the floor keeps the variational
    problem coercive where rho -> 0."""
    e_min = material.modulus_floor
    return e_min + np.asarray(rho) ** material.simp_exponent * (material.young - e_min)


def sensitivity(rho: np.ndarray, unit_energy: np.ndarray, material: Material) -> np.ndarray:
    """Density-space gradient s = -p rho^(p-1) (E1 - E_min) * e_hat, where
    e_hat is the modulus-normalized pointwise compliance (energy shape at
    unit modulus). Defined per unit volume; the MC weight cancels into the
    OC multiplier."""
    p = material.simp_exponent
    e_min = material.modulus_floor
    return -p * np.asarray(rho) ** (p - 1.0) * (material.young - e_min) * np.asarray(unit_energy)

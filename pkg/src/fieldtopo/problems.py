"""Problem data model and the canonical problem suite.

Load magnitudes are fixed at unit totals; all comparisons are mesh-free vs
FEM oracle on identical problems, so absolute magnitudes cancel.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .density import Material
from .elasticity import (
    AxisPlane,
    BoundaryConditions,
    CircleBoundary,
    DirichletRegion,
    DistributedLoad,
    PointAnchor,
    PointLoad,
)
from .sampling import DomainSpec, ExcludedRegion


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    domain: DomainSpec
    bcs: BoundaryConditions
    loads: tuple
    material: Material = field(default_factory=Material)
    target_volume: float = 0.5
    grid_dims: tuple[int, ...] = (150, 50)

    def __post_init__(self):
        if not 0.0 < self.target_volume < 1.0:
            raise ValueError(f"target volume must be in (0, 1), got {self.target_volume}")
        if len(self.grid_dims) != self.domain.dim:
            raise ValueError("grid dims do not match domain dimension")

    @property
    def dim(self) -> int:
        return self.domain.dim

    def with_grid(self, grid_dims) -> "ProblemSpec":
        return replace(self, grid_dims=tuple(grid_dims))

    def with_volume(self, v: float) -> "ProblemSpec":
        return replace(self, target_volume=v)


def short_beam(volume: float = 0.5, grid=(150, 50)) -> ProblemSpec:
    """Cantilever: left wall clamped, unit downward tip load at mid-height."""
    domain = DomainSpec((0.0, 0.0), (3.0, 1.0))
    return ProblemSpec(
        "short_beam",
        domain,
        BoundaryConditions((DirichletRegion(AxisPlane(0, 0.0)),)),
        (PointLoad((3.0, 0.5), (0.0, -1.0)),),
        target_volume=volume,
        grid_dims=tuple(grid),
    )


def long_beam(volume: float = 0.5, grid=(250, 50)) -> ProblemSpec:
    domain = DomainSpec((0.0, 0.0), (5.0, 1.0))
    return ProblemSpec(
        "long_beam",
        domain,
        BoundaryConditions((DirichletRegion(AxisPlane(0, 0.0)),)),
        (PointLoad((5.0, 0.5), (0.0, -1.0)),),
        target_volume=volume,
        grid_dims=tuple(grid),
    )


def distributed_beam(volume: float = 0.5, grid=(150, 50)) -> ProblemSpec:
    """Cantilever with a unit total downward traction along the top edge."""
    domain = DomainSpec((0.0, 0.0), (3.0, 1.0))
    return ProblemSpec(
        "distributed",
        domain,
        BoundaryConditions((DirichletRegion(AxisPlane(0, 0.0)),)),
        (DistributedLoad((0.0, 1.0), (3.0, 1.0), (0.0, -1.0 / 3.0)),),
        target_volume=volume,
        grid_dims=tuple(grid),
    )


def bridge(volume: float = 0.5, grid=(100, 50)) -> ProblemSpec:
    """Span anchored at both bottom corners, unit load at the deck center."""
    domain = DomainSpec((0.0, 0.0), (2.0, 1.0))
    return ProblemSpec(
        "bridge",
        domain,
        BoundaryConditions(
            (
                DirichletRegion(PointAnchor((0.0, 0.0))),
                DirichletRegion(PointAnchor((2.0, 0.0))),
            )
        ),
        (PointLoad((1.0, 0.0), (0.0, -1.0)),),
        target_volume=volume,
        grid_dims=tuple(grid),
    )


def cantilever_3d(volume: float = 0.3, grid=(80, 40, 20)) -> ProblemSpec:
    """Half of a 3D cantilever; symmetry plane z = 0.5 (zero normal motion)."""
    domain = DomainSpec((0.0, 0.0, 0.0), (2.0, 1.0, 0.5))
    return ProblemSpec(
        "cantilever_3d",
        domain,
        BoundaryConditions(
            (
                DirichletRegion(AxisPlane(0, 0.0)),
                DirichletRegion(AxisPlane(2, 0.5), components=(2,)),
            )
        ),
        (PointLoad((2.0, 0.5, 0.5), (0.0, -1.0, 0.0)),),
        target_volume=volume,
        grid_dims=tuple(grid),
    )


def bridge_3d(volume: float = 0.3, grid=(40, 40, 20)) -> ProblemSpec:
    """Quarter of a 3D bridge; symmetry planes x = 1 and z = 0.5, corner
    anchor on the symmetry plane, deck load at the shared corner."""
    domain = DomainSpec((0.0, 0.0, 0.0), (1.0, 1.0, 0.5))
    return ProblemSpec(
        "bridge_3d",
        domain,
        BoundaryConditions(
            (
                DirichletRegion(AxisPlane(0, 1.0), components=(0,)),
                DirichletRegion(AxisPlane(2, 0.5), components=(2,)),
                DirichletRegion(PointAnchor((0.0, 0.0, 0.5))),
            )
        ),
        (PointLoad((1.0, 1.0, 0.5), (0.0, -1.0, 0.0)),),
        target_volume=volume,
        grid_dims=tuple(grid),
    )


CANONICAL_SUITE = {
    "short_beam": short_beam,
    "long_beam": long_beam,
    "distributed": distributed_beam,
    "bridge": bridge,
    "cantilever_3d": cantilever_3d,
    "bridge_3d": bridge_3d,
}

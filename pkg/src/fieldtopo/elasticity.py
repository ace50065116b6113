"""Mesh-free linear elasticity.

Displacements are built as u_c = d_c(w) * Phi_c(w) + ubar_c, where d_c is an
analytic distance function vanishing on the boundary regions that constrain
component c. The construction satisfies the essential boundary conditions
for any network weights, so the forward problem is unconstrained energy
minimization. Distances are normalized by domain extents to keep network
output magnitudes well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, Tape
from . import networks
from .density import Material
from .networks import NetworkParams
from .sampling import DomainSpec, batch_seed, stratified_batch

_EPS = 1e-30


# -- boundary geometry -----------------------------------------------------


@dataclass(frozen=True)
class AxisPlane:
    """d(w) proportional to the distance from the plane x[axis] = value."""

    axis: int
    value: float

    def distance(self, pts: np.ndarray, domain: DomainSpec):
        scale = domain.extents[self.axis]
        delta = pts[:, self.axis] - self.value
        d = np.abs(delta) / scale
        grad = np.zeros_like(pts)
        grad[:, self.axis] = np.sign(delta) / scale
        return d, grad

    def on_boundary(self, pts: np.ndarray, tol: float) -> np.ndarray:
        return np.abs(pts[:, self.axis] - self.value) <= tol


@dataclass(frozen=True)
class PointAnchor:
    """d(w) proportional to the distance from a single anchor point."""

    point: tuple[float, ...]

    def distance(self, pts: np.ndarray, domain: DomainSpec):
        scale = domain.diagonal
        delta = pts - np.asarray(self.point)
        r = np.linalg.norm(delta, axis=1)
        d = r / scale
        grad = delta / (np.maximum(r, _EPS)[:, None] * scale)
        return d, grad

    def on_boundary(self, pts: np.ndarray, tol: float) -> np.ndarray:
        return np.linalg.norm(pts - np.asarray(self.point), axis=1) <= tol


@dataclass(frozen=True)
class CircleBoundary:
    """d(w) proportional to | ||w - c|| - R |, zero on the circle/sphere."""

    center: tuple[float, ...]
    radius: float

    def distance(self, pts: np.ndarray, domain: DomainSpec):
        scale = domain.diagonal
        delta = pts - np.asarray(self.center)
        r = np.linalg.norm(delta, axis=1)
        signed = r - self.radius
        d = np.abs(signed) / scale
        grad = np.sign(signed)[:, None] * delta / (np.maximum(r, _EPS)[:, None] * scale)
        return d, grad

    def on_boundary(self, pts: np.ndarray, tol: float) -> np.ndarray:
        return np.abs(np.linalg.norm(pts - np.asarray(self.center), axis=1) - self.radius) <= tol


@dataclass(frozen=True)
class DirichletRegion:
    geometry: object
    value: tuple[float, ...] = ()  # prescribed displacement; () means zero
    components: tuple[int, ...] | None = None  # None constrains all components


@dataclass(frozen=True)
class PointLoad:
    location: tuple[float, ...]
    force: tuple[float, ...]


@dataclass(frozen=True)
class DistributedLoad:
    """Traction density applied along a line segment (total = traction * length)."""

    start: tuple[float, ...]
    end: tuple[float, ...]
    traction: tuple[float, ...]
    samples: int = 64

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.asarray(self.end) - np.asarray(self.start)))


@dataclass(frozen=True)
class BoundaryConditions:
    regions: tuple[DirichletRegion, ...]

    def prescribed(self, dim: int) -> np.ndarray:
        """Constant ubar per component; regions constraining the same
        component must agree on its value."""
        ubar = np.zeros(dim)
        seen: dict[int, float] = {}
        for reg in self.regions:
            comps = reg.components if reg.components is not None else tuple(range(dim))
            vals = reg.value if reg.value else (0.0,) * dim
            for c in comps:
                v = vals[c] if len(vals) == dim else vals[comps.index(c)]
                if c in seen and seen[c] != v:
                    raise ValueError(f"conflicting prescribed displacement for component {c}")
                seen[c] = v
                ubar[c] = v
        return ubar


def dirichlet_factors(points: np.ndarray, bcs: BoundaryConditions, domain: DomainSpec):
    """Per-component distance products and their spatial gradients.

    Returns d (n, dim), grad_d (n, dim, dim) with grad_d[i, c, :] the
    gradient of d_c at point i, and ubar (dim,).
    """
    points = np.atleast_2d(points)
    n, dim = points.shape
    d = np.ones((n, dim))
    grad = np.zeros((n, dim, dim))
    for reg in bcs.regions:
        comps = reg.components if reg.components is not None else tuple(range(dim))
        dr, gr = reg.geometry.distance(points, domain)
        for c in comps:
            # product rule across stacked regions constraining component c
            grad[:, c, :] = grad[:, c, :] * dr[:, None] + d[:, c : c + 1] * gr
            d[:, c] *= dr
    return d, grad, bcs.prescribed(dim)


def displacement(points, disp_net: NetworkParams, bcs: BoundaryConditions, domain: DomainSpec,
                 q: np.ndarray | None = None):
    """u and grad u at points (plain numpy; gradients w.r.t. the spatial
    coordinates only, not the optional solution-space parameter q)."""
    points = np.atleast_2d(points)
    n, dim = points.shape
    xn = domain.normalize(points)
    if q is not None:
        inputs = np.concatenate([xn, np.asarray(q, dtype=np.float64).reshape(n, -1)], axis=1)
    else:
        inputs = xn
    phi, jphi = networks.forward_with_jacobian(disp_net, inputs)
    # chain rule through the [-1, 1] input normalization, spatial columns only
    jphi = jphi[:, :, :dim] * (2.0 / domain.extents)
    d, gd, ubar = dirichlet_factors(points, bcs, domain)
    u = d * phi + ubar
    grad_u = gd * phi[:, :, None] + d[:, :, None] * jphi
    return u, grad_u


# -- constitutive law ------------------------------------------------------


def strain(grad_u: np.ndarray) -> np.ndarray:
    """Linear Cauchy strain (grad u + grad u^T) / 2 per sample."""
    return 0.5 * (grad_u + np.swapaxes(grad_u, -1, -2))


def lame_parameters(young, poisson, dim: int):
    if dim == 3 and poisson >= 0.5:
        raise ValueError("Poisson ratio 0.5 makes the 3D law singular")
    lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    mu = young / (2.0 * (1.0 + poisson))
    return lam, mu


def stress(eps: np.ndarray, young, poisson: float, dim: int) -> np.ndarray:
    """Plane stress in 2D, Hooke's law in 3D. young may be per-sample."""
    young = np.asarray(young)[..., None, None] if np.ndim(young) == 1 else young
    tr = np.trace(eps, axis1=-2, axis2=-1)[..., None, None]
    eye = np.eye(dim)
    if dim == 2:
        return young / (1.0 - poisson**2) * ((1.0 - poisson) * eps + poisson * tr * eye)
    lam, mu = lame_parameters(1.0, poisson, dim)
    return young * (lam * tr * eye + 2.0 * mu * eps)


def pointwise_compliance(eps: np.ndarray, sig: np.ndarray) -> np.ndarray:
    """e = eps : sigma, twice the internal energy density."""
    return np.einsum("...ij,...ij->...", eps, sig)


def unit_compliance_from_grad(grad_u: np.ndarray, poisson: float) -> np.ndarray:
    """eps : sigma at unit Young's modulus (the energy shape e_hat)."""
    dim = grad_u.shape[-1]
    eps = strain(grad_u)
    return pointwise_compliance(eps, stress(eps, 1.0, poisson, dim))


# -- tape-side energy ------------------------------------------------------


def build_displacement(tape: Tape, disp_net, leaves, points, bcs, domain,
                       q: np.ndarray | None = None, want_jacobian: bool = True):
    """Tape nodes for u components and their spatial derivatives.

    Returns (u: list of dim (n,) nodes, du: du[c][d] node for du_c/dx_d,
    or None when want_jacobian is False).
    """
    points = np.atleast_2d(points)
    n, dim = points.shape
    xn = domain.normalize(points)
    if q is not None:
        inputs = np.concatenate([xn, np.asarray(q, dtype=np.float64).reshape(n, -1)], axis=1)
    else:
        inputs = xn
    if want_jacobian:
        phi, jphi = networks.build_forward_with_jacobian(tape, disp_net, leaves, inputs)
    else:
        phi, jphi = networks.build_forward(tape, disp_net, leaves, inputs), None
    d, gd, ubar = dirichlet_factors(points, bcs, domain)
    u, du = [], None if jphi is None else []
    for c in range(dim):
        phic = tape.take_col(phi, c)
        dc = tape.constant(d[:, c])
        uc = tape.add(tape.mul(dc, phic), tape.constant(np.full(n, ubar[c])))
        u.append(uc)
        if jphi is None:
            continue
        row = []
        for dd in range(dim):
            term1 = tape.mul(tape.constant(gd[:, c, dd]), phic)
            # jacobian is w.r.t. normalized inputs; chain rule back to physical
            term2 = tape.scale(tape.mul(dc, tape.take_col(jphi[dd], c)),
                               2.0 / domain.extents[dd])
            row.append(tape.add(term1, term2))
        du.append(row)
    return u, du


def build_unit_compliance(tape: Tape, du, poisson: float, dim: int) -> Node:
    """(n,) node of eps : sigma at unit modulus, from displacement grads."""
    if dim == 2:
        exx, eyy = du[0][0], du[1][1]
        exy = tape.scale(tape.add(du[0][1], du[1][0]), 0.5)
        sq = tape.add(
            tape.add(tape.power(exx, 2.0), tape.power(eyy, 2.0)),
            tape.scale(tape.power(exy, 2.0), 2.0),
        )
        tr2 = tape.power(tape.add(exx, eyy), 2.0)
        return tape.scale(
            tape.add(tape.scale(sq, 1.0 - poisson), tape.scale(tr2, poisson)),
            1.0 / (1.0 - poisson**2),
        )
    lam, mu = lame_parameters(1.0, poisson, dim)
    diag = [du[c][c] for c in range(3)]
    tr2 = tape.power(tape.add(tape.add(diag[0], diag[1]), diag[2]), 2.0)
    sq = tape.add(tape.add(tape.power(diag[0], 2.0), tape.power(diag[1], 2.0)), tape.power(diag[2], 2.0))
    for a, b in ((0, 1), (0, 2), (1, 2)):
        eab = tape.scale(tape.add(du[a][b], du[b][a]), 0.5)
        sq = tape.add(sq, tape.scale(tape.power(eab, 2.0), 2.0))
    return tape.add(tape.scale(tr2, lam), tape.scale(sq, 2.0 * mu))


def build_external_work(tape: Tape, disp_net, leaves, loads, bcs, domain,
                        q: np.ndarray | None = None, seed=0) -> Node:
    """u . f work of point loads (direct field evaluation) and distributed
    tractions (stratified MC along their support)."""
    total = tape.constant(0.0)
    dim = domain.dim
    for li, load in enumerate(loads):
        if isinstance(load, PointLoad):
            pts = np.asarray(load.location, dtype=np.float64)[None, :]
            u, _ = build_displacement(tape, disp_net, leaves, pts, bcs, domain,
                                      q=None if q is None else q[:1],
                                      want_jacobian=False)
            for c in range(dim):
                if load.force[c] != 0.0:
                    total = tape.add(total, tape.scale(tape.sum(u[c]), load.force[c]))
        elif isinstance(load, DistributedLoad):
            m = load.samples
            rng = np.random.default_rng(batch_seed(seed, 7001, li))
            t = (np.arange(m) + rng.uniform(0.0, 1.0, m)) / m
            pts = np.asarray(load.start) + t[:, None] * (np.asarray(load.end) - np.asarray(load.start))
            u, _ = build_displacement(tape, disp_net, leaves, pts, bcs, domain,
                                      q=None if q is None else np.repeat(q[:1], m, axis=0),
                                      want_jacobian=False)
            w = load.length / m
            for c in range(dim):
                if load.traction[c] != 0.0:
                    total = tape.add(total, tape.scale(tape.sum(u[c]), w * load.traction[c]))
        else:
            raise TypeError(f"unknown load type {type(load)}")
    return total


def external_work(loads, disp_net, bcs, domain, q=None, seed=0) -> float:
    """Numpy evaluation of the work term (no gradients)."""
    tape = Tape()
    leaves = networks.make_param_leaves(tape, disp_net)
    return float(build_external_work(tape, disp_net, leaves, loads, bcs, domain, q=q, seed=seed).value)


def build_energy_terms(tape: Tape, disp_net, leaves, batch, young_per_sample,
                       loads, material: Material, bcs, domain,
                       q: np.ndarray | None = None, work_seed=0):
    """Internal strain energy and external work as separate tape nodes.

    internal = weight * sum(0.5 eps:sigma), work = u.f; the potential energy
    loss is internal - work. young_per_sample is constant w.r.t. the
    displacement parameters.
    """
    dim = domain.dim
    _, du = build_displacement(tape, disp_net, leaves, batch.positions, bcs, domain, q=q)
    ehat = build_unit_compliance(tape, du, material.poisson, dim)
    internal = tape.scale(tape.sum(tape.mul(tape.constant(young_per_sample), ehat)),
                          0.5 * batch.weight)
    work = build_external_work(tape, disp_net, leaves, loads, bcs, domain, q=q, seed=work_seed)
    return internal, work


def build_sim_loss(tape: Tape, disp_net, leaves, batch, young_per_sample,
                   loads, material: Material, bcs, domain,
                   q: np.ndarray | None = None, work_seed=0) -> Node:
    """Monte Carlo estimate of the total potential energy
    weight * sum(0.5 eps:sigma) - external work, differentiable in the
    displacement parameters."""
    internal, work = build_energy_terms(tape, disp_net, leaves, batch, young_per_sample,
                                        loads, material, bcs, domain, q=q, work_seed=work_seed)
    loss = tape.sub(internal, work)
    if not np.isfinite(loss.value):
        raise FloatingPointError("non-finite simulation loss")
    return loss


def sim_loss_value(batch, disp_net, young_per_sample, loads, material, bcs, domain,
                   q=None, work_seed=0) -> float:
    tape = Tape()
    leaves = networks.make_param_leaves(tape, disp_net)
    return float(build_sim_loss(tape, disp_net, leaves, batch, young_per_sample,
                                loads, material, bcs, domain, q=q, work_seed=work_seed).value)

"""Independent mesh-based oracle: regular-grid SIMP FEM.

2D uses the classical 4-node bilinear quad under plane stress with the
closed-form unit-modulus element stiffness; 3D uses an 8-node trilinear hex
integrated with 2x2x2 Gauss quadrature. The solver, sensitivities, discrete
filter, and OC loop are the standard mesh-based formulation and share no
numeric code with the mesh-free path (only the Material constants), so the
cross-validation in the tests is meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .density import Material
from .elasticity import (
    AxisPlane,
    BoundaryConditions,
    DistributedLoad,
    PointLoad,
)
from .sampling import DomainSpec


def quad_stiffness(poisson: float) -> np.ndarray:
    """Unit-modulus plane-stress stiffness of the bilinear square element
    (standard 88-line formulation)."""
    nu = poisson
    k = np.array([
        1 / 2 - nu / 6, 1 / 8 + nu / 8, -1 / 4 - nu / 12, -1 / 8 + 3 * nu / 8,
        -1 / 4 + nu / 12, -1 / 8 - nu / 8, nu / 6, 1 / 8 - 3 * nu / 8,
    ])
    idx = np.array([
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ])
    return k[idx] / (1 - nu**2)


def hex_stiffness(poisson: float) -> np.ndarray:
    """Unit-modulus trilinear hexahedron stiffness on the unit cube
    (2x2x2 Gauss quadrature)."""
    lam = poisson / ((1 + poisson) * (1 - 2 * poisson))
    mu = 1.0 / (2 * (1 + poisson))
    c = np.zeros((6, 6))
    c[:3, :3] = lam
    c[np.arange(3), np.arange(3)] += 2 * mu
    c[3:, 3:] = np.eye(3) * mu
    g = 1.0 / np.sqrt(3.0)
    corners = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=float)
    ke = np.zeros((24, 24))
    for gx in (-g, g):
        for gy in (-g, g):
            for gz in (-g, g):
                xi = (np.array([gx, gy, gz]) + 1) / 2  # map to [0,1]
                dn = np.zeros((8, 3))
                for a, (cx, cy, cz) in enumerate(corners):
                    sx = cx * xi[0] + (1 - cx) * (1 - xi[0])
                    sy = cy * xi[1] + (1 - cy) * (1 - xi[1])
                    sz = cz * xi[2] + (1 - cz) * (1 - xi[2])
                    dn[a] = [
                        (2 * cx - 1) * sy * sz,
                        sx * (2 * cy - 1) * sz,
                        sx * sy * (2 * cz - 1),
                    ]
                b = np.zeros((6, 24))
                for a in range(8):
                    bx, by, bz = dn[a]
                    b[0, 3 * a] = bx
                    b[1, 3 * a + 1] = by
                    b[2, 3 * a + 2] = bz
                    b[3, 3 * a] = by
                    b[3, 3 * a + 1] = bx
                    b[4, 3 * a + 1] = bz
                    b[4, 3 * a + 2] = by
                    b[5, 3 * a] = bz
                    b[5, 3 * a + 2] = bx
                ke += b.T @ c @ b * (1.0 / 8.0)
    return ke


@dataclass
class FemModel:
    mesh_dims: tuple[int, ...]
    domain: DomainSpec
    material: Material
    fixed_dofs: np.ndarray
    load_vector: np.ndarray
    element_stiffness: np.ndarray = field(init=False)
    element_dofs: np.ndarray = field(init=False)

    def __post_init__(self):
        dim = len(self.mesh_dims)
        self.element_stiffness = (
            quad_stiffness(self.material.poisson) if dim == 2 else hex_stiffness(self.material.poisson)
        )
        self.element_dofs = _element_dof_table(self.mesh_dims)

    @property
    def dim(self) -> int:
        return len(self.mesh_dims)

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.mesh_dims))

    @property
    def n_dofs(self) -> int:
        return self.dim * int(np.prod(np.asarray(self.mesh_dims) + 1))


def _node_id(mesh_dims, coords):
    """Node numbering: x fastest."""
    nx = np.asarray(mesh_dims) + 1
    nid = np.asarray(coords[0])
    for d in range(1, len(mesh_dims)):
        nid = nid + coords[d] * int(np.prod(nx[:d]))
    return nid


def _element_dof_table(mesh_dims) -> np.ndarray:
    dim = len(mesh_dims)
    axes = np.meshgrid(*[np.arange(m) for m in mesh_dims], indexing="ij")
    el = np.stack([a.reshape(-1) for a in axes], axis=-1)  # (nel, dim), element cell coords
    if dim == 2:
        corner_offsets = [(0, 0), (1, 0), (1, 1), (0, 1)]
    else:
        corner_offsets = [(x, y, z) for z in (0, 1) for y in (0, 1) for x in (0, 1)]
    dofs = np.zeros((el.shape[0], dim * len(corner_offsets)), dtype=np.int64)
    for a, off in enumerate(corner_offsets):
        nid = _node_id(mesh_dims, [el[:, d] + off[d] for d in range(dim)])
        for d in range(dim):
            dofs[:, dim * a + d] = dim * nid + d
    return dofs


def node_coordinates(mesh_dims, domain: DomainSpec) -> np.ndarray:
    axes = [np.linspace(domain.lo[d], domain.hi[d], mesh_dims[d] + 1) for d in range(len(mesh_dims))]
    grids = np.meshgrid(*axes, indexing="ij")
    # match _node_id ordering: x fastest
    return np.stack([g.transpose(*reversed(range(len(mesh_dims)))).reshape(-1) for g in grids], axis=-1)


def element_centers(mesh_dims, domain: DomainSpec) -> np.ndarray:
    dim = len(mesh_dims)
    cell = domain.extents / np.asarray(mesh_dims)
    axes = np.meshgrid(*[np.arange(m) for m in mesh_dims], indexing="ij")
    ids = np.stack([a.reshape(-1) for a in axes], axis=-1)
    return np.asarray(domain.lo) + (ids + 0.5) * cell


def build_model(domain: DomainSpec, mesh_dims, bcs: BoundaryConditions, loads,
                material: Material) -> FemModel:
    """Fixed dofs from the Dirichlet regions, nodal loads from the load list."""
    mesh_dims = tuple(int(m) for m in mesh_dims)
    dim = len(mesh_dims)
    nodes = node_coordinates(mesh_dims, domain)
    cell = domain.extents / np.asarray(mesh_dims)
    tol = 1e-9 * domain.diagonal

    fixed = []
    for reg in bcs.regions:
        comps = reg.components if reg.components is not None else tuple(range(dim))
        if isinstance(reg.geometry, AxisPlane):
            on = reg.geometry.on_boundary(nodes, tol)
        else:
            # point / circle supports: grab nodes within half a cell
            on = reg.geometry.on_boundary(nodes, 0.5 * float(np.linalg.norm(cell)))
        ids = np.nonzero(on)[0]
        if ids.size == 0:
            raise ValueError(f"Dirichlet region {reg} catches no mesh nodes")
        for c in comps:
            fixed.append(dim * ids + c)
    fixed_dofs = np.unique(np.concatenate(fixed)) if fixed else np.empty(0, np.int64)

    f = np.zeros(dim * len(nodes))
    for load in loads:
        if isinstance(load, PointLoad):
            nid = int(np.argmin(np.linalg.norm(nodes - np.asarray(load.location), axis=1)))
            for c in range(dim):
                f[dim * nid + c] += load.force[c]
        elif isinstance(load, DistributedLoad):
            # consistent lumping: sample the segment finely, accumulate to
            # nearest nodes
            m = 50 * max(mesh_dims)
            t = (np.arange(m) + 0.5) / m
            pts = np.asarray(load.start) + t[:, None] * (np.asarray(load.end) - np.asarray(load.start))
            w = load.length / m
            node_coords = np.rint((pts - np.asarray(domain.lo)) / cell).astype(np.int64)
            node_coords = np.clip(node_coords, 0, np.asarray(mesh_dims))
            nids = _node_id(mesh_dims, [node_coords[:, d] for d in range(dim)])
            for c in range(dim):
                np.add.at(f, dim * nids + c, w * load.traction[c])
        else:
            raise TypeError(f"unknown load type {type(load)}")
    return FemModel(mesh_dims, domain, material, fixed_dofs, f)


def _assemble(model: FemModel, rho_grid: np.ndarray) -> sp.csr_matrix:
    mat = model.material
    e_min = mat.modulus_floor
    young = e_min + rho_grid.ravel() ** mat.simp_exponent * (mat.young - e_min)
    ke = model.element_stiffness
    ndof_el = ke.shape[0]
    rows = np.repeat(model.element_dofs, ndof_el, axis=1).ravel()
    cols = np.tile(model.element_dofs, (1, ndof_el)).ravel()
    vals = (young[:, None, None] * ke[None]).ravel()
    k = sp.coo_matrix((vals, (rows, cols)), shape=(model.n_dofs, model.n_dofs)).tocsr()
    return k


def assemble_solve(model: FemModel, rho_grid: np.ndarray) -> np.ndarray:
    """Nodal displacements by diagonally preconditioned CG (rel. res. 1e-8)."""
    k = _assemble(model, rho_grid)
    free = np.setdiff1d(np.arange(model.n_dofs), model.fixed_dofs)
    kff = k[free][:, free]
    f = model.load_vector[free]
    diag = kff.diagonal()
    if np.any(diag <= 0):
        raise RuntimeError("singular stiffness: structure has unconstrained rigid modes")
    m_inv = sp.diags(1.0 / diag)
    u_free, info = spla.cg(kff, f, rtol=1e-8, maxiter=20000, M=m_inv)
    if info != 0:
        raise RuntimeError(f"CG did not converge (info={info}); check supports")
    u = np.zeros(model.n_dofs)
    u[free] = u_free
    return u


def fem_compliance(model: FemModel, rho_grid: np.ndarray) -> float:
    """f^T u at the solution."""
    u = assemble_solve(model, rho_grid)
    return float(model.load_vector @ u)


def element_energies(model: FemModel, rho_grid: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Per-element u_e^T KE u_e at unit modulus."""
    ue = u[model.element_dofs]
    return np.einsum("ei,ij,ej->e", ue, model.element_stiffness, ue)


def _discrete_filter(mesh_dims, radius_elems: float):
    """Sparse weight matrix of the radius-based discrete sensitivity filter."""
    dim = len(mesh_dims)
    axes = np.meshgrid(*[np.arange(m) for m in mesh_dims], indexing="ij")
    ids = np.stack([a.reshape(-1) for a in axes], axis=-1).astype(float)
    reach = int(np.ceil(radius_elems)) - 1
    offs = np.stack(
        np.meshgrid(*[np.arange(-reach, reach + 1)] * dim, indexing="ij"), axis=-1
    ).reshape(-1, dim)
    grid = np.asarray(mesh_dims)
    # element flat index matches ids row order (meshgrid ij over mesh dims)
    strides = []
    acc = 1
    for d in reversed(range(dim)):
        strides.insert(0, acc)
        acc *= mesh_dims[d]
    strides = np.asarray(strides)
    flat = (ids * strides).sum(axis=1).astype(np.int64)
    rows, cols, vals = [], [], []
    for off in offs:
        w = radius_elems - np.linalg.norm(off)
        if w <= 0:
            continue
        tgt = ids + off
        ok = np.all((tgt >= 0) & (tgt < grid), axis=1)
        j = np.nonzero(ok)[0]
        k = (tgt[j] * strides).sum(axis=1).astype(np.int64)
        rows.append(flat[j])
        cols.append(k)
        vals.append(np.full(j.size, w))
    n = int(np.prod(mesh_dims))
    h = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return h, np.asarray(h.sum(axis=1)).ravel()


def simp_fem_optimize(model: FemModel, target_volume: float, radius_elems: float = 2.5,
                      move_limit: float = 0.2, damping: float = 0.5,
                      max_iters: int = 300, change_tol: float = 0.01):
    """Classical SIMP loop: FE solve, adjoint sensitivities, discrete
    sensitivity filter, OC update; runs until max density change < tol."""
    mat = model.material
    e_min = mat.modulus_floor
    p = mat.simp_exponent
    rho = np.full(model.n_elements, target_volume)
    h, hs = _discrete_filter(model.mesh_dims, radius_elems)
    history = []
    for it in range(max_iters):
        u = assemble_solve(model, rho)
        comp = float(model.load_vector @ u)
        ue = element_energies(model, rho, u)
        young = e_min + rho**p * (mat.young - e_min)
        dc = -p * rho ** (p - 1) * (mat.young - e_min) * ue
        # classic sensitivity filter: weighted by rho, normalized by rho_j
        dc_f = (h @ (rho * dc)) / (np.maximum(1e-3, rho) * hs)
        rho_new = _oc_grid_update(rho, dc_f, target_volume, move_limit, damping)
        change = float(np.abs(rho_new - rho).max())
        rho = rho_new
        history.append({"iteration": it, "compliance": comp, "volume": float(rho.mean()),
                        "change": change})
        if change < change_tol:
            break
    return rho, history


def _oc_grid_update(rho, dc, target_volume, move_limit, damping):
    lo, hi = 1e-12, 1e12
    for _ in range(120):
        lam = np.sqrt(lo * hi)
        b = np.maximum(0.0, -dc) / lam
        rho_new = np.clip(
            rho * b**damping,
            np.maximum(0.0, rho - move_limit),
            np.minimum(1.0, rho + move_limit),
        )
        v = rho_new.mean()
        if abs(v - target_volume) < 1e-6:
            break
        if v > target_volume:
            lo = lam
        else:
            hi = lam
    return rho_new


def rasterize(field, grid_dims, domain: DomainSpec, q=None) -> np.ndarray:
    """Cell-center densities of a DensityField on a regular grid; returns an
    array of shape grid_dims (index order x, y[, z])."""
    centers = element_centers(grid_dims, domain)
    qcol = None if q is None else np.full((centers.shape[0], np.size(q)), np.asarray(q))
    rho = field(centers, q=qcol)
    return rho.reshape(tuple(grid_dims))

"""Assembly of the penalized (dual) phi-FEM system and of the direct
phi-FEM baseline.

Unknowns of the dual system are ordered ``[u; p]``: the continuous field on
the active cells followed by the discontinuous auxiliary field on the cut
cells. All matrices are returned in canonical CSR form (sorted indices,
duplicates summed in a value-determined order), so the result does not
depend on the order in which cells are visited.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fem import (
    DofMap,
    LagrangeField,
    map_points,
    physical_gradients,
    physical_laplacians,
    reference_element,
    segment_quadrature,
    triangle_quadrature,
)
from .geometry import CellSets, DiscreteLevelSet, EmptyDomainError
from .grid import BackgroundGrid

PointFunction = Callable[[np.ndarray], np.ndarray]


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeParams:
    gamma: float = 100.0
    sigma_d: float = 0.1
    k: int = 1
    l: int | None = None
    second_order_stab: bool | None = None
    local_h: bool = False
    volume_degree: int | None = None
    penalty_degree: int | None = None
    facet_degree: int | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.sigma_d > 0:
            raise ValueError(f"sigma_d must be positive, got {self.sigma_d}")
        if self.k not in (1, 2):
            raise ValueError(f"k must be 1 or 2, got {self.k}")
        if self.l is not None and self.l not in (1, 2):
            raise ValueError(f"l must be 1 or 2, got {self.l}")

    @property
    def levelset_degree(self) -> int:
        return self.k if self.l is None else self.l

    @property
    def use_second_order(self) -> bool:
        if self.second_order_stab is None:
            return self.k >= 2
        return bool(self.second_order_stab)


@dataclass(frozen=True)
class SourceAndData:
    f: PointFunction
    u_d: PointFunction | None = None


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_u: int
    n_p: int
    variant: str = "dual"
    grid: BackgroundGrid | None = field(default=None, repr=False)
    dls: DiscreteLevelSet | None = field(default=None, repr=False)
    u_map: DofMap | None = field(default=None, repr=False)
    p_map: DofMap | None = field(default=None, repr=False)

    @property
    def shape(self):
        return self.matrix.shape

    def blocks(self):
        """``(A_uu, A_up, A_pu, A_pp)``."""
        A = self.matrix
        nu = self.n_u
        return A[:nu, :nu], A[:nu, nu:], A[nu:, :nu], A[nu:, nu:]

    def split(self, x: np.ndarray):
        return x[: self.n_u], x[self.n_u :]

    def fields(self, x: np.ndarray):
        """Solution fields ``(u_h, p_h)``; ``p_h`` is ``None`` for the direct variant."""
        u, p = self.split(x)
        if self.variant == "direct":
            return ProductField(self.dls, LagrangeField(self.grid, self.u_map, u)), None
        return LagrangeField(self.grid, self.u_map, u), LagrangeField(self.grid, self.p_map, p)


class ProductField:
    """``phi_h * w_h``: the solution representation of the direct scheme."""

    def __init__(self, dls: DiscreteLevelSet, w: LagrangeField):
        self.dls = dls
        self.w = w
        self.grid = w.grid
        self.dofmap = w.dofmap

    def defined_on(self, cells):
        return self.w.defined_on(cells)

    def evaluate(self, cells, bary):
        pv, pg = self.dls.evaluate(cells, bary)
        wv, wg = self.w.evaluate(cells, bary)
        return pv * wv, pg * wv[..., None] + pv[..., None] * wg

    def vertex_values(self):
        return self.dls.values[: self.grid.n_vertices] * self.w.vertex_values()


def _canonical_sum(keys: np.ndarray, vals: np.ndarray):
    """Unique keys and their value sums, independent of input order."""
    if keys.size == 0:
        return keys, vals
    order = np.lexsort((vals, keys))
    keys, vals = keys[order], vals[order]
    start = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    return keys[start], np.add.reduceat(vals, start)


def canonical_csr(rows, cols, vals, shape) -> sp.csr_matrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    keys, sums = _canonical_sum(rows * shape[1] + cols, np.asarray(vals, dtype=float))
    A = sp.csr_matrix((sums, (keys // shape[1], keys % shape[1])), shape=shape)
    A.sort_indices()
    A.eliminate_zeros()
    return A


def canonical_vector(idx, vals, n) -> np.ndarray:
    keys, sums = _canonical_sum(np.asarray(idx, dtype=np.int64), np.asarray(vals, dtype=float))
    out = np.zeros(n)
    out[keys] = sums
    return out


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, row_dofs, col_dofs, local):
        m, nr, nc = local.shape
        self.rows.append(np.repeat(row_dofs, nc, axis=1).ravel())
        self.cols.append(np.tile(col_dofs, (1, nr)).ravel())
        self.vals.append(local.ravel())

    def matrix(self, shape):
        if not self.rows:
            return sp.csr_matrix(shape)
        return canonical_csr(np.concatenate(self.rows), np.concatenate(self.cols), np.concatenate(self.vals), shape)


class _Vector:
    def __init__(self):
        self.idx, self.vals = [], []

    def add(self, dofs, local):
        self.idx.append(dofs.ravel())
        self.vals.append(local.ravel())

    def vector(self, n):
        if not self.idx:
            return np.zeros(n)
        return canonical_vector(np.concatenate(self.idx), np.concatenate(self.vals), n)


def _cap(degree, limit):
    return int(min(degree, limit))


class _Space:
    """Basis functions on active cells, either plain Lagrange or multiplied by phi_h."""

    def __init__(self, grid: BackgroundGrid, dls: DiscreteLevelSet, degree: int, times_phi: bool):
        self.grid = grid
        self.dls = dls
        self.elem = reference_element(degree)
        self.times_phi = times_phi

    def tabulate(self, cells, bary):
        """Values ``(m, q, n)``, gradients ``(m, q, n, 2)``, Laplacians ``(m, q, n)``."""
        bary = np.asarray(bary, dtype=float)
        if bary.ndim == 2:
            bary = np.broadcast_to(bary, (len(cells),) + bary.shape)
        N = self.elem.values(bary)
        dN = physical_gradients(self.grid, cells, self.elem.gradients(bary))
        lapN = physical_laplacians(self.grid, cells, self.elem.hessians())[:, None, :]
        if not self.times_phi:
            return N, dN, np.broadcast_to(lapN, N.shape)
        pv, pg = self.dls.evaluate(cells, bary)
        lap_phi = np.trace(self.dls.hessians(cells), axis1=1, axis2=2)
        vals = pv[..., None] * N
        grads = pg[:, :, None, :] * N[..., None] + pv[..., None, None] * dN
        laps = (
            lap_phi[:, None, None] * N
            + 2 * np.einsum("cqd,cqnd->cqn", pg, dN)
            + pv[..., None] * lapN
        )
        return vals, grads, laps


def _facet_bary(grid: BackgroundGrid, facets: np.ndarray, cells: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Barycentric coordinates in ``cells`` of the points ``(1-t) a + t b`` on
    ``facets`` with global endpoints ``a < b``, so both sides agree."""
    ends = grid.facets[facets]
    cv = grid.cells[cells]
    la = np.argmax(cv == ends[:, :1], axis=1)
    lb = np.argmax(cv == ends[:, 1:], axis=1)
    bary = np.zeros((facets.size, t.size, 3))
    r = np.arange(facets.size)
    bary[r, :, la] = 1.0 - t
    bary[r, :, lb] = t
    return bary


def _check_inputs(grid, dls, sets, u_map):
    if dls.grid is not grid:
        raise AssemblyError("level set and assembly use different grids")
    if sets.n_cells != grid.n_cells:
        raise AssemblyError("cell sets were built on a different grid")
    if sets.active.size == 0:
        raise EmptyDomainError("empty domain: no active cells")
    if u_map.cell_dofs.shape[0] != grid.n_cells:
        raise AssemblyError("DOF map was built on a different grid")


def _h_cells(grid, cells, params):
    return grid.diameters[cells] if params.local_h else np.full(len(cells), grid.h)


def _h_facets(grid, facets, params):
    if not params.local_h:
        return np.full(len(facets), grid.h)
    fc = grid.facet_cells[facets]
    d = grid.diameters[np.maximum(fc, 0)]
    return np.where(fc >= 0, d, 0.0).max(axis=1)


def _stiffness(grid, space, cells, dofs, degree, out: _Triplets):
    rule = triangle_quadrature(degree)
    _, G, _ = space.tabulate(cells, rule.points)
    wdet = rule.weights[None, :] * np.abs(grid.dets[cells])[:, None]
    out.add(dofs, dofs, np.einsum("cq,cqid,cqjd->cij", wdet, G, G))


def _boundary(grid, space, facets, cells, dofs, degree, out: _Triplets, scale=1.0):
    """``-int_F (du/dn) v`` with ``n`` outward from ``cells``."""
    rule = segment_quadrature(degree)
    bary = _facet_bary(grid, facets, cells, rule.points)
    V, G, _ = space.tabulate(cells, bary)
    local = np.argmax(grid.cell_facets[cells] == facets[:, None], axis=1)
    n = grid.outward_normals[cells, local]
    dn = np.einsum("cqjd,cd->cqj", G, n)
    w = rule.weights[None, :] * grid.facet_lengths[facets][:, None]
    out.add(dofs, dofs, -scale * np.einsum("cq,cqi,cqj->cij", w, V, dn))


def _jumps(grid, space, facets, dof_map, degree, weight, out: _Triplets):
    """``weight * int_F [du/dn][dv/dn]``, normal fixed from the lower to the higher cell id."""
    if facets.size == 0:
        return
    rule = segment_quadrature(degree)
    c0, c1 = grid.facet_cells[facets, 0], grid.facet_cells[facets, 1]
    local = np.argmax(grid.cell_facets[c0] == facets[:, None], axis=1)
    n = grid.outward_normals[c0, local]
    _, G0, _ = space.tabulate(c0, _facet_bary(grid, facets, c0, rule.points))
    _, G1, _ = space.tabulate(c1, _facet_bary(grid, facets, c1, rule.points))
    jump = np.concatenate(
        [np.einsum("cqjd,cd->cqj", G0, n), -np.einsum("cqjd,cd->cqj", G1, n)], axis=2
    )
    w = rule.weights[None, :] * (grid.facet_lengths[facets] * weight)[:, None]
    dofs = np.hstack([dof_map.cell_dofs[c0], dof_map.cell_dofs[c1]])
    out.add(dofs, dofs, np.einsum("cq,cqi,cqj->cij", w, jump, jump))


def _laplace_pair(grid, space, cells, dofs, degree, weight, out: _Triplets):
    rule = triangle_quadrature(degree)
    _, _, L = space.tabulate(cells, rule.points)
    w = rule.weights[None, :] * (np.abs(grid.dets[cells]) * weight)[:, None]
    out.add(dofs, dofs, np.einsum("cq,cqi,cqj->cij", w, L, L))


def _source(grid, space, cells, dofs, f, degree, out: _Vector, laplacian_weight=None):
    """``int f v`` or, with ``laplacian_weight``, ``-weight * int f Lap(v)``."""
    rule = triangle_quadrature(degree)
    V, _, L = space.tabulate(cells, rule.points)
    fx = f(map_points(grid, cells, rule.points))
    w = rule.weights[None, :] * np.abs(grid.dets[cells])[:, None]
    if laplacian_weight is None:
        out.add(dofs, np.einsum("cq,cq,cqi->ci", w, fx, V))
    else:
        out.add(dofs, -laplacian_weight[:, None] * np.einsum("cq,cq,cqi->ci", w, fx, L))


def _symmetrized(local):
    # exact symmetry of the local blocks, independent of einsum ordering
    return 0.5 * (local + local.transpose(0, 2, 1))


def _dual_degrees(params: SchemeParams):
    k, l = params.k, params.levelset_degree
    vol = params.volume_degree or _cap(2 * k + 2, 10)
    pen = params.penalty_degree or _cap(2 * k + 2 * l + 2, 10)
    fac = params.facet_degree or _cap(2 * k + 1, 12)
    return vol, pen, fac


def assemble_terms(grid, dls, sets: CellSets, u_map: DofMap, p_map: DofMap, params: SchemeParams) -> dict:
    """Scaled bilinear terms of the dual scheme over the ``(u; p)`` space.

    Keys: ``stiffness``, ``boundary``, ``penalty``, ``jump``, ``laplacian``.
    The penalty carries ``gamma/h^2``, the jump ``sigma_d h`` and the
    Laplacian ``sigma_d h^2``; the Laplacian term is present only when the
    second-order stabilization is on.
    """
    _check_inputs(grid, dls, sets, u_map)
    k = params.k
    nu, npp = u_map.n_dofs, p_map.n_dofs
    shape = (nu + npp, nu + npp)
    _, pen, fac = _dual_degrees(params)
    space = _Space(grid, dls, k, times_phi=False)
    out = {}

    t = _Triplets()
    _stiffness(grid, space, sets.active, u_map.cell_dofs[sets.active], _cap(2 * k, 10), t)
    out["stiffness"] = t.matrix(shape)

    t = _Triplets()
    bc = sets.boundary_cells
    _boundary(grid, space, sets.boundary_facets, bc, u_map.cell_dofs[bc], fac, t)
    out["boundary"] = t.matrix(shape)

    t = _Triplets()
    cut = sets.cut
    if cut.size:
        rule = triangle_quadrature(pen)
        N = space.elem.values(rule.points)
        phi, _ = dls.evaluate(cut, rule.points)
        hc = _h_cells(grid, cut, params)
        w = rule.weights[None, :] * (np.abs(grid.dets[cut]) * params.gamma / hc**2)[:, None]
        ud = u_map.cell_dofs[cut]
        pd = p_map.cell_dofs[cut] + nu
        s = phi / hc[:, None]
        up = -np.einsum("cq,cq,qi,qj->cij", w, s, N, N)
        t.add(ud, ud, _symmetrized(np.einsum("cq,qi,qj->cij", w, N, N)))
        t.add(ud, pd, up)
        t.add(pd, ud, up.transpose(0, 2, 1))
        t.add(pd, pd, _symmetrized(np.einsum("cq,cq,qi,qj->cij", w, s * s, N, N)))
    out["penalty"] = t.matrix(shape)

    t = _Triplets()
    gf = sets.ghost_facets
    _jumps(grid, space, gf, u_map, fac, params.sigma_d * _h_facets(grid, gf, params), t)
    out["jump"] = t.matrix(shape)

    if params.use_second_order:
        t = _Triplets()
        hc = _h_cells(grid, cut, params)
        # Laplacians of the affine-mapped basis are cellwise constant
        _laplace_pair(grid, space, cut, u_map.cell_dofs[cut], 0, params.sigma_d * hc**2, t)
        out["laplacian"] = t.matrix(shape)
    return out


def bilinear_matrix(terms: dict) -> sp.csr_matrix:
    A = None
    for name in ("stiffness", "boundary", "penalty", "jump", "laplacian"):
        if name in terms:
            A = terms[name] if A is None else A + terms[name]
    A = A.tocsr()
    A.sort_indices()
    return A


def assemble_dual(grid, dls, sets, maps, params: SchemeParams, data: SourceAndData) -> LinearSystem:
    """Block system of the penalized phi-FEM scheme with ghost-penalty stabilization."""
    u_map, p_map = maps
    terms = assemble_terms(grid, dls, sets, u_map, p_map, params)
    nu, npp = u_map.n_dofs, p_map.n_dofs
    vol, pen, _ = _dual_degrees(params)
    space = _Space(grid, dls, params.k, times_phi=False)

    rhs = _Vector()
    _source(grid, space, sets.active, u_map.cell_dofs[sets.active], data.f, vol, rhs)
    cut = sets.cut
    # Lap(v) vanishes for k = 1; skipping keeps the rhs bitwise independent of the flag
    if cut.size and params.use_second_order and params.k >= 2:
        hc = _h_cells(grid, cut, params)
        _source(grid, space, cut, u_map.cell_dofs[cut], data.f, vol, rhs, params.sigma_d * hc**2)
    if cut.size and data.u_d is not None:
        rule = triangle_quadrature(pen)
        N = space.elem.values(rule.points)
        phi, _ = dls.evaluate(cut, rule.points)
        hc = _h_cells(grid, cut, params)
        ud = data.u_d(map_points(grid, cut, rule.points))
        w = rule.weights[None, :] * (np.abs(grid.dets[cut]) * params.gamma / hc**2)[:, None]
        rhs.add(u_map.cell_dofs[cut], np.einsum("cq,cq,qi->ci", w, ud, N))
        rhs.add(p_map.cell_dofs[cut] + nu, -np.einsum("cq,cq,cq,qi->ci", w, ud, phi / hc[:, None], N))

    return LinearSystem(
        matrix=bilinear_matrix(terms),
        rhs=rhs.vector(nu + npp),
        n_u=nu,
        n_p=npp,
        variant="dual",
        grid=grid,
        dls=dls,
        u_map=u_map,
        p_map=p_map,
    )


def assemble_direct(grid, dls, sets, maps, params: SchemeParams, data: SourceAndData) -> LinearSystem:
    """Direct phi-FEM baseline: unknown ``w`` with ``u_h = phi_h w_h`` on all of Omega_h.

    Only homogeneous Dirichlet data is supported.
    """
    u_map = maps[0]
    _check_inputs(grid, dls, sets, u_map)
    if data.u_d is not None:
        raise AssemblyError("the direct baseline supports homogeneous Dirichlet data only")
    k, l = params.k, params.levelset_degree
    n = u_map.n_dofs
    shape = (n, n)
    vol = params.volume_degree or _cap(2 * (k + l), 10)
    fac = params.facet_degree or _cap(2 * (k + l) + 1, 12)
    space = _Space(grid, dls, k, times_phi=True)
    active, cut = sets.active, sets.cut

    t = _Triplets()
    _stiffness(grid, space, active, u_map.cell_dofs[active], vol, t)
    bc = sets.boundary_cells
    # -int d(phi w)/dn * (phi v): the test function is phi v
    _boundary(grid, space, sets.boundary_facets, bc, u_map.cell_dofs[bc], fac, t)
    gf = sets.ghost_facets
    _jumps(grid, space, gf, u_map, fac, params.sigma_d * _h_facets(grid, gf, params), t)
    rhs = _Vector()
    _source(grid, space, active, u_map.cell_dofs[active], data.f, vol, rhs)
    # Lap(phi_h w) is not zero for k = 1; second_order_stab=True enables it there
    if params.use_second_order and cut.size:
        hc = _h_cells(grid, cut, params)
        _laplace_pair(grid, space, cut, u_map.cell_dofs[cut], vol, params.sigma_d * hc**2, t)
        _source(grid, space, cut, u_map.cell_dofs[cut], data.f, vol, rhs, params.sigma_d * hc**2)

    return LinearSystem(
        matrix=t.matrix(shape),
        rhs=rhs.vector(n),
        n_u=n,
        n_p=0,
        variant="direct",
        grid=grid,
        dls=dls,
        u_map=u_map,
        p_map=None,
    )


def assemble(variant: str, grid, dls, sets, maps, params, data) -> LinearSystem:
    if variant == "dual":
        return assemble_dual(grid, dls, sets, maps, params, data)
    if variant == "direct":
        return assemble_direct(grid, dls, sets, maps, params, data)
    raise ValueError(f"unknown variant {variant!r}; expected 'dual' or 'direct'")


def export_matrix_market(system: LinearSystem, path) -> None:
    scipy.io.mmwrite(str(path), system.matrix, comment=f"{system.variant} n_u={system.n_u} n_p={system.n_p}")

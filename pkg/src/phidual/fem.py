"""Lagrange P1/P2 triangles, quadrature and degree-of-freedom maps."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import BackgroundGrid

# reference gradients of the barycentric coordinates w.r.t. (xi, eta)
_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
# P2 edge nodes: node 3+i sits on the facet opposite vertex i
_EDGE_PAIRS = np.array([[1, 2], [0, 2], [0, 1]])


class UnsupportedDegreeError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return self.weights.size


@lru_cache(maxsize=None)
def segment_quadrature(exactness: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1]; ``points`` are the parameters ``t``."""
    if not 0 <= exactness <= 12:
        raise UnsupportedDegreeError(f"segment exactness {exactness} not in [0, 12]")
    m = exactness // 2 + 1
    x, w = np.polynomial.legendre.leggauss(m)
    return QuadratureRule((x + 1.0) / 2.0, w / 2.0, exactness)


@lru_cache(maxsize=None)
def triangle_quadrature(exactness: int) -> QuadratureRule:
    """Collapsed (Duffy) tensor Gauss rule on the reference triangle.

    Points are barycentric; weights sum to 1/2.
    """
    if not 0 <= exactness <= 10:
        raise UnsupportedDegreeError(f"triangle exactness {exactness} not in [0, 10]")
    # the collapse Jacobian (1 - u) raises the degree in u by one
    m = max(1, -(-(exactness + 2) // 2))
    x, w = np.polynomial.legendre.leggauss(m)
    g = (x + 1.0) / 2.0
    gw = w / 2.0
    u, v = np.meshgrid(g, g, indexing="ij")
    wu, wv = np.meshgrid(gw, gw, indexing="ij")
    xi = u.ravel()
    eta = ((1.0 - u) * v).ravel()
    weights = (wu * wv * (1.0 - u)).ravel()
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    return QuadratureRule(bary, weights, exactness)


class ReferenceElement:
    """Lagrange element of degree 1 or 2 on the reference triangle.

    Node order: the three vertices, then (degree 2) the midpoints of the
    facets opposite vertex 0, 1, 2.
    """

    def __init__(self, degree: int):
        if degree not in (1, 2):
            raise UnsupportedDegreeError(f"degree {degree} not supported")
        self.degree = degree
        self.n_nodes = 3 if degree == 1 else 6
        nodes = np.eye(3)
        if degree == 2:
            mids = np.zeros((3, 3))
            for i, (a, b) in enumerate(_EDGE_PAIRS):
                mids[i, [a, b]] = 0.5
            nodes = np.vstack([nodes, mids])
        self.nodes = nodes
        self._hessians = self._reference_hessians()

    def values(self, bary: np.ndarray) -> np.ndarray:
        lam = np.asarray(bary, dtype=float)
        if self.degree == 1:
            return lam.copy()
        l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
        return np.stack(
            [
                l0 * (2 * l0 - 1),
                l1 * (2 * l1 - 1),
                l2 * (2 * l2 - 1),
                4 * l1 * l2,
                4 * l0 * l2,
                4 * l0 * l1,
            ],
            axis=-1,
        )

    def gradients(self, bary: np.ndarray) -> np.ndarray:
        """Reference gradients, shape ``(..., n_nodes, 2)``."""
        lam = np.asarray(bary, dtype=float)
        if self.degree == 1:
            return np.broadcast_to(_DLAMBDA, lam.shape[:-1] + (3, 2)).copy()
        d = _DLAMBDA
        out = np.empty(lam.shape[:-1] + (6, 2))
        for i in range(3):
            out[..., i, :] = (4 * lam[..., i, None] - 1) * d[i]
        for i, (a, b) in enumerate(_EDGE_PAIRS):
            out[..., 3 + i, :] = 4 * (lam[..., a, None] * d[b] + lam[..., b, None] * d[a])
        return out

    def _reference_hessians(self) -> np.ndarray:
        H = np.zeros((self.n_nodes, 2, 2))
        if self.degree == 2:
            d = _DLAMBDA
            for i in range(3):
                H[i] = 4 * np.outer(d[i], d[i])
            for i, (a, b) in enumerate(_EDGE_PAIRS):
                H[3 + i] = 4 * (np.outer(d[a], d[b]) + np.outer(d[b], d[a]))
        return H

    def hessians(self) -> np.ndarray:
        """Reference Hessians ``(n_nodes, 2, 2)``; constant on the cell."""
        return self._hessians.copy()

    def tabulate(self, bary: np.ndarray):
        return self.values(bary), self.gradients(bary), self.hessians()


@lru_cache(maxsize=None)
def reference_element(degree: int) -> ReferenceElement:
    return ReferenceElement(degree)


def physical_gradients(grid: BackgroundGrid, cells: np.ndarray, ref_grads: np.ndarray) -> np.ndarray:
    """Push reference gradients ``(m, q, n, 2)`` or ``(q, n, 2)`` through ``J^{-T}``."""
    G = grid.inv_transposes[cells]
    if ref_grads.ndim == 3:
        return np.einsum("cij,qnj->cqni", G, ref_grads)
    return np.einsum("cij,cqnj->cqni", G, ref_grads)


def physical_laplacians(grid: BackgroundGrid, cells: np.ndarray, ref_hessians: np.ndarray) -> np.ndarray:
    """Laplacians ``(m, n)`` of the mapped basis (affine cells)."""
    G = grid.inv_transposes[cells]
    return np.einsum("cij,njk,cik->cn", G, ref_hessians, G)


def physical_hessians(grid: BackgroundGrid, cells: np.ndarray, ref_hessians: np.ndarray) -> np.ndarray:
    G = grid.inv_transposes[cells]
    return np.einsum("cij,njk,clk->cnil", G, ref_hessians, G)


def map_points(grid: BackgroundGrid, cells: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Physical coordinates of barycentric points; ``bary`` is ``(q, 3)`` or ``(m, q, 3)``."""
    P = grid.vertices[grid.cells[cells]]
    if bary.ndim == 2:
        return np.einsum("qa,cad->cqd", bary, P)
    return np.einsum("cqa,cad->cqd", bary, P)


def lagrange_nodes(grid: BackgroundGrid, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Global Lagrange nodes on the whole grid.

    Vertices come first, then (degree 2) one midpoint per facet, so node
    ``V + f`` is the midpoint of facet ``f``.
    """
    if degree not in (1, 2):
        raise UnsupportedDegreeError(f"degree {degree} not supported")
    if degree == 1:
        return grid.vertices, grid.cells
    cached = grid.__dict__.get("_p2_nodes")
    if cached is None:
        mids = grid.vertices[grid.facets].mean(axis=1)
        coords = np.vstack([grid.vertices, mids])
        cell_nodes = np.hstack([grid.cells, grid.n_vertices + grid.cell_facets])
        cached = grid.__dict__["_p2_nodes"] = (coords, cell_nodes)
    return cached


@dataclass(frozen=True)
class DofMap:
    """Cell to global DOF map; ``cell_dofs`` rows are ``-1`` for cells outside the space."""

    kind: str
    degree: int
    cell_dofs: np.ndarray
    n_dofs: int
    cells: np.ndarray
    dof_nodes: np.ndarray | None = None

    @property
    def continuous(self) -> bool:
        return self.kind == "continuous"


def continuous_dofmap(grid: BackgroundGrid, cells: np.ndarray, degree: int) -> DofMap:
    cells = np.unique(np.asarray(cells, dtype=np.int64))
    _, cell_nodes = lagrange_nodes(grid, degree)
    used = np.unique(cell_nodes[cells])
    rank = np.full(cell_nodes.max() + 1, -1, dtype=np.int64)
    rank[used] = np.arange(used.size)
    cell_dofs = np.full((grid.n_cells, cell_nodes.shape[1]), -1, dtype=np.int64)
    cell_dofs[cells] = rank[cell_nodes[cells]]
    return DofMap("continuous", degree, cell_dofs, int(used.size), cells, used)


def discontinuous_dofmap(grid: BackgroundGrid, cells: np.ndarray, degree: int) -> DofMap:
    cells = np.unique(np.asarray(cells, dtype=np.int64))
    nloc = reference_element(degree).n_nodes
    cell_dofs = np.full((grid.n_cells, nloc), -1, dtype=np.int64)
    cell_dofs[cells] = np.arange(cells.size * nloc).reshape(-1, nloc)
    return DofMap("discontinuous", degree, cell_dofs, int(cells.size * nloc), cells)


def build_dofmaps(grid: BackgroundGrid, sets, k: int) -> tuple[DofMap, DofMap]:
    """DOF maps of the continuous space on the active cells and the
    discontinuous space on the cut cells."""
    if k not in (1, 2):
        raise UnsupportedDegreeError(f"degree {k} not supported")
    return continuous_dofmap(grid, sets.active, k), discontinuous_dofmap(grid, sets.cut, k)


class LagrangeField:
    """Finite element function given by DOF coefficients on a DOF map."""

    def __init__(self, grid: BackgroundGrid, dofmap: DofMap, coefficients: np.ndarray):
        self.grid = grid
        self.dofmap = dofmap
        self.coefficients = np.asarray(coefficients, dtype=float)
        if self.coefficients.shape != (dofmap.n_dofs,):
            raise ValueError(
                f"expected {dofmap.n_dofs} coefficients, got {self.coefficients.shape}"
            )
        self.element = reference_element(dofmap.degree)

    def defined_on(self, cells: np.ndarray) -> np.ndarray:
        return self.dofmap.cell_dofs[cells, 0] >= 0

    def evaluate(self, cells: np.ndarray, bary: np.ndarray):
        """Values ``(m, q)`` and gradients ``(m, q, 2)``; NaN outside the space."""
        cells = np.asarray(cells, dtype=np.int64)
        bary = np.asarray(bary, dtype=float)
        if bary.ndim == 2:
            bary = np.broadcast_to(bary, (cells.size,) + bary.shape)
        dofs = self.dofmap.cell_dofs[cells]
        ok = dofs[:, 0] >= 0
        coef = np.where(ok[:, None], self.coefficients[np.where(dofs >= 0, dofs, 0)], np.nan)
        N = self.element.values(bary)
        dN = physical_gradients(self.grid, cells, self.element.gradients(bary))
        vals = np.einsum("cqn,cn->cq", N, coef)
        grads = np.einsum("cqnd,cn->cqd", dN, coef)
        return vals, grads

    def laplacians(self, cells: np.ndarray) -> np.ndarray:
        dofs = self.dofmap.cell_dofs[cells]
        lap = physical_laplacians(self.grid, cells, self.element.hessians())
        return np.einsum("cn,cn->c", lap, self.coefficients[dofs])

    def vertex_values(self) -> np.ndarray:
        """Values at grid vertices (NaN where the field is undefined)."""
        out = np.full(self.grid.n_vertices, np.nan)
        cells = self.dofmap.cells
        out[self.grid.cells[cells]] = self.coefficients[self.dofmap.cell_dofs[cells, :3]]
        return out


def interpolate(grid: BackgroundGrid, dofmap: DofMap, func) -> np.ndarray:
    """Nodal interpolation of ``func(points) -> values`` into a continuous space."""
    if not dofmap.continuous:
        raise ValueError("nodal interpolation needs a continuous DOF map")
    coords, _ = lagrange_nodes(grid, dofmap.degree)
    return np.asarray(func(coords[dofmap.dof_nodes]), dtype=float)

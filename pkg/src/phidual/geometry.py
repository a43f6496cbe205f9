"""Level-set geometry: analytic level sets, their Lagrange interpolant and
the cut-cell classification of the background grid."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .fem import (
    lagrange_nodes,
    physical_gradients,
    physical_hessians,
    reference_element,
    UnsupportedDegreeError,
)
from .grid import BackgroundGrid

logger = logging.getLogger(__name__)

PointFunction = Callable[[np.ndarray], np.ndarray]


class EmptyDomainError(ValueError):
    pass


@dataclass(frozen=True)
class LevelSet:
    """Analytic level set; ``func`` maps points ``(..., 2)`` to values ``(...)``.

    The domain is ``{phi < 0}``. ``grad`` is only used by test oracles.
    """

    name: str
    func: PointFunction
    grad: PointFunction | None = None

    def value(self, x) -> np.ndarray:
        return self.func(np.asarray(x, dtype=float))

    __call__ = value

    def gradient(self, x) -> np.ndarray:
        if self.grad is None:
            raise NotImplementedError(f"level set {self.name!r} has no analytic gradient")
        return self.grad(np.asarray(x, dtype=float))


# Five-Gaussian product level set; rows are (x0, y0, lx, ly, theta).
TC1_PARAMS = np.array(
    [
        [0.356, 0.507, 0.145, 0.171, 0.000],
        [0.588, 0.589, 0.153, 0.090, 0.000],
        [0.569, 0.588, 0.008, 0.008, 0.006],
        [0.308, 0.443, 0.055, 0.116, 0.622],
        [0.741, 0.643, 0.058, 0.035, 0.000],
    ]
)


def tc1_levelset() -> LevelSet:
    def func(p):
        x, y = p[..., 0], p[..., 1]
        prod = np.ones_like(x)
        for x0, y0, lx, ly, th in TC1_PARAMS:
            xr = np.cos(th) * (x - x0) - np.sin(th) * (y - y0)
            yr = np.sin(th) * (x - x0) + np.cos(th) * (y - y0)
            prod = prod * (-1.0 + np.exp(-xr**2 / (2 * lx**2) - yr**2 / (2 * ly**2)))
        return -prod - 0.5

    return LevelSet("tc1", func)


def disk_levelset(center=(0.5, 0.5), radius=0.3125) -> LevelSet:
    cx, cy = center

    def func(p):
        return (p[..., 0] - cx) ** 2 + (p[..., 1] - cy) ** 2 - radius**2

    def grad(p):
        return np.stack([2 * (p[..., 0] - cx), 2 * (p[..., 1] - cy)], axis=-1)

    return LevelSet("disk", func, grad)


def affine_levelset(a: float, b: float, c: float, name: str = "affine") -> LevelSet:
    """``phi(x, y) = a x + b y + c``."""

    def func(p):
        return a * p[..., 0] + b * p[..., 1] + c

    def grad(p):
        return np.broadcast_to(np.array([a, b], dtype=float), np.shape(p)).copy()

    return LevelSet(name, func, grad)


def halfplane_levelset(offset: float = 0.51) -> LevelSet:
    return affine_levelset(1.0, 0.0, -offset, name="halfplane")


def constant_levelset(value: float = -1.0) -> LevelSet:
    return affine_levelset(0.0, 0.0, value, name="constant")


LEVELSETS: dict[str, Callable[..., LevelSet]] = {
    "tc1": tc1_levelset,
    "disk": disk_levelset,
    "halfplane": halfplane_levelset,
}


def get_levelset(name: str, **params) -> LevelSet:
    try:
        factory = LEVELSETS[name]
    except KeyError:
        raise KeyError(f"unknown level set {name!r}; known: {sorted(LEVELSETS)}") from None
    return factory(**params)


class DiscreteLevelSet:
    """Continuous Lagrange interpolant of degree ``l`` on the whole grid."""

    def __init__(self, grid: BackgroundGrid, degree: int, values: np.ndarray):
        if degree not in (1, 2):
            raise UnsupportedDegreeError(f"level-set degree {degree} not supported")
        self.grid = grid
        self.degree = degree
        self.values = np.asarray(values, dtype=float)
        _, self.cell_nodes = lagrange_nodes(grid, degree)
        self.element = reference_element(degree)

    def cell_values(self, cells=None) -> np.ndarray:
        nodes = self.cell_nodes if cells is None else self.cell_nodes[cells]
        return self.values[nodes]

    def evaluate(self, cells: np.ndarray, bary: np.ndarray):
        """Values ``(m, q)`` and physical gradients ``(m, q, 2)``."""
        cells = np.asarray(cells, dtype=np.int64)
        bary = np.asarray(bary, dtype=float)
        if bary.ndim == 2:
            bary = np.broadcast_to(bary, (cells.size,) + bary.shape)
        coef = self.cell_values(cells)
        vals = np.einsum("cqn,cn->cq", self.element.values(bary), coef)
        dN = physical_gradients(self.grid, cells, self.element.gradients(bary))
        grads = np.einsum("cqnd,cn->cqd", dN, coef)
        return vals, grads

    def hessians(self, cells: np.ndarray) -> np.ndarray:
        """Physical Hessians ``(m, 2, 2)``, constant per cell."""
        H = physical_hessians(self.grid, cells, self.element.hessians())
        return np.einsum("cnij,cn->cij", H, self.cell_values(cells))

    def eval_on_cell(self, cell: int, bary) -> tuple[float, np.ndarray]:
        v, g = self.evaluate(np.array([cell]), np.asarray(bary, dtype=float)[None, :])
        return float(v[0, 0]), g[0, 0]


def interpolate_levelset(phi: LevelSet, grid: BackgroundGrid, degree: int) -> DiscreteLevelSet:
    if degree not in (1, 2):
        raise UnsupportedDegreeError(f"level-set degree {degree} not supported")
    coords, _ = lagrange_nodes(grid, degree)
    return DiscreteLevelSet(grid, degree, phi.value(coords))


@dataclass(frozen=True)
class CellSets:
    """Classification of the background grid; all id arrays sorted ascending."""

    active: np.ndarray
    cut: np.ndarray
    boundary_facets: np.ndarray
    boundary_cells: np.ndarray
    ghost_facets: np.ndarray
    n_cells: int

    @property
    def strictly_interior(self) -> np.ndarray:
        return np.setdiff1d(self.active, self.cut, assume_unique=True)

    def active_mask(self) -> np.ndarray:
        m = np.zeros(self.n_cells, dtype=bool)
        m[self.active] = True
        return m

    def cut_mask(self) -> np.ndarray:
        m = np.zeros(self.n_cells, dtype=bool)
        m[self.cut] = True
        return m


def _sublattice(s: int) -> np.ndarray:
    pts = [(1 - (i + j) / s, i / s, j / s) for i in range(s + 1) for j in range(s + 1 - i)]
    return np.array(pts)


def classify(dls: DiscreteLevelSet, oversample: int | None = 4, check_connectivity: bool = True) -> CellSets:
    """Active, cut, boundary and ghost entities from the sign pattern of phi_h.

    For degree-2 level sets the nodal values are supplemented with samples
    on a barycentric sub-lattice of spacing ``1/oversample``.
    """
    grid = dls.grid
    vals = dls.cell_values()
    tau = 1e-12 * np.max(np.abs(dls.values)) if dls.values.size else 0.0
    if dls.degree == 2 and oversample:
        sample, _ = dls.evaluate(np.arange(grid.n_cells), _sublattice(int(oversample)))
        vals = np.hstack([vals, sample])
    lo = vals.min(axis=1)
    hi = vals.max(axis=1)
    near_zero = (np.abs(vals) <= tau).any(axis=1)
    all_zero = (np.abs(vals) <= tau).all(axis=1)
    active_mask = (lo < -tau) | all_zero
    cut_mask = active_mask & ((hi > tau) | near_zero)
    if not active_mask.any():
        raise EmptyDomainError("empty domain: the level set is non-negative on the whole grid")

    fc = grid.facet_cells
    act_adj = np.where(fc >= 0, active_mask[np.maximum(fc, 0)], False)
    n_active_adj = act_adj.sum(axis=1)
    boundary_facets = np.flatnonzero(n_active_adj == 1)
    boundary_cells = np.where(act_adj[boundary_facets, 0], fc[boundary_facets, 0], fc[boundary_facets, 1])
    cut_adj = np.where(fc >= 0, cut_mask[np.maximum(fc, 0)], False)
    ghost_facets = np.flatnonzero((n_active_adj == 2) & cut_adj.any(axis=1))

    sets = CellSets(
        active=np.flatnonzero(active_mask),
        cut=np.flatnonzero(cut_mask),
        boundary_facets=boundary_facets,
        boundary_cells=boundary_cells,
        ghost_facets=ghost_facets,
        n_cells=grid.n_cells,
    )
    if check_connectivity and not is_connected(grid, sets):
        warnings.warn("the fictitious domain Omega_h is not connected", RuntimeWarning, stacklevel=2)
    return sets


def _active_adjacency(grid: BackgroundGrid, sets: CellSets):
    fc = grid.facet_cells
    mask = sets.active_mask()
    inner = (fc[:, 1] >= 0)
    inner &= mask[fc[:, 0]] & mask[np.maximum(fc[:, 1], 0)]
    a, b = fc[inner, 0], fc[inner, 1]
    n = grid.n_cells
    return coo_matrix((np.ones(2 * a.size), (np.r_[a, b], np.r_[b, a])), shape=(n, n)).tocsr()


def is_connected(grid: BackgroundGrid, sets: CellSets) -> bool:
    adj = _active_adjacency(grid, sets)
    _, labels = connected_components(adj, directed=False)
    return np.unique(labels[sets.active]).size == 1


def cut_to_interior_distance(grid: BackgroundGrid, sets: CellSets) -> np.ndarray:
    """Facet-hop distance inside Omega_h from each cut cell to the nearest
    strictly interior cell (``-1`` if unreachable)."""
    interior = sets.strictly_interior
    dist = np.full(grid.n_cells, -1, dtype=np.int64)
    if interior.size == 0:
        return dist[sets.cut]
    adj = _active_adjacency(grid, sets).tolil()
    # super-source joined to every interior cell
    n = grid.n_cells
    adj.resize((n + 1, n + 1))
    adj[n, interior] = 1
    adj[interior, n] = 1
    order, pred = breadth_first_order(adj.tocsr(), n, directed=False, return_predecessors=True)
    for node in order[1:]:
        dist[node] = 0 if pred[node] == n else dist[pred[node]] + 1
    return dist[sets.cut]

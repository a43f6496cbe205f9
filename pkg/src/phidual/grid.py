"""Structured triangulated Cartesian background grid.

Every square of the ``n_x`` by ``n_y`` lattice is split along its
lower-left to upper-right diagonal. Vertices are numbered row-major; square
``(i, j)`` owns cells ``2*(j*n_x + i)`` (lower-right triangle) and
``2*(j*n_x + i) + 1`` (upper-left triangle), both counterclockwise.
Local facet ``i`` of a cell is the edge opposite its local vertex ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridError(ValueError):
    pass


class PointOutsideGridError(GridError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    x_min: float = 0.0
    y_min: float = 0.0
    x_max: float = 1.0
    y_max: float = 1.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GridError(f"degenerate bounding box {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.x_max - self.x_min, self.y_max - self.y_min))


@dataclass(frozen=True)
class CellGeometry:
    jacobian: np.ndarray
    inv_transpose: np.ndarray
    area: float
    normals: np.ndarray
    facet_lengths: np.ndarray


class BackgroundGrid:
    """Triangulated Cartesian grid with full facet connectivity.

    Attributes:
        vertices: ``(V, 2)`` coordinates.
        cells: ``(C, 3)`` vertex indices, counterclockwise.
        facets: ``(E, 2)`` sorted vertex pairs, lexicographically ordered.
        facet_cells: ``(E, 2)`` adjacent cells, ascending, ``-1`` padded.
        cell_facets: ``(C, 3)`` facet opposite each local vertex.
    """

    diagonal = "lower-left->upper-right"

    def __init__(self, bbox: BoundingBox, n_x: int, n_y: int):
        if int(n_x) != n_x or int(n_y) != n_y or n_x < 1 or n_y < 1:
            raise GridError(f"subdivisions must be positive integers, got {n_x}, {n_y}")
        self.bbox = bbox
        self.n_x = int(n_x)
        self.n_y = int(n_y)
        self.dx = (bbox.x_max - bbox.x_min) / self.n_x
        self.dy = (bbox.y_max - bbox.y_min) / self.n_y
        self.h = float(np.hypot(self.dx, self.dy))

        xs = bbox.x_min + self.dx * np.arange(self.n_x + 1)
        ys = bbox.y_min + self.dy * np.arange(self.n_y + 1)
        xs[-1], ys[-1] = bbox.x_max, bbox.y_max
        X, Y = np.meshgrid(xs, ys)
        self.vertices = np.column_stack([X.ravel(), Y.ravel()])

        i, j = np.meshgrid(np.arange(self.n_x), np.arange(self.n_y))
        i, j = i.ravel(), j.ravel()
        stride = self.n_x + 1
        v00 = j * stride + i
        v10 = v00 + 1
        v01 = v00 + stride
        v11 = v01 + 1
        cells = np.empty((2 * v00.size, 3), dtype=np.int64)
        cells[0::2] = np.column_stack([v00, v10, v11])
        cells[1::2] = np.column_stack([v00, v11, v01])
        self.cells = cells

        local = np.array([[1, 2], [0, 2], [0, 1]])
        edges = np.sort(cells[:, local], axis=2).reshape(-1, 2)
        facets, inverse = np.unique(edges, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        self.facets = facets
        self.cell_facets = inverse.reshape(-1, 3)

        owner = np.repeat(np.arange(cells.shape[0]), 3)
        order = np.lexsort((owner, inverse))
        sorted_facets = inverse[order]
        sorted_owner = owner[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = sorted_facets[1:] != sorted_facets[:-1]
        facet_cells = np.full((facets.shape[0], 2), -1, dtype=np.int64)
        facet_cells[sorted_facets[first], 0] = sorted_owner[first]
        facet_cells[sorted_facets[~first], 1] = sorted_owner[~first]
        self.facet_cells = facet_cells

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_facets(self) -> int:
        return self.facets.shape[0]

    @cached_property
    def jacobians(self) -> np.ndarray:
        p = self.vertices[self.cells]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)

    @cached_property
    def dets(self) -> np.ndarray:
        J = self.jacobians
        return J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]

    @cached_property
    def inv_transposes(self) -> np.ndarray:
        J = self.jacobians
        d = self.dets
        out = np.empty_like(J)
        out[:, 0, 0] = J[:, 1, 1] / d
        out[:, 0, 1] = -J[:, 1, 0] / d
        out[:, 1, 0] = -J[:, 0, 1] / d
        out[:, 1, 1] = J[:, 0, 0] / d
        return out

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.abs(self.dets)

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.cells]
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
        return lengths.max(axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def outward_normals(self) -> np.ndarray:
        """``(C, 3, 2)`` outward unit normal through each local facet."""
        p = self.vertices[self.cells]
        a = p[:, [1, 0, 0]]
        b = p[:, [2, 2, 1]]
        e = b - a
        n = np.stack([e[..., 1], -e[..., 0]], axis=-1)
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        sign = np.sign(np.einsum("cfd,cfd->cf", n, a - p))
        return n * sign[..., None]

    @cached_property
    def facet_lengths(self) -> np.ndarray:
        p = self.vertices[self.facets]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    def cell_geometry(self, cell: int) -> CellGeometry:
        return CellGeometry(
            jacobian=self.jacobians[cell],
            inv_transpose=self.inv_transposes[cell],
            area=float(self.areas[cell]),
            normals=self.outward_normals[cell],
            facet_lengths=self.facet_lengths[self.cell_facets[cell]],
        )

    def local_facet_index(self, facet: int, cell: int) -> int:
        hit = np.flatnonzero(self.cell_facets[cell] == facet)
        if hit.size == 0:
            raise GridError(f"facet {facet} does not belong to cell {cell}")
        return int(hit[0])

    def facet_orientation(self, facet: int, cell: int) -> np.ndarray:
        """Outward unit normal of ``cell`` through ``facet``."""
        return self.outward_normals[cell, self.local_facet_index(facet, cell)].copy()

    def locate_points(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized point location.

        Returns cell indices ``(P,)`` and barycentric coordinates ``(P, 3)``
        ordered like the cell's vertices. Points on a diagonal go to the
        lower-right triangle.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        bb = self.bbox
        tol = 1e-12 * bb.diameter
        outside = (
            (pts[:, 0] < bb.x_min - tol)
            | (pts[:, 0] > bb.x_max + tol)
            | (pts[:, 1] < bb.y_min - tol)
            | (pts[:, 1] > bb.y_max + tol)
        )
        if outside.any():
            raise PointOutsideGridError(f"point {pts[outside][0]} lies outside {bb}")
        fx = (pts[:, 0] - bb.x_min) / self.dx
        fy = (pts[:, 1] - bb.y_min) / self.dy
        i = np.clip(np.floor(fx).astype(np.int64), 0, self.n_x - 1)
        j = np.clip(np.floor(fy).astype(np.int64), 0, self.n_y - 1)
        s = np.clip(fx - i, 0.0, 1.0)
        t = np.clip(fy - j, 0.0, 1.0)
        upper = t > s
        cells = 2 * (j * self.n_x + i) + upper
        bary = np.where(
            upper[:, None],
            np.column_stack([1.0 - t, s, t - s]),
            np.column_stack([1.0 - s, s - t, t]),
        )
        return cells, bary

    def locate_point(self, x) -> tuple[int, np.ndarray]:
        cells, bary = self.locate_points(np.asarray(x, dtype=float)[None, :])
        return int(cells[0]), bary[0]

    def cell_neighbors(self) -> np.ndarray:
        """``(C, 3)`` neighbor through each local facet, ``-1`` on the bbox boundary."""
        fc = self.facet_cells[self.cell_facets]
        own = np.arange(self.n_cells)[:, None]
        return np.where(fc[..., 0] == own, fc[..., 1], fc[..., 0])


def build_grid(bbox: BoundingBox, n_x: int, n_y: int | None = None) -> BackgroundGrid:
    return BackgroundGrid(bbox, n_x, n_x if n_y is None else n_y)

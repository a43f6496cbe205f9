"""Error norms over {phi < 0}, the mesh-dependent triple norm, coercivity
sampling and convergence-rate fitting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import SchemeParams, assemble_terms, bilinear_matrix
from .fem import map_points, triangle_quadrature
from .geometry import CellSets, LevelSet
from .grid import BackgroundGrid


class VerificationError(ValueError):
    pass


@dataclass
class ErrorReport:
    h: float
    err_l2_rel: float
    err_h1_rel: float
    err_l2_abs: float = 0.0
    err_h1_abs: float = 0.0
    n_dofs_u: int = 0
    n_dofs_p: int = 0
    triple: dict = field(default_factory=dict)
    kappa: float | None = None


@dataclass(frozen=True)
class PointCloud:
    """Flattened quadrature points: owning cell, barycentric coordinates, weights."""

    cells: np.ndarray
    bary: np.ndarray
    weights: np.ndarray
    points: np.ndarray


def _subdivide(levels: int) -> np.ndarray:
    """Barycentric vertices ``(4**levels, 3, 3)`` of congruent sub-triangles."""
    tris = np.eye(3)[None]
    for _ in range(levels):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        tris = np.concatenate(
            [
                np.stack([a, ab, ca], 1),
                np.stack([ab, b, bc], 1),
                np.stack([ca, bc, c], 1),
                np.stack([ab, bc, ca], 1),
            ]
        )
    return tris


def omega_quadrature(grid: BackgroundGrid, sets: CellSets, levelset: LevelSet, degree: int,
                     subdivision: int = 2) -> PointCloud:
    """Quadrature for integrals over Omega = {phi < 0} restricted to Omega_h.

    Strictly interior cells use the plain rule. Cut cells are split into
    ``4**subdivision`` sub-triangles and only points with analytic
    ``phi < 0`` are kept.
    """
    rule = triangle_quadrature(degree)
    inner = sets.strictly_interior
    cells = [np.repeat(inner, len(rule))]
    bary = [np.tile(rule.points, (inner.size, 1))]
    weights = [np.outer(np.abs(grid.dets[inner]), rule.weights).ravel()]

    cut = sets.cut
    if cut.size:
        subs = _subdivide(subdivision)
        sub_bary = np.einsum("qa,sab->sqb", rule.points, subs).reshape(-1, 3)
        sub_w = np.tile(rule.weights, len(subs)) / len(subs)
        pts = map_points(grid, cut, sub_bary)
        keep = levelset.value(pts) < 0
        cc, qq = np.nonzero(keep)
        cells.append(cut[cc])
        bary.append(sub_bary[qq])
        weights.append(np.abs(grid.dets[cut[cc]]) * sub_w[qq])

    cells = np.concatenate(cells)
    bary = np.concatenate(bary)
    weights = np.concatenate(weights)
    order = np.lexsort((np.arange(cells.size), cells))
    cells, bary, weights = cells[order], bary[order], weights[order]
    points = np.einsum("pa,pad->pd", bary, grid.vertices[grid.cells[cells]])
    return PointCloud(cells, bary, weights, points)


def _eval_field(solution, cells, bary):
    v, g = solution.evaluate(cells, bary[:, None, :])
    return v[:, 0], g[:, 0]


def _norms(w, e_val, e_grad, ref_val, ref_grad):
    l2 = np.sqrt(np.sum(w * e_val**2))
    h1 = np.sqrt(np.sum(w * np.sum(e_grad**2, axis=-1)))
    l2_ref = np.sqrt(np.sum(w * ref_val**2))
    h1_ref = np.sqrt(np.sum(w * np.sum(ref_grad**2, axis=-1)))
    l2_rel = l2 / l2_ref if l2_ref > 0 else l2
    h1_rel = h1 / h1_ref if h1_ref > 0 else h1
    return float(l2), float(h1), float(l2_rel), float(h1_rel)


def compute_errors(solution, u_exact, grad_exact, grid: BackgroundGrid, sets: CellSets, levelset: LevelSet,
                   subdivision: int = 2, degree: int = 8) -> ErrorReport:
    """Relative L2 and H1-seminorm errors of ``solution`` against an analytic solution."""
    if u_exact is None or grad_exact is None:
        raise VerificationError("an exact solution and its gradient are required")
    pc = omega_quadrature(grid, sets, levelset, degree, subdivision)
    uh, gh = _eval_field(solution, pc.cells, pc.bary)
    ue = np.asarray(u_exact(pc.points), dtype=float)
    ge = np.asarray(grad_exact(pc.points), dtype=float)
    l2, h1, l2r, h1r = _norms(pc.weights, uh - ue, gh - ge, ue, ge)
    return ErrorReport(h=grid.h, err_l2_rel=l2r, err_h1_rel=h1r, err_l2_abs=l2, err_h1_abs=h1)


def compute_errors_vs_reference(solution, reference, ref_sets: CellSets, levelset: LevelSet,
                                subdivision: int = 2, degree: int = 8) -> ErrorReport:
    """Errors of a coarse solution against a discrete reference on a finer
    grid of the same family; the coarse field is evaluated at the fine
    quadrature points by point location."""
    fine = reference.grid
    coarse = solution.grid
    pc = omega_quadrature(fine, ref_sets, levelset, degree, subdivision)
    ur, gr = _eval_field(reference, pc.cells, pc.bary)
    cells, bary = coarse.locate_points(pc.points)
    ok = solution.defined_on(cells)
    uh = np.full(cells.size, np.nan)
    gh = np.full((cells.size, 2), np.nan)
    uh[ok], gh[ok] = _eval_field(solution, cells[ok], bary[ok])
    w = pc.weights[ok]
    l2, h1, l2r, h1r = _norms(w, uh[ok] - ur[ok], gh[ok] - gr[ok], ur[ok], gr[ok])
    return ErrorReport(h=coarse.h, err_l2_rel=l2r, err_h1_rel=h1r, err_l2_abs=l2, err_h1_abs=h1)


def triple_norm_terms(grid, dls, sets, maps, params: SchemeParams | None = None) -> dict:
    """Quadratic-form matrices of the triple norm over ``(u; p)``."""
    base = params or SchemeParams()
    unit = SchemeParams(
        gamma=1.0, sigma_d=1.0, k=maps[0].degree, l=dls.degree, second_order_stab=True,
        local_h=base.local_h, volume_degree=base.volume_degree, penalty_degree=base.penalty_degree,
        facet_degree=base.facet_degree,
    )
    terms = assemble_terms(grid, dls, sets, maps[0], maps[1], unit)
    terms.pop("boundary")
    return terms


def triple_norm_components(u_vec, p_vec, grid, dls, sets, maps, terms: dict | None = None) -> dict:
    u_vec = np.asarray(u_vec, dtype=float)
    p_vec = np.asarray(p_vec, dtype=float)
    if u_vec.shape != (maps[0].n_dofs,) or p_vec.shape != (maps[1].n_dofs,):
        raise VerificationError(
            f"vector sizes {u_vec.shape}, {p_vec.shape} do not match DOF counts "
            f"{maps[0].n_dofs}, {maps[1].n_dofs}"
        )
    terms = terms or triple_norm_terms(grid, dls, sets, maps)
    x = np.concatenate([u_vec, p_vec])
    return {name: float(x @ (A @ x)) for name, A in terms.items()}


def triple_norm(u_vec, p_vec, grid, dls, sets, maps, terms: dict | None = None) -> float:
    """``sqrt(|u|_1^2 + h^-2 ||u - phi_h p / h||^2 + h sum ||[du/dn]||^2 + h^2 ||Lap u||^2)``."""
    comps = triple_norm_components(u_vec, p_vec, grid, dls, sets, maps, terms)
    return float(np.sqrt(max(sum(comps.values()), 0.0)))


@dataclass(frozen=True)
class CoercivityResult:
    min_ratio: float
    argmin_sample: int
    ratios: np.ndarray
    worst_vector: np.ndarray


def coercivity_ratio(grid, dls, sets, maps, params: SchemeParams, n_samples: int = 100,
                     seed: int = 0) -> CoercivityResult:
    """Minimum of ``a_h(x, x) / |||x|||^2`` over seeded Gaussian samples ``x = (u, p)``."""
    terms = assemble_terms(grid, dls, sets, maps[0], maps[1], params)
    A = bilinear_matrix(terms)
    N = bilinear_matrix(triple_norm_terms(grid, dls, sets, maps, params))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((A.shape[0], n_samples))
    norms = np.einsum("is,is->s", X, N @ X)
    X = X / np.sqrt(norms)
    ratios = np.einsum("is,is->s", X, A @ X)
    i = int(np.argmin(ratios))
    return CoercivityResult(float(ratios[i]), i, ratios, X[:, i].copy())


def fit_rate(points) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise VerificationError("need at least two (h, error) pairs")
    if not np.all(pts > 0):
        raise VerificationError("h and error values must be positive")
    slope, _ = np.polyfit(np.log(pts[:, 0]), np.log(pts[:, 1]), 1)
    return float(slope)

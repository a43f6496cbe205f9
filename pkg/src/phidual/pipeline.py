"""One-call drivers: build, classify, assemble, solve and measure a case."""
from __future__ import annotations

import time
from dataclasses import dataclass

from .assembly import LinearSystem, SchemeParams, SourceAndData, assemble
from .cases import TestCase
from .fem import build_dofmaps
from .geometry import CellSets, DiscreteLevelSet, classify, interpolate_levelset
from .grid import BackgroundGrid, BoundingBox, build_grid
from .solver import SolveReport, solve
from .verification import ErrorReport, compute_errors, compute_errors_vs_reference


@dataclass
class Discretization:
    grid: BackgroundGrid
    dls: DiscreteLevelSet
    sets: CellSets
    maps: tuple


@dataclass
class Run:
    case: TestCase
    variant: str
    params: SchemeParams
    disc: Discretization
    system: LinearSystem
    report: SolveReport
    u_field: object
    p_field: object

    @property
    def grid(self) -> BackgroundGrid:
        return self.disc.grid


def discretize(case: TestCase, n: int, k: int, l: int, bbox: BoundingBox | None = None) -> Discretization:
    grid = build_grid(bbox or BoundingBox(), n, n)
    dls = interpolate_levelset(case.levelset, grid, l)
    sets = classify(dls)
    return Discretization(grid, dls, sets, build_dofmaps(grid, sets, k))


def run_case(case: TestCase, n: int, params: SchemeParams, variant: str = "dual",
             bbox: BoundingBox | None = None, tol: float = 1e-10) -> Run:
    t0 = time.perf_counter()
    disc = discretize(case, n, params.k, params.levelset_degree, bbox)
    data = SourceAndData(case.f, case.u_d)
    system = assemble(variant, disc.grid, disc.dls, disc.sets, disc.maps, params, data)
    assemble_ms = 1e3 * (time.perf_counter() - t0)
    report = solve(system, tol=tol, assemble_ms=assemble_ms)
    u_field, p_field = system.fields(report.solution)
    return Run(case, variant, params, disc, system, report, u_field, p_field)


def measure(run: Run, subdivision: int = 2, reference: Run | None = None) -> ErrorReport:
    disc = run.disc
    if reference is not None:
        rep = compute_errors_vs_reference(
            run.u_field, reference.u_field, reference.disc.sets, run.case.levelset, subdivision
        )
    else:
        rep = compute_errors(
            run.u_field, run.case.u_exact, run.case.grad_exact, disc.grid, disc.sets, run.case.levelset, subdivision
        )
    rep.n_dofs_u = run.system.n_u
    rep.n_dofs_p = run.system.n_p
    return rep


def params_for(case: TestCase, k: int = 1, l: int | None = None, gamma: float | None = None,
               sigma_d: float | None = None, **extra) -> SchemeParams:
    return SchemeParams(
        gamma=case.gamma if gamma is None else gamma,
        sigma_d=case.sigma_d if sigma_d is None else sigma_d,
        k=k,
        l=k if l is None else l,
        **extra,
    )


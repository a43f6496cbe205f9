"""Result files: legacy ASCII VTK fields and CSV study tables."""
from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import BackgroundGrid

VTK_TRIANGLE = 5


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def vtk_text(grid: BackgroundGrid, cells=None, point_data=None, cell_data=None,
             title: str = "phidual") -> str:
    """Legacy ASCII UNSTRUCTURED_GRID of the given cells (default: all).

    ``point_data`` arrays are indexed by grid vertex, ``cell_data`` arrays
    by position in ``cells``. Only vertices used by ``cells`` are written.
    """
    cells = np.arange(grid.n_cells) if cells is None else np.asarray(cells)
    conn = grid.cells[cells]
    used = np.unique(conn)
    renum = np.full(grid.n_vertices, -1, dtype=np.int64)
    renum[used] = np.arange(used.size)
    out = io.StringIO()
    out.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {used.size} double\n")
    for x, y in grid.vertices[used]:
        out.write(f"{x:.16g} {y:.16g} 0\n")
    out.write(f"CELLS {cells.size} {4 * cells.size}\n")
    for a, b, c in renum[conn]:
        out.write(f"3 {a} {b} {c}\n")
    out.write(f"CELL_TYPES {cells.size}\n")
    out.write(f"{VTK_TRIANGLE}\n" * cells.size)
    if point_data:
        out.write(f"POINT_DATA {used.size}\n")
        for name, vals in point_data.items():
            _scalars(out, name, np.asarray(vals, dtype=float)[used])
    if cell_data:
        out.write(f"CELL_DATA {cells.size}\n")
        for name, vals in cell_data.items():
            _scalars(out, name, np.asarray(vals, dtype=float))
    return out.getvalue()


def _scalars(out, name, vals):
    out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
    for v in vals:
        out.write(f"{v:.16g}\n")


def write_solution_vtk(path, run) -> None:
    """``u_h`` and ``phi_h`` as point data on Omega_h, cut indicator and the
    cell mean of ``p_h`` as cell data."""
    disc = run.disc
    grid, sets = disc.grid, disc.sets
    active = sets.active
    cut_mask = sets.cut_mask()[active]
    p_mean = np.zeros(active.size)
    if run.p_field is not None and sets.cut.size:
        pm = run.p_field.dofmap
        coef = run.p_field.coefficients[pm.cell_dofs[active[cut_mask]]]
        p_mean[cut_mask] = coef.mean(axis=1)
    atomic_write(
        path,
        vtk_text(
            grid,
            active,
            point_data={"u_h": run.u_field.vertex_values(), "phi_h": disc.dls.values[: grid.n_vertices]},
            cell_data={"cut": cut_mask.astype(float), "p_h": p_mean},
            title=f"{run.case.name} {run.variant} n={grid.n_x}",
        ),
    )


@dataclass
class StudyRow:
    variant: str
    n: int
    h: float
    n_dofs_u: int
    n_dofs_p: int
    err_l2_rel: float | None = None
    err_h1_rel: float | None = None
    cond_full: float | None = None
    cond_uu: float | None = None
    assemble_ms: float = 0.0
    solve_ms: float = 0.0


RESULT_COLUMNS = ["variant", "n", "h", "n_dofs_u", "n_dofs_p", "err_l2_rel", "err_h1_rel", "cond_full", "cond_uu"]
TIMING_COLUMNS = ["variant", "n", "assemble_ms", "solve_ms"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10e}"
    return str(v)


def csv_text(rows, columns, header: dict | None = None, footer=None) -> str:
    buf = io.StringIO()
    for key, val in (header or {}).items():
        buf.write(f"# {key}={val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(getattr(row, c)) for c in columns])
    for label, variant, value in footer or []:
        buf.write(f"#{label},{variant},{_fmt(value)}\n")
    return buf.getvalue()


def read_study_csv(path) -> tuple[list[dict], dict]:
    """Rows and footer slopes of a study CSV."""
    rows, footer = [], {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    for rec in csv.DictReader(body):
        rows.append(rec)
    for ln in lines:
        if ln.startswith("#slope"):
            label, variant, value = ln[1:].split(",")
            footer[(label, variant)] = float(value)
    return rows, footer

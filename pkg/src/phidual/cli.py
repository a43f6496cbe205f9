"""Command-line front end.

    phidual solve --case disk-poly --n 32 --k 1
    phidual convergence --case disk-exp --ns 16,32,64,128 --k 2
    phidual condition --case disk-poly --ns 8,16,32,64
    phidual cases
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .assembly import export_matrix_market
from .cases import CASES, UnknownCaseError, get_case
from .geometry import EmptyDomainError
from .grid import BoundingBox, GridError
from .output import RESULT_COLUMNS, TIMING_COLUMNS, StudyRow, atomic_write, csv_text, write_solution_vtk
from .pipeline import measure, params_for, run_case
from .solver import NotConvergedError, SolverError, condition_estimate
from .verification import fit_rate

logger = logging.getLogger("phidual")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    case: str = "disk-exp"
    gamma: float | None = None
    sigma_d: float | None = None
    k: int = 1
    l: int | None = None
    bbox: list = field(default_factory=lambda: [0.0, 0.0, 1.0, 1.0])
    ns: list = field(default_factory=lambda: [16])
    variants: list = field(default_factory=lambda: ["dual"])
    volume_degree: int | None = None
    penalty_degree: int | None = None
    facet_degree: int | None = None
    subdivision: int = 2
    ref_factor: int = 4
    tol: float = 1e-10
    cond_tol: float = 0.01
    condition: bool = False
    out: str = "results"
    seed: int = 0
    vtk: bool = False
    matrix: bool = False

    def validate(self) -> "RunConfig":
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; known cases: {', '.join(sorted(CASES))}")
        if self.k not in (1, 2):
            raise ConfigError(f"k must be 1 or 2, got {self.k}")
        if self.l is not None and self.l not in (1, 2):
            raise ConfigError(f"l must be 1 or 2, got {self.l}")
        if not self.ns or any(int(n) != n or n < 1 for n in self.ns):
            raise ConfigError(f"subdivisions must be positive integers, got {self.ns}")
        if any(b <= a for a, b in zip(self.ns, self.ns[1:])):
            raise ConfigError(f"subdivisions must be strictly increasing, got {self.ns}")
        bad = [v for v in self.variants if v not in ("dual", "direct")]
        if bad or not self.variants:
            raise ConfigError(f"variant must be 'dual' or 'direct', got {self.variants}")
        for name in ("gamma", "sigma_d"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ConfigError(f"{name} must be positive, got {val}")
        if len(self.bbox) != 4:
            raise ConfigError(f"bbox needs 4 numbers, got {self.bbox}")
        try:
            BoundingBox(*self.bbox)
        except GridError as exc:
            raise ConfigError(str(exc)) from exc
        if self.ref_factor < 2:
            raise ConfigError("ref_factor must be at least 2")
        return self

    def effective(self) -> dict:
        """Configuration with case defaults applied."""
        case = get_case(self.case)
        d = asdict(self)
        d["gamma"] = case.gamma if self.gamma is None else self.gamma
        d["sigma_d"] = case.sigma_d if self.sigma_d is None else self.sigma_d
        d["l"] = self.k if self.l is None else self.l
        return d

    def digest(self) -> str:
        d = self.effective()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        if "n" in data:
            data["ns"] = [data.pop("n")]
        if "variant" in data:
            v = data.pop("variant")
            data["variants"] = [v] if isinstance(v, str) else list(v)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        return cls(**data)


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _variants(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file; flags override its values")
    common.add_argument("--case")
    common.add_argument("--n", type=int)
    common.add_argument("--ns", type=_ints)
    common.add_argument("--k", type=int)
    common.add_argument("--l", type=int)
    common.add_argument("--gamma", type=float)
    common.add_argument("--sigma-d", dest="sigma_d", type=float)
    common.add_argument("--variant", type=_variants, help="dual, direct or dual,direct")
    common.add_argument("--out")
    common.add_argument("--seed", type=int)
    common.add_argument("--subdivision", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--vtk", action="store_true", default=None, help="write VTK fields")
    common.add_argument("--matrix", action="store_true", default=None, help="write MatrixMarket matrices")
    common.add_argument("--cond", dest="condition", action="store_true", default=None,
                        help="estimate condition numbers in solve/convergence")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="phidual", description="Penalized phi-FEM solver and verification studies")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="single solve with error report")
    sub.add_parser("convergence", parents=[common], help="error study over several n")
    sub.add_parser("condition", parents=[common], help="condition number study over several n")
    sub.add_parser("cases", parents=[common], help="list built-in cases")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a JSON object")
    cfg = RunConfig.from_dict(data)
    for name in ("case", "k", "l", "gamma", "sigma_d", "out", "seed", "subdivision", "tol", "vtk", "matrix",
                 "condition"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    if args.n is not None:
        cfg.ns = [args.n]
    if args.ns is not None:
        cfg.ns = args.ns
    if args.variant is not None:
        cfg.variants = args.variant
    return cfg.validate()


def _header(cfg: RunConfig, command: str) -> dict:
    eff = cfg.effective()
    return {
        "phidual": __version__,
        "command": command,
        "config_hash": cfg.digest(),
        "case": cfg.case,
        "gamma": eff["gamma"],
        "sigma_d": eff["sigma_d"],
        "k": eff["k"],
        "l": eff["l"],
    }


def _params(cfg: RunConfig, case):
    return params_for(case, k=cfg.k, l=cfg.l, gamma=cfg.gamma, sigma_d=cfg.sigma_d,
                      volume_degree=cfg.volume_degree, penalty_degree=cfg.penalty_degree,
                      facet_degree=cfg.facet_degree)


def _conditions(run, cfg: RunConfig):
    full = condition_estimate(run.system, tol=cfg.cond_tol, seed=cfg.seed).kappa
    A_uu = run.system.blocks()[0]
    uu = condition_estimate(A_uu, tol=cfg.cond_tol, seed=cfg.seed).kappa
    return full, uu


def _study(cfg: RunConfig, with_errors: bool = True, with_cond: bool = False):
    """Solve every (variant, n); rows come back in variant-then-n order."""
    case = get_case(cfg.case)
    params = _params(cfg, case)
    bbox = BoundingBox(*cfg.bbox)
    reference = None
    if with_errors and not case.has_exact:
        n_ref = cfg.ref_factor * max(cfg.ns)
        logger.info("reference solve at n=%d", n_ref)
        reference = run_case(case, n_ref, params, "dual", bbox, cfg.tol)
    rows, runs = [], []
    for variant in cfg.variants:
        for n in cfg.ns:
            run = run_case(case, n, params, variant, bbox, cfg.tol)
            row = StudyRow(variant, n, run.grid.h, run.system.n_u, run.system.n_p,
                           assemble_ms=run.report.assemble_ms, solve_ms=run.report.solve_ms)
            if with_errors:
                err = measure(run, cfg.subdivision, reference)
                row.err_l2_rel, row.err_h1_rel = err.err_l2_rel, err.err_h1_rel
            if with_cond:
                try:
                    row.cond_full, row.cond_uu = _conditions(run, cfg)
                except NotConvergedError as exc:
                    logger.warning("n=%d %s: %s", n, variant, exc)
            logger.info("%s n=%d l2=%s h1=%s", variant, n, row.err_l2_rel, row.err_h1_rel)
            rows.append(row)
            runs.append(run)
    return rows, runs


def _write_tables(out: Path, stem: str, cfg, command, rows, columns, footer=None):
    atomic_write(out / f"{stem}.csv", csv_text(rows, columns, _header(cfg, command), footer))
    atomic_write(out / f"{stem}_timings.csv", csv_text(rows, TIMING_COLUMNS))
    atomic_write(out / "config.json", json.dumps(cfg.effective(), indent=2, sort_keys=True) + "\n")


def _slopes(rows, variant, attr):
    pts = [(r.h, getattr(r, attr)) for r in rows if r.variant == variant and getattr(r, attr)]
    return fit_rate(pts) if len(pts) >= 2 else None


def cmd_solve(cfg: RunConfig) -> int:
    if len(cfg.ns) != 1:
        raise ConfigError("solve takes a single --n")
    out = Path(cfg.out)
    rows, runs = _study(cfg, with_cond=cfg.condition)
    _write_tables(out, "solve", cfg, "solve", rows, RESULT_COLUMNS)
    for row, run in zip(rows, runs):
        write_solution_vtk(out / f"solution_{row.variant}_n{row.n}.vtk", run)
        if cfg.matrix:
            export_matrix_market(run.system, out / f"matrix_{row.variant}_n{row.n}.mtx")
        print(
            f"{cfg.case} {row.variant} n={row.n} h={row.h:.4g} dofs u={row.n_dofs_u} p={row.n_dofs_p} "
            f"L2_rel={row.err_l2_rel:.3e} H1_rel={row.err_h1_rel:.3e} residual={run.report.residual:.1e} "
            f"assemble={row.assemble_ms:.0f}ms solve={row.solve_ms:.0f}ms"
        )
    return EXIT_OK


def cmd_convergence(cfg: RunConfig) -> int:
    if len(cfg.ns) < 3:
        raise ConfigError("convergence needs at least three --ns values")
    out = Path(cfg.out)
    rows, runs = _study(cfg, with_cond=cfg.condition)
    footer = []
    for variant in cfg.variants:
        footer.append(("slope_l2", variant, _slopes(rows, variant, "err_l2_rel")))
        footer.append(("slope_h1", variant, _slopes(rows, variant, "err_h1_rel")))
    _write_tables(out, "convergence", cfg, "convergence", rows, RESULT_COLUMNS, footer)
    if cfg.vtk:
        for row, run in zip(rows, runs):
            write_solution_vtk(out / f"solution_{row.variant}_n{row.n}.vtk", run)
    for row in rows:
        print(f"{row.variant:6s} n={row.n:4d} h={row.h:.4e} L2={row.err_l2_rel:.4e} H1={row.err_h1_rel:.4e}")
    for label, variant, value in footer:
        print(f"{label} [{variant}] = {value:.3f}")
    return EXIT_OK


def cmd_condition(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    rows, _ = _study(cfg, with_errors=False, with_cond=True)
    footer = []
    for variant in cfg.variants:
        footer.append(("slope_cond", variant, _slopes(rows, variant, "cond_full")))
        footer.append(("slope_cond_uu", variant, _slopes(rows, variant, "cond_uu")))
    footer = [f for f in footer if f[2] is not None]
    columns = ["variant", "n", "h", "cond_full", "cond_uu"]
    _write_tables(out, "condition", cfg, "condition", rows, columns, footer)
    for row in rows:
        print(f"{row.variant:6s} n={row.n:4d} h={row.h:.4e} cond={row.cond_full} cond_uu={row.cond_uu}")
    for label, variant, value in footer:
        print(f"{label} [{variant}] = {value:.3f}")
    return EXIT_OK


def cmd_cases(cfg: RunConfig | None = None) -> int:
    for name in sorted(CASES):
        case = get_case(name)
        exact = "exact" if case.has_exact else "reference"
        print(f"{name:14s} gamma={case.gamma:g} sigma_d={case.sigma_d:g} ({exact}) {case.description}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "condition": cmd_condition}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "cases":
        return cmd_cases()
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, UnknownCaseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, EmptyDomainError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

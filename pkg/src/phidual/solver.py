"""Sparse direct solve and 2-norm condition number estimation."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    pass


class NotConvergedError(SolverError):
    pass


@dataclass(frozen=True)
class SolveReport:
    solution: np.ndarray
    n_u: int
    residual: float
    refinements: int
    nnz_factor: int
    assemble_ms: float
    solve_ms: float

    @property
    def u(self) -> np.ndarray:
        return self.solution[: self.n_u]

    @property
    def p(self) -> np.ndarray:
        return self.solution[self.n_u :]


def _as_matrix(system) -> sp.csc_matrix:
    A = getattr(system, "matrix", system)
    return sp.csc_matrix(A)


def factorize(A: sp.spmatrix):
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise SolverError(f"expected a non-empty square matrix, got shape {A.shape}")
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse LU failed: {exc}") from exc
    pivots = np.abs(lu.U.diagonal())
    scale = max(spla.norm(A, 1), np.finfo(float).tiny)
    smallest = pivots.min()
    if not np.isfinite(pivots).all() or smallest <= 1e-15 * scale:
        raise SingularSystemError(
            f"numerically singular matrix: smallest pivot {smallest:.3e} (norm {scale:.3e})"
        )
    return lu


def solve(system, tol: float = 1e-10, max_refinements: int = 5, assemble_ms: float = 0.0) -> SolveReport:
    """Direct sparse LU with iterative refinement until the relative
    residual is below ``tol``."""
    return solve_matrix(system.matrix, system.rhs, tol=tol, max_refinements=max_refinements,
                        n_u=system.n_u, assemble_ms=assemble_ms)


def solve_matrix(A, b, tol: float = 1e-10, max_refinements: int = 5, n_u: int | None = None,
                 assemble_ms: float = 0.0) -> SolveReport:
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    t0 = time.perf_counter()
    lu = factorize(A)
    bnorm = np.linalg.norm(b)
    x = lu.solve(b)
    r = b - A @ x
    res = np.linalg.norm(r) / bnorm if bnorm > 0 else np.linalg.norm(r)
    steps = 0
    while res > tol and steps < max_refinements:
        x = x + lu.solve(r)
        r = b - A @ x
        res = np.linalg.norm(r) / bnorm if bnorm > 0 else np.linalg.norm(r)
        steps += 1
    elapsed = 1e3 * (time.perf_counter() - t0)
    if not np.isfinite(res) or res > tol:
        raise NotConvergedError(f"relative residual {res:.3e} above tolerance {tol:.1e} after {steps} refinements")
    return SolveReport(
        solution=x,
        n_u=A.shape[0] if n_u is None else n_u,
        residual=float(res),
        refinements=steps,
        nnz_factor=int(lu.L.nnz + lu.U.nnz),
        assemble_ms=assemble_ms,
        solve_ms=elapsed,
    )


@dataclass(frozen=True)
class ConditionEstimate:
    kappa: float
    sigma_max: float
    sigma_min: float
    iterations: int

    def __float__(self):
        return self.kappa


def _power(apply, n, rng, tol, maxiter, label):
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for it in range(1, maxiter + 1):
        y = apply(x)
        new = float(x @ y)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0, it
        x = y / norm
        if it > 1 and abs(new - lam) <= tol * abs(new):
            return new, it
        lam = new
    raise NotConvergedError(f"{label} power iteration not converged after {maxiter} iterations")


def condition_estimate(system, tol: float = 0.01, seed: int = 0, maxiter: int = 10_000) -> ConditionEstimate:
    """Estimate ``kappa_2(A) = sigma_max / sigma_min``.

    ``sigma_max^2`` comes from power iteration on ``A^T A`` and
    ``sigma_min^{-2}`` from power iteration on ``A^{-1} A^{-T}``, both
    matrix-free. The eigenvalue iterations stop on a relative change of
    ``tol / 1000`` so the ratio meets ``tol``.
    """
    A = _as_matrix(system)
    n = A.shape[0]
    lu = factorize(A)
    AT = A.T.tocsc()
    rng = np.random.default_rng(seed)
    inner_tol = tol / 1000.0
    lam_max, it1 = _power(lambda x: AT @ (A @ x), n, rng, inner_tol, maxiter, "sigma_max")
    lam_inv, it2 = _power(lambda x: lu.solve(lu.solve(x, trans="T")), n, rng, inner_tol, maxiter, "sigma_min")
    if lam_inv <= 0:
        raise SingularSystemError("inverse iteration collapsed")
    s_max = np.sqrt(lam_max)
    s_min = 1.0 / np.sqrt(lam_inv)
    return ConditionEstimate(float(s_max / s_min), float(s_max), float(s_min), it1 + it2)

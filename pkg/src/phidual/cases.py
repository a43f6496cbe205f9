"""Built-in test cases addressed by name."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import LevelSet, disk_levelset, tc1_levelset

PointFunction = Callable[[np.ndarray], np.ndarray]

DISK_CENTER = (0.5, 0.5)
DISK_RADIUS = 0.3125


class UnknownCaseError(KeyError):
    pass


@dataclass(frozen=True)
class TestCase:
    name: str
    levelset: LevelSet
    f: PointFunction
    u_d: PointFunction | None = None
    u_exact: PointFunction | None = None
    grad_exact: PointFunction | None = None
    gamma: float = 100.0
    sigma_d: float = 0.1
    description: str = ""

    __test__ = False  # not a pytest class

    @property
    def has_exact(self) -> bool:
        return self.u_exact is not None


def _disk_phi(p):
    return (p[..., 0] - DISK_CENTER[0]) ** 2 + (p[..., 1] - DISK_CENTER[1]) ** 2 - DISK_RADIUS**2


def _disk_phi_grad(p):
    return np.stack([2 * (p[..., 0] - DISK_CENTER[0]), 2 * (p[..., 1] - DISK_CENTER[1])], axis=-1)


def _tc1() -> TestCase:
    return TestCase(
        name="tc1",
        levelset=tc1_levelset(),
        f=lambda p: np.cos(p[..., 0]) * np.exp(p[..., 1]),
        gamma=100.0,
        sigma_d=0.1,
        description="five-Gaussian product geometry, f = cos(x) exp(y), u = 0 on the boundary",
    )


def _disk_poly() -> TestCase:
    return TestCase(
        name="disk-poly",
        levelset=disk_levelset(DISK_CENTER, DISK_RADIUS),
        f=lambda p: np.full(p.shape[:-1], 4.0),
        u_exact=lambda p: -_disk_phi(p),
        grad_exact=lambda p: -_disk_phi_grad(p),
        gamma=100.0,
        sigma_d=0.1,
        description="disk, u = -phi, f = 4",
    )


def _disk_exp_u(p):
    return 1.0 - np.exp(_disk_phi(p) ** 2)


def _disk_exp_grad(p):
    phi = _disk_phi(p)
    return (-2.0 * phi * np.exp(phi**2))[..., None] * _disk_phi_grad(p)


def _disk_exp_f(p):
    # f = -Lap u = exp(phi^2) (16 phi^2 r^2 + 8 r^2 + 8 phi), r = distance to the center
    phi = _disk_phi(p)
    r2 = phi + DISK_RADIUS**2
    return np.exp(phi**2) * (16 * phi**2 * r2 + 8 * r2 + 8 * phi)


def _disk_exp() -> TestCase:
    return TestCase(
        name="disk-exp",
        levelset=disk_levelset(DISK_CENTER, DISK_RADIUS),
        f=_disk_exp_f,
        u_exact=_disk_exp_u,
        grad_exact=_disk_exp_grad,
        gamma=100.0,
        sigma_d=0.01,
        description="disk, u = 1 - exp(phi^2)",
    )


def _patch_linear() -> TestCase:
    def u(p):
        return p[..., 0] + p[..., 1]

    return TestCase(
        name="patch-linear",
        levelset=disk_levelset(DISK_CENTER, DISK_RADIUS),
        f=lambda p: np.zeros(p.shape[:-1]),
        u_d=u,
        u_exact=u,
        grad_exact=lambda p: np.broadcast_to(np.array([1.0, 1.0]), p.shape).copy(),
        gamma=100.0,
        sigma_d=0.1,
        description="disk, harmonic u = x + y with matching Dirichlet data",
    )


CASES: dict[str, Callable[[], TestCase]] = {
    "tc1": _tc1,
    "disk-poly": _disk_poly,
    "disk-exp": _disk_exp,
    "patch-linear": _patch_linear,
}


def get_case(name: str) -> TestCase:
    try:
        return CASES[name]()
    except KeyError:
        raise UnknownCaseError(f"unknown case {name!r}; known cases: {', '.join(sorted(CASES))}") from None


def list_cases() -> list[str]:
    return sorted(CASES)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_classification, facet_pairs
from phidual.geometry import (
    EmptyDomainError,
    LevelSet,
    affine_levelset,
    classify,
    constant_levelset,
    cut_to_interior_distance,
    disk_levelset,
    halfplane_levelset,
    interpolate_levelset,
    is_connected,
    tc1_levelset,
)
from phidual.grid import BoundingBox, build_grid


def _sets(phi, n, degree=1):
    g = build_grid(BoundingBox(), n)
    return g, classify(interpolate_levelset(phi, g, degree))


def test_tc1_value_at_first_center():
    phi = tc1_levelset()
    assert phi(np.array([0.356, 0.507])) == pytest.approx(-0.5, abs=1e-12)


def test_linear_nodal_values():
    g = build_grid(BoundingBox(), 2)
    dls = interpolate_levelset(affine_levelset(1.0, 0.0, -0.5), g, 1)
    assert set(np.round(dls.values, 14)) == {-0.5, 0.0, 0.5}


def test_p1_barycenter_and_gradient():
    g = build_grid(BoundingBox(), 3)
    dls = interpolate_levelset(affine_levelset(1.0, 0.0, -0.5), g, 1)
    cells = np.arange(g.n_cells)
    vals, grads = dls.evaluate(cells, np.full((1, 3), 1 / 3))
    assert vals[:, 0] == pytest.approx(dls.cell_values().mean(axis=1))
    assert np.allclose(grads[:, 0], [1.0, 0.0], atol=1e-13)


def test_p2_reproduces_quadratics():
    phi = LevelSet("q", lambda p: p[..., 0] ** 2 - 2 * p[..., 0] * p[..., 1] + 0.3 * p[..., 1] - 0.1)
    g = build_grid(BoundingBox(-1.0, -1.0, 1.0, 2.0), 4, 3)
    dls = interpolate_levelset(phi, g, 2)
    rng = np.random.default_rng(5)
    lam = rng.dirichlet(np.ones(3), size=(g.n_cells, 6))
    cells = np.arange(g.n_cells)
    vals, _ = dls.evaluate(cells, lam)
    pts = np.einsum("cqa,cad->cqd", lam, g.vertices[g.cells])
    assert np.allclose(vals, phi(pts), atol=1e-12)


def test_halfplane_example():
    g, s = _sets(halfplane_levelset(), 2)
    assert s.active.size == 8
    assert s.cut.size == 4
    assert s.boundary_facets.size == 8
    assert s.ghost_facets.size == 5
    assert np.all(g.centroids[s.cut, 0] > 0.5)


def test_constant_negative():
    g, s = _sets(constant_levelset(-1.0), 4)
    assert s.active.size == g.n_cells
    assert s.cut.size == 0 and s.ghost_facets.size == 0
    assert np.array_equal(s.boundary_facets, g.boundary_facets)


def test_empty_domain():
    with pytest.raises(EmptyDomainError):
        _sets(constant_levelset(1.0), 4)


def test_disconnected_warning():
    phi = LevelSet("two", lambda p: np.minimum(np.abs(p[..., 0] - 0.1), np.abs(p[..., 0] - 0.9)) - 0.05)
    with pytest.warns(RuntimeWarning):
        _sets(phi, 8)


@pytest.mark.parametrize("n", [4, 8])
def test_matches_oracle(n):
    rng = np.random.default_rng(n)
    g = build_grid(BoundingBox(), n)
    for _ in range(5):
        a, b = rng.normal(size=2)
        c = -(a * rng.uniform(0.2, 0.8) + b * rng.uniform(0.2, 0.8))
        phi = affine_levelset(a, b, c)
        s = classify(interpolate_levelset(phi, g, 1), check_connectivity=False)
        act, cut, bnd, ghost = brute_force_classification(g, phi, m=20)
        assert set(s.active.tolist()) == act
        assert set(s.cut.tolist()) == cut
        assert facet_pairs(g, s.boundary_facets) == bnd
        assert facet_pairs(g, s.ghost_facets) == ghost


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 0.4), st.floats(1e-3, 1e3))
def test_scaling_invariance(radius, lam):
    phi = disk_levelset(radius=radius)
    scaled = LevelSet("scaled", lambda p: lam * phi(p))
    g = build_grid(BoundingBox(), 10)
    s1 = classify(interpolate_levelset(phi, g, 1), check_connectivity=False)
    s2 = classify(interpolate_levelset(scaled, g, 1), check_connectivity=False)
    for name in ("active", "cut", "boundary_facets", "ghost_facets"):
        assert np.array_equal(getattr(s1, name), getattr(s2, name))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.15, 0.4), st.floats(1e-3, 0.5), st.sampled_from([1, 2]))
def test_shrinking_never_adds_active(radius, frac, degree):
    phi = disk_levelset(radius=radius)
    c = frac * radius**2
    shrunk = LevelSet("shrunk", lambda p: phi(p) + c)
    g = build_grid(BoundingBox(), 12)
    s1 = classify(interpolate_levelset(phi, g, degree), check_connectivity=False)
    s2 = classify(interpolate_levelset(shrunk, g, degree), check_connectivity=False)
    assert set(s2.active.tolist()) <= set(s1.active.tolist())


@pytest.mark.parametrize("n", [16, 32, 64])
def test_disk_cut_cells_reach_interior(n):
    g, s = _sets(disk_levelset(), n)
    assert is_connected(g, s)
    d = cut_to_interior_distance(g, s)
    assert np.all(d >= 0)
    assert d.max() <= 3


def test_p2_oversampling_detects_interior_dip():
    # a small disk whose P2 interpolant dips below zero inside a cell
    # while every node stays positive
    g = build_grid(BoundingBox(), 2)
    phi = disk_levelset(center=(1 / 3, 1 / 6), radius=0.08)
    dls = interpolate_levelset(phi, g, 2)
    c = g.locate_point([1 / 3, 1 / 6])[0]
    assert dls.cell_values(np.array([c])).min() > 0
    s = classify(dls, check_connectivity=False)
    assert c in s.active and c in s.cut
    with pytest.raises(EmptyDomainError):
        classify(dls, oversample=None)

from math import factorial

import numpy as np
import pytest

from phidual.fem import (
    LagrangeField,
    UnsupportedDegreeError,
    build_dofmaps,
    continuous_dofmap,
    interpolate,
    map_points,
    physical_gradients,
    reference_element,
    segment_quadrature,
    triangle_quadrature,
)
from phidual.geometry import classify, constant_levelset, halfplane_levelset, interpolate_levelset
from phidual.grid import BoundingBox, build_grid


def _monomial_exact(a, b):
    # integral of x^a y^b over the reference triangle
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("d", range(0, 11))
def test_triangle_rule_exact(d):
    rule = triangle_quadrature(d)
    x, y = rule.points[:, 1], rule.points[:, 2]
    for a in range(d + 1):
        for b in range(d + 1 - a):
            got = rule.weights @ (x**a * y**b)
            assert got == pytest.approx(_monomial_exact(a, b), abs=1e-13)


@pytest.mark.parametrize("d", range(0, 13))
def test_segment_rule_exact(d):
    rule = segment_quadrature(d)
    for a in range(d + 1):
        assert rule.weights @ rule.points**a == pytest.approx(1.0 / (a + 1), abs=1e-13)


def test_hand_quadrature_values():
    r = triangle_quadrature(2)
    assert r.weights.sum() == pytest.approx(0.5, abs=1e-15)
    assert r.weights @ r.points[:, 1] ** 2 == pytest.approx(1 / 12, abs=1e-15)
    s = segment_quadrature(3)
    assert len(s) == 2
    assert s.weights @ s.points**3 == pytest.approx(0.25, abs=1e-15)


def test_unsupported_degrees():
    with pytest.raises(UnsupportedDegreeError):
        triangle_quadrature(11)
    with pytest.raises(UnsupportedDegreeError):
        reference_element(3)


@pytest.mark.parametrize("k", [1, 2])
def test_kronecker_and_partition_of_unity(k):
    el = reference_element(k)
    assert np.allclose(el.values(el.nodes), np.eye(el.n_nodes), atol=1e-15)
    rng = np.random.default_rng(3)
    lam = rng.dirichlet(np.ones(3), size=40)
    assert np.allclose(el.values(lam).sum(axis=-1), 1.0, atol=1e-14)
    assert np.allclose(el.gradients(lam).sum(axis=-2), 0.0, atol=1e-13)


def test_p1_values_and_gradients():
    el = reference_element(1)
    assert el.values(np.full(3, 1 / 3)) == pytest.approx([1 / 3] * 3)
    assert np.array_equal(el.gradients(np.full(3, 1 / 3)), [[-1, -1], [1, 0], [0, 1]])


def test_p2_midpoint_kronecker():
    el = reference_element(2)
    v = el.values(np.array([0.0, 0.5, 0.5]))
    assert v[3] == pytest.approx(1.0)
    assert np.delete(v, 3) == pytest.approx(np.zeros(5), abs=1e-15)


@pytest.mark.parametrize("k", [1, 2])
def test_mapped_gradients_match_finite_differences(k):
    g = build_grid(BoundingBox(-0.5, 0.0, 1.5, 0.7), 3, 2)
    el = reference_element(k)
    rng = np.random.default_rng(11)
    eps = 1e-6
    for c in range(g.n_cells):
        lam = rng.dirichlet(np.ones(3) * 4)
        grads = physical_gradients(g, np.array([c]), el.gradients(lam)[None, None])[0, 0]
        x = map_points(g, np.array([c]), lam[None])[0, 0]
        # invert the affine map to shift the point in physical space
        P = g.vertices[g.cells[c]]
        T = np.column_stack([P[1] - P[0], P[2] - P[0]])

        def basis_at(pt):
            st = np.linalg.solve(T, pt - P[0])
            return el.values(np.array([1 - st.sum(), st[0], st[1]]))

        for d in range(2):
            e = np.zeros(2)
            e[d] = eps
            fd = (basis_at(x + e) - basis_at(x - e)) / (2 * eps)
            assert fd == pytest.approx(grads[:, d], abs=1e-6)


def test_p2_hessians_reproduce_quadratic():
    g = build_grid(BoundingBox(), 3)
    u_map = continuous_dofmap(g, np.arange(g.n_cells), 2)
    coef = interpolate(g, u_map, lambda p: 3 * p[:, 0] ** 2 - p[:, 0] * p[:, 1] + 2 * p[:, 1] ** 2)
    field = LagrangeField(g, u_map, coef)
    assert field.laplacians(np.arange(g.n_cells)) == pytest.approx(np.full(g.n_cells, 10.0))


def test_dofmap_counts_all_active():
    g = build_grid(BoundingBox(), 2)
    sets = classify(interpolate_levelset(constant_levelset(-1.0), g, 1))
    u1, p1 = build_dofmaps(g, sets, 1)
    assert (u1.n_dofs, p1.n_dofs) == (9, 0)
    u2, _ = build_dofmaps(g, sets, 2)
    assert u2.n_dofs == 25


def test_dofmap_halfplane():
    g = build_grid(BoundingBox(), 2)
    sets = classify(interpolate_levelset(halfplane_levelset(), g, 1))
    u, p = build_dofmaps(g, sets, 1)
    assert p.n_dofs == 12
    blocks = p.cell_dofs[p.cells]
    assert np.unique(blocks).size == blocks.size


def test_continuous_dofs_agree_on_shared_facets():
    g = build_grid(BoundingBox(), 4)
    u = continuous_dofmap(g, np.arange(g.n_cells), 2)
    coords = np.zeros((u.n_dofs, 2))
    el = reference_element(2)
    for c in range(g.n_cells):
        coords[u.cell_dofs[c]] = map_points(g, np.array([c]), el.nodes)[0]
    # every dof is placed at one point regardless of the owning cell
    for c in range(g.n_cells):
        assert np.allclose(coords[u.cell_dofs[c]], map_points(g, np.array([c]), el.nodes)[0])
    assert np.unique(np.round(coords, 12), axis=0).shape[0] == u.n_dofs

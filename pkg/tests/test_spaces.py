"""Tests for the discrete spaces: interpolation and projection operators,
pointwise evaluation, enriching operators, and the discrete lifting."""

import numpy as np
import pytest

from crstokes.geometry import unit_ball, unit_disk
from crstokes.mesh import (build_facets, coarse_ball, coarse_disk, refine)
from crstokes.quadrature import map_points, simplex_rule
from crstokes.spaces import (CRFunction, FacetFunction, PointOutsideCell,
                             boundary_mean, cr_eval, cr_interpolate,
                             discrete_lift, enrich_boundary, enrich_volume,
                             facet_means, harmonic_extension, p0_project,
                             p1_stiffness, vh_norm)


def disk_mesh(levels=2):
    mesh = coarse_disk()
    for _ in range(levels):
        mesh = refine(mesh, unit_disk())
    return mesh, build_facets(mesh)


def ball_mesh(levels=1):
    mesh = coarse_ball()
    for _ in range(levels):
        mesh = refine(mesh, unit_ball())
    return mesh, build_facets(mesh)


# -- interpolation and projections ------------------------------------------

@pytest.mark.parametrize("make", [disk_mesh, ball_mesh])
def test_interpolation_reproduces_affine_fields(make):
    mesh, facets = make()
    dim = mesh.dim
    rng = np.random.default_rng(42)
    B = rng.standard_normal((dim, dim))
    c = rng.standard_normal(dim)

    def affine(x):
        return x @ B.T + c

    u = cr_interpolate(affine, mesh, facets)
    # gradients are exact on every cell
    grads = u.cell_gradients()
    assert np.allclose(grads, B[None, :, :], atol=1e-12)
    # point values are exact inside every cell
    for cell in (0, mesh.num_cells // 2):
        centroid = mesh.vertices[mesh.cells[cell]].mean(axis=0)
        assert np.allclose(cr_eval(u, cell, centroid), affine(centroid[None]),
                           atol=1e-12)


def test_facet_mean_of_affine_is_midpoint_value():
    mesh, facets = disk_mesh(1)

    def affine(x):
        return 3.0 * x[:, 0] - 2.0 * x[:, 1] + 0.5

    means = facet_means(affine, mesh, facets)
    exact = affine(facets.midpoints)
    assert np.allclose(means, exact, atol=1e-13)


def test_facet_mean_quadratic_unit_segment():
    # mean of x^2 over a straight unit facet equals 1/3 in the
    # facet-parametrized sense: check against the hexagon's horizontal rim
    # edge from (1,0) to (1/2, sqrt(3)/2) computed analytically.
    mesh, facets = disk_mesh(0)
    bf = facets.boundary_facets
    verts = mesh.vertices[facets.facet_vertices[bf]]
    means = facet_means(lambda x: x[:, 0] ** 2, mesh, facets, which=bf)
    for k in range(len(bf)):
        a, b = verts[k]
        exact = (a[0] ** 2 + a[0] * b[0] + b[0] ** 2) / 3.0
        assert means[k] == pytest.approx(exact, abs=1e-14)


def test_p0_projection_of_affine_is_centroid_value():
    mesh, _ = disk_mesh(1)
    proj = p0_project(lambda x: 2.0 * x[:, 1] - x[:, 0], mesh)
    centroids = mesh.vertices[mesh.cells].mean(axis=1)
    assert np.allclose(proj.values, 2 * centroids[:, 1] - centroids[:, 0],
                       atol=1e-13)
    # mean() integrates against cell volumes
    assert proj.mean() == pytest.approx(
        float(proj.values @ mesh.cell_volumes / mesh.cell_volumes.sum()))


def test_boundary_mean_shape():
    mesh, facets = disk_mesh(1)
    g = boundary_mean(lambda x: x[:, 0], mesh, facets)
    assert g.values.shape == (facets.num_boundary_facets,)


# -- pointwise evaluation ----------------------------------------------------

def test_cr_basis_is_nodal_at_facet_midpoints():
    mesh, facets = disk_mesh(1)
    rng = np.random.default_rng(3)
    dofs = rng.standard_normal(facets.num_facets)
    u = CRFunction(mesh, facets, dofs)
    for cell in range(0, mesh.num_cells, 5):
        for f in facets.cell_facets[cell]:
            val = cr_eval(u, cell, facets.midpoints[f])[0]
            assert val == pytest.approx(dofs[f], abs=1e-12)


def test_cr_partition_of_unity():
    mesh, facets = disk_mesh(1)
    ones = CRFunction(mesh, facets, np.ones(facets.num_facets))
    pts = mesh.vertices[mesh.cells[4]].mean(axis=0) + [[0.0, 0.0]]
    assert cr_eval(ones, 4, pts)[0] == pytest.approx(1.0, abs=1e-14)


def test_cr_eval_rejects_outside_points():
    mesh, facets = disk_mesh(0)
    u = CRFunction(mesh, facets, np.zeros(facets.num_facets))
    with pytest.raises(PointOutsideCell):
        cr_eval(u, 0, np.array([[5.0, 5.0]]))


def test_vh_norm_of_affine_matches_quadrature():
    mesh, facets = disk_mesh(1)
    B = np.array([[1.0, 2.0], [0.0, -1.0]])

    def affine(x):
        return x @ B.T

    u = cr_interpolate(affine, mesh, facets)
    rule = simplex_rule(2, 2)
    pts = map_points(rule, mesh.vertices[mesh.cells])
    vals = affine(pts.reshape(-1, 2)).reshape(mesh.num_cells, -1, 2)
    l2sq = float(np.einsum("q,mqc,mqc,m->", rule.weights, vals, vals,
                           mesh.cell_volumes))
    gradsq = float(mesh.cell_volumes.sum()) * float((B ** 2).sum())
    assert vh_norm(u) == pytest.approx(np.sqrt(l2sq + gradsq), rel=1e-12)


# -- enriching operators -----------------------------------------------------

def test_enrich_volume_recovers_continuous_affine():
    mesh, facets = disk_mesh(1)

    def affine(x):
        return 2.0 * x[:, 0] + 3.0 * x[:, 1] - 1.0

    u = cr_interpolate(affine, mesh, facets)
    w = enrich_volume(u)
    assert np.allclose(w.values[:, 0], affine(mesh.vertices), atol=1e-12)


def test_enrich_boundary_preserves_constants_and_averages():
    mesh, facets = disk_mesh(1)
    nb = facets.num_boundary_facets
    const = enrich_boundary(FacetFunction(facets, np.full(nb, 2.5)))
    assert np.allclose(const.values, 2.5, atol=1e-14)
    rng = np.random.default_rng(8)
    vals = rng.standard_normal(nb)
    w = enrich_boundary(FacetFunction(facets, vals))
    assert w.values.min() >= vals.min() - 1e-14
    assert w.values.max() <= vals.max() + 1e-14


# -- conforming P1 helpers ---------------------------------------------------

def test_p1_stiffness_energy_of_affine():
    mesh, _ = disk_mesh(1)
    slope = np.array([1.5, -0.5])
    v = mesh.vertices @ slope
    K = p1_stiffness(mesh)
    energy = float(v @ (K @ v))
    assert energy == pytest.approx(
        mesh.cell_volumes.sum() * float(slope @ slope), rel=1e-12)
    # constants are in the kernel
    ones = np.ones(mesh.num_vertices)
    assert np.abs(K @ ones).max() < 1e-12


def test_harmonic_extension_reproduces_affine_data():
    mesh, facets = disk_mesh(2)
    affine = mesh.vertices @ np.array([0.7, -1.2]) + 0.3
    w = harmonic_extension(mesh, facets, affine[facets.boundary_vertices])
    assert np.allclose(w.values, affine, atol=1e-10)


def test_harmonic_extension_maximum_principle():
    mesh, facets = disk_mesh(2)
    rng = np.random.default_rng(5)
    data = rng.standard_normal(len(facets.boundary_vertices))
    w = harmonic_extension(mesh, facets, data)
    assert w.values.min() >= data.min() - 1e-12
    assert w.values.max() <= data.max() + 1e-12


# -- discrete lifting --------------------------------------------------------

@pytest.mark.parametrize("make", [disk_mesh, ball_mesh])
def test_discrete_lift_normal_trace_is_exact(make):
    mesh, facets = make()
    rng = np.random.default_rng(11)
    bf = facets.boundary_facets
    mu = FacetFunction(facets, rng.standard_normal(len(bf)))
    v = discrete_lift(mu, mesh, facets)
    vn = np.einsum("ea,ea->e", v.dofs[bf], facets.normals[bf])
    assert np.abs(vn - mu.values).max() < 1e-13


def test_discrete_lift_of_zero_is_zero():
    mesh, facets = disk_mesh(1)
    mu = FacetFunction(facets, np.zeros(facets.num_boundary_facets))
    v = discrete_lift(mu, mesh, facets)
    assert np.abs(v.dofs).max() == 0.0


def test_discrete_lift_is_linear():
    mesh, facets = disk_mesh(1)
    rng = np.random.default_rng(13)
    nb = facets.num_boundary_facets
    a = rng.standard_normal(nb)
    b = rng.standard_normal(nb)
    va = discrete_lift(FacetFunction(facets, a), mesh, facets)
    vb = discrete_lift(FacetFunction(facets, b), mesh, facets)
    vab = discrete_lift(FacetFunction(facets, 2 * a - 3 * b), mesh, facets)
    assert np.allclose(vab.dofs, 2 * va.dofs - 3 * vb.dofs, atol=1e-11)


# -- interpolation convergence ----------------------------------------------

def test_interpolation_error_decays_at_second_order():
    domain = unit_disk()
    mesh = coarse_disk()
    for _ in range(2):
        mesh = refine(mesh, domain)

    def smooth(x):
        return np.sin(x[:, 0]) * np.exp(x[:, 1])

    errors, hs = [], []
    rule = simplex_rule(2, 6)
    for _ in range(3):
        facets = build_facets(mesh)
        u = cr_interpolate(smooth, mesh, facets)
        pts = map_points(rule, mesh.vertices[mesh.cells])
        exact = smooth(pts.reshape(-1, 2)).reshape(mesh.num_cells, -1)
        uh = u.eval_rule(rule)[:, :, 0]
        err = np.einsum("q,mq,m->", rule.weights, (exact - uh) ** 2,
                        mesh.cell_volumes)
        errors.append(np.sqrt(err))
        hs.append(mesh.h)
        mesh = refine(mesh, domain)
    rate = np.log(errors[0] / errors[-1]) / np.log(hs[0] / hs[-1])
    assert rate == pytest.approx(2.0, abs=0.2)

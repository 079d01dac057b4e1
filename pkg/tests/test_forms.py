"""Tests for the bilinear-form assembly: independent quadrature oracles,
algebraic identities, symmetry and definiteness."""

import numpy as np
import pytest
import scipy.sparse as sp

from crstokes.forms import (assemble_a, assemble_b, assemble_c, assemble_j,
                            assemble_load, assemble_system, cr_mass,
                            cr_stiffness, jump_matrix, num_velocity_dofs,
                            penalty_load)
from crstokes.geometry import unit_ball, unit_disk
from crstokes.mesh import SimplexMesh, build_facets, coarse_ball, coarse_disk, refine
from crstokes.quadrature import map_points, simplex_rule
from crstokes.spaces import (CRFunction, FacetFunction, boundary_mean,
                             cr_eval, cr_interpolate)


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


def interp_vector(func, mesh, facets):
    u = cr_interpolate(func, mesh, facets)
    return u, u.dofs.ravel()


# -- symmetry / definiteness -------------------------------------------------

@pytest.mark.parametrize("make", [disk_mesh, ball_mesh])
def test_forms_are_symmetric(make):
    mesh, facets = make()
    for M in (cr_mass(mesh, facets), cr_stiffness(mesh, facets),
              assemble_a(mesh, facets, nu=0.7), assemble_c(mesh, facets),
              assemble_j(mesh, facets, gamma=2.0)):
        assert abs(M - M.T).max() < 1e-12


def test_velocity_block_is_positive_definite():
    mesh, facets = disk_mesh(1)
    K = (assemble_a(mesh, facets) + assemble_j(mesh, facets, 2.0)
         + assemble_c(mesh, facets) / 1e-3)
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.standard_normal(K.shape[0])
        assert v @ (K @ v) > 0


# -- independent quadrature oracles ------------------------------------------

def test_mass_energy_matches_quadrature():
    mesh, facets = disk_mesh(1)

    def field(x):
        return np.column_stack([x[:, 0] ** 2, x[:, 0] * x[:, 1]])

    u, uflat = interp_vector(field, mesh, facets)
    mass = sp.kron(cr_mass(mesh, facets), sp.eye(2))
    # oracle: integrate |u_h|^2 cellwise with a degree-6 rule (u_h is P1)
    rule = simplex_rule(2, 6)
    vals = u.eval_rule(rule)
    exact = np.einsum("q,mqc,mqc,m->", rule.weights, vals, vals,
                      mesh.cell_volumes)
    assert uflat @ (mass @ uflat) == pytest.approx(exact, rel=1e-12)


def test_rigid_rotation_has_zero_strain_energy():
    mesh, facets = disk_mesh(1)

    def rot(x):
        return np.column_stack([-x[:, 1], x[:, 0]])

    _, uflat = interp_vector(rot, mesh, facets)
    a_small = assemble_a(mesh, facets, nu=1e-6)
    a_large = assemble_a(mesh, facets, nu=10.0)
    e_small = uflat @ (a_small @ uflat)
    e_large = uflat @ (a_large @ uflat)
    # strain part vanishes: energy reduces to the mass term for any nu
    assert e_small == pytest.approx(e_large, rel=1e-9)
    # mass term equals integral of x^2+y^2 over the polygon (exact, P1 data)
    rule = simplex_rule(2, 2)
    pts = map_points(rule, mesh.vertices[mesh.cells])
    r2 = (pts ** 2).sum(axis=2)
    exact = float(np.einsum("q,mq,m->", rule.weights, r2, mesh.cell_volumes))
    assert e_large == pytest.approx(exact, rel=1e-12)


def test_strain_energy_of_pure_shear():
    mesh, facets = disk_mesh(1)
    # u = (y, 0): E(u) = [[0,1],[1,0]], (nu/2)|E|^2 = nu
    _, uflat = interp_vector(
        lambda x: np.column_stack([x[:, 1], np.zeros(len(x))]), mesh, facets)
    nu = 3.0
    A = assemble_a(mesh, facets, nu=nu)
    mass = sp.kron(cr_mass(mesh, facets), sp.eye(2))
    strain_energy = uflat @ (A @ uflat) - uflat @ (mass @ uflat)
    assert strain_energy == pytest.approx(
        nu * mesh.cell_volumes.sum(), rel=1e-12)


def test_divergence_row_matches_quadrature():
    mesh, facets = disk_mesh(1)
    B = assemble_b(mesh, facets)

    def field(x):
        return np.column_stack([x[:, 0] * x[:, 1], x[:, 1] ** 2])

    u, uflat = interp_vector(field, mesh, facets)
    div = np.einsum("mcc->m", u.cell_gradients())
    oracle = -mesh.cell_volumes * div
    assert np.allclose(B @ uflat, oracle, atol=1e-13)


def test_divergence_of_identity_field():
    # b(1, Pi_h x) = -N |Omega_h|
    for mesh, facets in (disk_mesh(1), ball_mesh(1)):
        _, uflat = interp_vector(lambda x: x, mesh, facets)
        B = assemble_b(mesh, facets)
        total = float((B @ uflat).sum())
        assert total == pytest.approx(-mesh.dim * mesh.cell_volumes.sum(),
                                      rel=1e-12)


@pytest.mark.parametrize("make", [disk_mesh, ball_mesh])
def test_pressure_constant_compatibility(make):
    # c(u·n, 1) = -b(1, u) for every velocity: boundary flux identity
    mesh, facets = make()
    rng = np.random.default_rng(7)
    nvel = num_velocity_dofs(facets, mesh.dim)
    B = assemble_b(mesh, facets)
    bf = facets.boundary_facets
    for _ in range(5):
        uflat = rng.standard_normal(nvel)
        U = uflat.reshape(-1, mesh.dim)
        un = np.einsum("ea,ea->e", U[bf], facets.normals[bf])
        c_u1 = float(facets.measures[bf] @ un)
        b_1u = float((B @ uflat).sum())
        assert c_u1 == pytest.approx(-b_1u, rel=1e-11, abs=1e-12)


def test_penalty_gram_on_the_hexagon():
    mesh, facets = disk_mesh(0)
    C = assemble_c(mesh, facets)
    # velocity with u(m_e) = n_e has c(u·n, u·n) = |Gamma_h| = 6
    dofs = np.zeros((facets.num_facets, 2))
    bf = facets.boundary_facets
    dofs[bf] = facets.normals[bf]
    uflat = dofs.ravel()
    assert uflat @ (C @ uflat) == pytest.approx(6.0, rel=1e-13)
    # tangential velocities are invisible to the penalty
    tang = np.zeros((facets.num_facets, 2))
    tang[bf, 0] = -facets.normals[bf, 1]
    tang[bf, 1] = facets.normals[bf, 0]
    tflat = tang.ravel()
    assert abs(tflat @ (C @ tflat)) < 1e-14


def test_penalty_load_entries():
    mesh, facets = disk_mesh(0)
    nb = facets.num_boundary_facets
    g = FacetFunction(facets, np.arange(1.0, nb + 1))
    vec = penalty_load(mesh, facets, g)
    bf = facets.boundary_facets
    expected = np.zeros((facets.num_facets, 2))
    expected[bf] = (facets.measures[bf] * g.values)[:, None] \
        * facets.normals[bf]
    assert np.allclose(vec, expected.ravel(), atol=1e-14)


# -- jump form ----------------------------------------------------------------

def two_triangle_mesh():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    cells = np.array([[0, 1, 2], [1, 3, 2]])
    mesh = SimplexMesh(vertices, cells)
    return mesh, build_facets(mesh)


def test_jump_matrix_two_triangles_hand_oracle():
    mesh, facets = two_triangle_mesh()
    J = jump_matrix(mesh, facets)
    rng = np.random.default_rng(2)
    dofs = rng.standard_normal(facets.num_facets)
    u = CRFunction(mesh, facets, dofs)
    # oracle: evaluate both traces along the shared diagonal with Gauss
    interior = np.flatnonzero(~facets.is_boundary)
    assert len(interior) == 1
    f = interior[0]
    a, b = mesh.vertices[facets.facet_vertices[f]]
    ts, ws = np.polynomial.legendre.leggauss(4)
    ts = 0.5 * (ts + 1.0)
    ws = 0.5 * ws
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    c0, c1 = facets.cells_adj[f]
    jumps = cr_eval(u, c1, pts)[:, 0] - cr_eval(u, c0, pts)[:, 0]
    length = np.linalg.norm(b - a)
    oracle = length / facets.diameters[f] * float(ws @ jumps ** 2)
    assert dofs @ (J @ dofs) == pytest.approx(oracle, rel=1e-12)


@pytest.mark.parametrize("make", [disk_mesh, ball_mesh])
def test_jump_form_vanishes_for_continuous_fields(make):
    mesh, facets = make()
    J = assemble_j(mesh, facets, gamma=4.0)
    _, uflat = interp_vector(
        lambda x: x @ np.full((mesh.dim, mesh.dim), 0.5) + 1.0, mesh, facets)
    assert uflat @ (J @ uflat) < 1e-12 * (1.0 + uflat @ uflat)
    # and is positive for a genuinely discontinuous function
    rng = np.random.default_rng(1)
    v = rng.standard_normal(uflat.shape)
    assert v @ (J @ v) > 0


# -- loads --------------------------------------------------------------------

def test_body_load_matches_brute_force():
    mesh, facets = disk_mesh(1)

    def f(x):
        return np.column_stack([x[:, 0] ** 2 - x[:, 1], np.ones(len(x))])

    load = assemble_load(mesh, facets, f=f)
    # brute force with a degree-8 rule and explicit basis evaluation
    rule = simplex_rule(2, 8)
    pts = map_points(rule, mesh.vertices[mesh.cells])
    lam = rule.points
    phi = 1.0 - 2.0 * lam                              # (q, 3)
    fvals = f(pts.reshape(-1, 2)).reshape(mesh.num_cells, -1, 2)
    loc = np.einsum("q,mqa,qi,m->mia", rule.weights, fvals, phi,
                    mesh.cell_volumes)
    oracle = np.zeros((facets.num_facets, 2))
    np.add.at(oracle, facets.cell_facets.ravel(), loc.reshape(-1, 2))
    assert np.allclose(load, oracle.ravel(), atol=1e-13)


def test_traction_load_matches_brute_force():
    mesh, facets = disk_mesh(1)

    def tau(x):
        return np.column_stack([x[:, 1], -x[:, 0]])

    load = assemble_load(mesh, facets, tau=tau)
    bf = facets.boundary_facets
    rule = simplex_rule(1, 8)
    verts = mesh.vertices[facets.facet_vertices[bf]]
    pts = map_points(rule, verts)
    tvals = tau(pts.reshape(-1, 2)).reshape(len(bf), -1, 2)
    oracle = np.zeros((facets.num_facets, 2))
    own = facets.cells_adj[bf, 0]
    for k in range(len(bf)):
        for fi in facets.cell_facets[own[k]]:
            probe = CRFunction(mesh, facets,
                               np.eye(facets.num_facets)[fi][:, None])
            phival = cr_eval(probe, own[k], pts[k])[:, 0]
            oracle[fi] += facets.measures[bf[k]] * np.einsum(
                "q,qa,q->a", rule.weights, tvals[k], phival)
    assert np.allclose(load, oracle.ravel(), atol=1e-12)


def test_assembled_system_shapes_and_rhs():
    mesh, facets = disk_mesh(1)
    g = boundary_mean(lambda x: x[:, 0] - x[:, 1], mesh, facets)
    system = assemble_system(mesh, facets, eps=1e-2, gamma=2.0, nu=1.0,
                             f=lambda x: x, g_means=g)
    nvel = num_velocity_dofs(facets, 2)
    assert system.matrix.shape == (nvel + mesh.num_cells,) * 2
    assert system.num_velocity == nvel
    assert system.num_pressure == mesh.num_cells
    # the penalty load enters scaled by 1/eps, pressure rows have zero rhs
    assert np.allclose(system.rhs[:nvel],
                       system.load + system.load_penalty / 1e-2, atol=1e-14)
    assert np.abs(system.rhs[nvel:]).max() == 0.0
    assert abs(system.matrix - system.matrix.T).max() < 1e-12

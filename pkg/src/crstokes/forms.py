"""Assembly of the discrete bilinear forms and the saddle-point system.

With K = A + J + (1/eps) C the assembled problem reads

    [ K   B^T ] [U]   [F + (1/eps) G]
    [ B   0   ] [P] = [0            ]

where A carries the zeroth-order mass term plus the symmetric-gradient
viscous term, J the interior-facet jump penalization, C the reduced
boundary penalty Gram (facet-midpoint rule, exact for the nonconforming
arguments), B the pressure-divergence coupling and G the penalty load
built from the boundary facet means of the normal-trace datum.

Velocity degrees of freedom are facet-major (dof = facet * N + component).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .quadrature import simplex_rule, map_points


def _phi_at(rule_points, dim):
    """Nonconforming basis values at barycentric points: 1 - N*lambda."""
    return 1.0 - dim * np.asarray(rule_points)


def _cell_dof_matrix(facets, ncomp):
    """Global velocity dof indices per cell, shape (nc, (N+1)*ncomp)."""
    cf = facets.cell_facets
    return (cf[:, :, None] * ncomp + np.arange(ncomp)).reshape(len(cf), -1)


def _scatter(rows, cols, vals, shape):
    return sp.coo_matrix((np.asarray(vals, dtype=float).ravel(),
                          (np.asarray(rows).ravel(), np.asarray(cols).ravel())),
                         shape=shape).tocsr()


def num_velocity_dofs(facets, dim):
    return facets.num_facets * dim


def cr_mass(mesh, facets):
    """Scalar nonconforming mass matrix (nf x nf)."""
    rule = simplex_rule(mesh.dim, 2)
    phi = _phi_at(rule.points, mesh.dim)                 # (q, N+1)
    mloc = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
    local = mesh.cell_volumes[:, None, None] * mloc
    cf = facets.cell_facets
    npc = mesh.dim + 1
    rows = np.repeat(cf, npc, axis=1)
    cols = np.tile(cf, (1, npc))
    return _scatter(rows, cols, local, (facets.num_facets,) * 2)


def cr_stiffness(mesh, facets):
    """Scalar broken stiffness matrix sum_T (grad u, grad v)_T (nf x nf)."""
    grads = -mesh.dim * mesh.barycentric_gradients()     # (nc, N+1, N)
    local = np.einsum("min,mjn,m->mij", grads, grads, mesh.cell_volumes)
    cf = facets.cell_facets
    npc = mesh.dim + 1
    rows = np.repeat(cf, npc, axis=1)
    cols = np.tile(cf, (1, npc))
    return _scatter(rows, cols, local, (facets.num_facets,) * 2)


def assemble_a(mesh, facets, nu=1.0):
    """Vector form a(u,v) = sum_T (u,v)_T + (nu/2)(E(u),E(v))_T with
    E(u) = grad u + grad u^T; returns CSR of size (nf*N, nf*N)."""
    dim = mesh.dim
    mass = sp.kron(cr_mass(mesh, facets), sp.eye(dim), format="csr")

    g = -dim * mesh.barycentric_gradients()              # (nc, N+1, N)
    vols = mesh.cell_volumes
    # (nu/2) * int E(phi_i e_a):E(phi_j e_b) = nu|T| (delta_ab g_i.g_j + g_ib g_ja)
    dots = np.einsum("min,mjn->mij", g, g)
    eye = np.eye(dim)
    local = (np.einsum("m,mij,ab->miajb", nu * vols, dots, eye)
             + np.einsum("m,mib,mja->miajb", nu * vols, g, g))
    npc = dim + 1
    dofs = _cell_dof_matrix(facets, dim)                 # (nc, npc*dim)
    rows = np.repeat(dofs, npc * dim, axis=1)
    cols = np.tile(dofs, (1, npc * dim))
    strain = _scatter(rows, cols, local.reshape(len(vols), -1),
                      (facets.num_facets * dim,) * 2)
    return (mass + strain).tocsr()


def assemble_b(mesh, facets):
    """Pressure-divergence coupling b(p,v) = -sum_T (p, div v)_T as a
    (num_cells x nf*N) matrix acting on velocity dofs."""
    dim = mesh.dim
    g = -dim * mesh.barycentric_gradients()
    local = -mesh.cell_volumes[:, None, None] * g        # (nc, N+1, N)
    dofs = _cell_dof_matrix(facets, dim)
    rows = np.repeat(np.arange(mesh.num_cells)[:, None], (dim + 1) * dim, axis=1)
    return _scatter(rows, dofs, local.reshape(mesh.num_cells, -1),
                    (mesh.num_cells, facets.num_facets * dim))


def assemble_c(mesh, facets):
    """Reduced boundary penalty Gram: c(u·n, v·n) = sum_e |e| (u(m_e)·n_e)(v(m_e)·n_e).

    The facet-midpoint rule coincides with the mean-value pairing for
    nonconforming arguments.  Only the N x N diagonal block of each
    boundary facet is populated (rank one per facet)."""
    dim = mesh.dim
    bf = facets.boundary_facets
    n = facets.normals[bf]
    blocks = facets.measures[bf][:, None, None] * np.einsum("ea,eb->eab", n, n)
    dofs = bf[:, None] * dim + np.arange(dim)
    rows = np.repeat(dofs, dim, axis=1)
    cols = np.tile(dofs, (1, dim))
    return _scatter(rows, cols, blocks.reshape(len(bf), -1),
                    (facets.num_facets * dim,) * 2)


def penalty_load(mesh, facets, g_means):
    """Load vector of the penalty term: entry (e,a) = |e| g_e n_a for
    boundary facets e; g_means is a FacetFunction of boundary means."""
    dim = mesh.dim
    bf = facets.boundary_facets
    vec = np.zeros(facets.num_facets * dim)
    vals = (facets.measures[bf] * np.asarray(g_means.values))[:, None] \
        * facets.normals[bf]
    dofs = bf[:, None] * dim + np.arange(dim)
    np.add.at(vec, dofs.ravel(), vals.ravel())
    return vec


def jump_matrix(mesh, facets):
    """Scalar interior-facet jump form sum_e (1/h_e) int_e [u][v] (nf x nf)."""
    dim = mesh.dim
    interior = np.flatnonzero(~facets.is_boundary)
    if len(interior) == 0:
        return sp.csr_matrix((facets.num_facets,) * 2)
    rule = simplex_rule(dim - 1, 2)
    fverts = mesh.vertices[facets.facet_vertices[interior]]
    pts = map_points(rule, fverts)                       # (ne, q, N)

    pieces = []
    for side in (0, 1):
        cells = facets.cells_adj[interior, side]
        lam = _barycentric_in_cells(mesh, cells, pts)    # (ne, q, N+1)
        phi = _phi_at(lam, dim)
        sign = 1.0 if side == 1 else -1.0                # jump = plus side - minus side
        pieces.append((sign * phi, facets.cell_facets[cells]))

    jvals = np.concatenate([p[0] for p in pieces], axis=2)   # (ne, q, 2(N+1))
    jdofs = np.concatenate([p[1] for p in pieces], axis=1)   # (ne, 2(N+1))
    scale = facets.measures[interior] / facets.diameters[interior]
    local = np.einsum("e,q,eqi,eqj->eij", scale, rule.weights, jvals, jvals)
    k = jdofs.shape[1]
    rows = np.repeat(jdofs, k, axis=1)
    cols = np.tile(jdofs, (1, k))
    return _scatter(rows, cols, local.reshape(len(interior), -1),
                    (facets.num_facets,) * 2)


def assemble_j(mesh, facets, gamma):
    """Vector jump penalization gamma * sum_e (1/h_e) ([u],[v])_e."""
    return sp.kron(gamma * jump_matrix(mesh, facets), sp.eye(mesh.dim),
                   format="csr")


def _barycentric_in_cells(mesh, cells, pts):
    """Barycentric coordinates of pts (m, q, N) w.r.t. the given cells."""
    verts = mesh.vertices[mesh.cells[cells]]             # (m, N+1, N)
    edges = verts[:, 1:] - verts[:, :1]                  # rows: p_j - p_0
    inv = np.linalg.inv(edges)
    rel = pts - verts[:, :1]
    lam_rest = np.einsum("mnk,mqn->mqk", inv, rel)
    lam0 = 1.0 - lam_rest.sum(axis=2, keepdims=True)
    return np.concatenate([lam0, lam_rest], axis=2)


def assemble_load(mesh, facets, f=None, tau=None, degree=4):
    """Velocity load: sum_T (f, v)_T + sum_{boundary e} (tau, v)_e.

    `f` and `tau` map (m, N) points to (m, N) values; either may be None.
    """
    dim = mesh.dim
    vec = np.zeros(facets.num_facets * dim)
    if f is not None:
        rule = simplex_rule(dim, degree)
        phi = _phi_at(rule.points, dim)                  # (q, N+1)
        pts = map_points(rule, mesh.vertices[mesh.cells])
        fv = np.asarray(f(pts.reshape(-1, dim))).reshape(
            mesh.num_cells, len(rule.weights), dim)
        local = np.einsum("m,q,qi,mqa->mia", mesh.cell_volumes, rule.weights,
                          phi, fv)
        dofs = _cell_dof_matrix(facets, dim)
        np.add.at(vec, dofs.ravel(), local.reshape(mesh.num_cells, -1).ravel())
    if tau is not None:
        bf = facets.boundary_facets
        rule = simplex_rule(dim - 1, degree)
        fverts = mesh.vertices[facets.facet_vertices[bf]]
        pts = map_points(rule, fverts)
        cells = facets.cells_adj[bf, 0]
        lam = _barycentric_in_cells(mesh, cells, pts)
        phi = _phi_at(lam, dim)                          # (nb, q, N+1)
        tv = np.asarray(tau(pts.reshape(-1, dim))).reshape(
            len(bf), len(rule.weights), dim)
        local = np.einsum("e,q,eqi,eqa->eia", facets.measures[bf],
                          rule.weights, phi, tv)
        dofs = (facets.cell_facets[cells][:, :, None] * dim
                + np.arange(dim)).reshape(len(bf), -1)
        np.add.at(vec, dofs.ravel(), local.reshape(len(bf), -1).ravel())
    return vec


@dataclass
class SaddleSystem:
    """Assembled saddle-point system with its building blocks."""
    matrix: sp.spmatrix          # full (nv+nc) x (nv+nc) system
    rhs: np.ndarray
    A: sp.spmatrix               # mass + viscous block
    J: sp.spmatrix               # jump penalization
    C: sp.spmatrix               # reduced boundary penalty Gram
    B: sp.spmatrix               # pressure-divergence coupling
    load: np.ndarray             # body + traction load
    load_penalty: np.ndarray     # |e| g_e n_e load (unscaled by 1/eps)
    g_means: object              # FacetFunction of boundary means of g
    eps: float
    gamma: float
    nu: float
    num_velocity: int = field(init=False)
    num_pressure: int = field(init=False)

    def __post_init__(self):
        self.num_velocity = self.A.shape[0]
        self.num_pressure = self.B.shape[0]


def assemble_system(mesh, facets, eps, gamma, nu=1.0, f=None, tau=None,
                    g_means=None, degree=4):
    """Assemble the full penalized saddle-point system.

    `g_means` is a FacetFunction with the boundary facet means of the
    normal-trace datum (zero if omitted).
    """
    from .spaces import FacetFunction

    A = assemble_a(mesh, facets, nu)
    J = assemble_j(mesh, facets, gamma)
    C = assemble_c(mesh, facets)
    B = assemble_b(mesh, facets)
    if g_means is None:
        g_means = FacetFunction(
            facets, np.zeros(facets.num_boundary_facets))
    load = assemble_load(mesh, facets, f=f, tau=tau, degree=degree)
    load_pen = penalty_load(mesh, facets, g_means)

    K = (A + J + C / eps).tocsr()
    nvel = A.shape[0]
    nprs = B.shape[0]
    matrix = sp.bmat([[K, B.T], [B, None]], format="csc")
    rhs = np.concatenate([load + load_pen / eps, np.zeros(nprs)])
    return SaddleSystem(matrix=matrix, rhs=rhs, A=A, J=J, C=C, B=B,
                        load=load, load_penalty=load_pen, g_means=g_means,
                        eps=eps, gamma=gamma, nu=nu)

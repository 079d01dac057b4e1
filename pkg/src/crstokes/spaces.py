"""Discrete spaces and interpolation/enriching operators.

Velocity lives in the nonconforming piecewise-P1 space with one degree of
freedom per facet and component (facet-mean / facet-midpoint coupling);
pressure in piecewise constants; the boundary multiplier space carries one
value per boundary facet.  The local basis attached to facet e of a cell is

    phi_e(x) = 1 - N * lambda_opp(e)(x),

with lambda_opp(e) the barycentric coordinate of the vertex opposite e, so
phi_e(m_e') = delta_ee' at facet barycenters and sum_e phi_e = 1.

Global velocity degrees of freedom are numbered facet-major:
dof(facet f, component c) = f * ncomp + c.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quadrature import simplex_rule, map_points


class PointOutsideCell(Exception):
    """Evaluation requested at a point with a negative barycentric coordinate."""


class SolveFailure(Exception):
    """An auxiliary linear solve (harmonic extension) failed."""


class CRFunction:
    """Nonconforming P1 function given by per-facet values, shape (nf, ncomp)."""

    def __init__(self, mesh, facets, dofs):
        dofs = np.asarray(dofs, dtype=float)
        if dofs.ndim == 1:
            dofs = dofs[:, None]
        if dofs.shape[0] != facets.num_facets:
            raise ValueError("dofs must have one row per facet")
        self.mesh = mesh
        self.facets = facets
        self.dofs = dofs

    @property
    def ncomp(self):
        return self.dofs.shape[1]

    def cell_dofs(self):
        """Per-cell facet values, shape (nc, N+1, ncomp)."""
        return self.dofs[self.facets.cell_facets]

    def cell_gradients(self):
        """Per-cell constant gradients, shape (nc, ncomp, N)."""
        grads = -self.mesh.dim * self.mesh.barycentric_gradients()
        return np.einsum("mic,min->mcn", self.cell_dofs(), grads)

    def eval_rule(self, rule):
        """Values at the points of a barycentric cell rule, (nc, q, ncomp)."""
        phi = 1.0 - self.mesh.dim * rule.points          # (q, N+1)
        return np.einsum("qi,mic->mqc", phi, self.cell_dofs())


class P0Function:
    """Piecewise-constant scalar function, one value per cell."""

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.num_cells,):
            raise ValueError("values must have shape (num_cells,)")
        self.mesh = mesh
        self.values = values

    def mean(self):
        """Volume-weighted mean over the mesh."""
        vols = self.mesh.cell_volumes
        return float(self.values @ vols / vols.sum())


class FacetFunction:
    """Values attached to boundary facets; shape (nb,) or (nb, k)."""

    def __init__(self, facets, values):
        values = np.asarray(values, dtype=float)
        if values.shape[0] != facets.num_boundary_facets:
            raise ValueError("values must have one row per boundary facet")
        self.facets = facets
        self.values = values


class BoundaryP1Function:
    """Continuous piecewise-P1 function on the polygonal boundary, stored as
    values at the boundary vertices (aligned with facets.boundary_vertices)."""

    def __init__(self, facets, values):
        values = np.asarray(values, dtype=float)
        if values.shape[0] != len(facets.boundary_vertices):
            raise ValueError("values must have one row per boundary vertex")
        self.facets = facets
        self.values = values


class ConformingP1Function:
    """Continuous piecewise-P1 function, values at all mesh vertices."""

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape[0] != mesh.num_vertices:
            raise ValueError("values must have one row per vertex")
        self.mesh = mesh
        self.values = values


def _as_columns(values):
    v = np.asarray(values, dtype=float)
    return (v[:, None], True) if v.ndim == 1 else (v, False)


def facet_means(func, mesh, facets, which=None, degree=4):
    """Mean values of `func` over facets (all by default), shape (m, k).

    `func` maps an (m, N) point array to (m,) or (m, k) values.
    """
    ids = np.arange(facets.num_facets) if which is None else which
    verts = mesh.vertices[facets.facet_vertices[ids]]
    rule = simplex_rule(mesh.dim - 1, degree)
    pts = map_points(rule, verts).reshape(-1, mesh.dim)
    vals, scalar = _as_columns(func(pts))
    vals = vals.reshape(len(ids), len(rule.weights), -1)
    out = np.einsum("q,mqk->mk", rule.weights, vals)
    return out[:, 0] if scalar else out


def cr_interpolate(func, mesh, facets, degree=4):
    """Facet-mean interpolation onto the nonconforming space.

    Reproduces piecewise-affine continuous functions exactly; the facet
    means are computed with a rule exact to `degree` (default 4).
    """
    vals = facet_means(func, mesh, facets, degree=degree)
    return CRFunction(mesh, facets, vals)


def boundary_mean(func, mesh, facets, degree=4):
    """Boundary facet means of `func` (the reduced boundary interpolation)."""
    vals = facet_means(func, mesh, facets, which=facets.boundary_facets,
                       degree=degree)
    return FacetFunction(facets, vals)


def p0_project(func, mesh, degree=4):
    """Cellwise mean values (L2 projection onto piecewise constants)."""
    rule = simplex_rule(mesh.dim, degree)
    pts = map_points(rule, mesh.vertices[mesh.cells]).reshape(-1, mesh.dim)
    vals, _ = _as_columns(func(pts))
    vals = vals.reshape(mesh.num_cells, len(rule.weights))
    return P0Function(mesh, vals @ rule.weights)


def cr_eval(u, cell, points, tol=1e-10):
    """Evaluate a CRFunction inside one cell.

    Raises PointOutsideCell if any barycentric coordinate is below -tol.
    """
    mesh = u.mesh
    points = np.atleast_2d(np.asarray(points, dtype=float))
    verts = mesh.vertices[mesh.cells[cell]]
    T = (verts[1:] - verts[0]).T
    lam_rest = np.linalg.solve(T, (points - verts[0]).T).T
    lam = np.column_stack([1.0 - lam_rest.sum(axis=1), lam_rest])
    if lam.min() < -tol:
        raise PointOutsideCell("barycentric coordinate %.3e" % lam.min())
    phi = 1.0 - mesh.dim * lam                             # (m, N+1)
    return phi @ u.dofs[u.facets.cell_facets[cell]]


def vh_norm(u):
    """Discrete velocity norm: (||u||^2 + sum_T ||grad u||^2)^(1/2)."""
    return float(np.sqrt(_l2_sq(u) + _broken_grad_sq(u)))


def _l2_sq(u):
    rule = simplex_rule(u.mesh.dim, 2)
    vals = u.eval_rule(rule)                               # (nc, q, k)
    cellwise = np.einsum("q,mqc,mqc->m", rule.weights, vals, vals)
    return float(cellwise @ u.mesh.cell_volumes)

def _broken_grad_sq(u):
    g = u.cell_gradients()
    return float(np.einsum("mcn,mcn,m->", g, g, u.mesh.cell_volumes))


def enrich_boundary(mu):
    """Vertex-averaging enriching operator on the boundary.

    Each boundary vertex receives the average of the facet values mu(m_e)
    over the boundary facets containing it; interior facets never
    contribute.  Works for scalar (nb,) or vector (nb, k) data.
    """
    facets = mu.facets
    vals, scalar = _as_columns(mu.values)
    bverts = facets.boundary_vertices
    pos = {int(p): i for i, p in enumerate(bverts)}
    acc = np.zeros((len(bverts), vals.shape[1]))
    cnt = np.zeros(len(bverts))
    bf = facets.facet_vertices[facets.boundary_facets]
    for i in range(bf.shape[0]):
        for p in bf[i]:
            j = pos[int(p)]
            acc[j] += vals[i]
            cnt[j] += 1.0
    out = acc / cnt[:, None]
    return BoundaryP1Function(facets, out[:, 0] if scalar else out)


def enrich_volume(u):
    """Vertex-averaging enriching operator into the conforming P1 space.

    Each vertex receives the average over its adjacent cells of the
    cellwise trace of u at that vertex.
    """
    mesh, facets = u.mesh, u.facets
    cd = u.cell_dofs()                                     # (nc, N+1, k)
    # trace of u|_T at local vertex j: sum_i dofs_i - N * dofs_j
    traces = cd.sum(axis=1)[:, None, :] - mesh.dim * cd    # (nc, N+1, k)
    acc = np.zeros((mesh.num_vertices, u.ncomp))
    cnt = np.zeros(mesh.num_vertices)
    np.add.at(acc, mesh.cells.ravel(),
              traces.reshape(-1, u.ncomp))
    np.add.at(cnt, mesh.cells.ravel(), 1.0)
    return ConformingP1Function(mesh, acc / cnt[:, None])


def p1_stiffness(mesh):
    """Scalar conforming-P1 stiffness matrix (CSR)."""
    grads = mesh.barycentric_gradients()                  # (nc, N+1, N)
    local = np.einsum("min,mjn,m->mij", grads, grads, mesh.cell_volumes)
    npc = mesh.dim + 1
    rows = np.repeat(mesh.cells, npc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, npc)).ravel()
    K = sp.coo_matrix((local.ravel(), (rows, cols)),
                      shape=(mesh.num_vertices,) * 2)
    return K.tocsr()


def harmonic_extension(mesh, facets, boundary_values):
    """Conforming-P1 discrete harmonic extension of boundary vertex data.

    `boundary_values` is (nbv,) or (nbv, k), aligned with
    facets.boundary_vertices.  Returns a ConformingP1Function.
    """
    vals, scalar = _as_columns(boundary_values)
    nv = mesh.num_vertices
    bverts = facets.boundary_vertices
    interior = np.setdiff1d(np.arange(nv), bverts)
    K = p1_stiffness(mesh)
    w = np.zeros((nv, vals.shape[1]))
    w[bverts] = vals
    if len(interior):
        K_ii = K[interior][:, interior].tocsc()
        rhs = -K[interior][:, bverts] @ vals
        try:
            lu = spla.splu(K_ii)
            w[interior] = lu.solve(rhs)
        except RuntimeError as exc:
            raise SolveFailure("harmonic extension solve failed: %s" % exc)
    return ConformingP1Function(mesh, w[:, 0] if scalar else w)


def discrete_lift(mu, mesh, facets):
    """Lift a boundary multiplier to a velocity field with exact normal trace.

    The returned CRFunction v satisfies v(m_e) = mu(m_e) n_e on every
    boundary facet (hence v(m_e)·n_e = mu(m_e) exactly); interior degrees
    of freedom are the facet means of the discrete harmonic extension of
    the vertex-averaged boundary data mu n_h.
    """
    bf = facets.boundary_facets
    nrm = facets.normals[bf]
    bvals = np.asarray(mu.values, dtype=float)[:, None] * nrm   # (nb, N)
    wb = enrich_boundary(FacetFunction(facets, bvals))
    w = harmonic_extension(mesh, facets, wb.values)
    dofs = w.values[facets.facet_vertices].mean(axis=1)         # (nf, N)
    dofs[bf] = bvals
    return CRFunction(mesh, facets, dofs)

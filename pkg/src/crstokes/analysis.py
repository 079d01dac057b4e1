"""Error norms, convergence rates and stability diagnostics.

Velocity errors are measured in L2, in the broken H1 seminorm and in the
mesh-dependent triple norm

    |||v|||^2 = ||v||^2 + sum_T ||grad v||^2_T + sum_e h_e^{-1} ||[v]||^2_e,

pressure errors against the mean-adjusted discrete pressure.  Cellwise
integrals use a degree-8 rule; facet-mean defects a degree-4 rule.
Sampled diagnostics (Korn ratio, inf-sup bound, jump equivalence,
enriching-operator bound) draw seeded Gaussian coefficient vectors.
"""

from dataclasses import dataclass
from math import log

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quadrature import simplex_rule, map_points
from .spaces import CRFunction, P0Function, cr_interpolate
from . import forms

ERROR_QUAD_DEGREE = 8


class ZeroError(Exception):
    """A convergence order was requested for an (exactly) zero error."""


def _cell_quad(mesh, degree=ERROR_QUAD_DEGREE):
    rule = simplex_rule(mesh.dim, degree)
    pts = map_points(rule, mesh.vertices[mesh.cells])
    return rule, pts


def error_l2_u(case, u_h, degree=ERROR_QUAD_DEGREE):
    """||u_exact - u_h||_{L2(Omega_h)} by cellwise quadrature."""
    mesh = u_h.mesh
    rule, pts = _cell_quad(mesh, degree)
    exact = np.asarray(case.u(pts.reshape(-1, mesh.dim))).reshape(pts.shape)
    diff = exact - u_h.eval_rule(rule)
    cellwise = np.einsum("q,mqc,mqc->m", rule.weights, diff, diff)
    return float(np.sqrt(cellwise @ mesh.cell_volumes))


def error_broken_h1(case, u_h, degree=ERROR_QUAD_DEGREE):
    """Broken H1 seminorm (sum_T ||grad u_exact - grad u_h||^2_T)^(1/2)."""
    mesh = u_h.mesh
    rule, pts = _cell_quad(mesh, degree)
    gex = np.asarray(case.grad_u(pts.reshape(-1, mesh.dim)))
    gex = gex.reshape(pts.shape[0], pts.shape[1], mesh.dim, mesh.dim)
    diff = gex - u_h.cell_gradients()[:, None, :, :]
    cellwise = np.einsum("q,mqcn,mqcn->m", rule.weights, diff, diff)
    return float(np.sqrt(cellwise @ mesh.cell_volumes))


def error_l2_p(case, p_h, degree=ERROR_QUAD_DEGREE):
    """||p_exact - p_h||_{L2(Omega_h)} for a P0Function p_h."""
    mesh = p_h.mesh
    rule, pts = _cell_quad(mesh, degree)
    exact = np.asarray(case.p(pts.reshape(-1, mesh.dim)))
    exact = exact.reshape(pts.shape[0], pts.shape[1])
    diff = exact - p_h.values[:, None]
    cellwise = np.einsum("q,mq,mq->m", rule.weights, diff, diff)
    return float(np.sqrt(cellwise @ mesh.cell_volumes))


def jump_seminorm_sq(u_h, jmat=None):
    """sum_e h_e^{-1} ||[u_h]||^2_e over interior facets.

    The quadratic form is positive semidefinite; roundoff can produce
    tiny negative values for fields in its kernel, which are clamped.
    """
    if jmat is None:
        jmat = forms.jump_matrix(u_h.mesh, u_h.facets)
    value = float(sum(u_h.dofs[:, c] @ (jmat @ u_h.dofs[:, c])
                      for c in range(u_h.ncomp)))
    return max(value, 0.0)


def triple_norm(u_h, jmat=None):
    """Mesh-dependent norm |||u_h||| (L2 + broken grad + scaled jumps)."""
    from .spaces import _l2_sq, _broken_grad_sq
    return float(np.sqrt(_l2_sq(u_h) + _broken_grad_sq(u_h)
                         + jump_seminorm_sq(u_h, jmat)))


def error_triple_u(case, u_h, degree=ERROR_QUAD_DEGREE, jmat=None):
    """|||u_exact - u_h|||; the exact field is continuous, so the jump
    part reduces to the jumps of u_h itself."""
    return float(np.sqrt(error_l2_u(case, u_h, degree) ** 2
                         + error_broken_h1(case, u_h, degree) ** 2
                         + jump_seminorm_sq(u_h, jmat)))


def flux_defect(u_exact, g_exact, mesh, facets, degree=4):
    """Facet-mean normal-flux defect of an exact field pair.

    Returns (global, weighted) with
        global^2   = sum_e |e| * d_e^2,
        weighted^2 = sum_e h_e^{-1} |e| * d_e^2,
    where d_e is the mean over the boundary facet e of u·n_e - g.
    """
    bf = facets.boundary_facets
    rule = simplex_rule(mesh.dim - 1, degree)
    verts = mesh.vertices[facets.facet_vertices[bf]]
    pts = map_points(rule, verts)                       # (nb, q, N)
    flat = pts.reshape(-1, mesh.dim)
    uvals = np.asarray(u_exact(flat)).reshape(len(bf), -1, mesh.dim)
    gvals = np.asarray(g_exact(flat)).reshape(len(bf), -1)
    un = np.einsum("eqa,ea->eq", uvals, facets.normals[bf])
    d = np.einsum("q,eq->e", rule.weights, un - gvals)
    meas = facets.measures[bf]
    glob = float(np.sqrt((meas * d ** 2).sum()))
    weighted = float(np.sqrt((meas / facets.diameters[bf] * d ** 2).sum()))
    return glob, weighted


def eoc(errors, hs):
    """Observed orders log(e_i/e_{i+1}) / log(h_i/h_{i+1}).

    Raises ZeroError when an error vanishes (no order is defined)."""
    errors = [float(e) for e in errors]
    hs = [float(h) for h in hs]
    if any(e == 0.0 for e in errors):
        raise ZeroError("zero error has no convergence order")
    return [log(errors[i] / errors[i + 1]) / log(hs[i] / hs[i + 1])
            for i in range(len(errors) - 1)]


@dataclass
class ErrorRecord:
    """Per-level study results (main table plus diagnostics fields)."""
    level: int
    h: float
    num_cells: int
    l2_u: float
    h1_u: float          # triple norm of the velocity error
    h1_semi_u: float     # broken H1 seminorm alone
    l2_p: float          # mean-adjusted pressure error
    l2_p_raw: float      # raw pressure error (diagnostic)
    flux: float
    flux_weighted: float
    residual: float
    k_h: float


def boundary_skin_ratio(v_h, domain, levels=2, degree=2):
    """||v||_{L2(Omega_h \\ Omega)} / (h |||v|||) by masked quadrature.

    Each cell touching the boundary is uniformly subdivided `levels` times
    (factor 4 per edge at the default) and quadrature nodes with positive
    signed distance are kept.  For inscribed meshes of a convex domain the
    numerator vanishes.
    """
    mesh, facets = v_h.mesh, v_h.facets
    bcells = np.unique(facets.cells_adj[facets.boundary_facets, 0])
    verts = mesh.vertices[mesh.cells[bcells]]           # (m, N+1, N)
    simplices = verts[:, None, :, :]                    # (m, 1, N+1, N)
    for _ in range(levels):
        simplices = _subdivide_batch(simplices)
    m, s = simplices.shape[:2]
    rule = simplex_rule(mesh.dim, degree)
    pts = np.einsum("qj,msjk->msqk", rule.points, simplices)
    vols = _simplex_volumes(simplices.reshape(m * s, mesh.dim + 1, mesh.dim))
    vols = vols.reshape(m, s)
    dvals = domain.signed_distance(pts.reshape(-1, mesh.dim))
    mask = (dvals > 0.0).reshape(m, s, len(rule.weights))

    lam = _barycentric_of(simplices, mesh, bcells, rule)  # (m, s, q, N+1)
    phi = 1.0 - mesh.dim * lam
    cd = v_h.cell_dofs()[bcells]                        # (m, N+1, k)
    vals = np.einsum("msqi,mik->msqk", phi, cd)
    sq = (vals ** 2).sum(axis=-1) * mask
    outside = float(np.einsum("q,msq,ms->", rule.weights, sq, vols))
    denom = mesh.h * triple_norm(v_h)
    return float(np.sqrt(outside)) / denom


def _subdivide_batch(simplices):
    """Red-subdivide a batch (m, s, N+1, N) into (m, s*2^N, N+1, N)."""
    dim = simplices.shape[-1]
    v = [simplices[..., i, :] for i in range(dim + 1)]
    mid = {}
    for i in range(dim + 1):
        for j in range(i + 1, dim + 1):
            mid[(i, j)] = 0.5 * (v[i] + v[j])
    if dim == 2:
        parts = [
            (v[0], mid[(0, 1)], mid[(0, 2)]),
            (v[1], mid[(1, 2)], mid[(0, 1)]),
            (v[2], mid[(0, 2)], mid[(1, 2)]),
            (mid[(0, 1)], mid[(1, 2)], mid[(0, 2)]),
        ]
    else:
        m01, m02, m03 = mid[(0, 1)], mid[(0, 2)], mid[(0, 3)]
        m12, m13, m23 = mid[(1, 2)], mid[(1, 3)], mid[(2, 3)]
        parts = [
            (v[0], m01, m02, m03), (m01, v[1], m12, m13),
            (m02, m12, v[2], m23), (m03, m13, m23, v[3]),
            (m01, m02, m03, m13), (m01, m02, m12, m13),
            (m02, m03, m13, m23), (m02, m12, m13, m23),
        ]
    stacked = [np.stack(p, axis=-2) for p in parts]
    return np.concatenate(stacked, axis=1)


def _simplex_volumes(verts):
    edges = verts[:, 1:] - verts[:, :1]
    from math import factorial
    return np.abs(np.linalg.det(edges)) / factorial(verts.shape[-1])


def _barycentric_of(simplices, mesh, cells, rule):
    """Barycentric coords (w.r.t. the parent cells) of subcell quad points."""
    pts = np.einsum("qj,msjk->msqk", rule.points, simplices)
    verts = mesh.vertices[mesh.cells[cells]]
    edges = verts[:, 1:] - verts[:, :1]
    inv = np.linalg.inv(edges)
    rel = pts - verts[:, None, None, 0, :]
    lam_rest = np.einsum("mnk,msqn->msqk", inv, rel)
    lam0 = 1.0 - lam_rest.sum(axis=-1, keepdims=True)
    return np.concatenate([lam0, lam_rest], axis=-1)


def _vh_gram(mesh, facets):
    """Scalar Gram of the discrete velocity norm (mass + broken stiffness)."""
    return (forms.cr_mass(mesh, facets)
            + forms.cr_stiffness(mesh, facets)).tocsr()


def korn_ratio_min(mesh, facets, nu=1.0, gamma=1.0, num_samples=200,
                   seed=1234):
    """min over random v_h of (a(v,v) + j(v,v)) / ||v||_{V_h}^2."""
    A = forms.assemble_a(mesh, facets, nu)
    J = forms.assemble_j(mesh, facets, gamma)
    G = sp.kron(_vh_gram(mesh, facets), sp.eye(mesh.dim), format="csr")
    AJ = (A + J).tocsr()
    rng = np.random.default_rng(seed)
    n = A.shape[0]
    best = np.inf
    for _ in range(num_samples):
        v = rng.standard_normal(n)
        best = min(best, (v @ (AJ @ v)) / (v @ (G @ v)))
    return float(best)


def infsup_min(mesh, facets, num_samples=20, seed=4321):
    """min over random mean-zero q_h of
    sup_{v in V_ring} b(q,v) / (||v||_{V_h} ||q||) (midpoint-zero test space)."""
    B = forms.assemble_b(mesh, facets)
    G = sp.kron(_vh_gram(mesh, facets), sp.eye(mesh.dim), format="csr")
    interior = np.flatnonzero(~facets.is_boundary)
    idofs = (interior[:, None] * mesh.dim + np.arange(mesh.dim)).ravel()
    G_ii = G[idofs][:, idofs].tocsc()
    B_i = B[:, idofs].tocsc()
    lu = spla.splu(G_ii)
    vols = mesh.cell_volumes
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(num_samples):
        q = rng.standard_normal(mesh.num_cells)
        q -= (q @ vols) / vols.sum()
        rhs = B_i.T @ q
        sup = np.sqrt(rhs @ lu.solve(rhs))
        best = min(best, sup / np.sqrt(q @ (vols * q)))
    return float(best)


def jump_equivalence_max(mesh, facets, num_samples=50, seed=999):
    """max over random v_h of (sum_e h_e^{-1}||[v]||^2) / (sum_T ||grad v||^2).

    Bounded uniformly in h for shape-regular families (the reverse of the
    broken-norm control of jumps)."""
    Js = forms.jump_matrix(mesh, facets)
    Ss = forms.cr_stiffness(mesh, facets)
    rng = np.random.default_rng(seed)
    n = Js.shape[0]
    worst = 0.0
    for _ in range(num_samples):
        v = rng.standard_normal(n)
        s = v @ (Ss @ v)
        if s > 0:
            worst = max(worst, (v @ (Js @ v)) / s)
    return float(worst)


def enrich_bound_max(mesh, facets, num_samples=20, seed=555):
    """max over random v_h of ||v - E_h v||_{V_h} / jump seminorm."""
    from .spaces import enrich_volume, vh_norm
    Js = forms.jump_matrix(mesh, facets)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_samples):
        v = CRFunction(mesh, facets,
                       rng.standard_normal((facets.num_facets, mesh.dim)))
        w = enrich_volume(v)
        wdofs = w.values[facets.facet_vertices].mean(axis=1)
        diff = CRFunction(mesh, facets, v.dofs - wdofs)
        jsq = jump_seminorm_sq(v, Js)
        if jsq > 0:
            worst = max(worst, vh_norm(diff) / np.sqrt(jsq))
    return float(worst)

"""Solution of the assembled saddle-point system and postprocessing.

Small systems are factorized directly (SuperLU, COLAMD ordering).  Large
systems switch to preconditioned MINRES: the saddle matrix is symmetric,
its velocity block K = A + J + C/eps is positive definite, and the
block-diagonal preconditioner

    P = diag( blockdiag(K)^{-1},  nu * M_p^{-1} )

(per-facet dim x dim diagonal blocks of K; M_p the diagonal P0 pressure
mass) keeps the iteration count moderate even with the 1/eps penalty,
because the penalty only enters those facet blocks.  Iterative
refinement passes re-solve for the residual until the acceptance bound
holds, so both paths satisfy the same contract:

    ||M x - b||_inf <= 1e-10 * (1 + ||b||_inf).

Postprocessing recovers the mean-adjusted pressure and the boundary
multiplier

    k_h = (p_h, 1) / |Omega_h|,    p_ring = p_h - k_h,
    lambda_h = (1/eps) * (u_h(m_e)·n_e - g_e)   per boundary facet e.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .spaces import CRFunction, P0Function, FacetFunction

RESIDUAL_TOL = 1e-10

#: largest system solved by sparse LU; beyond this MINRES is used
DIRECT_LIMIT = 40000

MINRES_RTOL = 1e-13
MINRES_MAXITER = 20000
REFINE_MAXITER = 6000
MAX_REFINE_PASSES = 3


class NumericalFailure(Exception):
    """Base class for solver failures."""


class FactorizationFailure(NumericalFailure):
    """Sparse LU factorization failed."""


class SingularSystem(FactorizationFailure):
    """The assembled system is (numerically) singular."""


class ResidualTooLarge(NumericalFailure):
    """Computed solution violates the residual acceptance bound."""


@dataclass
class Solution:
    u: CRFunction            # velocity
    p: P0Function            # raw pressure
    p_ring: P0Function       # mean-adjusted pressure p - k_h
    k_h: float               # volume mean of the raw pressure
    multiplier: FacetFunction  # recovered boundary multiplier lambda_h
    residual: float          # inf-norm of matrix @ x - rhs


def _solve_direct(system):
    try:
        lu = spla.splu(system.matrix.tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        msg = str(exc)
        if "singular" in msg.lower():
            raise SingularSystem(msg) from exc
        raise FactorizationFailure(msg) from exc
    return lu.solve(system.rhs)


def _saddle_preconditioner(system, mesh):
    """Block-diagonal SPD preconditioner (inverse apply) for MINRES."""
    dim = mesh.dim
    K = (system.A + system.J + system.C / system.eps).tocoo()
    nvel = system.num_velocity
    blocks = np.zeros((nvel // dim, dim, dim))
    own = (K.row // dim) == (K.col // dim)
    np.add.at(blocks, (K.row[own] // dim, K.row[own] % dim, K.col[own] % dim),
              K.data[own])
    block_inv = np.linalg.inv(blocks)
    pressure_diag = mesh.cell_volumes / system.nu

    def apply(x):
        out = np.empty_like(x)
        out[:nvel] = np.einsum(
            "nab,nb->na", block_inv, x[:nvel].reshape(-1, dim)).ravel()
        out[nvel:] = x[nvel:] / pressure_diag
        return out

    shape = system.matrix.shape
    return spla.LinearOperator(shape, matvec=apply)


def _solve_minres(system, mesh):
    matrix = system.matrix.tocsr()
    precond = _saddle_preconditioner(system, mesh)
    x, _ = spla.minres(matrix, system.rhs, M=precond, rtol=MINRES_RTOL,
                       maxiter=MINRES_MAXITER)
    bound = RESIDUAL_TOL * (1.0 + float(np.abs(system.rhs).max()))
    for _ in range(MAX_REFINE_PASSES):
        r = system.rhs - matrix @ x
        if float(np.abs(r).max()) <= bound:
            break
        dx, _ = spla.minres(matrix, r, M=precond, rtol=1e-8,
                            maxiter=REFINE_MAXITER)
        x = x + dx
    return x


def solve(system, mesh, facets, method="auto"):
    """Solve the saddle system; returns a Solution.

    `method` is "direct", "minres", or "auto" (direct up to DIRECT_LIMIT
    unknowns).  Raises SingularSystem / FactorizationFailure on
    factorization errors and ResidualTooLarge if the residual contract
    ||Mx - b||_inf <= 1e-10 (1 + ||b||_inf) cannot be met.
    """
    n = system.matrix.shape[0]
    if method == "auto":
        method = "direct" if n <= DIRECT_LIMIT else "minres"
    if method == "direct":
        x = _solve_direct(system)
    elif method == "minres":
        x = _solve_minres(system, mesh)
    else:
        raise ValueError("unknown method %r" % method)
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite entries in the solution")

    residual = float(np.abs(system.matrix @ x - system.rhs).max())
    bound = RESIDUAL_TOL * (1.0 + float(np.abs(system.rhs).max()))
    if residual > bound:
        raise ResidualTooLarge("residual %.3e exceeds %.3e" % (residual, bound))

    nvel = system.num_velocity
    dim = mesh.dim
    U = x[:nvel].reshape(-1, dim)
    P = x[nvel:]

    u = CRFunction(mesh, facets, U)
    p = P0Function(mesh, P)
    k_h = p.mean()
    p_ring = P0Function(mesh, P - k_h)

    bf = facets.boundary_facets
    un = np.einsum("ea,ea->e", U[bf], facets.normals[bf])
    lam = (un - np.asarray(system.g_means.values)) / system.eps
    return Solution(u=u, p=p, p_ring=p_ring, k_h=k_h,
                    multiplier=FacetFunction(facets, lam),
                    residual=residual)

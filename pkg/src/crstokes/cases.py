"""Manufactured solutions on the unit disk and unit ball.

Each case packages an exact solution (u, p) of the generalized Stokes
system

    u - div sigma(u,p) = f,   div u = 0      in Omega,
    u·n = g,  (I - n x n) sigma(u,p) n = tau  on Gamma,

with sigma(u,p) = -p I + nu (grad u + grad u^T), together with closures
for all data.  The formulas are global polynomials (their own smooth
extensions off Omega); the traction closure extends the normal radially.

Every derived formula (f, g, tau, div-freeness) is validated by
`oracle_check` against finite differences and independent boundary
quadrature before any convergence run.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import unit_disk, unit_ball


class OracleMismatch(Exception):
    """A data formula disagrees with its finite-difference oracle."""

    def __init__(self, case, name, point, mismatch):
        super().__init__("case %s, field %s: mismatch %.3e at point %s"
                         % (case, name, mismatch, np.array2string(point)))
        self.case = case
        self.name = name
        self.point = point
        self.mismatch = mismatch


@dataclass
class StokesCase:
    """Exact solution and data closures; all callables take (m, N) arrays."""
    name: str
    domain: object
    nu: float
    u: Callable          # (m, N) -> (m, N)
    grad_u: Callable     # (m, N) -> (m, N, N), rows index components
    lap_u: Callable      # (m, N) -> (m, N)
    p: Callable          # (m, N) -> (m,)
    grad_p: Callable     # (m, N) -> (m, N)
    f: Callable = field(init=False)      # u - nu lap u + grad p
    g: Callable = field(init=False)      # extension of u·n
    tau: Callable = field(init=False)    # tangential traction, radial normal
    dim: int = field(init=False)

    def __post_init__(self):
        self.dim = self.domain.dim
        nu = self.nu

        def f(x):
            return self.u(x) - nu * self.lap_u(x) + self.grad_p(x)

        def g(x):
            n = self.domain.normal_extended(x)
            return np.einsum("ma,ma->m", self.u(x), n)

        def tau(x):
            n = self.domain.normal_extended(x)
            sn = np.einsum("mab,mb->ma", self.sigma(x), n)
            return sn - np.einsum("ma,ma->m", n, sn)[:, None] * n

        self.f, self.g, self.tau = f, g, tau

    def sigma(self, x):
        """Stress tensor -p I + nu (grad u + grad u^T), shape (m, N, N)."""
        gu = self.grad_u(x)
        strain = gu + np.swapaxes(gu, 1, 2)
        return self.nu * strain - self.p(x)[:, None, None] * np.eye(self.dim)

    def div_u(self, x):
        gu = self.grad_u(x)
        return np.einsum("maa->m", gu)


def case_disk2d(nu=1.0):
    """Rotational flow on the unit disk.

    u = (-y (x^2+y^2), x (x^2+y^2)),  p = 8 x y;  u·n = 0 on the circle.
    """
    dom = unit_disk()

    def u(x):
        r2 = x[:, 0] ** 2 + x[:, 1] ** 2
        return np.column_stack([-x[:, 1] * r2, x[:, 0] * r2])

    def grad_u(x):
        xx, yy = x[:, 0], x[:, 1]
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = -2.0 * xx * yy
        g[:, 0, 1] = -(xx ** 2 + 3.0 * yy ** 2)
        g[:, 1, 0] = 3.0 * xx ** 2 + yy ** 2
        g[:, 1, 1] = 2.0 * xx * yy
        return g

    def lap_u(x):
        return np.column_stack([-8.0 * x[:, 1], 8.0 * x[:, 0]])

    def p(x):
        return 8.0 * x[:, 0] * x[:, 1]

    def grad_p(x):
        return np.column_stack([8.0 * x[:, 1], 8.0 * x[:, 0]])

    return StokesCase("disk2d", dom, nu, u, grad_u, lap_u, p, grad_p)


def case_ball3d(nu=1.0, pressure_variant="printed"):
    """Swirling flow on the unit ball.

    u = 10 (x^2 y z (y-z), x y^2 z (z-x), x y z^2 (x-y)).

    The reference pressure formula reads "10xyz(z+y+z)"; taken literally
    that is 10xyz(y+2z), which `pressure_variant="printed"` (the default)
    implements.  `pressure_variant="symmetric"` selects the likely intended
    10xyz(x+y+z) instead.

    The normal trace factorizes as u·n = -10xyz(x-y)(y-z)(z-x) on the
    sphere, and that polynomial is used as the extension of g.
    """
    dom = unit_ball()

    def u(x):
        xx, yy, zz = x[:, 0], x[:, 1], x[:, 2]
        return 10.0 * np.column_stack([
            xx ** 2 * yy * zz * (yy - zz),
            xx * yy ** 2 * zz * (zz - xx),
            xx * yy * zz ** 2 * (xx - yy),
        ])

    def grad_u(x):
        xx, yy, zz = x[:, 0], x[:, 1], x[:, 2]
        g = np.empty((len(x), 3, 3))
        g[:, 0, 0] = 20.0 * xx * yy * zz * (yy - zz)
        g[:, 0, 1] = 10.0 * xx ** 2 * zz * (2.0 * yy - zz)
        g[:, 0, 2] = 10.0 * xx ** 2 * yy * (yy - 2.0 * zz)
        g[:, 1, 0] = 10.0 * yy ** 2 * zz * (zz - 2.0 * xx)
        g[:, 1, 1] = 20.0 * xx * yy * zz * (zz - xx)
        g[:, 1, 2] = 10.0 * xx * yy ** 2 * (2.0 * zz - xx)
        g[:, 2, 0] = 10.0 * yy * zz ** 2 * (2.0 * xx - yy)
        g[:, 2, 1] = 10.0 * xx * zz ** 2 * (xx - 2.0 * yy)
        g[:, 2, 2] = 20.0 * xx * yy * zz * (xx - yy)
        return g

    def lap_u(x):
        xx, yy, zz = x[:, 0], x[:, 1], x[:, 2]
        return 20.0 * np.column_stack([
            (yy - zz) * (yy * zz - xx ** 2),
            (zz - xx) * (zz * xx - yy ** 2),
            (xx - yy) * (xx * yy - zz ** 2),
        ])

    if pressure_variant == "printed":
        def p(x):
            xx, yy, zz = x[:, 0], x[:, 1], x[:, 2]
            return 10.0 * xx * yy * zz * (yy + 2.0 * zz)

        def grad_p(x):
            xx, yy, zz = x[:, 0], x[:, 1], x[:, 2]
            return np.column_stack([
                10.0 * yy * zz * (yy + 2.0 * zz),
                10.0 * xx * zz * (2.0 * yy + 2.0 * zz),
                10.0 * xx * yy * (yy + 4.0 * zz),
            ])
    elif pressure_variant == "symmetric":
        def p(x):
            xx, yy, zz = x[:, 0], x[:, 1], x[:, 2]
            return 10.0 * xx * yy * zz * (xx + yy + zz)

        def grad_p(x):
            xx, yy, zz = x[:, 0], x[:, 1], x[:, 2]
            s = xx + yy + zz
            return np.column_stack([
                10.0 * yy * zz * (s + xx),
                10.0 * xx * zz * (s + yy),
                10.0 * xx * yy * (s + zz),
            ])
    else:
        raise ValueError("pressure_variant must be 'printed' or 'symmetric'")

    case = StokesCase("ball3d", dom, nu, u, grad_u, lap_u, p, grad_p)

    def g(x):
        xx, yy, zz = x[:, 0], x[:, 1], x[:, 2]
        return (-10.0 * xx * yy * zz
                * (xx - yy) * (yy - zz) * (zz - xx))

    case.g = g
    return case


def get_case(name, nu=1.0, **kwargs):
    if name == "disk2d":
        return case_disk2d(nu=nu)
    if name == "ball3d":
        return case_ball3d(nu=nu, **kwargs)
    raise ValueError("unknown case %r (expected 'disk2d' or 'ball3d')" % name)


def _boundary_quadrature(dim, n):
    """Points and weights integrating smooth functions over the unit
    circle/sphere (trapezoid in angle; product Gauss x trapezoid in 3D)."""
    if dim == 2:
        t = 2.0 * np.pi * np.arange(n) / n
        pts = np.column_stack([np.cos(t), np.sin(t)])
        w = np.full(n, 2.0 * np.pi / n)
        return pts, w
    uu, wu = np.polynomial.legendre.leggauss(n)          # u = cos(theta)
    t = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
    su = np.sqrt(1.0 - uu ** 2)
    pts = np.stack([
        np.outer(su, np.cos(t)),
        np.outer(su, np.sin(t)),
        np.outer(uu, np.ones_like(t)),
    ], axis=-1).reshape(-1, 3)
    w = np.outer(wu, np.full(2 * n, 2.0 * np.pi / (2 * n))).ravel()
    return pts, w


def oracle_check(case, num_points=1000, step=1e-5, tol=1e-6, seed=7241,
                 step2=1e-4):
    """Validate all derived data formulas against independent oracles.

    * f = u - nu lap u + grad p with lap u and grad p replaced by central
      finite differences, at `num_points` random points;
    * grad_u against finite differences of u;
    * div u = 0 (analytically, from grad_u);
    * g = u·n and tau·n = 0 at random boundary points;
    * compatibility: integral of g over the boundary vanishes (independent
      high-resolution boundary quadrature).

    First derivatives use `step`; the second difference for the Laplacian
    uses the larger `step2`, since its roundoff floor eps*|u|/step^2 would
    exceed `tol` at step 1e-5 for data of magnitude ~10.

    Raises OracleMismatch naming the offending field and point.  All
    comparisons are relative to the local data scale.
    """
    rng = np.random.default_rng(seed)
    dim = case.dim
    x = rng.uniform(-1.0, 1.0, size=(num_points, dim))
    keep = np.linalg.norm(x, axis=1) > 1e-3             # avoid the center
    x = x[keep]

    def fail(name, values_exact, values_fd):
        diff = np.abs(values_exact - values_fd)
        scale = 1.0 + np.abs(values_fd)
        rel = diff / scale
        worst = np.unravel_index(np.argmax(rel), rel.shape)
        raise OracleMismatch(case.name, name, x[worst[0]], float(rel.max()))

    # finite-difference gradient and Laplacian of u, gradient of p
    fd_grad_u = np.empty((len(x), dim, dim))
    fd_lap_u = np.zeros((len(x), dim))
    fd_grad_p = np.empty((len(x), dim))
    u0 = case.u(x)
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = step
        up, um = case.u(x + e), case.u(x - e)
        fd_grad_u[:, :, k] = (up - um) / (2.0 * step)
        fd_grad_p[:, k] = (case.p(x + e) - case.p(x - e)) / (2.0 * step)
        e[k] = step2
        up2, um2 = case.u(x + e), case.u(x - e)
        fd_lap_u += (up2 - 2.0 * u0 + um2) / step2 ** 2

    rel = np.abs(case.grad_u(x) - fd_grad_u) / (1.0 + np.abs(fd_grad_u))
    if rel.max() > tol:
        fail("grad_u", case.grad_u(x), fd_grad_u)

    f_fd = case.u(x) - case.nu * fd_lap_u + fd_grad_p
    rel = np.abs(case.f(x) - f_fd) / (1.0 + np.abs(f_fd))
    if rel.max() > tol:
        fail("f", case.f(x), f_fd)

    dv = np.abs(case.div_u(x))
    if dv.max() > 1e-12 * (1.0 + np.abs(case.grad_u(x)).max()):
        worst = int(np.argmax(dv))
        raise OracleMismatch(case.name, "div_u", x[worst], float(dv.max()))

    # boundary identities at random boundary points
    xb = case.domain.project(rng.normal(size=(num_points, dim)))
    n = case.domain.normal(xb)
    gb = np.einsum("ma,ma->m", case.u(xb), n)
    rel = np.abs(case.g(xb) - gb) / (1.0 + np.abs(gb))
    if rel.max() > tol:
        fail("g", case.g(xb), gb)
    tn = np.abs(np.einsum("ma,ma->m", case.tau(xb), n))
    if tn.max() > 1e-10 * (1.0 + np.abs(case.tau(xb)).max()):
        worst = int(np.argmax(tn))
        raise OracleMismatch(case.name, "tau·n", xb[worst], float(tn.max()))

    # compatibility: mean of g over the boundary
    pts, w = _boundary_quadrature(dim, 40)
    total = float(case.g(pts) @ w)
    if abs(total) > 1e-10 * (1.0 + float(np.abs(case.g(pts)).max())):
        raise OracleMismatch(case.name, "compatibility", pts[0], abs(total))
    return True

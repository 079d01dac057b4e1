"""Smooth domains with signed distance, boundary projection and outer normal.

The solver targets C^2 domains described implicitly.  Two concrete domains
are provided: the unit disk (N = 2) and the unit ball (N = 3).  Both share
the same radial formulas

    d(x) = |x| - 1,      pi(x) = x / |x|,      n(x) = x / |x|,

where d is the signed distance (negative inside), pi the orthogonal
projection onto the boundary and n the outer unit normal.
"""

import numpy as np

ORIGIN_TOL = 1e-12
BOUNDARY_TOL = 1e-10


class DegeneratePoint(Exception):
    """Projection requested at a point where it is not single-valued."""


class NotOnBoundary(Exception):
    """Normal requested at a point farther than BOUNDARY_TOL from the boundary."""


class SphereDomain:
    """Unit disk (dim=2) or unit ball (dim=3) centered at the origin.

    All methods accept a single point of shape (dim,) or a batch of
    points of shape (m, dim) and return correspondingly shaped arrays.
    """

    def __init__(self, dim):
        if dim not in (2, 3):
            raise ValueError("dim must be 2 or 3, got %r" % (dim,))
        self.dim = dim

    def signed_distance(self, x):
        """d(x) = |x| - 1; negative inside, zero on the boundary."""
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x, axis=-1) - 1.0

    def project(self, x):
        """Closest boundary point pi(x) = x/|x|.

        Raises DegeneratePoint if any point lies within ORIGIN_TOL of the
        center, where the projection is not unique.
        """
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        if np.any(r < ORIGIN_TOL):
            raise DegeneratePoint("projection undefined at the center")
        return x / r[..., None]

    def normal(self, x):
        """Outer unit normal n(x) at a boundary point.

        The point must satisfy |d(x)| <= BOUNDARY_TOL, otherwise
        NotOnBoundary is raised.
        """
        x = np.asarray(x, dtype=float)
        d = self.signed_distance(x)
        if np.any(np.abs(d) > BOUNDARY_TOL):
            raise NotOnBoundary("point not on the boundary: max |d| = %.3e"
                                % np.max(np.abs(d)))
        return x / np.linalg.norm(x, axis=-1)[..., None]

    def normal_extended(self, x):
        """Radial extension x/|x| of the normal field off the boundary.

        Used to evaluate analytic traction data in a tubular neighborhood
        of the boundary; not restricted to boundary points.
        """
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        if np.any(r < ORIGIN_TOL):
            raise DegeneratePoint("normal extension undefined at the center")
        return x / r[..., None]


def unit_disk():
    return SphereDomain(2)


def unit_ball():
    return SphereDomain(3)

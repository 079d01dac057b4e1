"""Tests for the smooth-domain geometry helpers (disk / ball)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crstokes.geometry import (DegeneratePoint, NotOnBoundary, unit_ball,
                               unit_disk)


def test_dimensions():
    assert unit_disk().dim == 2
    assert unit_ball().dim == 3


def test_signed_distance_known_values():
    disk = unit_disk()
    assert disk.signed_distance(np.array([[0.6, 0.8]]))[0] == pytest.approx(0.0)
    assert disk.signed_distance(np.array([[3.0, 4.0]]))[0] == pytest.approx(4.0)
    assert disk.signed_distance(np.array([[0.0, 0.5]]))[0] == pytest.approx(-0.5)
    ball = unit_ball()
    assert ball.signed_distance(np.array([[2.0, 2.0, 1.0]]))[0] == \
        pytest.approx(2.0)


def test_project_known_values():
    disk = unit_disk()
    out = disk.project(np.array([[3.0, 4.0], [0.5, 0.0]]))
    assert np.allclose(out, [[0.6, 0.8], [1.0, 0.0]], atol=1e-15)


def test_project_origin_raises():
    with pytest.raises(DegeneratePoint):
        unit_disk().project(np.zeros((1, 2)))
    with pytest.raises(DegeneratePoint):
        unit_ball().project(np.array([[0.0, 0.0, 1e-14]]))


def test_normal_is_the_point_on_the_unit_sphere():
    ball = unit_ball()
    p = np.array([[0.0, 0.6, 0.8]])
    assert np.allclose(ball.normal(p), p, atol=1e-12)


def test_normal_requires_boundary_point():
    with pytest.raises(NotOnBoundary):
        unit_disk().normal(np.array([[0.5, 0.5]]))


def test_normal_extended_is_radial():
    ball = unit_ball()
    pts = np.array([[2.0, 0.0, 0.0], [0.3, 0.0, 0.4]])
    out = ball.normal_extended(pts)
    assert np.allclose(out, [[1.0, 0.0, 0.0], [0.6, 0.0, 0.8]], atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_projection_lands_on_boundary(x, y, z):
    p = np.array([[x, y, z]])
    ball = unit_ball()
    if np.linalg.norm(p) < 1e-6:
        return
    q = ball.project(p)
    assert abs(np.linalg.norm(q) - 1.0) < 1e-12
    assert abs(ball.signed_distance(q)[0]) < 1e-12
    # projection is idempotent and preserves direction
    assert np.allclose(ball.project(q), q, atol=1e-12)
    assert np.dot(q[0], p[0]) > 0

"""Tests of the manufactured Stokes solutions and the data oracle gate."""

import numpy as np
import pytest

from crstokes.cases import (
    OracleMismatch,
    case_ball3d,
    case_disk2d,
    get_case,
    oracle_check,
)


def random_points(dim, n=200, seed=31):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(n, dim))
    return x[np.linalg.norm(x, axis=1) > 1e-2]


def random_boundary_points(case, n=200, seed=77):
    rng = np.random.default_rng(seed)
    return case.domain.project(rng.normal(size=(n, case.dim)))


def test_get_case_dispatch():
    assert get_case("disk2d").name == "disk2d"
    assert get_case("ball3d").name == "ball3d"
    assert get_case("ball3d", pressure_variant="symmetric").name == "ball3d"
    with pytest.raises(ValueError):
        get_case("cube")


def test_disk_point_values():
    case = case_disk2d()
    u = case.u(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.0]]))
    assert np.allclose(u[0], [0.0, 1.0], atol=1e-15)
    assert np.allclose(u[1], [-1.0, 0.0], atol=1e-15)
    assert np.allclose(u[2], [0.0, 0.125], atol=1e-15)
    p = case.p(np.array([[1.0, 1.0], [0.3, -0.2]]))
    assert p[0] == pytest.approx(8.0, abs=1e-15)
    assert p[1] == pytest.approx(8.0 * 0.3 * -0.2, abs=1e-15)


def test_disk_body_force_closed_form():
    # u - nu lap u + grad p = (-y r^2 + 16 y, x r^2) for nu = 1
    case = case_disk2d()
    x = random_points(2)
    r2 = (x ** 2).sum(axis=1)
    expected = np.column_stack([-x[:, 1] * r2 + 16.0 * x[:, 1],
                                x[:, 0] * r2])
    assert np.allclose(case.f(x), expected, atol=1e-13)


def test_disk_viscosity_scaling():
    # f(nu=2) - f(nu=1) = -lap u, independently of the point
    c1, c2 = case_disk2d(nu=1.0), case_disk2d(nu=2.0)
    x = random_points(2)
    assert np.allclose(c2.f(x) - c1.f(x), -c1.lap_u(x), atol=1e-13)


def test_disk_normal_trace_vanishes_everywhere():
    # u is orthogonal to the position vector, so g = u·(x/|x|) = 0 globally
    case = case_disk2d()
    x = random_points(2, n=500)
    assert np.abs(case.g(x)).max() < 1e-14


def test_ball_pressure_variants():
    x = np.array([[1.0, 2.0, 3.0]])
    printed = case_ball3d(pressure_variant="printed")
    symmetric = case_ball3d(pressure_variant="symmetric")
    assert printed.p(x)[0] == pytest.approx(480.0, abs=1e-12)   # 10xyz(y+2z)
    assert symmetric.p(x)[0] == pytest.approx(360.0, abs=1e-12)  # 10xyz(x+y+z)
    with pytest.raises(ValueError):
        case_ball3d(pressure_variant="other")


def test_ball_normal_trace_factorization():
    # on the sphere, u·x = -10xyz(x-y)(y-z)(z-x); g extends that polynomial
    case = case_ball3d()
    xb = random_boundary_points(case)
    un = np.einsum("ma,ma->m", case.u(xb), xb)
    assert np.allclose(case.g(xb), un, atol=1e-13)


@pytest.mark.parametrize("make", [case_disk2d, case_ball3d])
def test_divergence_free(make):
    case = make()
    x = random_points(case.dim)
    scale = 1.0 + np.abs(case.grad_u(x)).max()
    assert np.abs(case.div_u(x)).max() < 1e-13 * scale


@pytest.mark.parametrize("make", [case_disk2d, case_ball3d])
def test_stress_symmetric_and_traction_tangential(make):
    case = make()
    x = random_points(case.dim)
    sig = case.sigma(x)
    assert np.allclose(sig, np.swapaxes(sig, 1, 2), atol=1e-13)
    xb = random_boundary_points(case)
    n = case.domain.normal(xb)
    tn = np.einsum("ma,ma->m", case.tau(xb), n)
    scale = 1.0 + np.abs(case.tau(xb)).max()
    assert np.abs(tn).max() < 1e-12 * scale


@pytest.mark.parametrize("case", [
    case_disk2d(),
    case_ball3d(),
    case_ball3d(pressure_variant="symmetric"),
], ids=["disk2d", "ball3d-printed", "ball3d-symmetric"])
def test_oracle_check_passes(case):
    assert oracle_check(case, num_points=200)


def test_oracle_check_flags_corrupted_body_force():
    case = case_disk2d()
    orig = case.f
    case.f = lambda x: orig(x) + 1.0
    with pytest.raises(OracleMismatch) as err:
        oracle_check(case, num_points=100)
    assert err.value.name == "f"


def test_oracle_check_flags_corrupted_gradient():
    case = case_disk2d()
    orig = case.grad_u
    case.grad_u = lambda x: orig(x) + 0.01
    with pytest.raises(OracleMismatch) as err:
        oracle_check(case, num_points=100)
    assert err.value.name == "grad_u"


def test_oracle_check_flags_inconsistent_pressure_gradient():
    # grad_p feeds f; corrupting it must break the finite-difference f check
    case = case_ball3d()
    orig = case.grad_p
    case.grad_p = lambda x: orig(x) + 1.0
    case.__post_init__()        # rebuild the data closures from the fields
    with pytest.raises(OracleMismatch) as err:
        oracle_check(case, num_points=100)
    assert err.value.name == "f"


def test_oracle_check_flags_corrupted_slip_data():
    case = case_ball3d()
    orig = case.g
    case.g = lambda x: orig(x) + 0.5
    with pytest.raises(OracleMismatch) as err:
        oracle_check(case, num_points=100)
    assert err.value.name == "g"


def test_oracle_check_flags_non_tangential_traction():
    case = case_disk2d()
    orig = case.tau
    case.tau = lambda x: orig(x) + case.domain.normal_extended(x)
    with pytest.raises(OracleMismatch) as err:
        oracle_check(case, num_points=100)
    assert err.value.name == "tau·n"


def test_oracle_mismatch_reports_location():
    err = OracleMismatch("disk2d", "f", np.array([0.25, -0.5]), 3e-4)
    msg = str(err)
    assert "disk2d" in msg and "f" in msg and "3.000e-04" in msg

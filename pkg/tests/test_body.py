import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centroflow.body import (
    SupportBody,
    affine_curvature,
    affine_support,
    area,
    boundary_point,
    boundary_points,
    centro_affine_curvature,
    dual_area,
    euclid_length,
    hausdorff_distance,
    mixed_volume,
    p_affine_length,
    polar_dual,
    radius_of_curvature,
    summarize,
)
from centroflow.errors import ConvexityViolation
from centroflow.field import PeriodicField, nodes
from oracles import ellipse_perimeter, ellipse_radius, ellipse_support

PI = math.pi


def ellipse(a=2.0, b=0.5, phi=0.0, n=256):
    return SupportBody.from_function(lambda t: ellipse_support(a, b, phi, t), n)


def fourier_body(coeffs, n=128):
    """1 + sum over even modes; coeffs alternate cos/sin for k = 2, 4, ..."""
    th = nodes(n)
    s = np.ones(n)
    for j, (a, b) in enumerate(zip(coeffs[::2], coeffs[1::2]), start=1):
        s += a * np.cos(2 * j * th) + b * np.sin(2 * j * th)
    return SupportBody.from_values(s)


@st.composite
def bodies(draw, n=128):
    k = draw(st.integers(1, 3))
    coeffs = [draw(st.floats(-0.04, 0.04)) / j**2 for j in range(1, k + 1) for _ in range(2)]
    return fourier_body(coeffs, n)


def test_circle_basics():
    b = SupportBody.circle(1.0, 64)
    assert np.allclose(radius_of_curvature(b).values, 1.0)
    assert np.allclose(centro_affine_curvature(b).values, 1.0)
    assert area(b) == pytest.approx(PI, abs=1e-14)
    assert dual_area(b) == pytest.approx(PI, abs=1e-14)
    assert euclid_length(b) == pytest.approx(2 * PI, abs=1e-14)


def test_ellipse_radius_of_curvature():
    b = ellipse()
    assert b.r[0] == pytest.approx(1 / 8, abs=1e-10)
    assert np.allclose(b.r, ellipse_radius(2.0, 0.5, nodes(256)), atol=1e-9)


def test_nonconvex_rejected():
    with pytest.raises(ConvexityViolation) as info:
        SupportBody.from_function(lambda t: 1 + 0.6 * np.cos(2 * t), 64)
    assert 0 in info.value.nodes


def test_nonpositive_support_rejected():
    with pytest.raises(ConvexityViolation):
        SupportBody.from_values(-np.ones(32))


@pytest.mark.parametrize("R, k0", [(1.0, 1.0), (2.0, 1 / 16)])
def test_circle_kappa0(R, k0):
    assert np.allclose(SupportBody.circle(R, 64).kappa0, k0, rtol=1e-14)


def test_ellipse_functionals():
    b = ellipse()
    assert np.abs(b.kappa0 - 1.0).max() <= 1e-10
    assert area(b) == pytest.approx(PI, abs=1e-10)
    assert dual_area(b) == pytest.approx(PI, abs=1e-10)
    assert area(SupportBody.circle(3.0, 64)) == pytest.approx(9 * PI)
    assert dual_area(SupportBody.circle(2.0, 64)) == pytest.approx(PI / 4)


def test_ellipse_length_against_quadrature():
    # the perimeter of the (2, 1/2) ellipse is about 8.5784, by adaptive quadrature
    assert euclid_length(ellipse()) == pytest.approx(ellipse_perimeter(2.0, 0.5), abs=1e-6)
    assert euclid_length(SupportBody.circle(2.0, 64)) == pytest.approx(4 * PI)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 5.0])
def test_p_affine_length(p):
    assert p_affine_length(SupportBody.circle(1.0, 64), p) == pytest.approx(2 * PI, rel=1e-14)
    assert p_affine_length(ellipse(), p) == pytest.approx(2 * PI, abs=1e-8)
    R = 2.0
    exact = 2 * PI * R ** ((4 - 2 * p) / (p + 2))
    assert p_affine_length(SupportBody.circle(R, 64), p) == pytest.approx(exact, rel=1e-13)


def test_p_one_is_classical_affine_length():
    b = fourier_body([0.05, 0.02, -0.01, 0.0])
    direct = 2 * PI / b.n * np.sum(b.r ** (2 / 3))
    assert p_affine_length(b, 1.0) == pytest.approx(direct, rel=1e-13)


def test_p_below_one_rejected():
    with pytest.raises(ValueError):
        p_affine_length(SupportBody.circle(1.0, 64), 0.5)


def test_mixed_volume_examples():
    one = PeriodicField(np.ones(64), symmetric=True)
    two = PeriodicField(2 * np.ones(64), symmetric=True)
    assert mixed_volume(one, one) == pytest.approx(2 * PI)
    assert mixed_volume(one, two) == pytest.approx(4 * PI)
    e = ellipse(n=256).s
    c = SupportBody.circle(1.0, 256).s
    assert mixed_volume(e, c) ** 2 - mixed_volume(c, c) * mixed_volume(e, e) >= -1e-9


@pytest.mark.parametrize("R", [1.0, 8.0])
def test_affine_support_circle(R):
    assert np.allclose(affine_support(SupportBody.circle(R, 64)).values, R ** (4 / 3), rtol=1e-13)


def test_affine_support_ellipse():
    assert np.abs(affine_support(ellipse()).values - 1.0).max() <= 1e-10


def test_affine_curvature_examples():
    assert np.allclose(affine_curvature(SupportBody.circle(1.0, 64)).values, 1.0, atol=1e-12)
    assert np.allclose(affine_curvature(SupportBody.circle(2.0, 64)).values, 2 ** (-4 / 3), atol=1e-10)
    # n = 128 keeps the second affine derivative of the round-off in kappa0 small
    b = ellipse(1.5, 1 / 1.5, 0.3, n=128)
    assert np.abs(affine_curvature(b).values - 1.0).max() <= 1e-8


def test_polar_dual_examples():
    b = polar_dual(SupportBody.circle(2.0, 64))
    assert np.allclose(b.values, 0.5, atol=1e-12)
    e = polar_dual(ellipse())
    assert np.abs(e.values - ellipse_support(0.5, 2.0, 0.0, nodes(256))).max() <= 1e-6


def test_polar_round_trip():
    b = fourier_body([0.05, 0.02, -0.01, 0.004], n=256)
    assert hausdorff_distance(polar_dual(polar_dual(b)), b) <= 1e-6


def test_boundary_points():
    assert boundary_point(SupportBody.circle(1.0, 64), 0.0) == pytest.approx((1.0, 0.0), abs=1e-14)
    assert boundary_point(ellipse(), 0.0) == pytest.approx((2.0, 0.0), abs=1e-12)
    assert boundary_point(SupportBody.circle(3.0, 64), PI / 2) == pytest.approx((0.0, 3.0), abs=1e-14)
    pts = boundary_points(ellipse(n=256), refine=2)
    assert pts.shape == (512, 2)
    assert np.allclose((pts[:, 0] / 2) ** 2 + (pts[:, 1] / 0.5) ** 2, 1.0, atol=1e-6)


def test_hausdorff_examples():
    c1, c2 = SupportBody.circle(1.0, 256), SupportBody.circle(2.0, 256)
    assert hausdorff_distance(c1, c1) == 0.0
    assert hausdorff_distance(c1, c2) == pytest.approx(1.0)
    assert hausdorff_distance(ellipse(), c1) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        hausdorff_distance(c1, SupportBody.circle(1.0, 64))


def test_body_json_round_trip():
    b = fourier_body([0.05, 0.01])
    c = SupportBody.from_json(b.to_json())
    assert np.array_equal(c.values, b.values)


def test_summary_row():
    s = summarize(ellipse(), 2.0)
    assert s.kappa0_min <= s.kappa0_max
    assert s.csv_header().split(",")[0] == "area"
    assert len(s.csv_row().split(",")) == len(s.FIELDS)
    assert s.omega_p == pytest.approx(2 * PI, abs=1e-8)


@pytest.mark.parametrize("c", [0.5, 2.0])
@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_scaling_laws(c, p):
    b = fourier_body([0.06, -0.02, 0.01, 0.0])
    cb = b.scaled(c)
    assert area(cb) == pytest.approx(c**2 * area(b), rel=1e-9)
    assert p_affine_length(cb, p) == pytest.approx(c ** ((4 - 2 * p) / (p + 2)) * p_affine_length(b, p), rel=1e-9)
    assert np.allclose(cb.kappa0, c**-4 * b.kappa0, rtol=1e-9)


def test_omega_two_scale_invariant():
    b = fourier_body([0.06, -0.02])
    assert p_affine_length(b.scaled(3.7), 2.0) == pytest.approx(p_affine_length(b, 2.0), rel=1e-9)


def test_dual_area_matches_area_of_dual():
    b = fourier_body([0.05, 0.02, -0.01, 0.004], n=256)
    assert dual_area(b) == pytest.approx(area(polar_dual(b)), rel=1e-6)


@pytest.mark.parametrize("q", [1.0, 2.0, 4.0])
def test_omega_duality(q):
    b = fourier_body([0.05, 0.02, -0.01, 0.004], n=256)
    assert p_affine_length(b, q) == pytest.approx(p_affine_length(polar_dual(b), 4.0 / q), rel=1e-5)


@settings(max_examples=25, deadline=None)
@given(bodies(), st.sampled_from([1.0, 1.5, 2.0, 5.0]))
def test_property_affine_isoperimetric(b, p):
    lhs = p_affine_length(b, p) ** (2 + p)
    rhs = 2 ** (2 + p) * PI ** (2 * p) * area(b) ** (2 - p)
    assert lhs <= rhs * (1 + 1e-8)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 5.0])
def test_affine_isoperimetric_equality_on_ellipse(p):
    b = ellipse(1.7, 0.9, 0.4)
    lhs = p_affine_length(b, p) ** (2 + p)
    rhs = 2 ** (2 + p) * PI ** (2 * p) * area(b) ** (2 - p)
    assert lhs == pytest.approx(rhs, rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(bodies(), bodies())
def test_property_minkowski(b, h):
    s, g = b.s, h.s
    assert mixed_volume(g, s) ** 2 >= mixed_volume(s, s) * mixed_volume(g, g) - 1e-9


@settings(max_examples=25, deadline=None)
@given(bodies(), bodies())
def test_property_mixed_volume_symmetric(b, h):
    assert mixed_volume(b.s, h.s) == pytest.approx(mixed_volume(h.s, b.s), abs=1e-10)


@settings(max_examples=15, deadline=None)
@given(bodies(n=128))
def test_property_santalo_bound(b):
    assert area(b) * area(polar_dual(b)) <= PI**2 + 1e-8

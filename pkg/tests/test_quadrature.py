import math

import numpy as np
import pytest

from layerpot.geometry import make_surface
from layerpot.quadrature import integrate_truncated, polar_rule, truncated_integrals


def ones(nodes):
    return np.ones(len(nodes))


@pytest.fixture(scope="module")
def sphere():
    return make_surface("sphere")


def test_full_sphere(sphere):
    x = sphere.point([0, 0, 1.0])
    assert truncated_integrals(sphere, x, [0.0], ones)[0] == pytest.approx(4 * math.pi, abs=1e-8)


def test_hemisphere_cap(sphere):
    x = sphere.point([0, 0, 1.0])
    assert truncated_integrals(sphere, x, [math.sqrt(2)], ones)[0] == pytest.approx(2 * math.pi, abs=1e-6)


@pytest.mark.parametrize("rho", [1e-3, 0.1, 0.5, 1.2, 1.9])
def test_cap_complement_area(sphere, rho):
    # chordal radius rho cuts a cap with 1 - cos(theta0) = rho^2 / 2
    x = sphere.point([0.3, -0.2, 0.9])
    expected = 4 * math.pi - 2 * math.pi * rho**2 / 2
    assert truncated_integrals(sphere, x, [rho], ones)[0] == pytest.approx(expected, abs=1e-8)


def test_radii_beyond_diameter_give_zero(sphere):
    x = sphere.point([1.0, 0, 0])
    assert truncated_integrals(sphere, x, [3.0], ones)[0] == 0.0


def test_weakly_singular_single_layer(sphere):
    x = sphere.point([0, 0, 1.0])
    val = truncated_integrals(sphere, x, [0.0], lambda nd: 1 / np.linalg.norm(nd.y - x.x, axis=-1))[0]
    assert val == pytest.approx(4 * math.pi, abs=1e-4)


def test_many_radii_in_one_pass(sphere):
    x = sphere.point([0.1, 0.7, -0.3])
    radii = np.geomspace(1e-3, 2.0, 12)
    many = truncated_integrals(sphere, x, radii, ones)
    single = [truncated_integrals(sphere, x, [r], ones)[0] for r in radii[::4]]
    np.testing.assert_allclose(many[::4], single, rtol=1e-12)
    np.testing.assert_allclose(many, 4 * math.pi - math.pi * radii**2, atol=1e-8)


def test_circle_arcs():
    c = make_surface("circle")
    x = c.point([1.0, 0])
    # chord rho subtends half angle 2 asin(rho / 2)
    for rho in (0.0, 0.01, 1.0, 1.9):
        expected = 2 * math.pi - 4 * math.asin(rho / 2)
        assert truncated_integrals(c, x, [rho], ones)[0] == pytest.approx(expected, abs=1e-10)


def test_vector_valued_integrand(sphere):
    x = sphere.point([0, 0, 1.0])
    res = truncated_integrals(sphere, x, [0.0, 0.5], lambda nd: nd.y)
    assert res.shape == (2, 3)
    np.testing.assert_allclose(res[0], 0, atol=1e-10)


def test_field_breakpoints_integrate_kinks(sphere):
    x = sphere.point([0.6, 0.0, 0.8])
    f = lambda nd: np.abs(nd.y[:, 0] - 0.2)
    exact = 2 * math.pi * ((1.2**2 + 0.8**2) / 2)  # int_{-1}^{1} |t - 0.2| dt * 2 pi
    plain = truncated_integrals(sphere, x, [0.0], f)[0]
    split = truncated_integrals(sphere, x, [0.0], f, fields=[lambda y: y[..., 0] - 0.2])[0]
    assert abs(split - exact) < 1e-9
    assert abs(split - exact) < abs(plain - exact)


def test_kinked_surface_area():
    b = make_surface("bump_sphere")
    a0 = truncated_integrals(b, b.point([0, 0, 1.0]), [0.0], ones)[0]
    a1 = truncated_integrals(b, b.point([0.6, 0.0, -0.8]), [0.0], ones)[0]
    assert a0 == pytest.approx(a1, rel=1e-10)
    assert a0 > 4 * math.pi


def test_integrate_truncated_reports_convergence(sphere):
    x = sphere.point([0, 1.0, 0])
    r = integrate_truncated(sphere, x, 0.0, ones)
    assert r.converged
    assert r.error < 1e-10
    assert r.value == pytest.approx(4 * math.pi)


def test_integrate_truncated_flags_nonconvergence(sphere):
    x = sphere.point([0, 1.0, 0])
    wild = lambda nd: np.cos(300 * nd.y[:, 0] + 0.4) ** 2
    r = integrate_truncated(sphere, x, 0.0, wild, level=0, tol=1e-12)
    assert not r.converged


def test_negative_radius_rejected(sphere):
    with pytest.raises(ValueError):
        polar_rule(sphere, sphere.point([1.0, 0, 0]), [-1.0])


def test_rule_is_deterministic(sphere):
    x = sphere.point([0.2, 0.3, 0.9])
    a = polar_rule(sphere, x, [0.1, 0.5])
    b = polar_rule(sphere, x, [0.1, 0.5])
    np.testing.assert_array_equal(a.nodes.w, b.nodes.w)
    np.testing.assert_array_equal(a.nodes.y, b.nodes.y)

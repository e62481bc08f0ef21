import math

import numpy as np
import pytest
from scipy import special

from layerpot.geometry import (
    make_shape,
    make_surface,
    normal,
    surface_fd_gradient,
    tangent_basis,
    tangential_project,
)

SHAPES = ["circle", "sphere", {"shape": "ellipse", "a": 2, "b": 1}, "ellipsoid", "bump_sphere"]


def _ellipse_perimeter(a, b):
    return 4 * a * special.ellipe(1 - (b / a) ** 2)


def test_perimeter_oracle_self_check():
    assert _ellipse_perimeter(1, 1) == pytest.approx(2 * math.pi)


def test_sphere_measure():
    assert make_surface("sphere").measure() == pytest.approx(4 * math.pi, abs=1e-8)


def test_circle_length():
    assert make_surface("circle").measure() == pytest.approx(2 * math.pi, abs=1e-10)


def test_ellipse_length():
    L = make_surface({"shape": "ellipse", "a": 2, "b": 1}).measure()
    assert abs(L - 9.688448220547676) <= 1e-8
    assert abs(L - _ellipse_perimeter(2, 1)) <= 1e-8


@pytest.mark.parametrize("spec", ["sphere", "ellipsoid", {"shape": "ellipse", "a": 2, "b": 1}])
def test_atlas_agrees_with_polar_rule(spec):
    s = make_surface(spec)
    atlas = float(s.integrate_atlas(lambda y, nu: np.ones(len(y))))
    assert atlas == pytest.approx(s.measure(), rel=1e-3)


def test_normals_examples():
    s = make_surface("sphere")
    np.testing.assert_allclose(normal(s, s.point([0, 0, 1.0])), [0, 0, 1], atol=1e-15)
    e = make_surface({"shape": "ellipse", "a": 2, "b": 1})
    sp = e.point([1.0, 0])
    np.testing.assert_allclose(sp.x, [2, 0], atol=1e-15)
    np.testing.assert_allclose(normal(e, sp), [1, 0], atol=1e-15)


@pytest.mark.parametrize("spec", SHAPES)
def test_normal_orthogonal_to_chart_tangents(spec):
    s = make_surface(spec)
    rng = np.random.default_rng(3)
    for c in s.sample_centers(6):
        patch = s.local_patch(c)
        for _ in range(4):
            eta = rng.uniform(-0.5, 0.5, size=s.n - 1) * patch.r
            J = patch.jacobian(eta)
            nu = patch.normal(eta)
            assert np.max(np.abs(nu @ J)) <= 1e-12
            assert abs(np.linalg.norm(nu) - 1) <= 1e-14


@pytest.mark.parametrize("spec", SHAPES)
def test_patch_is_graph_through_surface(spec):
    s = make_surface(spec)
    for c in s.sample_centers(5):
        patch = s.local_patch(c)
        assert patch.gamma(np.zeros(s.n - 1)) == pytest.approx(0.0, abs=1e-14)
        np.testing.assert_allclose(patch.grad(np.zeros(s.n - 1)), 0, atol=1e-12)
        y = patch.psi(np.full(s.n - 1, 0.3 * patch.r))
        assert abs(s.shape.implicit(y)[0]) <= 1e-12


def test_outward_normals():
    for spec in SHAPES:
        s = make_surface(spec)
        for c in s.sample_centers(10):
            assert c.normal @ c.x > 0


def test_tangential_project_examples():
    np.testing.assert_allclose(tangential_project([0, 0, 1.0], [0, 0, 1.0]), 0)
    np.testing.assert_allclose(tangential_project([0, 0, 1.0], [1.0, 2.0, 0]), [1, 2, 0])
    np.testing.assert_allclose(tangential_project([0, 0, 1.0], [1.0, 2.0, 3.0]), [1, 2, 0])


def test_tangent_basis_orthonormal():
    rng = np.random.default_rng(0)
    for n in (2, 3, 4):
        u = rng.normal(size=n)
        u /= np.linalg.norm(u)
        tb = tangent_basis(u)
        np.testing.assert_allclose(tb @ tb.T, np.eye(n - 1), atol=1e-14)
        np.testing.assert_allclose(tb @ u, 0, atol=1e-14)


def test_surface_fd_gradient_examples():
    s = make_surface("sphere")
    x = s.point([1.0, 0, 0])
    np.testing.assert_allclose(surface_fd_gradient(s, x, lambda y: 7.0), 0, atol=1e-10)
    np.testing.assert_allclose(surface_fd_gradient(s, x, lambda y: y[2]), [0, 0, 1], atol=1e-6)
    np.testing.assert_allclose(surface_fd_gradient(s, x, lambda y: y[0]), 0, atol=1e-6)


def test_surface_fd_gradient_rejects_large_step():
    s = make_surface("sphere")
    with pytest.raises(ValueError):
        surface_fd_gradient(s, s.point([1.0, 0, 0]), lambda y: y[0], h=10.0)


def test_make_shape_specs_roundtrip():
    for spec in SHAPES:
        shape = make_shape(spec)
        again = make_shape(shape.spec())
        assert again.spec() == shape.spec()
    with pytest.raises(ValueError):
        make_shape("torus")


def test_bump_sphere_is_c11_not_flat():
    s = make_surface("bump_sphere")
    radii = [np.linalg.norm(c.x) for c in s.sample_centers(200)]
    assert max(radii) > 1.0 + 1e-3
    assert min(radii) == pytest.approx(1.0, abs=1e-12)


def test_diameter_and_cylinder_radius():
    s = make_surface({"shape": "ellipse", "a": 2, "b": 1})
    assert s.diameter == pytest.approx(4.0, rel=1e-6)
    assert 0 < s.r_boundary < 1

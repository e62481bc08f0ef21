import math

import numpy as np
import pytest

from layerpot.coeffs import CoefficientVector, factorize
from layerpot.fundsol import FundamentalSolution, builtin, laplace_components
from layerpot.geometry import make_surface, surface_fd_gradient
from layerpot.kernels import (
    ADDENDS,
    DoubleLayerKernel,
    HomogeneousKernel,
    cialdea_bound_check,
    dl_kernel,
    dl_kernel_tangential_gradient,
    dl_kernel_terms,
    dl_potential,
    dl_potential_gradient,
    even_kernel,
    holder_divergence,
    holder_quotient,
    kernel_norm,
    omega1,
    riesz_kernel,
    sphere_samples,
    zero_kernel,
)

OPS_3D = ("laplace3d", "helmholtz3d")
OPS_2D = ("laplace2d", "helmholtz2d", "aniso2d")


def plugin_with_drift(n=3):
    """Laplace principal part with a nonzero first order term, to exercise the a1 addend."""
    c = CoefficientVector(n, np.eye(n), [0.3, -0.2, 0.5j][:n])
    return FundamentalSolution(c, factorize(c), laplace_components(n), "drift")


def random_pairs(surface, count, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < count:
        u, v = rng.normal(size=(2, surface.n))
        x, y = surface.point(u), surface.point(v)
        if np.linalg.norm(x.x - y.x) > 0.05:
            pairs.append((x, y))
    return pairs


# -- homogeneous kernels ------------------------------------------------------


@pytest.mark.parametrize("k", [riesz_kernel(3, 0), riesz_kernel(2, 1), even_kernel(3), even_kernel(2)])
def test_homogeneity_and_parity(k):
    rng = np.random.default_rng(0)
    xi = rng.normal(size=(50, k.n))
    for t in (0.1, 3.7):
        np.testing.assert_allclose(k(t * xi), t ** k.degree * k(xi), rtol=1e-12)
    if k.isOdd:
        np.testing.assert_allclose(k(-xi), -k(xi), rtol=1e-12)
    else:
        np.testing.assert_allclose(k(-xi), k(xi), rtol=1e-12)


def test_riesz_norm():
    sup, lip = kernel_norm(riesz_kernel(3, 0))
    assert sup == pytest.approx(1.0, rel=2e-3)
    assert lip == pytest.approx(1.0, rel=2e-2)


def test_zero_and_even_norms():
    assert kernel_norm(zero_kernel(3)) == (0.0, 0.0)
    sup, lip = kernel_norm(even_kernel(3))
    assert sup == pytest.approx(1.0)
    assert lip == pytest.approx(0.0, abs=1e-12)


def test_kernel_norm_rejects_non_finite():
    bad = HomogeneousKernel(3, lambda xi: np.full(len(xi), np.nan), True, "bad")
    with pytest.raises(ValueError):
        kernel_norm(bad)


def test_riesz_component_range():
    with pytest.raises(ValueError):
        riesz_kernel(3, 3)


def test_sphere_samples_unit():
    s = sphere_samples(3, 100)
    np.testing.assert_allclose(np.linalg.norm(s, axis=1), 1.0)


def test_cialdea_examples():
    k = riesz_kernel(3, 0)
    lhs, rhs, ok = cialdea_bound_check(k, [1.0, 0, 0], [1.0, 0, 0])
    assert lhs == 0 and rhs == 0 and ok
    lhs, rhs, ok = cialdea_bound_check(k, [1.0, 0, 0], [0, 1.0, 0])
    assert lhs == pytest.approx(1.0)
    assert rhs == pytest.approx(2 * 3 * k.norm * math.sqrt(2))
    assert ok


@pytest.mark.parametrize("k", [riesz_kernel(3, 2), riesz_kernel(2, 0), even_kernel(3), zero_kernel(2)])
def test_cialdea_random_pairs(k):
    rng = np.random.default_rng(5)
    u = rng.normal(size=(1000, k.n)) * rng.uniform(0.01, 10, size=(1000, 1))
    v = rng.normal(size=(1000, k.n)) * rng.uniform(0.01, 10, size=(1000, 1))
    _, _, ok = cialdea_bound_check(k, u, v)
    assert np.all(ok)


# -- double layer kernel ------------------------------------------------------


def test_laplace_sphere_kernel_closed_form():
    s = make_surface("sphere")
    dlk = DoubleLayerKernel(builtin("laplace3d"), s)
    for x, y in random_pairs(s, 20):
        r = np.linalg.norm(x.x - y.x)
        assert dl_kernel(dlk, x, y).value == pytest.approx(1 / (8 * math.pi * r), rel=1e-12)
    x, y = s.point([0, 0, 1.0]), s.point([0, 0, -1.0])
    assert dl_kernel(dlk, x, y).value.real == pytest.approx(1 / (16 * math.pi))


def test_flat_tangent_direction_gives_zero():
    fs = builtin("laplace3d")
    assert dl_kernel_terms(fs, [1.0, 0, 0], [0, 0, 0], [0, 0, 1.0]).sum() == 0


def test_coincident_points_raise():
    s = make_surface("sphere")
    dlk = DoubleLayerKernel(builtin("laplace3d"), s)
    x = s.point([1.0, 0, 0])
    with pytest.raises(ValueError):
        dl_kernel(dlk, x, x)
    with pytest.raises(ValueError):
        dl_kernel_tangential_gradient(dlk, x, x)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        DoubleLayerKernel(builtin("laplace2d"), make_surface("sphere"))


@pytest.mark.parametrize("name", OPS_3D + OPS_2D)
def test_weak_singularity(name):
    fs = builtin(name)
    s = make_surface("sphere" if fs.n == 3 else {"shape": "ellipse", "a": 2, "b": 1})
    dlk = DoubleLayerKernel(fs, s)
    x = s.point(np.ones(fs.n))
    scaled = []
    for t in (1e-1, 1e-2, 1e-3, 1e-4):
        u = x.u + t * np.roll(x.u, 1) * np.array([1, -1, 1][: fs.n])
        y = s.point(u)
        r = np.linalg.norm(x.x - y.x)
        scaled.append(abs(dl_kernel(dlk, x, y).value) * r ** (fs.n - 1))
    assert max(scaled) < 1.0


def _scale(tg):
    # the total can cancel exactly (Laplace on a circle), so floor by the addend sizes
    return max(np.linalg.norm(tg.total), 1e-3 * sum(np.linalg.norm(v) for v in tg.addends.values()))


def _fd_cases():
    cases = []
    for name in OPS_3D:
        for shape in ("sphere", "bump_sphere"):
            cases.append((name, shape))
    for name in OPS_2D:
        for shape in ("circle", {"shape": "ellipse", "a": 2, "b": 1}):
            cases.append((name, shape))
    return cases


@pytest.mark.parametrize("name,shape", _fd_cases())
def test_tangential_gradient_matches_surface_fd(name, shape):
    fs = builtin(name)
    s = make_surface(shape)
    dlk = DoubleLayerKernel(fs, s)
    for x, y in random_pairs(s, 12, seed=sum(map(ord, name))):
        tg = dl_kernel_tangential_gradient(dlk, x, y)
        fd = surface_fd_gradient(s, x, lambda p: dl_kernel_terms(fs, p, y.x, y.normal).sum(), h=1e-4)
        assert np.linalg.norm(tg.total - fd) <= 1e-5 * _scale(tg)
        assert abs(tg.total @ x.normal) <= 1e-12 * max(1.0, np.linalg.norm(tg.total))


def test_drift_addend_matches_fd():
    fs = plugin_with_drift()
    s = make_surface("sphere")
    dlk = DoubleLayerKernel(fs, s)
    for x, y in random_pairs(s, 10, seed=9):
        tg = dl_kernel_tangential_gradient(dlk, x, y)
        assert np.linalg.norm(tg.addends["J9"]) > 0
        fd = surface_fd_gradient(s, x, lambda p: dl_kernel_terms(fs, p, y.x, y.normal).sum())
        assert np.linalg.norm(tg.total - fd) <= 1e-5 * _scale(tg)
        assert dl_kernel(dlk, x, y).terms["a1"] != 0


@pytest.mark.parametrize("name", ("laplace3d", "laplace2d", "aniso2d"))
def test_laplace_addends_vanish(name):
    fs = builtin(name)
    s = make_surface("sphere" if fs.n == 3 else "circle")
    dlk = DoubleLayerKernel(fs, s)
    for x, y in random_pairs(s, 5):
        tg = dl_kernel_tangential_gradient(dlk, x, y)
        assert list(tg.addends) == list(ADDENDS)
        for a in ADDENDS[2:]:
            assert np.all(tg.addends[a] == 0)


def test_helmholtz_addends_present():
    fs = builtin("helmholtz2d")
    s = make_surface({"shape": "ellipse", "a": 2, "b": 1})
    x, y = random_pairs(s, 1)[0]
    tg = dl_kernel_tangential_gradient(DoubleLayerKernel(fs, s), x, y)
    for a in ("J6", "J7", "J8"):
        assert np.linalg.norm(tg.addends[a]) > 0
    for a in ADDENDS:
        assert abs(tg.addends[a] @ x.normal) <= 1e-12 * max(1.0, np.linalg.norm(tg.addends[a]))


def test_backends_agree():
    from layerpot import _kernels_py

    fs = builtin("aniso2d")
    rng = np.random.default_rng(2)
    z = rng.normal(size=(40, 2))
    nx = rng.normal(size=(40, 2))
    nx /= np.linalg.norm(nx, axis=1)[:, None]
    ny = np.roll(nx, 1, axis=0)
    ref = _kernels_py.principal_tangential(z, nx, ny, fs.fact.a2_inv, fs.principal_scale)
    from layerpot import _backend

    got = _backend.principal_tangential(z, nx, ny, fs.fact.a2_inv, fs.principal_scale)
    for a, b in zip(ref, got):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-300)


# -- double layer potential ---------------------------------------------------


def test_gauss_identity_sphere():
    s = make_surface("sphere")
    dlk = DoubleLayerKernel(builtin("laplace3d"), s)
    for u in ([0, 0, 1.0], [0.3, -0.5, 0.2]):
        r = dl_potential(dlk, lambda y: np.ones(len(y)), s.point(u))
        assert abs(r.value - 0.5) <= 1e-4
        assert r.converged


def test_gauss_identity_circle():
    s = make_surface("circle")
    dlk = DoubleLayerKernel(builtin("laplace2d"), s)
    r = dl_potential(dlk, lambda y: np.ones(len(y)), s.point([0.3, 1.0]))
    assert abs(r.value - 0.5) <= 1e-6


def test_gauss_identity_anisotropic_ellipse():
    s = make_surface({"shape": "ellipse", "a": 2, "b": 1})
    dlk = DoubleLayerKernel(builtin("aniso2d"), s)
    r = dl_potential(dlk, lambda y: np.ones(len(y)), s.point([0.3, 1.0]))
    assert abs(r.value - 0.5) <= 1e-6


def test_zero_density():
    s = make_surface("sphere")
    dlk = DoubleLayerKernel(builtin("helmholtz3d"), s)
    assert dl_potential(dlk, lambda y: np.zeros(len(y)), s.point([1.0, 0, 0])).value == 0


def test_potential_gradient_of_constant_density_vanishes():
    # W[1] is constant on the sphere, so its tangential gradient is zero
    s = make_surface("sphere")
    dlk = DoubleLayerKernel(builtin("laplace3d"), s)
    g = dl_potential_gradient(dlk, lambda y: np.full(len(y), 2.0), s.point([0.2, 0.4, 1.0]))
    assert np.linalg.norm(g) <= 1e-6


def test_potential_gradient_of_linear_density_is_tangential():
    s = make_surface("sphere")
    dlk = DoubleLayerKernel(builtin("laplace3d"), s)
    x = s.point([0.2, 0.4, 1.0])
    g = dl_potential_gradient(dlk, lambda y: y[..., 0], x)
    assert abs(g @ x.normal) <= 1e-10 * np.linalg.norm(g)
    assert np.linalg.norm(g) > 0.1


# -- moduli -------------------------------------------------------------------


def test_omega1():
    assert omega1(0.0) == 0.0
    assert omega1(math.exp(-1)) == pytest.approx(math.exp(-1))
    assert omega1(10.0) == pytest.approx(math.exp(-1))
    r = np.linspace(0, math.exp(-1), 200)
    assert np.all(np.diff(omega1(r)) >= 0)
    with pytest.raises(ValueError):
        omega1(-1.0)


def test_holder_quotient_examples():
    s = make_surface("sphere")
    pts = np.array([c.x for c in s.sample_centers(300)])
    assert holder_quotient(pts, np.full(len(pts), 2.0)) == 0.0
    coarse = holder_quotient(pts, pts[:, 0])
    assert coarse <= 1.0 + 1e-12
    assert coarse > 0.95
    with pytest.raises(ValueError):
        holder_quotient(pts[:1], pts[:1, 0])
    with pytest.raises(ValueError):
        holder_quotient(pts, pts[:, 0], modulus="log")


def test_holder_detects_jump():
    t = np.linspace(-1, 1, 401)
    pts = np.stack([t, np.zeros_like(t)], axis=1)
    assert holder_divergence(pts, (t > 0.0025).astype(float), beta=0.5)
    assert not holder_divergence(pts, np.abs(t) ** 0.5, beta=0.5)

import math

import numpy as np
import pytest

from layerpot.fundsol import builtin
from layerpot.geometry import make_surface
from layerpot.kernels import ADDENDS, DoubleLayerKernel, even_kernel, riesz_kernel, zero_kernel
from layerpot.maxfunc import (
    RHO_MIN,
    annulus_difference_scaling,
    geometric_radii,
    gradS_maximal,
    main_theorem_stability,
    main_theorem_sweep,
    maximal_sweep,
    maximal_sweep_many,
    refined_radii,
    relative_change,
    stability,
)

RADII = np.geomspace(RHO_MIN, 2.0, 8)


@pytest.fixture(scope="module")
def sphere():
    return make_surface("sphere")


def test_riesz_sphere_matches_closed_form(sphere):
    # on the unit sphere the truncated integral of xi_1/|xi|^3 about x is pi x_1 (2 - rho)
    centers = sphere.sample_centers(10)
    rep = maximal_sweep(sphere, riesz_kernel(3, 0), centers, RADII)
    x1 = np.array([c.x[0] for c in rep.centers])
    expected = np.abs(math.pi * x1[:, None] * (2 - RADII[None, :]))
    np.testing.assert_allclose(rep.values, expected, atol=1e-6)
    assert rep.maxEstimate == pytest.approx(math.pi * (2 - RHO_MIN), rel=1e-6)
    assert rep.flags.all()


def test_even_kernel_grows_logarithmically(sphere):
    rep = maximal_sweep(sphere, even_kernel(3), sphere.sample_centers(4), RADII[:5])
    # 2 pi ln(2 / rho) on the unit sphere
    np.testing.assert_allclose(rep.values[0], 2 * math.pi * np.log(2 / RADII[:5]), rtol=1e-6)


def test_zero_kernel(sphere):
    rep = maximal_sweep(sphere, zero_kernel(3), sphere.sample_centers(4), RADII)
    assert rep.maxEstimate == 0.0


def test_rows_and_argmax(sphere):
    rep = maximal_sweep(sphere, riesz_kernel(3, 2), sphere.sample_centers(4), RADII[:3])
    rows = list(rep.rows())
    assert len(rows) == len(rep.centers) * 3
    i, rho = rep.argmax
    assert rep.values[i, list(RADII[:3]).index(rho)] == rep.maxEstimate


def test_radii_validation(sphere):
    with pytest.raises(ValueError):
        maximal_sweep(sphere, riesz_kernel(3, 0), 2, [])
    with pytest.raises(ValueError):
        maximal_sweep(sphere, riesz_kernel(3, 0), 2, [0.5, 0.1])
    with pytest.raises(ValueError):
        geometric_radii(sphere, count=0)


def test_refined_radii_and_relative_change():
    np.testing.assert_array_equal(refined_radii([1e-3, 1.0]), [5e-4, 1e-3, 1.0])
    assert relative_change(0.0, 0.0) == 0.0
    assert relative_change(1.0, 1.01) == pytest.approx(0.01)


def test_stability_protocol_riesz_vs_even(sphere):
    centers = sphere.sample_centers(8)
    odd = stability(lambda r, lev: maximal_sweep(sphere, riesz_kernel(3, 0), centers, r, lev), RADII)
    even = stability(lambda r, lev: maximal_sweep(sphere, even_kernel(3), centers, r, lev), RADII)
    assert odd.stable
    assert odd.change < 1e-3
    # halving rho_min adds 2 pi ln 2 to 2 pi ln(2 / rho_min)
    assert even.change == pytest.approx(math.log(2) / math.log(2 / RHO_MIN), rel=1e-4)


def test_gradS_laplace_sphere(sphere):
    fs = builtin("laplace3d")
    centers = sphere.sample_centers(8)
    run = lambda r, lev: gradS_maximal(sphere, fs, 0, r, centers, lev)
    res = stability(run, RADII)
    assert res.stable
    # dS/dx_1 = xi_1 / (4 pi |xi|^3), a quarter-pi multiple of the Riesz kernel
    assert res.coarse == pytest.approx(math.pi * (2 - RHO_MIN) / (4 * math.pi), rel=1e-6)


def test_gradS_zero_for_constant_plugin():
    from layerpot.fundsol import FundamentalSolution

    class Constant(FundamentalSolution):
        def gradient(self, x):
            return np.zeros(np.shape(x))

    base = builtin("laplace2d")
    fs = Constant(base.coeffs, base.fact, base.components, "constant")
    c = make_surface("circle")
    assert gradS_maximal(c, fs, 1, RADII, c.sample_centers(6)).maxEstimate == 0.0
    with pytest.raises(ValueError):
        gradS_maximal(c, fs, 2, RADII, c.sample_centers(2))


def test_gradS_circle_stable():
    c = make_surface("circle")
    fs = builtin("laplace2d")
    centers = c.sample_centers(16)
    res = stability(lambda r, lev: gradS_maximal(c, fs, 1, r, centers, lev), RADII)
    assert res.stable


def test_main_theorem_total_is_sum_of_addends(sphere):
    fs = builtin("helmholtz3d")
    rep = main_theorem_sweep(sphere, DoubleLayerKernel(fs, sphere), RADII[:4], sphere.sample_centers(3))
    assert set(rep.reports) == {"total", *ADDENDS}
    for h in range(3):
        s = sum(rep.reports[a][h].raw for a in ADDENDS)
        np.testing.assert_allclose(rep.reports["total"][h].raw, s, rtol=1e-14)


def test_main_theorem_laplace_addends_vanish(sphere):
    fs = builtin("laplace3d")
    res = main_theorem_stability(sphere, DoubleLayerKernel(fs, sphere), RADII, sphere.sample_centers(6))
    for h in range(3):
        assert res["total"][h].stable
        for a in ADDENDS[2:]:
            assert res[a][h].coarse == 0.0


def test_main_theorem_helmholtz2d_ellipse_stable():
    e = make_surface({"shape": "ellipse", "a": 2, "b": 1})
    fs = builtin("helmholtz2d")
    res = main_theorem_stability(e, DoubleLayerKernel(fs, e), RADII, e.sample_centers(24))
    for name in ("total", "J6", "J7", "J8"):
        for h in range(2):
            assert res[name][h].stable, (name, h, res[name][h].change)


def test_annulus_scaling_sphere(sphere):
    fit = annulus_difference_scaling(sphere, riesz_kernel(3, 0), centers=sphere.sample_centers(8))
    assert fit.status in ("ok", "bounded below tolerance")
    if fit.slope is not None:
        assert fit.slope >= 0.8
    # exact annulus value pi x_1 (r - eps) is at most pi r; ||k|| is about 2
    assert fit.c_tilde <= math.pi / 1.9


def test_annulus_requires_odd_kernel(sphere):
    with pytest.raises(ValueError):
        annulus_difference_scaling(sphere, even_kernel(3))


def test_thread_pool_keeps_order(sphere, monkeypatch):
    centers = sphere.sample_centers(6)
    serial = maximal_sweep(sphere, riesz_kernel(3, 1), centers, RADII[:3]).raw
    monkeypatch.setenv("LAYERPOT_THREADS", "3")
    threaded = maximal_sweep(sphere, riesz_kernel(3, 1), centers, RADII[:3]).raw
    np.testing.assert_array_equal(serial, threaded)


def test_sweep_many_matches_single_sweeps(sphere):
    centers = sphere.sample_centers(5)
    kernels = [riesz_kernel(3, 1), even_kernel(3)]
    many = maximal_sweep_many(sphere, kernels, centers, RADII[:4])
    for k, rep in zip(kernels, many):
        np.testing.assert_allclose(rep.raw, maximal_sweep(sphere, k, centers, RADII[:4]).raw, rtol=1e-13, atol=1e-12)

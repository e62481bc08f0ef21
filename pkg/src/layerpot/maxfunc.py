"""Maximal functions of truncated boundary integrals.

A sweep evaluates ``int_{(dOmega) \\ B(x, rho)} k(x, y) d sigma_y`` over a set
of centres ``x`` and a geometric grid of radii ``rho``; the largest modulus
is a lower bound for the maximal function. Finiteness is judged by
refinement stability: the estimate may move by at most a small fraction
when the quadrature is refined one level and the smallest radius halves.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .fundsol import FundamentalSolution
from .geometry import BoundarySurface, SurfacePoint
from .kernels import ADDENDS, DoubleLayerKernel, HomogeneousKernel, tangential_gradient_addends
from .quadrature import polar_rule

RHO_MIN = 1e-3
RADII_COUNT = 24


def default_center_count(n: int) -> int:
    return 200 if n == 3 else 256


def geometric_radii(surface: BoundarySurface, count: int = RADII_COUNT, rho_min: float = RHO_MIN) -> np.ndarray:
    if count < 1:
        raise ValueError("radii grid must not be empty")
    return np.geomspace(rho_min, surface.diameter, count)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("LAYERPOT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class TruncatedIntegralReport:
    """Truncated integrals on a (centre, radius) grid.

    ``raw`` holds the signed (complex) integrals, ``values`` their moduli.
    ``flags`` is true where the quadrature is trusted.
    """

    surface_id: str
    kernel_id: str
    centers: list
    radii: np.ndarray
    raw: np.ndarray
    flags: np.ndarray
    level: int = 0

    @property
    def values(self) -> np.ndarray:
        return np.abs(self.raw)

    @property
    def maxEstimate(self) -> float:
        return float(np.max(self.values)) if self.raw.size else 0.0

    @property
    def argmax(self):
        i, j = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(i), float(self.radii[j])

    def rows(self):
        """``(center_index, rho, value, flag)`` in centre-major order."""
        vals = self.values
        for i in range(len(self.centers)):
            for j, rho in enumerate(self.radii):
                yield i, float(rho), float(vals[i, j]), bool(self.flags[i, j])


@dataclass
class ScalingFit:
    radii: np.ndarray
    values: np.ndarray
    eps: float
    slope: Optional[float]
    intercept: Optional[float]
    residual: Optional[float]
    noise_floor: float
    c_tilde: float
    status: str

    @property
    def pairs(self):
        return list(zip(self.radii.tolist(), self.values.tolist()))


def _run(centers, task):
    workers = min(thread_count(), len(centers))
    if workers <= 1:
        return [task(c) for c in centers]
    with ThreadPoolExecutor(workers) as pool:
        # map preserves input order, so reductions stay deterministic
        return list(pool.map(task, centers))


def sweep(
    surface: BoundarySurface,
    integrand: Callable,
    centers: Sequence[SurfacePoint],
    radii,
    level: int = 0,
    fields=(),
) -> np.ndarray:
    """Raw truncated integrals, shape ``(C, K, ...)``.

    ``integrand(center, nodes)`` returns node values with optional trailing axes.
    """
    radii = np.asarray(radii, dtype=float)

    def task(c):
        rule = polar_rule(surface, c, radii, level, fields)
        return rule.reduce(integrand(c, rule.nodes))

    return np.array(_run(list(centers), task))


def _kernel_integrand(k):
    if isinstance(k, HomogeneousKernel):
        return lambda c, nodes: k(c.x - nodes.y)
    return lambda c, nodes: k(c.x, nodes.y)


def _centers(surface, centers):
    if centers is None:
        return surface.sample_centers(default_center_count(surface.n))
    if isinstance(centers, (int, np.integer)):
        return surface.sample_centers(int(centers))
    return list(centers)


def _surface_id(surface):
    return getattr(surface.shape, "name", "surface")


def _check_radii(radii):
    if radii.size == 0:
        raise ValueError("radii grid must not be empty")
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be positive and increasing")


def maximal_sweep(
    surface: BoundarySurface,
    k,
    centers=None,
    radii=None,
    level: int = 0,
    fields=(),
) -> TruncatedIntegralReport:
    """Truncated integrals of a convolution kernel ``k(x - y)`` or of a callback ``k(x, y)``."""
    return maximal_sweep_many(surface, [k], centers, radii, level, fields)[0]


def maximal_sweep_many(surface: BoundarySurface, kernels, centers=None, radii=None, level: int = 0, fields=()) -> list:
    """Like :func:`maximal_sweep` for several kernels sharing one quadrature rule per centre."""
    centers = _centers(surface, centers)
    radii = geometric_radii(surface) if radii is None else np.asarray(radii, dtype=float)
    _check_radii(radii)
    fns = [_kernel_integrand(k) for k in kernels]
    raw = sweep(surface, lambda c, nodes: np.stack([f(c, nodes) for f in fns], axis=-1), centers, radii, level, fields)
    sid = _surface_id(surface)
    return [
        TruncatedIntegralReport(sid, getattr(k, "name", "callback"), centers, radii, raw[..., i], np.isfinite(raw[..., i]), level)
        for i, k in enumerate(kernels)
    ]


def gradS_components(
    surface: BoundarySurface, fs: FundamentalSolution, radii=None, centers=None, level: int = 0
) -> list:
    """Truncated integrals of every component of ``DS(x - y)`` from one sweep."""
    centers = _centers(surface, centers)
    radii = geometric_radii(surface) if radii is None else np.asarray(radii, dtype=float)
    raw = sweep(surface, lambda c, nodes: fs.gradient(c.x - nodes.y), centers, radii, level)
    sid = _surface_id(surface)
    return [
        TruncatedIntegralReport(sid, f"{fs.name}:dS/dx{h + 1}", centers, radii, raw[..., h], np.isfinite(raw[..., h]), level)
        for h in range(fs.n)
    ]


def gradS_maximal(
    surface: BoundarySurface, fs: FundamentalSolution, h: int, radii=None, centers=None, level: int = 0
) -> TruncatedIntegralReport:
    """Truncated integrals of ``dS/dx_h (x - y)`` (``h`` zero-based)."""
    if not 0 <= h < fs.n:
        raise ValueError(f"component {h} out of range")
    return gradS_components(surface, fs, radii, centers, level)[h]


@dataclass
class MainTheoremReport:
    """Sweeps of the tangential gradient kernel, per addend and component.

    ``reports[name][h]`` with ``name`` in ``("total", "J1", ..., "J9")``.
    """

    reports: dict
    n: int

    def max_estimates(self) -> dict:
        return {name: [r.maxEstimate for r in per_h] for name, per_h in self.reports.items()}


def main_theorem_sweep(
    surface: BoundarySurface, dlk: DoubleLayerKernel, radii=None, centers=None, level: int = 0
) -> MainTheoremReport:
    centers = _centers(surface, centers)
    radii = geometric_radii(surface) if radii is None else np.asarray(radii, dtype=float)
    fs = dlk.fs
    n = fs.n

    def integrand(c, nodes):
        J = tangential_gradient_addends(fs, c.x, c.normal, nodes.y, nodes.normal)
        return np.moveaxis(J, 0, 1)  # (N, 9, n)

    raw = sweep(surface, integrand, centers, radii, level)  # (C, K, 9, n)
    sid = _surface_id(surface)
    reports = {}
    total = raw.sum(axis=2)
    reports["total"] = [
        TruncatedIntegralReport(sid, f"{fs.name}:total[{h + 1}]", centers, radii, total[..., h], np.isfinite(total[..., h]), level)
        for h in range(n)
    ]
    for a, name in enumerate(ADDENDS):
        reports[name] = [
            TruncatedIntegralReport(sid, f"{fs.name}:{name}[{h + 1}]", centers, radii, raw[:, :, a, h], np.isfinite(raw[:, :, a, h]), level)
            for h in range(n)
        ]
    return MainTheoremReport(reports, n)


# --------------------------------------------------------------------------
# stability protocol


@dataclass
class StabilityResult:
    coarse: float
    fine: float
    change: float
    tol: float
    coarse_report: object = None
    fine_report: object = None

    @property
    def stable(self) -> bool:
        return self.change <= self.tol

    @property
    def ratio(self) -> float:
        return self.fine / self.coarse if self.coarse else (1.0 if self.fine == 0 else np.inf)


def refined_radii(radii) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    return np.concatenate([[radii[0] / 2], radii])


def relative_change(coarse: float, fine: float, floor: float = 1e-12) -> float:
    if max(abs(coarse), abs(fine)) <= floor:
        return 0.0
    return abs(fine - coarse) / max(abs(coarse), floor)


def _mark_flags(coarse, fine, tol):
    """Flag coarse entries whose refined counterpart (same radius) moved by more than ``tol``."""
    a = coarse.raw
    b = fine.raw[:, 1:]
    scale = np.maximum(np.abs(b), np.max(np.abs(b)) * 1e-6 + 1e-300)
    coarse.flags = np.isfinite(a) & (np.abs(a - b) <= tol * scale)


def stability(run: Callable, radii, level: int = 0, tol: float = 0.01) -> StabilityResult:
    """Run ``run(radii, level)`` and ``run(radii + [rho_min / 2], level + 1)`` and compare maxima."""
    radii = np.asarray(radii, dtype=float)
    coarse = run(radii, level)
    fine = run(refined_radii(radii), level + 1)
    _mark_flags(coarse, fine, max(tol, 1e-3))
    c, f = coarse.maxEstimate, fine.maxEstimate
    return StabilityResult(c, f, relative_change(c, f), tol, coarse, fine)


def main_theorem_stability(surface, dlk, radii=None, centers=None, level: int = 0, tol: float = 0.02) -> dict:
    """Stability of every addend and the total, per component: ``{name: [StabilityResult]}``."""
    centers = _centers(surface, centers)
    radii = geometric_radii(surface) if radii is None else np.asarray(radii, dtype=float)
    coarse = main_theorem_sweep(surface, dlk, radii, centers, level)
    fine = main_theorem_sweep(surface, dlk, refined_radii(radii), centers, level + 1)
    out = {}
    for name in coarse.reports:
        res = []
        for h in range(coarse.n):
            rc, rf = coarse.reports[name][h], fine.reports[name][h]
            # noise-level addends (identically vanishing components) count as zero
            floor = 1e-10 * max(1.0, fine.reports["total"][h].maxEstimate)
            _mark_flags(rc, rf, max(tol, 1e-3))
            res.append(StabilityResult(rc.maxEstimate, rf.maxEstimate, relative_change(rc.maxEstimate, rf.maxEstimate, floor), tol, rc, rf))
        out[name] = res
    return out


# --------------------------------------------------------------------------
# annulus scaling


def annulus_difference_scaling(
    surface: BoundarySurface,
    k: HomogeneousKernel,
    eps: Optional[float] = None,
    radii=None,
    centers=None,
    level: int = 0,
    min_slope: float = 0.8,
) -> ScalingFit:
    """Fit ``sup_x |int_{eps <= |x-y| < r} k(x - y)|`` against ``r`` in log-log scale.

    Values within ten times the level-to-level quadrature difference are
    treated as noise; with fewer than three values above it the fit is
    refused and the status reads ``"bounded below tolerance"``.
    """
    if not k.isOdd:
        raise ValueError("annulus scaling requires an odd kernel")
    centers = _centers(surface, centers)
    if radii is None:
        radii = np.geomspace(2 * RHO_MIN, surface.r_boundary, 12)
    radii = np.asarray(radii, dtype=float)
    if eps is None:
        eps = RHO_MIN / 2
    if np.any(radii <= eps):
        raise ValueError("all radii must exceed eps")
    grid = np.concatenate([[eps], radii])
    integrand = _kernel_integrand(k)
    raw = [sweep(surface, integrand, centers, grid, lev) for lev in (level, level + 1)]
    ann = [np.abs(r[:, :1] - r[:, 1:]) for r in raw]
    values = np.max(ann[1], axis=0)
    noise = 10 * float(np.max(np.abs(raw[1] - raw[0]))) + 1e-13 * k.norm
    c_tilde = float(np.max(values / (k.norm * radii)))
    above = values > noise
    if np.count_nonzero(above) < 3:
        return ScalingFit(radii, values, eps, None, None, None, noise, c_tilde, "bounded below tolerance")
    lr, lv = np.log(radii[above]), np.log(values[above])
    slope, intercept = np.polyfit(lr, lv, 1)
    resid = float(np.sqrt(np.mean((lv - (slope * lr + intercept)) ** 2)))
    status = "ok" if slope >= min_slope else "slope below threshold"
    return ScalingFit(radii, values, eps, float(slope), float(intercept), resid, noise, c_tilde, status)

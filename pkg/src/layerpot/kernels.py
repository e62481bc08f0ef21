"""Homogeneous kernels, the double layer kernel and its tangential gradient.

The double layer kernel of the operator with coefficients ``(a2, a1, a0)`` is

    K(x, y) = -DS(x - y) . a2 nu(y) - (nu(y) . a1) S(x - y),

split here into five terms following the decomposition of ``DS``. Its
tangential gradient in ``x`` is returned as nine addends ``J1 .. J9``:

    J1  principal term, derivative of ``|T^{-1} z|^{-n}``
    J2  principal term, derivative of ``z . nu(y)``
    J3  ``(2 - n) |z|^{-n} z`` times ``A2 . a2 nu``
    J4  angular derivative of ``A2`` (radial extension)
    J5  radial derivative of ``A2``
    J6  ``ln|z|`` times the Hessian of ``B1``
    J7  ``DB1`` times ``z / |z|^2``
    J8  Hessian of ``C``
    J9  ``a1`` times ``DS``

each projected onto the tangent plane at ``x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from . import _backend
from .fundsol import FundamentalSolution, sphere_measure
from .geometry import BoundarySurface, SurfacePoint, tangential_project
from .quadrature import QuadResult, integrate_truncated, polar_rule

ADDENDS = tuple(f"J{i}" for i in range(1, 10))
DL_TERMS = ("principal", "A2", "B1", "C", "a1")


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


# --------------------------------------------------------------------------
# homogeneous kernels


def sphere_samples(n: int, count: int) -> np.ndarray:
    """Quasi-uniform points on the unit sphere of R^n (n = 2, 3)."""
    if n == 2:
        t = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = np.pi * (1 + 5**0.5) * i
        rho = np.sqrt(1 - z * z)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    rng = np.random.default_rng(count)
    v = rng.standard_normal((count, n))
    return v / _norm(v)[:, None]


@dataclass
class HomogeneousKernel:
    """Positively homogeneous kernel of degree ``-(n-1)`` on ``R^n \\ {0}``.

    ``supNorm`` and ``lipConst`` are filled lazily by :func:`kernel_norm`.
    """

    n: int
    eval: Callable
    isOdd: bool
    name: str = "kernel"
    supNorm: Optional[float] = None
    lipConst: Optional[float] = None

    @property
    def degree(self) -> int:
        return -(self.n - 1)

    def __call__(self, xi):
        return self.eval(np.asarray(xi, dtype=float))

    @property
    def norm(self) -> float:
        if self.supNorm is None or self.lipConst is None:
            kernel_norm(self)
        return self.supNorm + self.lipConst


def riesz_kernel(n: int, h: int) -> HomogeneousKernel:
    """Odd kernel ``xi_h / |xi|^n`` (``h`` zero-based)."""
    if not 0 <= h < n:
        raise ValueError(f"component {h} out of range for n = {n}")
    return HomogeneousKernel(n, lambda xi: _backend.riesz(xi, h), True, f"riesz{h + 1}")


def even_kernel(n: int) -> HomogeneousKernel:
    """Even kernel ``1 / |xi|^(n-1)``, the control case without cancellation."""
    return HomogeneousKernel(n, lambda xi: _norm(xi) ** (1 - n), False, "even")


def zero_kernel(n: int) -> HomogeneousKernel:
    return HomogeneousKernel(n, lambda xi: np.zeros(np.shape(xi)[:-1]), True, "zero")


def kernel_norm(k: HomogeneousKernel, sampleCount: int = 256, max_count: int = 1 << 15, geodesic: float = 0.2):
    """Sampled ``(sup |k|, Lipschitz constant)`` of ``k`` on the unit sphere.

    The Lipschitz constant is the largest difference quotient over sample
    pairs within geodesic distance ``geodesic``, so it is a lower bound. The
    sample count doubles until both numbers change by less than 1%.
    """
    chord = 2 * math.sin(geodesic / 2)
    prev = None
    count = sampleCount
    while True:
        pts = sphere_samples(k.n, count)
        vals = np.asarray(k(pts))
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"kernel {k.name} is not finite on the unit sphere")
        sup = float(np.max(np.abs(vals)))
        pairs = cKDTree(pts).query_pairs(chord, output_type="ndarray")
        if len(pairs):
            d = _norm(pts[pairs[:, 0]] - pts[pairs[:, 1]])
            lip = float(np.max(np.abs(vals[pairs[:, 0]] - vals[pairs[:, 1]]) / d))
        else:
            lip = 0.0
        cur = (sup, lip)
        if prev is not None:
            rel = max(abs(c - p) / max(abs(c), 1e-300) if c else abs(p) for c, p in zip(cur, prev))
            if rel < 0.01 or 2 * count > max_count:
                break
        prev = cur
        count *= 2
    k.supNorm, k.lipConst = cur
    return cur


def cialdea_bound_check(k: HomogeneousKernel, u, v):
    """Check ``|k(u) - k(v)| <= 2n ||k|| |u - v| min(|u|, |v|)^{-n}``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    lhs = np.abs(k(u) - k(v))
    m = np.minimum(_norm(u), _norm(v))
    rhs = 2 * k.n * k.norm * _norm(u - v) * m ** (-k.n)
    return lhs, rhs, lhs <= rhs * (1 + 1e-9)


# --------------------------------------------------------------------------
# double layer kernel


@dataclass(frozen=True)
class DoubleLayerKernel:
    fs: FundamentalSolution
    surface: BoundarySurface

    def __post_init__(self):
        if self.fs.n != self.surface.n:
            raise ValueError(f"operator dimension {self.fs.n} differs from surface dimension {self.surface.n}")

    @property
    def n(self) -> int:
        return self.fs.n

    def terms(self, x, y, nu_y):
        return dl_kernel_terms(self.fs, x, y, nu_y)

    def __call__(self, x, y, nu_y):
        return self.terms(x, y, nu_y).sum(axis=0)

    def addends(self, x, nu_x, y, nu_y):
        return tangential_gradient_addends(self.fs, x, nu_x, y, nu_y)


def _separation(x, y):
    z = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = _norm(z)
    if np.any(r == 0):
        raise ValueError("kernel evaluated at coincident points")
    return z, r


def dl_kernel_terms(fs: FundamentalSolution, x, y, nu_y) -> np.ndarray:
    """The five terms of the double layer kernel, stacked on a leading axis."""
    z, r = _separation(x, y)
    nu_y = np.asarray(nu_y, dtype=float)
    comp = fs.components
    n = fs.n
    a2nu = nu_y @ fs.coeffs.a2
    theta = z / r[..., None]
    shape = r.shape
    out = np.zeros((5,) + shape, dtype=complex)
    out[0] = _backend.principal_dl(z, nu_y, fs.fact.a2_inv, fs.principal_scale)
    if "A2" not in comp.vanishing:
        out[1] = -(r ** (2 - n)) * np.sum(comp.A2(theta, r) * a2nu, axis=-1)
    if "B1" not in comp.vanishing:
        out[2] = -np.log(r) * np.sum(comp.B1_grad(z) * a2nu, axis=-1)
    if "C" not in comp.vanishing:
        out[3] = -np.sum(comp.C_grad(z) * a2nu, axis=-1)
    a1nu = nu_y @ fs.coeffs.a1
    if np.any(a1nu != 0):
        out[4] = -a1nu * fs.value(z)
    return out


def tangential_gradient_addends(fs: FundamentalSolution, x, nu_x, y, nu_y) -> np.ndarray:
    """Addends ``J1 .. J9`` of the tangential gradient in ``x``, shape ``(9, ..., n)``."""
    z, r = _separation(x, y)
    nu_x = np.asarray(nu_x, dtype=float)
    nu_y = np.asarray(nu_y, dtype=float)
    nu_x = np.broadcast_to(nu_x, z.shape)
    comp = fs.components
    n = fs.n
    a2nu = np.broadcast_to(nu_y @ fs.coeffs.a2, z.shape)
    theta = z / r[..., None]
    out = np.zeros((9,) + z.shape, dtype=complex)
    out[0], out[1] = _backend.principal_tangential(z, nu_x, nu_y, fs.fact.a2_inv, fs.principal_scale)
    rr = r[..., None]
    if "A2" not in comp.vanishing:
        A2 = comp.A2(theta, r)
        pa = np.sum(A2 * a2nu, axis=-1)[..., None]
        out[2] = -(2 - n) * rr ** (-n) * z * pa
        # d/dz_h of A2(z/|z|, r): angular derivative on the unit sphere scaled by 1/|z|
        dy = comp.dA2_dy(theta, r)
        out[3] = -(rr ** (1 - n)) * np.einsum("...hi,...i->...h", dy, a2nu)
        dr = comp.dA2_dr(theta, r)
        out[4] = -(rr ** (1 - n)) * z * np.sum(dr * a2nu, axis=-1)[..., None]
    if "B1" not in comp.vanishing:
        HB = comp.B1_hess(z)
        out[5] = -np.log(rr) * np.einsum("...hi,...i->...h", HB, a2nu)
        out[6] = -np.sum(comp.B1_grad(z) * a2nu, axis=-1)[..., None] * z / rr**2
    if "C" not in comp.vanishing:
        out[7] = -np.einsum("...hi,...i->...h", comp.C_hess(z), a2nu)
    a1nu = nu_y @ fs.coeffs.a1
    if np.any(a1nu != 0):
        out[8] = -np.asarray(a1nu)[..., None] * fs.gradient(z)
    for j in range(2, 9):
        out[j] = tangential_project(nu_x, out[j])
    return out


@dataclass
class KernelValue:
    value: complex
    terms: dict


@dataclass
class TangentialGradient:
    total: np.ndarray
    addends: dict = field(default_factory=dict)


def dl_kernel(dlk: DoubleLayerKernel, x: SurfacePoint, y: SurfacePoint) -> KernelValue:
    """Double layer kernel at a pair of boundary points, with its five terms."""
    t = dl_kernel_terms(dlk.fs, x.x, y.x, y.normal)
    return KernelValue(complex(t.sum()), dict(zip(DL_TERMS, (complex(v) for v in t))))


def dl_kernel_tangential_gradient(dlk: DoubleLayerKernel, x: SurfacePoint, y: SurfacePoint) -> TangentialGradient:
    J = tangential_gradient_addends(dlk.fs, x.x, x.normal, y.x, y.normal)
    return TangentialGradient(J.sum(axis=0), dict(zip(ADDENDS, J)))


def dl_potential(dlk: DoubleLayerKernel, mu: Callable, x: SurfacePoint, rho: float = 0.0, **kw) -> QuadResult:
    """Double layer potential of the density ``mu`` at a boundary point.

    ``mu`` takes ambient points of shape ``(N, n)``.
    """
    def f(nodes):
        return mu(nodes.y) * dlk(x.x, nodes.y, nodes.normal)

    return integrate_truncated(dlk.surface, x, rho, f, **kw)


def dl_potential_gradient(
    dlk: DoubleLayerKernel, mu: Callable, x: SurfacePoint, level: int = 1, fields=(), pv_rho: float = 1e-4
) -> np.ndarray:
    """Tangential gradient of the double layer potential at a boundary point.

    Uses ``int (mu(y) - mu(x)) grad_x K(x, y) dsigma_y + mu(x) grad W[1](x)``.
    The first integral converges absolutely for Hoelder densities; the second
    is a principal value, approximated by the integral outside ``B(x, pv_rho)``.
    ``fields`` mark kinks of ``mu`` as quadrature breakpoints.
    """
    rule = polar_rule(dlk.surface, x, [0.0, pv_rho], level, fields)
    nodes = rule.nodes
    J = tangential_gradient_addends(dlk.fs, x.x, x.normal, nodes.y, nodes.normal).sum(axis=0)
    mux = np.asarray(mu(x.x[None]))[0]
    diff = (np.asarray(mu(nodes.y)) - mux)[:, None] * J
    return rule.reduce(diff)[0] + mux * rule.reduce(J)[1]


# --------------------------------------------------------------------------
# moduli of continuity

R1 = math.exp(-1.0)


def omega1(r):
    """``r |ln r|`` on ``]0, 1/e]``, zero at 0 and constant ``1/e`` beyond."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("omega1 is defined for r >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        mid = r * np.abs(np.log(r))
    out = np.where(r == 0, 0.0, np.where(r <= R1, mid, R1 * abs(math.log(R1))))
    return out[()] if out.ndim == 0 else out


def holder_quotient(points, values, beta: float = 1.0, modulus: str = "plain", min_distance: float = 0.0) -> float:
    """Largest ``|f(x) - f(y)| / m(|x - y|)`` over sample pairs.

    ``m(d) = d^beta`` for ``modulus="plain"`` and ``omega1(d)`` for
    ``"omega1"``. Pairs closer than ``min_distance`` are skipped.
    """
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values)
    if len(pts) < 2:
        raise ValueError("need at least two samples")
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if modulus not in ("plain", "omega1"):
        raise ValueError(f"unknown modulus {modulus!r}")
    vals = vals.reshape(len(pts), -1)
    best = 0.0
    for i in range(len(pts) - 1):
        d = _norm(pts[i + 1 :] - pts[i])
        diff = _norm(vals[i + 1 :] - vals[i]) if vals.shape[1] > 1 else np.abs(vals[i + 1 :, 0] - vals[i, 0])
        ok = d > min_distance
        if not np.any(ok):
            continue
        m = d[ok] ** beta if modulus == "plain" else omega1(d[ok])
        best = max(best, float(np.max(diff[ok] / m)))
    return best


def holder_divergence(points, values, beta: float = 1.0, modulus: str = "plain", scales=(1e-1, 3e-2, 1e-2)) -> bool:
    """Flag quotients that keep growing as the pair distance cutoff shrinks.

    At each scale ``s`` the quotient is taken over pairs at least ``s``
    apart; a Hoelder field gives a bounded sequence, a jump one growing
    like ``s^-beta``.
    """
    q = [holder_quotient(points, values, beta, modulus, min_distance=s) for s in scales]
    return bool(q[-1] > 2 * q[0])

"""Truncated surface integrals in geodesic polar coordinates about the centre.

For a centre ``x = Phi(u0)`` the reference sphere is swept by rays
``u(s, d) = cos(s) u0 + sin(s) d`` (``d`` a unit tangent direction at ``u0``,
``s`` in ``[0, pi]``). Along each ray the radial integral is split into
Gauss-Legendre panels whose breakpoints contain

* a background grid, geometric towards ``s = 0`` (ratio 2) and uniform elsewhere,
* every crossing of a truncation sphere ``|y - x| = rho``,
* every crossing of a kink set of the surface or of user-supplied fields.

Because each panel lies entirely inside or outside every ball, one pass gives
``int_{|y-x| >= rho} f`` for a whole list of radii at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import BoundarySurface, SurfacePoint, tangent_basis

_BISECT_ITERS = 60


class QuadratureError(RuntimeError):
    """Raised when two refinement levels disagree beyond tolerance."""


@dataclass
class Nodes:
    u: np.ndarray
    y: np.ndarray
    normal: np.ndarray
    w: np.ndarray

    def __len__(self):
        return len(self.w)


@dataclass
class PolarRule:
    center: SurfacePoint
    radii: np.ndarray
    nodes: Nodes
    order: int
    include: np.ndarray  # (K, P) panel masks per radius

    def integrate(self, f: Callable) -> np.ndarray:
        """Return ``(K, ...)`` truncated integrals of ``f(nodes)``."""
        if len(self.nodes) == 0:
            return np.zeros(len(self.radii))
        vals = np.asarray(f(self.nodes))
        return self.reduce(vals)

    def reduce(self, vals) -> np.ndarray:
        vals = np.asarray(vals)
        w = self.nodes.w.reshape((-1,) + (1,) * (vals.ndim - 1))
        weighted = (w * vals).reshape((-1, self.order) + vals.shape[1:])
        panel = weighted.sum(axis=1)
        return np.tensordot(self.include.astype(float), panel, axes=(1, 0))


def _gauss(order):
    return np.polynomial.legendre.leggauss(order)


def _ray_frame(surface: BoundarySurface, u0, level):
    n = surface.n
    tb = tangent_basis(u0)
    if n == 2:
        dirs = np.array([tb[0], -tb[0]])
        wts = np.ones(2)
    elif n == 3:
        M = surface.quad.rays * 2**level
        t = 2 * np.pi * np.arange(M) / M
        dirs = np.cos(t)[:, None] * tb[0] + np.sin(t)[:, None] * tb[1]
        wts = np.full(M, 2 * np.pi / M)
    else:
        raise NotImplementedError("polar quadrature is implemented for n = 2, 3")
    return dirs, wts


def _background(surface: BoundarySurface, level):
    cfg = surface.quad
    # deeper panels cost accuracy: x - y loses ~1e-16 absolutely, and the
    # double-layer numerator (x - y).nu is O(s^2), so roundoff grows like 1e-16 / s
    geo =np.pi * 2.0 ** -np.arange(1, cfg.geometric_levels + 1)
    uni = np.linspace(0, np.pi, cfg.uniform_panels * 2**level + 1)
    return np.unique(np.concatenate([[0.0], geo, uni]))


def _bisect(fn, ray, lo, hi, target):
    flo = fn(lo, ray) - target
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        fm = fn(mid, ray) - target
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def polar_rule(
    surface: BoundarySurface,
    center: SurfacePoint,
    radii: Sequence[float],
    level: int = 0,
    fields: Sequence[Callable] = (),
) -> PolarRule:
    """Quadrature rule for ``int_{(dOmega) \\ B(x, rho)} f d sigma`` for every ``rho`` in ``radii``.

    ``fields`` are extra scalar functions of ambient points whose zero sets
    become panel breakpoints (e.g. the singular set of a density).
    """
    shape = surface.shape
    n = surface.n
    u0 = center.u
    x = center.x
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(radii < 0):
        raise ValueError("truncation radii must be nonnegative")
    order = surface.quad.base_order + 4 * level
    dirs, ray_w = _ray_frame(surface, u0, level)
    R = len(dirs)

    def ray_u(s, ray):
        return np.cos(s)[..., None] * u0 + np.sin(s)[..., None] * dirs[ray]

    def dist(s, ray):
        y = shape.point(ray_u(s, ray))
        d = y - x
        return np.sqrt(np.sum(d * d, axis=-1))

    G = _background(surface, level)
    rays_g = np.broadcast_to(np.arange(R)[:, None], (R, G.size))
    S_g = np.broadcast_to(G, (R, G.size))
    dist_g = dist(S_g, rays_g)

    bp_ray = [rays_g.ravel()]
    bp_s = [S_g.ravel()]

    def add_crossings(values, fn, target):
        f = values - target
        sgn = f >= 0
        change = sgn[:, 1:] != sgn[:, :-1]
        ri, gi = np.nonzero(change)
        if ri.size:
            s = _bisect(fn, ri, G[gi], G[gi + 1], target)
            bp_ray.append(ri)
            bp_s.append(s)

    for rho in np.unique(radii[radii > 0]):
        add_crossings(dist_g, dist, rho)

    kink_fns = []
    if shape.kink_field(u0) is not None:
        kink_fns.append(lambda s, ray: shape.kink_field(ray_u(s, ray)))
    for fld in fields:
        kink_fns.append(lambda s, ray, fld=fld: fld(shape.point(ray_u(s, ray))))
    for fn in kink_fns:
        add_crossings(fn(S_g, rays_g), fn, 0.0)

    ray_all = np.concatenate(bp_ray)
    s_all = np.concatenate(bp_s)
    order_idx = np.lexsort((s_all, ray_all))
    ray_all, s_all = ray_all[order_idx], s_all[order_idx]
    counts = np.bincount(ray_all, minlength=R)
    L = counts.max()
    B = np.full((R, L), np.pi)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pos = np.arange(ray_all.size) - starts[ray_all]
    B[ray_all, pos] = s_all

    a = B[:, :-1]
    b = B[:, 1:]
    valid = b > a
    ray_p = np.broadcast_to(np.arange(R)[:, None], a.shape)
    mid_dist = dist(0.5 * (a + b), ray_p)
    inc = (mid_dist[None, :, :] >= radii[:, None, None]) & valid[None]
    keep = np.any(inc, axis=0)

    a_k, b_k, ray_k = a[keep], b[keep], ray_p[keep]
    include = inc[:, keep]

    xg, wg = _gauss(order)
    s = 0.5 * (b_k - a_k)[:, None] * (xg + 1) + a_k[:, None]
    ws = 0.5 * (b_k - a_k)[:, None] * wg
    ray_n = np.broadcast_to(ray_k[:, None], s.shape)
    u = ray_u(s, ray_n).reshape(-1, n)
    s = s.ravel()
    ray_n = ray_n.ravel()
    jac = np.sin(s) ** (n - 2) * ray_w[ray_n] * ws.ravel() * shape.area_factor(u)
    nodes = Nodes(u, shape.point(u), shape.normal(u), jac)
    return PolarRule(center, radii, nodes, order, include)


def truncated_integrals(surface, center, radii, f, level=0, fields=()) -> np.ndarray:
    return polar_rule(surface, center, radii, level, fields).integrate(f)


@dataclass
class QuadResult:
    value: complex
    error: float
    converged: bool
    level: int


def integrate_truncated(
    surface: BoundarySurface,
    x: SurfacePoint,
    rho: float,
    f: Callable,
    level: Optional[int] = None,
    tol: float = 1e-6,
    fields=(),
) -> QuadResult:
    """``int_{(dOmega) \\ B(x, rho)} f d sigma`` with a two-level convergence check.

    ``f`` receives :class:`Nodes` and returns values per node. The result at
    the finer level is returned; ``converged`` is false when the two levels
    differ by more than ``tol * max(1, |value|)``.
    """
    if level is None:
        level = max(surface.quad.refine_levels - 1, 0)
    coarse = truncated_integrals(surface, x, [rho], f, level, fields)[0]
    fine = truncated_integrals(surface, x, [rho], f, level + 1, fields)[0]
    err = float(np.max(np.abs(fine - coarse)))
    scale = max(1.0, float(np.max(np.abs(fine))))
    return QuadResult(fine, err, err <= tol * scale, level + 1)

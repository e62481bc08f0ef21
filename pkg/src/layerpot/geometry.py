"""C^{1,1} boundaries as star-shaped surfaces with graph-patch atlases.

Every built-in boundary is star-shaped about the origin, ``y = R(u) u`` for
``u`` on the unit sphere ``S^{n-1}``. The radial form drives quadrature
(see :mod:`layerpot.quadrature`); graph patches ``psi_p(eta) = p + Rp^t (eta, gamma_p(eta))``
give the local picture used for normals, Taylor bounds and finite differences.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .fundsol import sphere_measure


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


def tangent_basis(u):
    """Orthonormal basis of the tangent space of S^{n-1} at ``u``, shape ``(n-1, n)``."""
    u = np.asarray(u, dtype=float)
    n = u.size
    if n == 2:
        return np.array([[-u[1], u[0]]])
    # Householder-free construction: pick the axis least aligned with u
    e = np.zeros(n)
    e[np.argmin(np.abs(u))] = 1.0
    t1 = e - (e @ u) * u
    t1 /= np.linalg.norm(t1)
    rest = [t1]
    for _ in range(n - 2):
        m = np.array([u] + rest)
        _, _, vt = np.linalg.svd(m)
        v = vt[-1]
        rest.append(v / np.linalg.norm(v))
    return np.array(rest)


# --------------------------------------------------------------------------
# shapes


class Shape:
    """Star-shaped closed surface ``y = R(u) u``.

    Subclasses provide ``radius(u)`` and its spherical gradient
    ``radius_grad(u)`` (tangential to the sphere at ``u``).
    """

    n: int
    name: str = "shape"
    smooth: bool = True

    def radius(self, u):
        raise NotImplementedError

    def radius_grad(self, u):
        raise NotImplementedError

    def kink_field(self, u):
        """Scalar whose zero set carries second-derivative jumps (None if smooth)."""
        return None

    def point(self, u):
        return self.radius(u)[..., None] * u

    def normal(self, u):
        R = self.radius(u)
        v = R[..., None] * u - self.radius_grad(u)
        return v / _norm(v)[..., None]

    def area_factor(self, u):
        """Surface element ratio ``d sigma_y / d sigma_u``."""
        R = self.radius(u)
        g = self.radius_grad(u)
        return R ** (self.n - 2) * np.sqrt(R * R + np.sum(g * g, axis=-1))

    def implicit(self, y):
        """``F(y) = |y| - R(y/|y|)`` and its gradient."""
        r = _norm(y)
        u = y / r[..., None]
        F = r - self.radius(u)
        dF = u - self.radius_grad(u) / r[..., None]
        return F, dF

    def spec(self) -> dict:
        raise NotImplementedError


class Ellipsoid(Shape):
    def __init__(self, axes, name=None):
        axes = np.asarray(axes, dtype=float)
        if axes.ndim != 1 or axes.size < 2:
            raise ValueError("need at least two semi-axes")
        if np.any(axes <= 0):
            raise ValueError(f"degenerate axes {axes.tolist()}")
        self.axes = axes
        self.n = axes.size
        if name is None:
            round_ = np.all(axes == axes[0])
            name = ("circle" if self.n == 2 else "sphere") if round_ else ("ellipse" if self.n == 2 else "ellipsoid")
        self.name = name

    def _q(self, u):
        return np.sum(u * u / self.axes**2, axis=-1)

    def radius(self, u):
        return self._q(u) ** -0.5

    def radius_grad(self, u):
        q = self._q(u)
        return u * q[..., None] ** -0.5 - (u / self.axes**2) * q[..., None] ** -1.5

    def spec(self):
        if np.all(self.axes == self.axes[0]):
            return {"shape": "circle" if self.n == 2 else "sphere", "R": float(self.axes[0])}
        keys = "abc"
        d = {"shape": "ellipse" if self.n == 2 else "ellipsoid"}
        d.update({keys[i]: float(a) for i, a in enumerate(self.axes)})
        return d


class BumpSphere(Shape):
    """Sphere with a polar bump ``R(theta) = R0 + amp (1 - theta^2/theta_b^2)^p``.

    ``theta`` is the angle from the last axis. The profile and its first
    derivative vanish at ``theta_b``; for ``p = 2`` the second derivative jumps
    there, so the surface is C^{1,1} but not C^2. For ``1 < p < 2`` the
    surface is only C^{1, p-1}.
    """

    smooth = False
    name = "bump_sphere"

    def __init__(self, R=1.0, amplitude=0.05, exponent=2.0, theta_b=0.8, n=3):
        if R <= 0:
            raise ValueError("radius must be positive")
        if exponent <= 1:
            raise ValueError("exponent must exceed 1 for a C^1 surface")
        if not 0 < theta_b < math.pi / 2:
            raise ValueError("theta_b must lie in (0, pi/2)")
        self.R0, self.amp, self.p, self.theta_b, self.n = float(R), float(amplitude), float(exponent), float(theta_b), int(n)
        # maximal slope of the profile, |s'| is maximal where (p-1) derivative vanishes
        t = np.linspace(0, theta_b, 4001)
        slope = np.max(np.abs(self._ds(t))) * abs(self.amp)
        if self.R0 - abs(self.amp) <= 0 or slope >= 0.5 * (self.R0 - abs(self.amp)):
            raise ValueError("bump amplitude breaks the graph property")

    def _s(self, theta):
        x = np.clip(1 - theta**2 / self.theta_b**2, 0, None)
        return x**self.p

    def _ds(self, theta):
        x = np.clip(1 - theta**2 / self.theta_b**2, 0, None)
        return self.p * x ** (self.p - 1) * (-2 * theta / self.theta_b**2)

    def _theta(self, u):
        return np.arccos(np.clip(u[..., -1], -1.0, 1.0))

    def radius(self, u):
        return self.R0 + self.amp * self._s(self._theta(u))

    def radius_grad(self, u):
        theta = self._theta(u)
        x = np.clip(1 - theta**2 / self.theta_b**2, 0, None)
        # s'(theta) / sin(theta), finite at the pole
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(theta > 1e-8, theta / np.sin(theta), 1.0)
        coef = self.amp * self.p * x ** (self.p - 1) * (-2 / self.theta_b**2) * ratio
        un = u[..., -1]
        e = np.concatenate([u[..., :-1] * un[..., None], -(1 - un**2)[..., None]], axis=-1)
        return coef[..., None] * e

    def kink_field(self, u):
        return self._theta(u) - self.theta_b

    def spec(self):
        return {"shape": "bump_sphere", "R": self.R0, "amplitude": self.amp, "exponent": self.p,
                "theta_b": self.theta_b, "n": self.n}


# --------------------------------------------------------------------------
# graph patches


@dataclass
class GraphPatch:
    """Coordinate cylinder ``p + Rp^t (B_{n-1}(0, r) x ]-delta, delta[)``.

    ``Rp`` has the tangent basis in its first ``n-1`` rows and the outward
    normal at ``p`` in its last row, so ``gamma_p(0) = 0`` and ``D gamma_p(0) = 0``.
    """

    shape: Shape
    p: np.ndarray
    Rp: np.ndarray
    r: float
    delta: float = np.inf
    gammaLipDGrad: float = np.nan

    @property
    def n(self):
        return self.p.size

    def _line(self, eta, t):
        base = np.concatenate([eta, t[..., None]], axis=-1)
        return self.p + base @ self.Rp

    def gamma(self, eta, tol=1e-15, maxiter=60):
        """Solve ``F(psi(eta)) = 0`` for the graph height by Newton's method."""
        eta = np.asarray(eta, dtype=float)
        t = np.zeros(eta.shape[:-1])
        nu = self.Rp[-1]
        for _ in range(maxiter):
            F, dF = self.shape.implicit(self._line(eta, t))
            dt = F / (dF @ nu)
            t = t - dt
            if np.all(np.abs(dt) <= tol * (1 + np.abs(t))):
                break
        return t

    def grad(self, eta):
        """``D gamma(eta)`` from the implicit function theorem."""
        eta = np.asarray(eta, dtype=float)
        y = self._line(eta, self.gamma(eta))
        _, dF = self.shape.implicit(y)
        return -(dF @ self.Rp[:-1].T) / (dF @ self.Rp[-1])[..., None]

    def hessian(self, eta, h=1e-5):
        """Central-difference Hessian of ``gamma`` (defined a.e. for C^{1,1} data)."""
        eta = np.asarray(eta, dtype=float)
        m = self.n - 1
        cols = []
        for j in range(m):
            e = np.zeros(m)
            e[j] = h
            cols.append((self.grad(eta + e) - self.grad(eta - e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def psi(self, eta):
        eta = np.asarray(eta, dtype=float)
        return self._line(eta, self.gamma(eta))

    def jacobian(self, eta):
        """``D psi(eta)``, shape ``(..., n, n-1)``."""
        g = self.grad(eta)
        m = self.n - 1
        top = np.broadcast_to(np.eye(m), g.shape[:-1] + (m, m))
        full = np.concatenate([top, g[..., None, :]], axis=-2)
        return np.einsum("ki,...kj->...ij", self.Rp, full)

    def normal(self, eta):
        g = self.grad(eta)
        v = np.concatenate([-g, np.ones(g.shape[:-1] + (1,))], axis=-1)
        v = v / np.sqrt(1 + np.sum(g * g, axis=-1))[..., None]
        return v @ self.Rp

    def metric_factor(self, eta):
        g = self.grad(eta)
        return np.sqrt(1 + np.sum(g * g, axis=-1))

    def project(self, y):
        """Chart coordinates ``eta`` of ambient points (inverse of ``psi`` on the graph)."""
        return ((np.asarray(y) - self.p) @ self.Rp.T)[..., :-1]


def frame_at(normal):
    """Rotation whose last row is ``normal`` and first rows span the tangent plane."""
    nu = np.asarray(normal, dtype=float)
    return np.vstack([tangent_basis(nu), nu])


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SurfacePoint:
    """A point on the boundary, carried with its reference parameter ``u``."""

    u: np.ndarray
    x: np.ndarray
    normal: np.ndarray
    area_factor: float

    def __post_init__(self):
        for name in ("u", "x", "normal"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass
class QuadratureConfig:
    base_order: int = 8
    refine_levels: int = 1
    deterministic: bool = True
    rays: int = 48
    uniform_panels: int = 24
    geometric_levels: int = 24


_POU_CUT = 0.5


def _pou_bump(t):
    out = np.zeros_like(t)
    m = t > _POU_CUT
    out[m] = np.exp(-1.0 / (t[m] - _POU_CUT))
    return out


class BoundarySurface:
    """Boundary with a 2n-patch axis-aligned atlas and a smooth partition of unity."""

    def __init__(self, shape: Shape, quad: Optional[QuadratureConfig] = None):
        self.shape = shape
        self.n = shape.n
        self.quad = quad or QuadratureConfig()

    # -- points ---------------------------------------------------------
    def point(self, u) -> SurfacePoint:
        u = np.asarray(u, dtype=float)
        u = u / np.linalg.norm(u)
        return SurfacePoint(u, self.shape.point(u), self.shape.normal(u), float(self.shape.area_factor(u)))

    def point_at(self, x) -> SurfacePoint:
        """Surface point on the ray through ambient ``x``."""
        return self.point(np.asarray(x, dtype=float))

    def sample_centers(self, count: int) -> list:
        """Quasi-uniform points (Fibonacci lattice / equispaced angles) plus patch bases."""
        n = self.n
        if n == 2:
            t = 2 * np.pi * (np.arange(count) + 0.5) / count
            us = np.stack([np.cos(t), np.sin(t)], axis=-1)
        elif n == 3:
            i = np.arange(count) + 0.5
            z = 1 - 2 * i / count
            phi = np.pi * (1 + 5**0.5) * i
            rho = np.sqrt(1 - z * z)
            us = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
        else:
            rng = np.random.default_rng(0)
            us = rng.standard_normal((count, n))
        pts = [self.point(u) for u in us]
        pts += [self.point(p.p) for p in self.patches]
        return pts

    # -- atlas ----------------------------------------------------------
    @cached_property
    def patches(self) -> list:
        out = []
        for k in range(self.n):
            for sgn in (1.0, -1.0):
                e = np.zeros(self.n)
                e[k] = sgn
                sp = self.point(e)
                Rp = frame_at(sp.normal)
                out.append(GraphPatch(self.shape, sp.x, Rp, self._patch_radius(sp.x, Rp, e)))
        for patch in out:
            self._fill_patch_bounds(patch)
        return out

    def _support_ok(self, patch, eta, axis_dir):
        y = patch.psi(eta)
        return (y / _norm(y)[..., None]) @ axis_dir > _POU_CUT

    def _patch_radius(self, p, Rp, axis_dir):
        """Smallest chart radius containing the support of the patch weight."""
        patch = GraphPatch(self.shape, p, Rp, np.inf)
        dirs = _unit_directions(self.n - 1, 64)
        lo = np.zeros(len(dirs))
        hi = np.full(len(dirs), 0.05 * np.linalg.norm(p))
        # expand until outside support
        for _ in range(60):
            inside = self._support_ok(patch, hi[:, None] * dirs, axis_dir)
            if not np.any(inside):
                break
            hi = np.where(inside, hi * 1.3, hi)
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            inside = self._support_ok(patch, mid[:, None] * dirs, axis_dir)
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return float(np.max(hi) * 1.02)

    def _fill_patch_bounds(self, patch, samples=400):
        eta = _disc_samples(self.n - 1, patch.r, samples, seed=1)
        g = patch.gamma(eta)
        patch.delta = float(3 * np.max(np.abs(g)) + 1e-3)
        H = patch.hessian(eta)
        patch.gammaLipDGrad = float(np.max(np.linalg.norm(H, ord=2, axis=(-2, -1))))

    def pou_weights(self, y):
        """Partition-of-unity weights, shape ``(..., 2n)``."""
        y = np.asarray(y, dtype=float)
        u = y / _norm(y)[..., None]
        raw = []
        for k in range(self.n):
            for sgn in (1.0, -1.0):
                raw.append(_pou_bump(sgn * u[..., k]))
        raw = np.stack(raw, axis=-1)
        return raw / np.sum(raw, axis=-1, keepdims=True)

    def locate(self, sp: SurfacePoint):
        """Atlas patch with the largest weight at ``sp`` and the chart coordinate."""
        w = self.pou_weights(sp.x)
        k = int(np.argmax(w))
        patch = self.patches[k]
        return k, patch.project(sp.x)

    @cached_property
    def atlas_rule(self):
        """Nodes and weights of the partition-of-unity quadrature over all patches."""
        order = max(self.quad.base_order, 8) * 12
        xs, ws = [], []
        for k, patch in enumerate(self.patches):
            eta, w = _disc_rule(self.n - 1, patch.r, order)
            with np.errstate(all="ignore"):
                y = patch.psi(eta)
                resid = np.abs(self.shape.implicit(y)[0])
            # chart points whose normal line misses the surface carry no weight
            on_surface = np.isfinite(resid) & (resid < 1e-10)
            y = np.where(on_surface[:, None], y, patch.p)
            pou = np.where(on_surface, self.pou_weights(y)[..., k], 0.0)
            keep = pou > 0
            y, eta, w, pou = y[keep], eta[keep], w[keep], pou[keep]
            xs.append(y)
            ws.append(w * pou * patch.metric_factor(eta))
        x = np.concatenate(xs)
        return x, np.concatenate(ws)

    def integrate_atlas(self, f: Callable):
        """Integrate a smooth ``f(points, normals)`` with the atlas rule."""
        y, w = self.atlas_rule
        u = y / _norm(y)[..., None]
        vals = f(y, self.shape.normal(u))
        return np.tensordot(w, vals, axes=(0, 0))

    # -- uniform cylinders ------------------------------------------------
    def local_patch(self, sp: SurfacePoint, r: Optional[float] = None) -> GraphPatch:
        """Coordinate cylinder centred at ``sp`` with ``gamma(0) = 0`` and ``D gamma(0) = 0``."""
        patch = GraphPatch(self.shape, sp.x.copy(), frame_at(sp.normal), r if r is not None else self.r_boundary)
        return patch

    @cached_property
    def r_boundary(self) -> float:
        """Uniform cylinder radius: largest tested radius with tilt below 45 degrees everywhere."""
        centers = self.sample_centers(24 if self.n == 3 else 32)
        scale = float(np.min([np.linalg.norm(c.x) for c in centers]))
        for frac in (0.5, 0.4, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05):
            r = frac * scale
            ok = True
            for c in centers:
                patch = self.local_patch(c, r)
                eta = _disc_samples(self.n - 1, r, 64, seed=2, boundary=True)
                g = patch.grad(eta)
                if not np.all(np.isfinite(g)) or np.max(_norm(g)) > 1.0:
                    ok = False
                    break
            if ok:
                return r
        return 0.05 * scale

    @cached_property
    def A(self) -> float:
        """Sampled bound ``sup_xi ||gamma_xi||_{C^{1,1}}`` over uniform cylinders."""
        r = self.r_boundary
        best = 0.0
        for c in self.sample_centers(24 if self.n == 3 else 32):
            patch = self.local_patch(c, r)
            eta = _disc_samples(self.n - 1, r, 200, seed=3)
            H = patch.hessian(eta)
            g = patch.grad(eta)
            gam = patch.gamma(eta)
            lip = float(np.max(np.linalg.norm(H, ord=2, axis=(-2, -1))))
            best = max(best, lip + float(np.max(np.abs(gam))) + float(np.max(_norm(g))))
        return best

    @cached_property
    def diameter(self) -> float:
        pts = np.array([c.x for c in self.sample_centers(400 if self.n == 3 else 256)])
        d = np.sqrt(np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1))
        return float(np.max(d))

    def measure(self) -> float:
        from .quadrature import integrate_truncated

        return float(np.real(integrate_truncated(self, self.point(np.eye(self.n)[-1]), 0.0, lambda nodes: np.ones(len(nodes.y))).value))

    def spec(self) -> dict:
        return self.shape.spec()


def _unit_directions(m, count):
    if m == 1:
        return np.array([[1.0], [-1.0]])
    t = 2 * np.pi * np.arange(count) / count
    return np.stack([np.cos(t), np.sin(t)], axis=-1)


def _disc_samples(m, r, count, seed=0, boundary=False):
    rng = np.random.default_rng(seed)
    if m == 1:
        s = rng.uniform(-r, r, count)
        if boundary:
            s = np.concatenate([s, [-r * 0.999, r * 0.999]])
        return s[:, None]
    ang = rng.uniform(0, 2 * np.pi, count)
    rad = r * np.sqrt(rng.uniform(0, 1, count))
    if boundary:
        rad = np.concatenate([rad, np.full(32, 0.999 * r)])
        ang = np.concatenate([ang, 2 * np.pi * np.arange(32) / 32])
    return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)


def _disc_rule(m, r, order):
    """Tensor Gauss-Legendre (radial) x trapezoid (angular) rule on ``B_m(0, r)``."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    if m == 1:
        return (r * xg)[:, None], r * wg
    s = 0.5 * r * (xg + 1)
    ws = 0.5 * r * wg
    nt = 2 * order
    t = 2 * np.pi * np.arange(nt) / nt
    S, Tt = np.meshgrid(s, t, indexing="ij")
    eta = np.stack([S * np.cos(Tt), S * np.sin(Tt)], axis=-1).reshape(-1, 2)
    w = (ws[:, None] * s[:, None] * (2 * np.pi / nt) * np.ones(nt)).reshape(-1)
    return eta, w


# --------------------------------------------------------------------------


def make_shape(spec) -> Shape:
    if isinstance(spec, str):
        spec = json.loads(spec) if spec.strip().startswith("{") else {"shape": spec}
    spec = dict(spec)
    kind = spec.pop("shape")
    if kind == "circle":
        return Ellipsoid([spec.get("R", 1.0)] * 2, "circle")
    if kind == "sphere":
        return Ellipsoid([spec.get("R", 1.0)] * 3, "sphere")
    if kind == "ellipse":
        return Ellipsoid([spec.get("a", 2.0), spec.get("b", 1.0)], "ellipse")
    if kind == "ellipsoid":
        return Ellipsoid([spec.get("a", 2.0), spec.get("b", 1.5), spec.get("c", 1.0)], "ellipsoid")
    if kind == "bump_sphere":
        return BumpSphere(spec.get("R", 1.0), spec.get("amplitude", 0.05), spec.get("exponent", 2.0),
                          spec.get("theta_b", 0.8), spec.get("n", 3))
    raise ValueError(f"unknown shape {kind!r}")


def make_surface(spec, quad: Optional[QuadratureConfig] = None) -> BoundarySurface:
    """Build a surface from a shape spec (dict, JSON string or bare name)."""
    return BoundarySurface(make_shape(spec), quad)


def normal(surface: BoundarySurface, sp: SurfacePoint) -> np.ndarray:
    return surface.shape.normal(sp.u)


def tangential_project(nu, v) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    v = np.asarray(v)
    return v - nu * np.sum(nu * v, axis=-1, keepdims=True)


def surface_fd_gradient(surface: BoundarySurface, sp: SurfacePoint, g: Callable, h: float = 1e-4) -> np.ndarray:
    """Tangential gradient of ``g`` at ``sp`` by fourth-order differences in a local chart.

    The chart is the uniform cylinder centred at ``sp``; there ``D psi(0)`` has
    orthonormal columns, so the pushed-forward gradient is
    ``sum_i tau_i d(g o psi)/d eta_i``.
    """
    patch = surface.local_patch(sp)
    if h >= 0.5 * patch.r:
        raise ValueError("finite-difference step reaches the patch edge")
    m = surface.n - 1
    grad_eta = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        vals = [g(patch.psi(s * e)) for s in (2, 1, -1, -2)]
        grad_eta.append((-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h))
    grad_eta = np.array(grad_eta)
    J = patch.jacobian(np.zeros(m))
    metric = J.T @ J
    amb = J @ np.linalg.solve(metric, grad_eta)
    return tangential_project(sp.normal, amb)

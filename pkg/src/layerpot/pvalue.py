"""Comparison of two truncation families for principal values in a chart.

For a graph function ``gamma`` on ``B_m(0, r)`` with ``gamma(0) = 0`` and
``a = D gamma(0)`` the excluded neighbourhoods are

    A_gamma(eps) = {|eta|^2 + gamma(eta)^2 < eps^2},
    A_a(eps)     = {|eta|^2 + (a . eta)^2 < eps^2}.

Integrals of ``g`` over the complements differ by at most

    c_g s_m (log(1 + alpha) + log sqrt(1 + |a|^2))                  (bound b)
    c_g s_m (log(1 + alpha) + log(1 / sqrt(1 - 2 alpha)))  if alpha < 1/2  (bound c)

with ``alpha(eps) = sup_{|eta| < eps} |gamma(eta) - a . eta| / |eta|`` and
``c_g = ess sup |eta|^m |g(eta)|``. The oracle integrates in polar
coordinates; the region boundary on each ray is found by bisection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .fundsol import sphere_measure

BASE_ANGLES = 512
ORACLE_LEVELS = 3
ORACLE_TOL = 1e-6


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


class OracleError(RuntimeError):
    """Raised when refinement levels of the oracle disagree."""


@dataclass
class GraphFunction:
    """``gamma: B_m(0, r) -> R`` with ``gamma(0) = 0`` and gradient ``a`` at 0."""

    m: int
    gamma: Callable
    a: np.ndarray
    r: float = 1.0
    name: str = "gamma"

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).reshape(self.m)
        if self.m not in (1, 2):
            raise ValueError("parameter dimension must be 1 or 2")
        if not self.r > 0:
            raise ValueError("domain radius must be positive")

    def __call__(self, eta):
        return self.gamma(np.asarray(eta, dtype=float))

    @property
    def q01(self) -> float:
        """Sampled ``sup |gamma(eta)| / |eta|`` over the domain ball."""
        return _shell_sup(self, lambda eta: np.abs(self(eta)), _radial_grid(self.r, self.r))


def _directions(m: int, count: int) -> np.ndarray:
    if m == 1:
        return np.array([[1.0], [-1.0]])
    t = 2 * np.pi * np.arange(count) / count
    return np.stack([np.cos(t), np.sin(t)], axis=-1)


def _radial_grid(r, upto, count=400):
    t = np.geomspace(r * 1e-9, upto, count)
    return np.unique(np.concatenate([t, [upto * (1 - 1e-12)]]))


def _shell_sup(gf, num, radii, angles=BASE_ANGLES):
    """``max num(eta) / |eta|`` over ``|eta|`` in ``radii`` and sampled directions."""
    dirs = _directions(gf.m, angles)
    eta = radii[:, None, None] * dirs[None]
    vals = num(eta) / radii[:, None]
    return float(np.max(vals)) if vals.size else 0.0


def builtin_gamma(name: str, a=None, holder: float = 0.5, m: int = 2, r: float = 1.0) -> GraphFunction:
    """Built-in graph functions.

    ``zero``, ``linear`` (``a . eta``), ``quad`` (``|eta|^2``), ``mixed``
    (``a . eta + |eta|^2``), ``holder`` (``a . eta + |eta|^(1 + holder)``) and
    ``sinprod`` (``sin(eta_1) eta_1``).
    """
    a = np.zeros(m) if a is None else np.asarray(a, dtype=float).reshape(m)
    lin = lambda eta: eta @ a
    if name == "zero":
        return GraphFunction(m, lambda eta: np.zeros(eta.shape[:-1]), np.zeros(m), r, name)
    if name == "linear":
        return GraphFunction(m, lin, a, r, name)
    if name == "quad":
        return GraphFunction(m, lambda eta: np.sum(eta * eta, axis=-1), np.zeros(m), r, name)
    if name == "mixed":
        return GraphFunction(m, lambda eta: lin(eta) + np.sum(eta * eta, axis=-1), a, r, name)
    if name == "holder":
        if not 0 < holder <= 1:
            raise ValueError("Hoelder exponent must lie in (0, 1]")
        return GraphFunction(m, lambda eta: lin(eta) + _norm(eta) ** (1 + holder), a, r, f"holder{holder:g}")
    if name == "sinprod":
        return GraphFunction(m, lambda eta: np.sin(eta[..., 0]) * eta[..., 0], np.zeros(m), r, name)
    raise ValueError(f"unknown graph function {name!r}")


@dataclass
class Integrand:
    """``g`` on ``B_m(0, r) \\ {0}`` with ``c_g = ess sup_{|eta| < r_g} |eta|^m |g(eta)|``."""

    m: int
    eval: Callable
    c_g: float
    r_g: float = 1.0
    name: str = "g"
    odd: bool = False

    def __call__(self, eta):
        return self.eval(np.asarray(eta, dtype=float))


def builtin_g(name: str, m: int = 2, r_g: float = 1.0) -> Integrand:
    """``riesz-odd`` (``eta_1 / |eta|^(m+1)``), ``weak`` (``|eta|^(1-m)``), ``critical`` (``|eta|^(-m)``)."""
    if name == "riesz-odd":
        return Integrand(m, lambda eta: eta[..., 0] / _norm(eta) ** (m + 1), 1.0, r_g, name, True)
    if name == "weak":
        if m == 1:
            # |eta|^0 would be bounded; use |eta|^(-1/2) as the integrable singular case
            return Integrand(m, lambda eta: _norm(eta) ** -0.5, r_g**0.5, r_g, name)
        return Integrand(m, lambda eta: _norm(eta) ** (1 - m), r_g, r_g, name)
    if name == "critical":
        return Integrand(m, lambda eta: _norm(eta) ** (-m), 1.0, r_g, name)
    raise ValueError(f"unknown integrand {name!r}")


def estimate_cg(g: Integrand, samples: int = 4096, seed: int = 0) -> float:
    """Sampled lower bound for ``c_g`` (for plugin integrands)."""
    rng = np.random.default_rng(seed)
    t = g.r_g * rng.uniform(0, 1, samples) ** 4
    d = _directions(g.m, 64)[rng.integers(0, 2 if g.m == 1 else 64, samples)]
    eta = t[:, None] * d
    return float(np.max(t**g.m * np.abs(g(eta))))


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Membership:
    inAgamma: bool
    inAa: bool


def region_membership(gf: GraphFunction, eps: float, eta) -> Membership:
    eta = np.asarray(eta, dtype=float)
    if _norm(eta) >= gf.r:
        raise ValueError("eta lies outside the domain ball")
    if not 0 < eps < gf.r:
        raise ValueError("eps must lie in (0, r)")
    n2 = float(eta @ eta)
    g = float(gf(eta))
    la = float(gf.a @ eta)
    return Membership(n2 + g * g < eps * eps, n2 + la * la < eps * eps)


def membership_arrays(gf: GraphFunction, eps: float, eta):
    eta = np.asarray(eta, dtype=float)
    n2 = np.sum(eta * eta, axis=-1)
    return n2 + gf(eta) ** 2 < eps * eps, n2 + (eta @ gf.a) ** 2 < eps * eps


def alpha_modulus(gf: GraphFunction, eps: float, angles: int = BASE_ANGLES) -> float:
    """``sup_{0 < |eta| < eps} |gamma(eta) - a . eta| / |eta|`` on a radial-angular grid.

    The radial grid is fixed (geometric over ``]0, r[``) and cut at ``eps``,
    so the estimate is nondecreasing in ``eps``.
    """
    if not 0 < eps <= gf.r:
        raise ValueError("eps must lie in (0, r]")
    grid = _radial_grid(gf.r, gf.r)
    radii = np.concatenate([grid[grid < eps], [eps * (1 - 1e-12)]])
    return _shell_sup(gf, lambda eta: np.abs(gf(eta) - eta @ gf.a), radii, angles)


def _boundary_radius(gf, eps, dirs, iters=80):
    """Radius where ``t^2 + gamma(t w)^2 = eps^2`` on each ray ``t w`` (first crossing in ``]0, eps]``)."""
    lo = np.zeros(len(dirs))
    hi = np.full(len(dirs), eps)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = mid**2 + gf(mid[:, None] * dirs) ** 2 < eps * eps
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def _gl(order):
    return np.polynomial.legendre.leggauss(order)


def _radial_integral(g, dirs, lo, hi, order, log_map):
    """``int_lo^hi g(t w) t^{m-1} dt`` per direction, with a log map for wide ranges."""
    m = dirs.shape[1]
    xg, wg = _gl(order)
    s = 0.5 * (xg + 1)
    w = 0.5 * wg
    if log_map:
        ratio = np.log(hi / lo)
        t = lo[:, None] * np.exp(ratio[:, None] * s)
        jac = t * ratio[:, None]
    else:
        t = lo[:, None] + (hi - lo)[:, None] * s
        jac = np.broadcast_to((hi - lo)[:, None], t.shape)
    eta = t[..., None] * dirs[:, None, :]
    vals = g(eta) * t ** (m - 1) * jac
    return vals @ w


def _ray_weights(m, count):
    if m == 1:
        return np.ones(2)
    return np.full(count, 2 * np.pi / count)


def _split_integral(g, dirs, lo, hi, order, panels=8):
    """Log-spaced panels from ``lo`` to ``hi`` so singular ``g`` near ``lo`` stays resolved."""
    edges = lo[:, None] * (hi / lo)[:, None] ** (np.arange(panels + 1) / panels)
    total = 0.0
    for p in range(panels):
        total = total + _radial_integral(g, dirs, edges[:, p], edges[:, p + 1], order, True)
    return total


@dataclass
class TruncationComparison:
    eps: float
    alphaEps: float
    integralGamma: complex
    integralA: complex
    lhs: float
    bound_b: float
    bound_c: Optional[float]
    cg: float
    oracle_error: float = 0.0
    converged: bool = True

    @property
    def ok_b(self) -> bool:
        return self.lhs <= self.bound_b + ORACLE_TOL

    @property
    def ok_c(self) -> Optional[bool]:
        if self.bound_c is None:
            return None
        return self.lhs <= self.bound_c + ORACLE_TOL


def _oracle(gf, g, eps, level):
    m = gf.m
    count = BASE_ANGLES * 2**level
    dirs = _directions(m, count)
    wts = _ray_weights(m, count)
    order = 16 + 8 * level
    t_gamma = _boundary_radius(gf, eps, dirs)
    t_a = eps / np.sqrt(1 + (dirs @ gf.a) ** 2)
    r = np.full(len(dirs), gf.r)
    int_gamma = wts @ _split_integral(g, dirs, t_gamma, r, order)
    int_a = wts @ _split_integral(g, dirs, t_a, r, order)
    # the difference is integrated directly over the gap between the two boundaries
    diff = wts @ _radial_integral(g, dirs, t_gamma, t_a, order, False)
    return int_gamma, int_a, diff


def check_star_shaped(gf: GraphFunction, eps: float, rays: int = 128, samples: int = 64) -> bool:
    """True when ``A_gamma(eps)`` meets every sampled ray in a single interval from 0."""
    dirs = _directions(gf.m, rays)
    tb = _boundary_radius(gf, eps, dirs)
    t = eps * (np.arange(1, samples + 1) / (samples + 1))
    eta = t[None, :, None] * dirs[:, None, :]
    inside = np.sum(eta * eta, axis=-1) + gf(eta) ** 2 < eps * eps
    expected = t[None, :] < tb[:, None]
    near = np.abs(t[None, :] - tb[:, None]) < 1e-9 * eps
    return bool(np.all((inside == expected) | near))


def truncated_difference(
    gf: GraphFunction, g: Integrand, eps: float, levels: int = ORACLE_LEVELS, tol: float = ORACLE_TOL
) -> TruncationComparison:
    """Both truncated integrals, their difference and the two bounds at ``eps``."""
    if gf.m != g.m:
        raise ValueError("graph function and integrand live in different dimensions")
    if not 0 < eps < min(gf.r, g.r_g):
        raise ValueError("eps must lie in (0, min(r, r_g))")
    if not check_star_shaped(gf, eps):
        raise ValueError(f"A_gamma({eps:g}) is not star-shaped along rays; oracle does not apply")
    results = [_oracle(gf, g, eps, lev) for lev in range(levels)]
    ig, ia, diff = results[-1]
    err = float(abs(results[-1][2] - results[-2][2])) if levels > 1 else 0.0
    err = max(err, float(abs(results[-1][0] - results[-2][0])) if levels > 1 else 0.0)
    converged = err <= tol * max(1.0, abs(ig))
    alpha = alpha_modulus(gf, eps)
    sm = sphere_measure(gf.m)
    cg = g.c_g
    la = math.log1p(alpha)
    bound_b = cg * sm * (la + 0.5 * math.log1p(float(gf.a @ gf.a)))
    bound_c = cg * sm * (la - 0.5 * math.log(1 - 2 * alpha)) if alpha < 0.5 else None
    return TruncationComparison(eps, alpha, complex(ig), complex(ia), float(abs(diff)), bound_b, bound_c, cg, err, converged)


def quartic_inner_radius(eps: float) -> float:
    """Positive root of ``rho^2 (1 + rho^2) = eps^2``."""
    return eps * math.sqrt(2 / (1 + math.sqrt(1 + 4 * eps * eps)))


def closed_form_lhs(eps: float) -> float:
    """``2 pi ln(eps / rho1)`` for ``gamma = |eta|^2``, ``g = |eta|^-2`` in two variables."""
    # eps^2 / rho1^2 = 1 + rho1^2, kept in log1p form
    return math.pi * math.log1p(quartic_inner_radius(eps) ** 2)


@dataclass
class PVTrace:
    eps: np.ndarray
    gamma_values: np.ndarray
    a_values: np.ndarray
    differences: np.ndarray
    bounds: np.ndarray
    cauchy_gamma: bool
    cauchy_a: bool
    tol: float

    @property
    def limit_gamma(self):
        return self.gamma_values[-1]

    @property
    def limit_a(self):
        return self.a_values[-1]


def _is_cauchy(trace, tol):
    """Last increment below ``tol`` or shrinking at least geometrically."""
    if len(trace) < 3:
        return bool(len(trace) == 2 and abs(trace[-1] - trace[-2]) < tol)
    d1, d2 = abs(trace[-2] - trace[-3]), abs(trace[-1] - trace[-2])
    return bool(d2 < tol or d2 <= 0.5 * d1)


def pv_convergence(gf: GraphFunction, g: Integrand, eps_seq: Sequence[float], tol: float = 1e-5) -> PVTrace:
    """Truncated integrals along both families as ``eps`` decreases.

    A trace is flagged Cauchy when its increments fall below ``tol`` or
    shrink at least geometrically; a non-Cauchy trace means the principal
    value may not exist, which is not a failure of the comparison bound.
    """
    eps_seq = np.sort(np.asarray(eps_seq, dtype=float))[::-1]
    comps = [truncated_difference(gf, g, e) for e in eps_seq]
    ig = np.array([c.integralGamma for c in comps])
    ia = np.array([c.integralA for c in comps])
    d = np.array([c.lhs for c in comps])
    b = np.array([c.bound_b for c in comps])
    return PVTrace(eps_seq, ig, ia, d, b, _is_cauchy(ig, tol), _is_cauchy(ia, tol), tol)


def parse_eps_grid(spec: str, per_decade: int = 1) -> np.ndarray:
    """``"1e-1:1e-4"`` -> decades from 1e-1 down to 1e-4; a comma list is taken verbatim."""
    if ":" in spec:
        hi, lo = (float(s) for s in spec.split(":"))
        if not (hi > 0 and lo > 0):
            raise ValueError("eps grid bounds must be positive")
        k = int(round(abs(math.log10(hi / lo)) * per_decade)) + 1
        return np.geomspace(hi, lo, k)
    vals = np.array([float(s) for s in spec.split(",") if s.strip()])
    if vals.size == 0 or np.any(vals <= 0):
        raise ValueError("eps grid must hold positive values")
    return vals

"""Fundamental solutions and their decomposition into principal part and remainders.

A fundamental solution is stored through its decomposition

    S(x) = S_n(T^{-1} x) / sqrt(det a2) + |x|^{3-n} A1(x/|x|, |x|)
           + (B1(x) + b0 (1 - delta_{2n})) ln|x| + C(x)

and its gradient through

    DS(x) = |T^{-1} x|^{-n} x^t a2^{-1} / (s_n sqrt(det a2))
            + |x|^{2-n} A2(x/|x|, |x|) + DB1(x) ln|x| + DC(x).

Built-in operators supply the components in closed form; other operators
plug their own evaluators into :class:`DecompositionComponents`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from .coeffs import CoefficientVector, Factorization, factorize, preset

EULER_GAMMA = 0.5772156649015329


def sphere_measure(n: int) -> float:
    """(n-1)-dimensional measure of the unit sphere in R^n (s_1 = 2)."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


def laplace_Sn(n: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = _norm(x)
    if np.any(r == 0):
        raise ValueError("S_n is singular at the origin")
    sn = sphere_measure(n)
    if n == 2:
        return np.log(r) / sn
    return r ** (2 - n) / ((2 - n) * sn)


def laplace_Sn_gradient(n: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = _norm(x)
    if np.any(r == 0):
        raise ValueError("S_n is singular at the origin")
    return x / (sphere_measure(n) * r[..., None] ** n)


# --------------------------------------------------------------------------
# radial building blocks


class RadialScalar:
    """Scalar field ``F(|x|)`` analytic in ``x``.

    ``derivs(r)`` returns ``(F, G, H)`` with ``G = F'/r`` and
    ``H = (F'' - F'/r) / r^2``; both stay finite at ``r = 0`` because ``F``
    is a power series in ``r^2``. Then ``DF = G x`` and
    ``D^2 F = G I + H x x^t``.

    Near the origin the power series in ``t = (k r)^2`` is summed; beyond
    ``kr > switch`` the closed form ``closed(r) -> (F, F', F'')`` is used.
    """

    def __init__(self, k: float, series: np.ndarray, closed: Optional[Callable] = None, switch: float = np.inf):
        self.k = float(k)
        self.series = np.asarray(series, dtype=complex)
        self.closed = closed
        self.switch = switch
        m = np.arange(len(self.series))
        self._d1 = (m * self.series)[1:]
        self._d2 = (m * (m - 1) * self.series)[2:]

    def derivs(self, r):
        r = np.asarray(r, dtype=float)
        k2 = self.k**2
        t = k2 * r * r
        F = np.polynomial.polynomial.polyval(t, self.series)
        G = 2 * k2 * np.polynomial.polynomial.polyval(t, self._d1)
        H = 4 * k2 * k2 * np.polynomial.polynomial.polyval(t, self._d2)
        if self.closed is not None:
            far = self.k * r > self.switch
            if np.any(far):
                rf = r[far]
                f0, f1, f2 = self.closed(rf)
                F = np.where(far, 0, F)
                G = np.where(far, 0, G)
                H = np.where(far, 0, H)
                F[far] = f0
                G[far] = f1 / rf
                H[far] = (f2 - f1 / rf) / rf**2
        return F, G, H

    def value(self, x):
        return self.derivs(_norm(x))[0]

    def gradient(self, x):
        _, G, _ = self.derivs(_norm(x))
        return G[..., None] * x

    def hessian(self, x):
        _, G, H = self.derivs(_norm(x))
        eye = np.eye(x.shape[-1])
        return G[..., None, None] * eye + H[..., None, None] * x[..., :, None] * x[..., None, :]


class RadialVector:
    """Vector component ``A(theta, r) = g(r) theta`` with ``g(r) = r q(r^2)``.

    Its radial extension ``A(y/|y|, r)`` has ``d/dy_j A_i = g(r)(delta_ij - theta_i theta_j)``
    on the unit sphere.
    """

    def __init__(self, k: float, series: np.ndarray, closed: Optional[Callable] = None, switch: float = np.inf):
        self.k = float(k)
        self.series = np.asarray(series, dtype=complex)
        self.closed = closed
        self.switch = switch
        m = np.arange(len(self.series))
        self._d1 = (m * self.series)[1:]

    def g(self, r):
        """Return ``(g(r), g'(r))``."""
        r = np.asarray(r, dtype=float)
        k2 = self.k**2
        t = k2 * r * r
        q = np.polynomial.polynomial.polyval(t, self.series)
        dq_dw = k2 * np.polynomial.polynomial.polyval(t, self._d1)
        g = r * q
        dg = q + 2 * r * r * dq_dw
        if self.closed is not None:
            far = self.k * r > self.switch
            if np.any(far):
                g0, g1 = self.closed(r[far])
                g = np.array(g, dtype=complex)
                dg = np.array(dg, dtype=complex)
                g[far] = g0
                dg[far] = g1
        return g, dg

    def A(self, theta, r):
        return self.g(r)[0][..., None] * theta

    def dA_dr(self, theta, r):
        return self.g(r)[1][..., None] * theta

    def dA_dy(self, theta, r):
        """Array ``[..., j, i] = d A_i / d y_j``."""
        g = self.g(r)[0]
        n = theta.shape[-1]
        proj = np.eye(n) - theta[..., :, None] * theta[..., None, :]
        return g[..., None, None] * proj


class RadialOnly:
    """Scalar ``A1(theta, r) = a(r)`` independent of the direction."""

    def __init__(self, func: Callable):
        self.func = func

    def __call__(self, theta, r):
        return self.func(np.asarray(r, dtype=float))


# --------------------------------------------------------------------------
# decomposition components


def _zero_scalar(x):
    return np.zeros(np.shape(x)[:-1], dtype=complex)


def _zero_grad(x):
    return np.zeros(np.shape(x), dtype=complex)


def _zero_hess(x):
    s = np.shape(x)
    return np.zeros(s + (s[-1],), dtype=complex)


@dataclass
class DecompositionComponents:
    """Remainder components of a fundamental solution.

    Every evaluator is vectorized over leading axes. ``A2`` returns arrays of
    shape ``(..., n)``; ``dA2_dy`` returns ``(..., n, n)`` indexed ``[j, i]``
    for ``d A2_i / d y_j`` along the radial extension. When ``dA2_dy`` or
    ``dA2_dr`` is missing it is computed by central differences (step 1e-6).
    """

    n: int
    A1: Callable = None
    A2: Callable = None
    dA2_dy: Optional[Callable] = None
    dA2_dr: Optional[Callable] = None
    b0: complex = 0.0
    B1: Callable = _zero_scalar
    B1_grad: Callable = _zero_grad
    B1_hess: Callable = _zero_hess
    C: Callable = _zero_scalar
    C_grad: Callable = _zero_grad
    C_hess: Callable = _zero_hess
    A1_odd: bool = True
    A2_even: bool = True
    vanishing: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.A1 is None:
            self.A1 = lambda theta, r: np.zeros(np.shape(r), dtype=complex)
        if self.A2 is None:
            self.A2 = lambda theta, r: np.zeros(np.shape(theta), dtype=complex)
        if self.dA2_dy is None:
            self.dA2_dy = self._fd_dA2_dy
        if self.dA2_dr is None:
            self.dA2_dr = self._fd_dA2_dr
        if self.n % 2 == 1 and self.b0 != 0:
            raise ValueError("b0 must vanish in odd dimension")

    def _fd_dA2_dy(self, theta, r, h=1e-6):
        theta = np.asarray(theta, dtype=float)
        out = []
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = h
            yp, ym = theta + e, theta - e
            ap = self.A2(yp / _norm(yp)[..., None], r)
            am = self.A2(ym / _norm(ym)[..., None], r)
            out.append((ap - am) / (2 * h))
        return np.stack(out, axis=-2)

    def _fd_dA2_dr(self, theta, r, h=1e-6):
        r = np.asarray(r, dtype=float)
        return (self.A2(theta, r + h) - self.A2(theta, r - h)) / (2 * h)


def laplace_components(n: int) -> DecompositionComponents:
    return DecompositionComponents(n, vanishing=frozenset({"A1", "A2", "B1", "C"}))


def _helmholtz3d_components(k: float) -> DecompositionComponents:
    j = np.arange(40)
    fact = np.array([math.factorial(i) for i in range(2 * len(j) + 3)], dtype=float)
    sign = (-1.0) ** j
    four_pi = 4 * math.pi

    # A1(r) = -(cos kr - 1) / (4 pi r) = r * sum_{j>=0} (-1)^j k^{2j+2} r^{2j} / (2j+2)! / (4 pi)
    a1_series = sign * k**2 / fact[2 * j + 2] / four_pi

    def a1(r):
        t = (k * r) ** 2
        small = r * np.polynomial.polynomial.polyval(t, a1_series)
        with np.errstate(divide="ignore", invalid="ignore"):
            big = -(np.cos(k * r) - 1) / (four_pi * r)
        return np.where(k * r > 1.0, big, small).astype(complex)

    # A2 = g(r) theta, g = r A1'(r) = (k sin kr + (cos kr - 1)/r) / (4 pi)
    g_series = sign * k**2 * (2 * j + 1) / fact[2 * j + 2] / four_pi

    def g_closed(r):
        kr = k * r
        g = (k * np.sin(kr) + (np.cos(kr) - 1) / r) / four_pi
        dg = (k**2 * np.cos(kr) - k * np.sin(kr) / r - (np.cos(kr) - 1) / r**2) / four_pi
        return g, dg

    A2 = RadialVector(k, g_series, g_closed, switch=1.0)

    # C = -i sin(kr) / (4 pi r)
    c_series = -1j * sign * k / fact[2 * j + 1] / four_pi

    def c_closed(r):
        kr = k * r
        s, c = np.sin(kr), np.cos(kr)
        f0 = -1j * s / (four_pi * r)
        f1 = -1j * (k * c / r - s / r**2) / four_pi
        f2 = -1j * (-(k**2) * s / r - 2 * k * c / r**2 + 2 * s / r**3) / four_pi
        return f0, f1, f2

    C = RadialScalar(k, c_series, c_closed, switch=1.0)
    return DecompositionComponents(
        3,
        A1=RadialOnly(a1),
        A2=A2.A,
        dA2_dy=A2.dA_dy,
        dA2_dr=A2.dA_dr,
        C=C.value,
        C_grad=C.gradient,
        C_hess=C.hessian,
        vanishing=frozenset({"B1"}),
    )


def _helmholtz2d_components(k: float) -> DecompositionComponents:
    m = np.arange(60)
    fact = np.array([math.factorial(i) for i in range(len(m))], dtype=float)
    # J0(kr) = sum (-1)^m (t/4)^m / (m!)^2 with t = (kr)^2
    j0_series = (-0.25) ** m / fact**2
    harmonic = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, len(m)))])
    tail = -((-0.25) ** m) * harmonic / fact**2
    two_pi = 2 * math.pi
    lead = (math.log(k / 2) + EULER_GAMMA) / two_pi

    b1_series = j0_series.copy()
    b1_series[0] = 0.0
    b1_series = b1_series / two_pi

    def b1_closed(r):
        z = k * r
        J0, J1 = special.j0(z), special.j1(z)
        return (J0 - 1) / two_pi, -k * J1 / two_pi, -(k**2) * (J0 - J1 / z) / two_pi

    B1 = RadialScalar(k, b1_series, b1_closed, switch=8.0)

    c_series = (-0.25j + lead) * j0_series + tail / two_pi

    def c_closed(r):
        z = k * r
        J0, J1, Y0, Y1 = special.j0(z), special.j1(z), special.y0(z), special.y1(z)
        lr = np.log(r)
        f0 = -0.25j * J0 + 0.25 * Y0 - J0 * lr / two_pi
        f1 = 0.25j * k * J1 - 0.25 * k * Y1 + (k * J1 * lr - J0 / r) / two_pi
        dJ1 = k * (J0 - J1 / z)
        dY1 = k * (Y0 - Y1 / z)
        f2 = 0.25j * k * dJ1 - 0.25 * k * dY1 + (dJ1 * lr + 2 * k * J1 / r + J0 / r**2) / two_pi
        return f0, f1, f2

    C = RadialScalar(k, c_series, c_closed, switch=8.0)

    # A2 = (B1(r) / r) theta, i.e. q(w) = B1 / w
    q_series = b1_series[1:] * k**2

    def g_closed(r):
        b, db, _ = b1_closed(r)
        return b / r, db / r - b / r**2

    A2 = RadialVector(k, q_series, g_closed, switch=8.0)
    return DecompositionComponents(
        2,
        A2=A2.A,
        dA2_dy=A2.dA_dy,
        dA2_dr=A2.dA_dr,
        B1=B1.value,
        B1_grad=B1.gradient,
        B1_hess=B1.hessian,
        C=C.value,
        C_grad=C.gradient,
        C_hess=C.hessian,
        vanishing=frozenset({"A1"}),
    )


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FundamentalSolution:
    coeffs: CoefficientVector
    fact: Factorization
    components: DecompositionComponents
    name: str = "plugin"
    k: Optional[float] = None
    exact: Optional[Callable] = None

    @property
    def n(self) -> int:
        return self.coeffs.n

    @property
    def principal_scale(self) -> float:
        """``1 / (s_n sqrt(det a2))``."""
        return 1.0 / (sphere_measure(self.n) * self.fact.sqrt_det)

    def principal_part(self, x):
        x = np.asarray(x, dtype=float)
        z = x @ self.fact.Tinv.T
        return laplace_Sn(self.n, z) / self.fact.sqrt_det

    def principal_gradient(self, x):
        x = np.asarray(x, dtype=float)
        z = _norm(x @ self.fact.Tinv.T)
        if np.any(z == 0):
            raise ValueError("gradient is singular at the origin")
        return self.principal_scale * (x @ self.fact.a2_inv) / z[..., None] ** self.n

    def value(self, x):
        x = np.asarray(x, dtype=float)
        r = _norm(x)
        if np.any(r == 0):
            raise ValueError("fundamental solution is singular at the origin")
        theta = x / r[..., None]
        comp = self.components
        log_coef = comp.B1(x) + (comp.b0 if self.n != 2 else 0.0)
        return (
            self.principal_part(x)
            + r ** (3 - self.n) * comp.A1(theta, r)
            + log_coef * np.log(r)
            + comp.C(x)
        )

    def remainder_gradient(self, x):
        """All gradient terms except the principal one."""
        x = np.asarray(x, dtype=float)
        r = _norm(x)
        theta = x / r[..., None]
        comp = self.components
        return (
            (r ** (2 - self.n))[..., None] * comp.A2(theta, r)
            + comp.B1_grad(x) * np.log(r)[..., None]
            + comp.C_grad(x)
        )

    def gradient(self, x):
        return self.principal_gradient(x) + self.remainder_gradient(x)


def principal_part(fs: FundamentalSolution, x):
    return fs.principal_part(x)


def gradient(fs: FundamentalSolution, x):
    return fs.gradient(x)


def verify_ppgr_identity(fact: Factorization, x) -> float:
    """Relative residual of ``D(S_n o T^{-1})(x) a2 / sqrt(det a2) = x^t / (s_n sqrt(det a2) |T^{-1}x|^n)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    Tinv = fact.Tinv
    z = Tinv @ x
    lhs = (laplace_Sn_gradient(n, z) @ Tinv) @ fact.a2 / fact.sqrt_det
    zn = np.sqrt(z @ z)
    rhs = x / (sphere_measure(n) * fact.sqrt_det * zn**n)
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))


def _helmholtz3d_exact(k):
    def f(x):
        r = _norm(np.asarray(x, dtype=float))
        return -np.exp(1j * k * r) / (4 * math.pi * r)

    return f


def _helmholtz2d_exact(k):
    def f(x):
        r = _norm(np.asarray(x, dtype=float))
        return -0.25j * special.hankel1(0, k * r)

    return f


KR_MAX = 30.0


def builtin(name: str, k: float = 1.0) -> FundamentalSolution:
    """Built-in fundamental solutions with ``P S = delta``.

    Helmholtz uses ``-exp(ik|x|)/(4 pi |x|)`` in 3D and ``-(i/4) H0(k|x|)``
    in 2D, so that the logarithmic/Newtonian leading term has the same sign
    as ``S_n``.
    """
    coeffs = preset(name, k)
    fact = factorize(coeffs)
    if name in ("laplace2d", "laplace3d", "aniso2d"):
        return FundamentalSolution(coeffs, fact, laplace_components(coeffs.n), name)
    if name == "helmholtz3d":
        return FundamentalSolution(coeffs, fact, _helmholtz3d_components(k), name, k, _helmholtz3d_exact(k))
    if name == "helmholtz2d":
        return FundamentalSolution(coeffs, fact, _helmholtz2d_components(k), name, k, _helmholtz2d_exact(k))
    raise ValueError(f"unknown preset {name!r}")

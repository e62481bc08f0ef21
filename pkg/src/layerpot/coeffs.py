"""Constant coefficients of a second order elliptic operator.

The operator is ``P u = sum_{l,j} a2[l,j] d_l d_j u + sum_l a1[l] d_l u + a0 u``
with a real symmetric positive definite principal matrix ``a2`` and complex
lower order coefficients.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular


class EllipticityError(ValueError):
    """Raised when the principal matrix is not symmetric positive definite."""


@dataclass(frozen=True)
class CoefficientVector:
    n: int
    a2: np.ndarray
    a1: np.ndarray = field(default=None)
    a0: complex = 0.0

    def __post_init__(self):
        a2 = np.array(self.a2, dtype=float)
        a1 = np.zeros(self.n, dtype=complex) if self.a1 is None else np.array(self.a1, dtype=complex)
        if self.n < 2:
            raise ValueError(f"dimension must be >= 2, got {self.n}")
        if a2.shape != (self.n, self.n):
            raise ValueError(f"a2 has shape {a2.shape}, expected {(self.n, self.n)}")
        if a1.shape != (self.n,):
            raise ValueError(f"a1 has shape {a1.shape}, expected {(self.n,)}")
        a2.setflags(write=False)
        a1.setflags(write=False)
        object.__setattr__(self, "a2", a2)
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a0", complex(self.a0))

    @classmethod
    def from_gamma(cls, n: int, coeffs: dict) -> "CoefficientVector":
        """Build from multi-index coefficients ``{gamma: a_gamma}``.

        Off-diagonal second order entries are halved, so that
        ``a2[l, j] = a_{e_l + e_j} / 2`` for ``l != j``.
        """
        a2 = np.zeros((n, n))
        a1 = np.zeros(n, dtype=complex)
        a0 = 0j
        for gamma, val in coeffs.items():
            gamma = tuple(int(g) for g in gamma)
            if len(gamma) != n or min(gamma) < 0:
                raise ValueError(f"bad multi-index {gamma}")
            order = sum(gamma)
            idx = [i for i, g in enumerate(gamma) for _ in range(g)]
            if order == 2:
                if np.imag(val) != 0:
                    raise ValueError("second order coefficients must be real")
                l, j = idx
                if l == j:
                    a2[l, l] = np.real(val)
                else:
                    a2[l, j] = a2[j, l] = np.real(val) / 2
            elif order == 1:
                a1[idx[0]] = val
            elif order == 0:
                a0 = complex(val)
            else:
                raise ValueError(f"multi-index {gamma} has order > 2")
        return cls(n, a2, a1, a0)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    min_eigenvalue: float
    message: str = ""


@dataclass(frozen=True)
class Factorization:
    """``a2 = T T^t`` with ``T`` the lower triangular Cholesky factor."""

    T: np.ndarray
    Tinv: np.ndarray
    detA2: float
    opNormT: float

    @property
    def sqrt_det(self) -> float:
        return float(np.sqrt(self.detA2))

    @property
    def a2(self) -> np.ndarray:
        return self.T @ self.T.T

    @property
    def a2_inv(self) -> np.ndarray:
        return self.Tinv.T @ self.Tinv


def validate(coeffs: CoefficientVector) -> ValidationReport:
    a2 = coeffs.a2
    if not np.array_equal(a2, a2.T):
        return ValidationReport(False, float("nan"), "a2 is not symmetric")
    lam = float(np.linalg.eigvalsh(a2)[0])
    if not lam > 0:
        return ValidationReport(False, lam, f"ellipticity fails: smallest eigenvalue {lam:g} <= 0")
    return ValidationReport(True, lam)


def factorize(coeffs: CoefficientVector) -> Factorization:
    report = validate(coeffs)
    if not report.ok:
        raise EllipticityError(report.message)
    try:
        T = np.linalg.cholesky(coeffs.a2)
    except np.linalg.LinAlgError as exc:
        raise EllipticityError(f"Cholesky breakdown: {exc}") from exc
    Tinv = solve_triangular(T, np.eye(coeffs.n), lower=True)
    detA2 = float(np.prod(np.diag(T)) ** 2)
    opnorm = float(np.linalg.norm(T, 2))
    for arr in (T, Tinv):
        arr.setflags(write=False)
    return Factorization(T, Tinv, detA2, opnorm)


def _fd_derivatives(u, x, h):
    n = x.size
    e = np.eye(n) * h
    f0 = u(x)
    grad = np.array([(u(x + e[i]) - u(x - e[i])) / (2 * h) for i in range(n)])
    hess = np.empty((n, n), dtype=np.result_type(f0, complex))
    for i in range(n):
        hess[i, i] = (u(x + e[i]) - 2 * f0 + u(x - e[i])) / h**2
        for j in range(i + 1, n):
            hess[i, j] = hess[j, i] = (
                u(x + e[i] + e[j]) - u(x + e[i] - e[j]) - u(x - e[i] + e[j]) + u(x - e[i] - e[j])
            ) / (4 * h**2)
    return f0, grad, hess


def apply_operator(
    coeffs: CoefficientVector,
    u: Callable[[np.ndarray], complex],
    x,
    grad: Optional[Callable] = None,
    hess: Optional[Callable] = None,
    h: Optional[float] = None,
) -> complex:
    """Evaluate ``P[a, D] u`` at ``x``.

    Missing derivative callbacks are replaced by central differences with
    step ``h = 1e-5 (1 + |x|)``.
    """
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-5 * (1 + np.linalg.norm(x))
    if grad is None or hess is None:
        f0, g_fd, h_fd = _fd_derivatives(u, x, h)
    else:
        f0 = u(x)
    g = np.asarray(grad(x)) if grad is not None else g_fd
    H = np.asarray(hess(x)) if hess is not None else h_fd
    return complex(np.sum(coeffs.a2 * H) + coeffs.a1 @ g + coeffs.a0 * f0)


def _as_complex_list(vals):
    out = []
    for v in vals:
        if isinstance(v, (list, tuple)):
            out.append(complex(v[0], v[1]))
        else:
            out.append(complex(v))
    return out


PRESETS = ("laplace2d", "laplace3d", "helmholtz2d", "helmholtz3d", "aniso2d")


def preset(name: str, k: float = 1.0) -> CoefficientVector:
    if name == "laplace2d":
        return CoefficientVector(2, np.eye(2))
    if name == "laplace3d":
        return CoefficientVector(3, np.eye(3))
    if name in ("helmholtz2d", "helmholtz3d"):
        if not k > 0:
            raise ValueError(f"wave number must be positive, got {k}")
        n = 2 if name == "helmholtz2d" else 3
        return CoefficientVector(n, np.eye(n), None, k**2)
    if name == "aniso2d":
        return CoefficientVector(2, np.array([[2.0, 1.0], [1.0, 2.0]]))
    raise ValueError(f"unknown operator preset {name!r}")


def from_config(cfg) -> CoefficientVector:
    """Parse the operator JSON config (dict, JSON string, or preset name)."""
    if isinstance(cfg, str):
        stripped = cfg.strip()
        if not stripped.startswith("{"):
            return preset(stripped)
        cfg = json.loads(stripped)
    if "preset" in cfg:
        return preset(cfg["preset"], cfg.get("k", 1.0))
    n = int(cfg["n"])
    a1 = _as_complex_list(cfg.get("a1", [0.0] * n))
    a0 = _as_complex_list([cfg.get("a0", 0.0)])[0]
    return CoefficientVector(n, np.array(cfg["a2"], dtype=float), np.array(a1), a0)


def to_config(coeffs: CoefficientVector) -> dict:
    return {
        "n": coeffs.n,
        "a2": coeffs.a2.tolist(),
        "a1": [[float(z.real), float(z.imag)] for z in coeffs.a1],
        "a0": [coeffs.a0.real, coeffs.a0.imag],
    }

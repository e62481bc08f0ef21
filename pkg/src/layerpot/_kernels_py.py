"""Pure numpy implementations of the principal-part kernel loops.

These mirror the compiled versions in ``_speedups`` one to one and serve as
the fallback when the extension is not built.
"""
import numpy as np


def principal_dl(z, nu_y, a2inv, scale):
    """``-scale |T^{-1} z|^{-n} z . nu_y`` for rows of ``z``."""
    n = z.shape[1]
    q = np.einsum("ij,jk,ik->i", z, a2inv, z)
    return -scale * np.einsum("ij,ij->i", z, nu_y) / q ** (0.5 * n)


def principal_tangential(z, nu_x, nu_y, a2inv, scale):
    """Projected gradients in ``x`` of the principal double layer term.

    Returns ``(J1, J2)``, each of shape ``(N, n)``: the part coming from
    differentiating ``|T^{-1} z|^{-n}`` and the part from ``z . nu_y``.
    """
    n = z.shape[1]
    w = z @ a2inv
    q = np.einsum("ij,ij->i", w, z)
    zn = np.einsum("ij,ij->i", z, nu_y)
    qn = q ** (-0.5 * n)
    v1 = (scale * n * zn * qn / q)[:, None] * w
    v2 = -(scale * qn)[:, None] * nu_y
    v1 -= nu_x * np.einsum("ij,ij->i", nu_x, v1)[:, None]
    v2 -= nu_x * np.einsum("ij,ij->i", nu_x, v2)[:, None]
    return v1, v2


def riesz(z, h):
    """``z_h / |z|^n`` for rows of ``z``."""
    n = z.shape[1]
    r2 = np.einsum("ij,ij->i", z, z)
    return z[:, h] / r2 ** (0.5 * n)

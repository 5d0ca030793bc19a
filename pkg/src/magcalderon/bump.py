"""Smooth compactly supported bump profile and its radial derivatives.

The profile is ``psi(r) = exp(-1 / (1 - r**2))`` for ``|r| < 1`` and zero
otherwise.  Most fields in the package are written as ``psi(|x - c| / R)``
times a constant tensor, so the helpers below work in the squared variable
``s = |x - c|**2 / R**2`` where the profile is a smooth function of ``s``.
"""
from __future__ import annotations

from functools import lru_cache
from math import gamma, pi

import numpy as np
from scipy import integrate

__all__ = [
    "profile",
    "profile_s",
    "radial_bump",
    "radial_bump_gradient",
    "radial_bump_hessian",
    "one_d_mass",
    "ball_mass",
]


def profile(r):
    """Evaluate ``psi(r)``; exactly zero for ``|r| >= 1``."""
    r = np.asarray(r, dtype=float)
    return profile_s(r * r)


def profile_s(s):
    """Profile as a function of ``s = r**2``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out


def _dprofile_s(s, order):
    # d^k/ds^k exp(-1/(1-s)) for k = 1, 2, multiplied back onto psi.
    s = np.asarray(s, dtype=float)
    psi = profile_s(s)
    out = np.zeros_like(s)
    inside = s < 1.0
    w = 1.0 / (1.0 - s[inside])
    if order == 1:
        out[inside] = -psi[inside] * w**2
    elif order == 2:
        out[inside] = psi[inside] * (w**4 - 2.0 * w**3)
    else:
        raise ValueError("only first and second s-derivatives are tabulated")
    return out


def radial_bump(X, center, radius):
    """``psi(|x - c| / radius)`` for points ``X`` of shape ``(..., n)``."""
    d = np.asarray(X, dtype=float) - np.asarray(center, dtype=float)
    return profile_s(np.einsum("...i,...i->...", d, d) / radius**2)


def radial_bump_gradient(X, center, radius):
    """Gradient of :func:`radial_bump`, shape ``(..., n)``."""
    d = np.asarray(X, dtype=float) - np.asarray(center, dtype=float)
    s = np.einsum("...i,...i->...", d, d) / radius**2
    return (2.0 / radius**2) * _dprofile_s(s, 1)[..., None] * d


def radial_bump_hessian(X, center, radius):
    """Hessian of :func:`radial_bump`, shape ``(..., n, n)``."""
    d = np.asarray(X, dtype=float) - np.asarray(center, dtype=float)
    n = d.shape[-1]
    s = np.einsum("...i,...i->...", d, d) / radius**2
    d1 = _dprofile_s(s, 1)
    d2 = _dprofile_s(s, 2)
    eye = np.eye(n)
    return (2.0 / radius**2) * (
        d1[..., None, None] * eye
        + (2.0 / radius**2) * d2[..., None, None] * d[..., :, None] * d[..., None, :]
    )


@lru_cache(maxsize=None)
def one_d_mass() -> float:
    """``int_{-1}^{1} psi(r) dr``."""
    val, _ = integrate.quad(lambda r: float(profile(r)), -1.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


@lru_cache(maxsize=None)
def ball_mass(n: int = 3) -> float:
    """``int_{|x|<1} psi(|x|) dx`` over the unit ball of R^n."""
    sphere_area = 2.0 * pi ** (n / 2) / gamma(n / 2)
    val, _ = integrate.quad(
        lambda r: r ** (n - 1) * float(profile(r)), 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200
    )
    return sphere_area * val

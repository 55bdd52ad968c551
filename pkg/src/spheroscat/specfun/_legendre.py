"""Orthonormal associated Legendre functions without the Condon-Shortley phase.

``Pbar(l, m, x) = sqrt((2l+1)/2 (l-m)!/(l+m)!) P_l^m(x)`` with
``P_l^m(x) = (1-x^2)^{m/2} d^m P_l / dx^m``, so that ``int Pbar^2 dx = 1``.
"""
from __future__ import annotations

import math

import numpy as np


def recurrence_coeff(l, m):
    """``a_l`` in ``x Pbar_l = a_{l+1} Pbar_{l+1} + a_l Pbar_{l-1}``."""
    l = np.asarray(l, dtype=float)
    return np.sqrt(np.maximum(l * l - m * m, 0.0) / (4.0 * l * l - 1.0))


def _start(m: int) -> float:
    # sqrt((2m+1)/2) * (2m-1)!! / sqrt((2m)!)
    acc = 0.5 * math.log((2 * m + 1) / 2.0)
    for k in range(1, m + 1):
        acc += 0.5 * math.log((2 * k - 1) / (2 * k))
    return math.exp(acc)


def legendre_table(m: int, lmax: int, x, derivative: bool = True, reduced: bool = False):
    """Rows ``l = m .. lmax`` of ``Pbar_l^m(x)`` (and d/dx when requested).

    With ``reduced=True`` the common factor ``(1 - x^2)^{m/2}`` is omitted,
    which keeps endpoint values finite and meaningful.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    nrow = lmax - m + 1
    p = np.empty((nrow, x.size))
    dp = np.empty((nrow, x.size)) if derivative else None
    k0 = _start(m)
    one_minus = np.maximum(1.0 - x * x, 0.0)
    if reduced or m == 0:
        p[0] = k0
        if derivative:
            dp[0] = 0.0
    else:
        p[0] = k0 * one_minus ** (0.5 * m)
        if derivative:
            with np.errstate(divide="ignore", invalid="ignore"):
                dp[0] = -k0 * m * x * one_minus ** (0.5 * m - 1.0)
                if m == 1:
                    dp[0] = np.where(one_minus == 0.0, -np.sign(x) * np.inf, dp[0])
    if nrow == 1:
        return p, dp
    if reduced and derivative and m > 0:
        raise ValueError("derivative of the reduced table is not provided")
    a1 = math.sqrt(2 * m + 3.0)
    p[1] = a1 * x * p[0]
    if derivative:
        dp[1] = a1 * (p[0] + x * dp[0])
    coef = recurrence_coeff(np.arange(m, lmax + 1), m).tolist()
    for i in range(2, nrow):
        # row l = m + i from rows l-1, l-2
        al, alm1 = coef[i], coef[i - 1]
        p[i] = (x * p[i - 1] - alm1 * p[i - 2]) / al
        if derivative:
            dp[i] = (p[i - 1] + x * dp[i - 1] - alm1 * dp[i - 2]) / al
    return p, dp

"""Spherical Bessel tables used by the radial series.

``j_l`` comes from scipy; ``y_l`` is built by upward recurrence.  Both are
also kept as ``sign * exp(logabs)``: ``y_l`` overflows long before the radial
series stops needing it, and ``j_l`` underflows in the same regime.
"""
from __future__ import annotations

import numpy as np
from scipy.special import gammaln, spherical_jn

_RESCALE = 1e200
# below this |j_l| the log comes from the small-argument series instead
_J_TINY = 1e-280


class BesselTable:
    """``j_l(x)``, ``y_l(x)`` for ``l = 0 .. lmax + 1`` on a fixed argument vector.

    ``x`` must be strictly positive.
    """

    def __init__(self, x, lmax: int):
        self.x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(self.x <= 0):
            raise ValueError("Bessel table arguments must be positive")
        self.lmax = int(lmax)
        orders = np.arange(self.lmax + 2)
        self.j = spherical_jn(orders[:, None], self.x[None, :])
        self.j_sign, self.j_log = _jn_log(self.j, self.x)
        self.y_sign, self.y_log = _yn_log(self.lmax + 1, self.x)

    def ensure(self, lmax: int) -> "BesselTable":
        if lmax <= self.lmax:
            return self
        return BesselTable(self.x, max(lmax, 2 * self.lmax))

    def take(self, cols) -> "BesselTable":
        """Table restricted to the argument columns ``cols``."""
        out = object.__new__(BesselTable)
        out.x = self.x[cols]
        out.lmax = self.lmax
        out.j = self.j[:, cols]
        out.j_sign = self.j_sign[:, cols]
        out.j_log = self.j_log[:, cols]
        out.y_sign = self.y_sign[:, cols]
        out.y_log = self.y_log[:, cols]
        return out

    def jp(self, rows: slice):
        """``j_l'(x) = (l/x) j_l - j_{l+1}`` for the orders in ``rows``."""
        l = np.arange(self.lmax + 2)[rows][:, None]
        nxt = slice(rows.start + 1, rows.stop + 1, rows.step)
        return (l / self.x) * self.j[rows] - self.j[nxt]

    def y_ratio(self, rows: slice):
        """``y_{l+1} / y_l`` for the orders in ``rows``; always finite."""
        nxt = slice(rows.start + 1, rows.stop + 1, rows.step)
        return self.y_sign[nxt] * self.y_sign[rows] * np.exp(self.y_log[nxt] - self.y_log[rows])


def _jn_log(j, x):
    """``(sign, log|j_l|)``; underflowed entries from ``x^l / (2l+1)!! 0F1(; l + 3/2; -x^2/4)``."""
    with np.errstate(divide="ignore"):
        sign, logabs = np.sign(j), np.log(np.abs(j))
    tiny = np.abs(j) < _J_TINY
    if not np.any(tiny):
        return sign, logabs
    li, ci = np.nonzero(tiny)
    l = li.astype(float)
    xx = x[ci]
    # only reached for l >> x, where the hypergeometric series is short and positive
    z = -0.25 * xx * xx
    term = np.ones_like(xx)
    acc = np.ones_like(xx)
    for k in range(60):
        term = term * z / ((l + 1.5 + k) * (k + 1))
        acc = acc + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(acc)):
            break
    log_dfact = gammaln(2 * l + 2) - l * np.log(2.0) - gammaln(l + 1)
    logabs[li, ci] = l * np.log(xx) - log_dfact + np.log(np.abs(acc))
    sign[li, ci] = np.sign(acc)
    return sign, logabs


def _yn_log(lmax: int, x):
    n = x.size
    sign = np.empty((lmax + 1, n))
    logabs = np.empty((lmax + 1, n))
    y0 = -np.cos(x) / x
    y1 = -np.cos(x) / (x * x) - np.sin(x) / x
    scale = np.zeros(n)
    prev, cur = y0, y1
    sign[0], logabs[0] = np.sign(y0), np.log(np.abs(y0))
    if lmax >= 1:
        sign[1], logabs[1] = np.sign(y1), np.log(np.abs(y1))
    with np.errstate(divide="ignore"):
        for l in range(1, lmax):
            nxt = (2 * l + 1) / x * cur - prev
            prev, cur = cur, nxt
            big = np.abs(cur) > _RESCALE
            if np.any(big):
                cur = np.where(big, cur / _RESCALE, cur)
                prev = np.where(big, prev / _RESCALE, prev)
                scale = scale + np.where(big, np.log(_RESCALE), 0.0)
            sign[l + 1] = np.sign(cur)
            logabs[l + 1] = np.log(np.abs(cur)) + scale
    return sign, logabs

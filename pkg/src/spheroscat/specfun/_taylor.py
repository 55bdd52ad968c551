"""Taylor-series continuation for linear second-order ODEs with polynomial coefficients.

``p2(x) y'' + p1(x) y' + p0(x) y = 0``.  Each step re-expands the solution
about the current point; the coefficient recurrence is exact, so the only
error is rounding plus the series remainder, which is driven below 1e-17
relative.  The step is at most half the distance to the nearest zero of
``p2`` and is further limited where the solution oscillates, to bound the
cancellation inside each series.  A solution singular at a nearby point
with exponent difference ``M`` inflates the coefficients by about
``(1 - h/rho)^-(M+1)``, so ``h/rho`` is also capped by ``ln(MAX_GROWTH)/(M+1)``
and every step is checked for term growth after the fact.

Solutions may span many decades (radial functions of high order), so the
state is renormalised by a power of two whenever it leaves ``[2^-300, 2^300]``
and each step remembers the natural-log exponent it was computed under.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConvergenceError

MAX_ORDER = 600
TERM_TOL = 1e-17
KAPPA_H = 1.5
# largest tolerated ratio between the biggest series term and the result
MAX_GROWTH = 1e2
_RENORM = 300
_LN2 = math.log(2.0)


def _shift(p, x0):
    """Coefficients of ``p(x0 + t)`` in powers of ``t``."""
    n = len(p)
    out = [0.0] * n
    for j in range(n):
        acc = 0.0
        for i in range(j, n):
            acc += p[i] * math.comb(i, j) * x0 ** (i - j)
        out[j] = acc
    return out


def _polyval(p, x):
    acc = 0.0
    for v in reversed(p):
        acc = acc * x + v
    return acc


class TaylorPath:
    """Piecewise Taylor representation of one solution along a path.

    Calling the path returns ``(y, y')`` at points inside the covered interval;
    :meth:`scaled` returns mantissas and the exponent separately.  The start
    values are ``(y0, yp0) * exp(log0)``.
    """

    def __init__(self, p2, p1, p0, x_start, y0, yp0, x_end, singular=(), exponent_gap=0, log0=0.0):
        self.p2, self.p1, self.p0 = [list(map(float, p)) for p in (p2, p1, p0)]
        self.q_max = min(0.5, math.log(MAX_GROWTH) / (exponent_gap + 1))
        self.singular = [complex(z) for z in singular]
        self.starts: list[float] = []
        self.widths: list[float] = []
        self.coeffs: list[np.ndarray] = []
        self.logs: list[float] = []
        self.direction = 1.0 if x_end >= x_start else -1.0
        self._run(float(x_start), float(y0), float(yp0), float(x_end), float(log0))
        self.x_start, self.x_end = float(x_start), float(x_end)

    def _radius(self, x):
        if not self.singular:
            return math.inf
        return min(abs(x - z) for z in self.singular)

    def _kappa(self, x):
        """Local oscillation wavenumber ``sqrt(max(0, p0/p2))``."""
        q = _polyval(self.p0, x) / _polyval(self.p2, x)
        return math.sqrt(q) if q > 0 else 0.0

    def _run(self, x, y, yp, x_end, log):
        sgn = self.direction
        y, yp, log = _renormalise(y, yp, log)
        guard = 0
        while (x_end - x) * sgn > 0:
            guard += 1
            if guard > 100000:
                raise ConvergenceError("Taylor continuation made no progress")
            rho = self._radius(x)
            h = min(self.q_max * rho, abs(x_end - x))
            kap = max(self._kappa(x), self._kappa(x + sgn * h))
            if kap > 0:
                h = min(h, KAPPA_H / kap)
            while True:
                b = self._series(x, y, yp, h)
                if b is not None:
                    ye, ype = _eval_scalar(b, sgn, h)
                    ref = max(abs(b[0]), abs(b[1]), abs(ye), abs(ype) * h)
                    if np.max(np.abs(b)) <= MAX_GROWTH * ref:
                        break
                h *= 0.5
                if h < 1e-12 * max(1.0, abs(x)):
                    raise ConvergenceError("Taylor continuation step collapsed")
            last = abs(x_end - x) <= h * (1 + 1e-15)
            self.starts.append(x)
            self.widths.append(h)
            self.coeffs.append(b)
            self.logs.append(log)
            y, yp, log = _renormalise(ye, ype, log)
            x = x_end if last else x + sgn * h

    def _series(self, x0, y, yp, h):
        """Scaled coefficients ``b_k = a_k h^k`` of the expansion about ``x0``; None if too slow."""
        q2 = _shift(self.p2, x0)
        q1 = _shift(self.p1, x0)
        q0 = _shift(self.p0, x0)
        r2 = [v * h ** j for j, v in enumerate(q2)]
        r1 = [v * h ** (j + 1) for j, v in enumerate(q1)]
        r0 = [v * h ** (j + 2) for j, v in enumerate(q0)]
        lead = r2[0]
        # b[i] with i = k + 2 - s collects p2, p1, p0 terms of degrees s, s - 1, s - 2
        width = max(len(r2), len(r1) + 1, len(r0) + 2)
        cols = []
        for s in range(1, width):
            u2 = r2[s] if s < len(r2) else 0.0
            u1 = r1[s - 1] if s - 1 < len(r1) else 0.0
            u0 = r0[s - 2] if 0 <= s - 2 < len(r0) else 0.0
            cols.append((s, u2, u1, u0))
        b = [y, yp * h]
        scale = max(abs(y), abs(b[1]))
        small = 0
        for k in range(MAX_ORDER):
            acc = 0.0
            for s, u2, u1, u0 in cols:
                i = k + 2 - s
                if i < 0:
                    break
                acc += ((u2 * (i - 1) + u1) * i + u0) * b[i]
            nxt = -acc / (lead * (k + 2) * (k + 1))
            b.append(nxt)
            a = abs(nxt)
            if a > scale:
                scale = a
            if a * (k + 2) <= TERM_TOL * scale:
                small += 1
                if small >= 4:
                    return np.array(b)
            else:
                small = 0
        return None

    def __call__(self, x):
        y, yp, log = self.scaled(x)
        if not np.any(log):
            return np.vstack([y, yp])
        with np.errstate(over="ignore", under="ignore"):
            f = np.exp(log)
            return np.vstack([y * f, yp * f])

    def scaled(self, x):
        """``(y, y', log)`` with the solution equal to ``(y, y') * exp(log)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lo, hi = sorted((self.x_start, self.x_end))
        tol = 1e-12 * max(1.0, abs(hi))
        if np.any(x < lo - tol) or np.any(x > hi + tol):
            raise ValueError("evaluation outside the integrated interval")
        starts = np.array(self.starts)
        sgn = self.direction
        # index of the step containing each point
        if sgn > 0:
            idx = np.searchsorted(starts, x, side="right") - 1
        else:
            idx = np.searchsorted(-starts, -x, side="right") - 1
        idx = np.clip(idx, 0, len(starts) - 1)
        y = np.empty(x.size)
        yp = np.empty(x.size)
        log = np.empty(x.size)
        for i in np.unique(idx):
            sel = idx == i
            h = self.widths[i]
            u = (x[sel] - starts[i]) / h
            y[sel], yp[sel] = _eval_array(self.coeffs[i], u, h)
            log[sel] = self.logs[i]
        return y, yp, log


def _renormalise(y, yp, log):
    big = max(abs(y), abs(yp))
    if big > 0.0 and math.isfinite(big):
        e = math.frexp(big)[1]
        if abs(e) > _RENORM:
            return math.ldexp(y, -e), math.ldexp(yp, -e), log + e * _LN2
    return y, yp, log


def _eval_scalar(b, u, h):
    y = 0.0
    d = 0.0
    for k in range(len(b) - 1, -1, -1):
        d = d * u + y
        y = y * u + b[k]
    return y, d / h


def _eval_array(b, u, h):
    y = np.zeros_like(u)
    d = np.zeros_like(u)
    for k in range(len(b) - 1, -1, -1):
        d = d * u + y
        y = y * u + b[k]
    return y, d / h


class JointPath:
    """Two independent solutions of one ODE stacked as ``(y1, y1', y2, y2')``."""

    def __init__(self, first: TaylorPath, second: TaylorPath):
        self.first, self.second = first, second

    def __call__(self, x):
        return np.vstack([self.first(x), self.second(x)])

    def scaled(self, x):
        return self.first.scaled(x), self.second.scaled(x)


def radial_polys(prolate: bool, c: float, lam: float, m: int):
    """``(p2, p1, p0)`` of the radial equation multiplied through by ``(xi^2 -+ 1)``."""
    sg = -1.0 if prolate else 1.0
    c2 = c * c
    p2 = [1.0, 0.0, 2 * sg, 0.0, 1.0]
    p1 = [0.0, 2 * sg, 0.0, 2.0]
    p0 = [-(lam * sg - sg * m * m), 0.0, -(lam - c2 * sg), 0.0, c2]
    return p2, p1, p0


def t_polys(c: float, mu: float, m: int):
    """``(p2, p1, p0)`` for the regular factor ``T`` with ``R = (xi^2 - 1)^{m/2} T`` (prolate)."""
    return [-1.0, 0.0, 1.0], [0.0, 2.0 * (m + 1)], [-mu, 0.0, c * c]

"""Extended-precision radial series at a single point.

For low modes at large ``c`` both Bessel series, and their normalising sum,
cancel by many orders of magnitude, so double precision cannot resolve
them.  The values are needed at one anchor only (ODE continuation covers
the rest), which makes an mpmath evaluation affordable.
"""
from __future__ import annotations

import math

import mpmath as mp

from ..coords import Kind


def _class(kind, c, m, p, size):
    s = 1 if kind is Kind.PROLATE else -1
    cc = s * mp.mpf(c) ** 2

    def a2(l):
        return mp.mpf(l * l - m * m) / (4 * l * l - 1)

    diag, off = [], []
    for j in range(size):
        l = m + p + 2 * j
        diag.append(l * (l + 1) + cc * (a2(l + 1) + a2(l)))
        if j < size - 1:
            off.append(cc * mp.sqrt(a2(l + 1) * a2(l + 2)))
    return diag, off


def _ratios(diag, off, lam, peak):
    size = len(diag)
    up = [mp.mpf(0)] * size
    for j in range(size - 2, peak - 1, -1):
        den = diag[j + 1] - lam
        if j + 1 < size - 1:
            den += off[j + 1] * up[j + 1]
        up[j] = -off[j] / den
    down = [mp.mpf(0)] * size
    for j in range(1, peak + 1):
        den = diag[j - 1] - lam
        if j >= 2:
            den += off[j - 2] * down[j - 1]
        down[j] = -off[j - 1] / den
    return up, down


def _mismatch(diag, off, lam, peak):
    up, down = _ratios(diag, off, lam, peak)
    f = diag[peak] - lam
    if peak > 0:
        f += off[peak - 1] * down[peak]
    if peak < len(diag) - 1:
        f += off[peak] * up[peak]
    return f, up, down


def anchor_values(kind: Kind, c: float, m: int, n: int, lam: float, size: int, peak: int, xi: float, digits: int):
    """``(R1, R1', R2, R2')`` at ``xi`` from the Bessel series in ``digits`` precision."""
    p = (n - m) % 2
    with mp.workdps(digits):
        diag, off = _class(kind, c, m, p, size)
        x0 = mp.mpf(lam)
        f0 = _mismatch(diag, off, x0, peak)[0]
        x1 = x0 * (1 + mp.mpf(10) ** (-12)) + mp.mpf(10) ** (-12)
        f1 = _mismatch(diag, off, x1, peak)[0]
        for _ in range(40):
            if f1 == f0:
                break
            x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
            x0, f0 = x1, f1
            x1 = x2
            f1 = _mismatch(diag, off, x1, peak)[0]
            if abs(x1 - x0) <= mp.mpf(10) ** (-(digits - 5)) * max(1, abs(x1)):
                break
        _, up, down = _mismatch(diag, off, x1, peak)
        e = [mp.mpf(0)] * size
        e[peak] = mp.mpf(1)
        for j in range(peak, size - 1):
            e[j + 1] = e[j] * up[j]
        for j in range(peak, 0, -1):
            e[j - 1] = e[j] * down[j]

        xi_m = mp.mpf(xi)
        x = mp.mpf(c) * xi_m
        s = -1 if kind is Kind.PROLATE else 1
        denom = mp.mpf(0)
        sj = sjp = sy = syp = mp.mpf(0)
        lmax = m + p + 2 * size + 1
        jt, yt = _sph_bessel(lmax, x)
        for j in range(size):
            l = m + p + 2 * j
            r = l - m
            # d_r (2m+r)!/r! up to a common factor
            w = e[j] * mp.sqrt(mp.mpf(2 * l + 1) / 2 * mp.factorial(l + m) / mp.factorial(l - m))
            denom += w
            if ((r - (n - m)) // 2) % 2:
                w = -w
            jl, jl1, yl, yl1 = jt[l], jt[l + 1], yt[l], yt[l + 1]
            sj += w * jl
            sjp += w * (l / x * jl - jl1)
            sy += w * yl
            syp += w * (l / x * yl - yl1)
        q = (xi_m ** 2 + s) / xi_m ** 2
        f = q ** (mp.mpf(m) / 2) / denom
        fp = f * (-s) * m / (xi_m * (xi_m ** 2 + s))
        c_m = mp.mpf(c)
        out = (f * sj, fp * sj + f * c_m * sjp, f * sy, fp * sy + f * c_m * syp)
        return tuple(float(v) for v in out)


def _sph_bessel(lmax: int, x):
    """``j_l(x)``, ``y_l(x)`` for ``l <= lmax``: Miller's downward recurrence and upward recurrence."""
    y = [-mp.cos(x) / x, -mp.cos(x) / x ** 2 - mp.sin(x) / x]
    for l in range(1, lmax):
        y.append((2 * l + 1) / x * y[l] - y[l - 1])
    start = lmax + 30 + int(x) + int(mp.mp.dps)
    nxt, cur = mp.mpf(0), mp.mpf(10) ** (-200)
    j = [mp.mpf(0)] * (lmax + 1)
    for l in range(start, 0, -1):
        prev = (2 * l + 1) / x * cur - nxt
        nxt, cur = cur, prev
        if l - 1 <= lmax:
            j[l - 1] = cur
        if abs(cur) > mp.mpf(10) ** 200:
            cur /= mp.mpf(10) ** 200
            nxt /= mp.mpf(10) ** 200
            j = [v / mp.mpf(10) ** 200 for v in j]
    # normalise against whichever closed form is better conditioned
    if abs(mp.sin(x)) > abs(mp.cos(x)) / 2:
        scale = (mp.sin(x) / x) / j[0]
    else:
        scale = (mp.sin(x) / x ** 2 - mp.cos(x) / x) / j[1]
    return [v * scale for v in j], y


def digits_for(cond: float) -> int:
    return 30 + int(math.log10(max(cond, 1.0)))

"""Radial spheroidal functions of the first and second kind.

Away from the coordinate singularity the functions come from the Bessel
series

    R1 = F(xi) / D * sum_r i^(r+m-n) d_r (2m+r)!/r! j_{m+r}(c xi)
    R2 = same with y_{m+r}

with ``F = ((xi^2 -+ 1) / xi^2)^(m/2)`` and ``D = sum_r d_r (2m+r)!/r!``.
Each point is certified by the Wronskian ``R1 R2' - R1' R2 = 1/(c (xi^2 -+ 1))``.
Points where the series fails the certificate (near xi = 1 for prolate,
near xi = 0 for oblate) are served by ODE continuation from an anchor
where the series is trustworthy (Taylor-series stepping, see ``_taylor``):

* R2 is integrated inward from the anchor (it is the dominant solution there);
* R1 is integrated outward from the regular end: the Frobenius/Taylor start at
  xi = 1 (prolate, scaled to the series at the anchor) or the analytic xi = 0
  values (oblate).

When the normalising sum ``D`` itself cancels badly (low modes at large c)
no double-precision series value can be trusted.  The anchor values are then
computed once in extended precision and every other point is reached by
ODE continuation, inward and outward.

For ``0 < xi < 1e-3`` (oblate) a Taylor expansion about xi = 0 is used.

High orders at small ``c xi`` push ``R2`` past the double range (and ``R1``
below it).  ``evaluate`` therefore accepts an exponent ``shift`` and returns
``R1 exp(shift)`` and ``R2 exp(-shift)``; the Wronskian certificate is
unchanged by this scaling.  Internally the anchor, the continuation paths and
the xi = 0 values are carried as mantissa and exponent.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .._numerics import compensated_sum
from ..coords import Kind
from ..errors import AccuracyError, ConvergenceError, DomainError
from ._bessel import BesselTable, _yn_log
from ._extended import anchor_values, digits_for
from ._taylor import JointPath, TaylorPath, radial_polys, t_polys

# relative Wronskian residual accepted from the series without continuation
SERIES_OK = 1e-11
# beyond this residual the result is refused rather than returned
FAIL = 1e-5
SMALL_XI = 1e-3
TAYLOR_T0 = 0.01
# condition number of the normalising sum above which the series is not used
COND_EXTENDED = 1e5
COND_R1_SERIES = 1e3
_PROLATE_LADDER = (1.2, 1.35, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 6.0, 10.0)
_OBLATE_LADDER = (0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 10.0)
# log(R2) beyond which scale_exponent asks for scaling
SCALE_FROM = 200.0


@dataclass(frozen=True)
class RadialEval:
    """Radial functions at one xi; derivatives are with respect to xi."""

    r1: complex
    r1p: complex
    r3: complex
    r3p: complex
    wronskian_residual: float = 0.0

    @property
    def r2(self) -> complex:
        return (self.r3 - self.r1) / 1j

    @property
    def r2p(self) -> complex:
        return (self.r3p - self.r1p) / 1j


def expected_wronskian(kind: Kind, c: float, xi):
    s = -1.0 if Kind(kind).spheroidal is Kind.PROLATE else 1.0
    return 1.0 / (c * (np.asarray(xi, dtype=float) ** 2 + s))


def _ladder(kind: Kind, c: float, n: int):
    base = _PROLATE_LADDER if kind is Kind.PROLATE else _OBLATE_LADDER
    pts = list(base)
    while c * pts[-1] < n + 20:
        pts.append(pts[-1] * 1.6)
    return np.array(pts)


def _bucket(n: int) -> int:
    return 1 << max(int(n) - 1, 15).bit_length()


@functools.lru_cache(maxsize=256)
def _ylog_column(x: float, lmax: int) -> np.ndarray:
    out = _yn_log(lmax, np.array([x]))[1][:, 0]
    out.setflags(write=False)
    return out


_LADDER_TABLES: dict = {}


def _ladder_table(kind: Kind, c: float, pts: np.ndarray, lmax: int) -> BesselTable:
    """Bessel table on the anchor ladder, shared by all modes of one ``(kind, c)``."""
    key = (kind, c, pts.size)
    tab = _LADDER_TABLES.get(key)
    if tab is None or tab.lmax < lmax:
        if len(_LADDER_TABLES) > 64:
            _LADDER_TABLES.clear()
        tab = BesselTable(c * pts, _bucket(lmax))
        _LADDER_TABLES[key] = tab
    return tab


class RadialSolver:
    """Evaluator for one mode; built lazily from ``ModeCoefficients.radial``."""

    def __init__(self, coeffs):
        if coeffs.c <= 0:
            raise DomainError("radial functions need c > 0")
        self.coeffs = coeffs
        self.kind = coeffs.kind
        self.c = coeffs.c
        self.m = m = coeffs.m
        self.n = coeffs.n
        self.lam = coeffs.lam
        d = np.asarray(coeffs.d)
        keep = np.nonzero(d)[0]
        last = int(keep[-1]) + 1 if keep.size else 1
        d = d[:last]
        self.degrees = coeffs.degrees[:last]
        r = self.degrees - m
        log_fac = gammaln(self.degrees + m + 1) - gammaln(r + 1)
        with np.errstate(divide="ignore"):
            log_abs = np.log(np.abs(d)) + log_fac
        big = np.max(log_abs)
        terms = np.sign(d) * np.exp(log_abs - big)
        denom = math.fsum(terms)
        if denom == 0.0:
            raise ConvergenceError("radial normalization sum vanished", mode=coeffs.key)
        phase = np.where(((r - (self.n - m)) // 2) % 2 == 0, 1.0, -1.0)
        self.w_sign = phase * np.sign(d) * np.sign(denom)
        self.w_log = log_abs - big - math.log(abs(denom))
        self._ode_r2 = None
        self._ode_r2_lo = None
        self._ode_r1 = None
        self._kappa = None
        self._disk = None
        self._anchor = None
        self._anchor_shift = 0.0
        self._ode_out = None
        self._ode_out_hi = None
        self.cond = float(np.sum(np.exp(self.w_log)))
        self.extended = self.cond > COND_EXTENDED

    # -- series ---------------------------------------------------------
    def rows_needed(self, x_min: float) -> int:
        """Degree up to which the y-series at ``x_min`` is not negligible."""
        lmax = int(self.degrees[-1])
        ylog = _ylog_column(float(x_min), _bucket(lmax + 1))
        mag = self.w_log + ylog[self.degrees]
        mag = np.where(np.isfinite(mag), mag, -np.inf)
        ok = np.nonzero(mag > np.max(mag) - 40.0)[0]
        return int(self.degrees[ok[-1]]) + 2

    def scale_exponent(self, xi: float) -> float:
        """Estimate of ``log |R2(xi)|`` when it is large enough to need scaling, else 0."""
        xi = float(xi)
        s = -1.0 if self.kind is Kind.PROLATE else 1.0
        if self.kind is Kind.PROLATE and xi <= 1.0:
            return 0.0
        xi = max(xi, SMALL_XI)
        lmax = int(self.degrees[-1])
        ylog = _ylog_column(self.c * xi, _bucket(lmax + 1))
        mag = self.w_log + ylog[self.degrees]
        est = float(np.max(mag[np.isfinite(mag)], initial=0.0)) + 0.5 * self.m * math.log(abs(xi * xi + s) / (xi * xi))
        return est if est > SCALE_FROM else 0.0

    def series(self, xi, table: BesselTable | None = None, shift=None):
        """Bessel-series ``R1, R1', R2, R2'``, a convergence flag and the shift used, per point.

        With ``shift`` the values are ``R1 exp(shift)`` and ``R2 exp(-shift)``;
        ``shift="auto"`` picks it per point from the largest y-series term.
        """
        xi = np.asarray(xi, dtype=float)
        x = self.c * xi
        if table is None:
            table = BesselTable(x, self.rows_needed(float(x.min())))
        lmax_rows = min(int(self.degrees[-1]), table.lmax)
        nrow = int(np.searchsorted(self.degrees, lmax_rows, side="right"))
        # drop rows negligible at every point (the smallest x dominates the y-series)
        jmin = int(np.argmin(x))
        mag = self.w_log[:nrow] + table.y_log[self.degrees[:nrow], jmin]
        mag = np.where(np.isfinite(mag), mag, -np.inf)
        keep = np.nonzero(mag > np.max(mag) - 45.0)[0]
        if keep.size:
            nrow = min(nrow, int(keep[-1]) + 3)
        l = self.degrees[:nrow]
        rows = slice(int(l[0]), int(l[-1]) + 1, 2)
        wl = self.w_log[:nrow, None]
        ws = self.w_sign[:nrow, None]
        s = -1.0 if self.kind is Kind.PROLATE else 1.0
        m = self.m
        with np.errstate(over="ignore", invalid="ignore", under="ignore", divide="ignore"):
            q = (xi * xi + s) / (xi * xi)
            if isinstance(shift, str):
                big = np.max(np.where(np.isfinite(wl + table.y_log[rows]), wl + table.y_log[rows], -np.inf), axis=0)
                big = big + 0.5 * m * np.log(np.abs(q))
                shift = np.where(big > SCALE_FROM, big, 0.0)
            shift = np.zeros(x.shape) if shift is None else np.broadcast_to(np.asarray(shift, dtype=float), x.shape)
            if not np.any(shift):
                wj = ws * np.exp(wl)
                tj = wj * table.j[rows]
                tjp = wj * table.jp(rows)
                ty = ws * table.y_sign[rows] * np.exp(wl + table.y_log[rows])
            else:
                e = shift[None, :]
                nxt = slice(rows.start + 1, rows.stop + 1, rows.step)
                tj = ws * table.j_sign[rows] * np.exp(wl + e + table.j_log[rows])
                tjp = tj * (l[:, None] / x) - ws * table.j_sign[nxt] * np.exp(wl + e + table.j_log[nxt])
                ty = ws * table.y_sign[rows] * np.exp(wl - e + table.y_log[rows])
            typ = ty * (l[:, None] / x - table.y_ratio(rows))
            sj, sjp = compensated_sum(tj), compensated_sum(tjp)
            sy, syp = compensated_sum(ty), compensated_sum(typ)
            scale_y = np.max(np.abs(ty), axis=0)
            converged = (np.abs(ty[-1]) <= 1e-16 * scale_y) & np.isfinite(sy) & np.isfinite(syp)
            f = q ** (0.5 * m)
            fp = f * (-s) * m / (xi * (xi * xi + s))
            r1 = f * sj
            r1p = fp * sj + f * self.c * sjp
            r2 = f * sy
            r2p = fp * sy + f * self.c * syp
        return r1, r1p, r2, r2p, converged, shift

    def residual(self, xi, r1, r1p, r2, r2p):
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            w = r1 * r2p - r1p * r2
            res = np.abs(w / expected_wronskian(self.kind, self.c, xi) - 1.0)
        return np.where(np.isfinite(res), res, np.inf)

    # -- anchor ---------------------------------------------------------
    @property
    def anchor(self):
        """``(xi_a, values, floor)`` where the series is certified.

        The values are scaled by ``anchor_shift`` as in :meth:`series`.
        """
        if self._anchor is None and self.extended:
            xa = float(_ladder(self.kind, self.c, self.n)[0])
            coeffs = self.coeffs
            peak = int(np.argmax(np.abs(coeffs.orthonormal_coeffs)))
            vals = anchor_values(
                self.kind, self.c, self.m, self.n, self.lam, coeffs.truncation, peak, xa, digits_for(self.cond)
            )
            self._anchor = (xa, vals, 1e-13)
        if self._anchor is None:
            pts = _ladder(self.kind, self.c, self.n)
            shifts = np.array([self.scale_exponent(p) for p in pts])
            table = _ladder_table(self.kind, self.c, pts, self.rows_needed(self.c * pts[0]))
            r1, r1p, r2, r2p, conv, _ = self.series(pts, table, shifts)
            res = self.residual(pts, r1, r1p, r2, r2p)
            res = np.where(conv, res, np.inf)
            best = float(np.min(res))
            if not best <= FAIL:
                raise AccuracyError(
                    f"no trustworthy anchor for the radial series (best residual {best:.2e})",
                    mode=self.coeffs.key,
                )
            floor = max(1e-12, best)
            i = int(np.nonzero(res <= 10 * floor)[0][0])
            self._anchor = (float(pts[i]), (r1[i], r1p[i], r2[i], r2p[i]), floor)
            self._anchor_shift = float(shifts[i])
        return self._anchor

    # -- ODE continuation -----------------------------------------------
    def _path(self, x0, y0, yp0, x1, log0=0.0) -> TaylorPath:
        prolate = self.kind is Kind.PROLATE
        sing = (1.0, -1.0) if prolate else (1j, -1j)
        polys = radial_polys(prolate, self.c, self.lam, self.m)
        return TaylorPath(*polys, x0, y0, yp0, x1, singular=sing, exponent_gap=self.m, log0=log0)

    def _r2_dense(self, lo):
        xa, (r1, r1p, r2, r2p), _ = self.anchor
        if self._ode_r2 is None or lo < self._ode_r2_lo:
            if self.kind is Kind.PROLATE:
                lo = 1.0 + 0.5 * (lo - 1.0)
            else:
                lo = 0.0
            self._ode_r2 = self._path(xa, r2, r2p, lo, self._anchor_shift)
            self._ode_r2_lo = lo
        return self._ode_r2

    def _taylor_t(self, t):
        """Regular solution T at xi = 1 + t (T(1) = 1) and its derivative."""
        m, c2 = self.m, self.c * self.c
        mu = self.lam - m * (m + 1)
        a = [1.0, (mu - c2) / (2.0 * (m + 1))]
        if t == 0.0:
            return a[0], a[1]
        val, der = 1.0 + a[1] * t, a[1]
        tk = t
        for k in range(1, 2000):
            nxt = a[k] * (k * (k - 1) + 2 * (m + 1) * k - mu + c2) + 2 * c2 * a[k - 1]
            if k >= 2:
                nxt += c2 * a[k - 2]
            nxt = -nxt / (2.0 * (k + 1) * (k + m + 1))
            a.append(nxt)
            der += (k + 1) * nxt * tk
            tk *= t
            val += nxt * tk
            if k > 4 and abs(nxt * tk) <= 1e-17 * abs(val) and abs(a[k] * tk / t) <= 1e-17 * abs(val):
                return val, der
        raise ConvergenceError("Taylor start at xi = 1 did not converge", mode=self.coeffs.key)

    def _r1_dense(self):
        if self._ode_r1 is not None:
            return self._ode_r1
        xa, (r1, r1p, _, _), _ = self.anchor
        if self.kind is Kind.PROLATE:
            t0 = min(TAYLOR_T0, 0.5 * (xa - 1.0))
            y0 = list(self._taylor_t(t0))
            mu = self.lam - self.m * (self.m + 1)
            sol = TaylorPath(
                *t_polys(self.c, mu, self.m), 1.0 + t0, y0[0], y0[1], xa, singular=(1.0, -1.0), exponent_gap=self.m
            )
            ty, typ, log = sol.scaled(np.array([xa]))
            u, up, hlog = self._prolate_from_t(np.array([xa]), (ty, typ))
            big = max(abs(float(u[0])), abs(float(up[0])))
            u, up = float(u[0]) / big, float(up[0]) / big
            # least squares for the scale, derivative weighted to match R
            w2 = 1.0 / max(1.0, self.c * xa, float(self.n)) ** 2
            kappa = (r1 * u + w2 * r1p * up) / (u * u + w2 * up * up)
            klog = -self._anchor_shift - float(log[0]) - float(hlog[0]) - math.log(big)
            self._ode_r1 = (sol, 1.0 + t0, float(kappa), klog)
        else:
            v0, dv0, lg0 = self._disk_r1_raw()
            sol = self._path(0.0, v0, dv0, xa, lg0)
            kappa, klog = 1.0, 0.0
            if self.extended or self._tiny_lead():
                u, up, log = (float(v[0]) for v in sol.scaled(np.array([xa])))
                big = max(abs(u), abs(up))
                u, up = u / big, up / big
                w2 = 1.0 / max(1.0, self.c * xa, float(self.n)) ** 2
                kappa = float((r1 * u + w2 * r1p * up) / (u * u + w2 * up * up))
                klog = -self._anchor_shift - log - math.log(big)
            self._ode_r1 = (sol, 0.0, kappa, klog)
        return self._ode_r1

    def _outward(self, hi):
        """Joint continuation of ``(R1, R1', R2, R2')`` beyond the anchor."""
        xa, vals, _ = self.anchor
        if self._ode_out is None or hi > self._ode_out_hi:
            hi = max(hi, xa + 1e-9) * 1.05

            e = self._anchor_shift
            self._ode_out = JointPath(
                self._path(xa, vals[0], vals[1], hi, -e), self._path(xa, vals[2], vals[3], hi, e)
            )
            self._ode_out_hi = hi
        return self._ode_out

    def _prolate_from_t(self, xi, ty):
        """``(r, rp, log)``: the factor ``(xi^2 - 1)^(m/2)`` is returned as a logarithm."""
        m = self.m
        g = xi * xi - 1.0
        return ty[0], (m * xi / g) * ty[0] + ty[1], 0.5 * m * np.log(g)

    def _r1_ode(self, xi):
        """``(r1, r1p, log)`` with ``R1 = r1 exp(log)``."""
        sol, start, kappa, klog = self._r1_dense()
        out = np.empty((2, xi.size))
        log = np.zeros(xi.size)
        if self.kind is Kind.PROLATE:
            near = xi < start
            for i in np.nonzero(near)[0]:
                out[:, i] = self._taylor_t(xi[i] - 1.0)
            if np.any(~near):
                out[0, ~near], out[1, ~near], log[~near] = sol.scaled(xi[~near])
            r, rp, hlog = self._prolate_from_t(xi, out)
            return kappa * r, kappa * rp, log + hlog + klog
        y, yp, log = sol.scaled(xi)
        return kappa * y, kappa * yp, log + klog

    # -- xi = 0 (oblate) ------------------------------------------------
    def disk_values(self):
        """``(R1(0), R1'(0), R2(0), R2'(0))`` for the oblate kind."""
        if self.kind is not Kind.OBLATE:
            raise DomainError("the xi = 0 limit exists only for the oblate kind")
        r1, r1p, e1, r2, r2p, e2 = self.disk_scaled()
        with np.errstate(over="ignore", under="ignore"):
            f1, f2 = np.exp(e1), np.exp(e2)
        return r1 * f1, r1p * f1, r2 * f2, r2p * f2

    def disk_scaled(self):
        """``(r1, r1p, e1, r2, r2p, e2)`` at xi = 0 with ``R1 = r1 exp(e1)``, ``R2 = r2 exp(e2)``."""
        if self.kind is not Kind.OBLATE:
            raise DomainError("the xi = 0 limit exists only for the oblate kind")
        if self._disk is not None:
            return self._disk
        c = self.c
        even = (self.n - self.m) % 2 == 0
        kappa, klog = self._r1_dense()[2:]
        v0, dv0, lg0 = self._disk_r1_raw()
        r1, r1p, e1 = kappa * v0, kappa * dv0, klog + lg0
        y2, y2p, e2 = (float(v[0]) for v in self._r2_dense(0.0).scaled(np.array([0.0])))
        # the Wronskian at xi = 0 fixes the other value exactly: R1 R2' - R1' R2 = 1/c
        rel = math.exp(-e1 - e2) if (e1 or e2) else 1.0
        if even:
            r2, r2p = y2, rel / (c * r1)
        else:
            r2, r2p = -rel / (c * r1p), y2p
        self._disk = (r1, r1p, e1, r2, r2p, e2)
        return self._disk

    def _tiny_lead(self) -> bool:
        lead = min(abs(float(self.coeffs.d[0])), abs(float(self.coeffs.orthonormal_coeffs[0])))
        return not lead > 1e-290

    def _disk_r1_raw(self):
        """``(R1(0), R1'(0), log)`` from the only surviving term of the Bessel series."""
        m, c = self.m, self.c
        even = (self.n - m) % 2 == 0
        # w_0 already contains d_r (2m+r)!/r! / D and the phase
        l = m if even else m + 1
        log_dfact = gammaln(2 * l + 2) - l * math.log(2.0) - gammaln(l + 1)  # (2l+1)!!
        lg = self.w_log[0] + l * math.log(c) - log_dfact
        if self._tiny_lead():
            # d_0 is subnormal or zero; start from unit data and let the anchor fit the scale
            return (1.0, 0.0, 0.0) if even else (0.0, 1.0, 0.0)
        if lg > -600.0:
            lead = self.w_sign[0] * math.exp(self.w_log[0])
            val, lg = lead * math.exp(l * math.log(c) - log_dfact), 0.0
        else:
            val = float(self.w_sign[0])
        return (val, 0.0, lg) if even else (0.0, val, lg)

    def _taylor_zero(self, xi, r0, rp0):
        """Taylor expansion of the oblate ODE about xi = 0."""
        m2, c2, lam = self.m * self.m, self.c * self.c, self.lam
        b = [r0, rp0]
        val = r0 + rp0 * xi
        der = np.full_like(xi, rp0)
        scale = max(abs(r0), abs(rp0) * float(np.max(xi, initial=0.0)), 1e-300)
        for k in range(0, 200):
            nxt = b[k] * (2 * k * k + m2 - lam)
            if k >= 2:
                nxt += b[k - 2] * ((k - 2) * (k - 1) + c2 - lam)
            if k >= 4:
                nxt += c2 * b[k - 4]
            nxt = -nxt / ((k + 1) * (k + 2))
            b.append(nxt)
            val = val + nxt * xi ** (k + 2)
            der = der + (k + 2) * nxt * xi ** (k + 1)
            if k > 4 and np.all(np.abs(nxt * xi ** (k + 2)) <= 1e-17 * scale):
                return val, der
        raise ConvergenceError("Taylor step at xi = 0 did not converge", mode=self.coeffs.key)

    # -- public ---------------------------------------------------------
    def evaluate(self, xi, table: BesselTable | None = None, shift=None):
        """Arrays ``r1, r1p, r2, r2p, residual`` at the points ``xi``.

        ``shift`` (scalar or per point) returns ``R1 exp(shift)`` and ``R2 exp(-shift)``.
        """
        out, res, _ = self._evaluate(xi, table, shift)
        return out[0], out[1], out[2], out[3], res

    def evaluate_scaled(self, xi, table: BesselTable | None = None):
        """Like :meth:`evaluate` with a per-point shift ``e ~ log|R2|`` chosen here; returns it last."""
        out, res, e = self._evaluate(xi, table, "auto")
        return out[0], out[1], out[2], out[3], res, e

    def _evaluate(self, xi, table, shift):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        auto = isinstance(shift, str)
        if auto or shift is None:
            shift = np.zeros(xi.size)
        else:
            shift = np.array(np.broadcast_to(np.asarray(shift, dtype=float), xi.shape))
        lo = 1.0 if self.kind is Kind.PROLATE else 0.0
        if np.any(~np.isfinite(xi)) or np.any(xi < lo) or (self.kind is Kind.PROLATE and np.any(xi == 1.0)):
            raise DomainError(f"xi outside the domain of the {self.kind.value} radial functions")
        out = np.full((4, xi.size), np.nan)
        res = np.full(xi.size, np.inf)
        zero = xi == 0.0
        small = (xi > 0.0) & (xi < SMALL_XI)
        rest = ~(zero | small)
        if np.any(zero | small):
            r1, r1p, e1, r2, r2p, e2 = self.disk_scaled()
            if auto:
                shift[zero | small] = e2
            with np.errstate(over="ignore", under="ignore"):
                f1, f2 = _growth(e1 + shift), _growth(e2 - shift)
            if np.any(zero):
                out[:, zero] = np.array([r1 * f1[zero], r1p * f1[zero], r2 * f2[zero], r2p * f2[zero]])
            if np.any(small):
                a, ap = self._taylor_zero(xi[small], r1, r1p)
                b, bp = self._taylor_zero(xi[small], r2, r2p)
                out[:, small] = np.array([a * f1[small], ap * f1[small], b * f2[small], bp * f2[small]])
        if np.any(rest) and self.extended:
            xa = self.anchor[0]
            above = rest & (xi >= xa)
            if np.any(above):
                (y1, y1p, l1), (y2, y2p, l2) = self._outward(float(xi[above].max())).scaled(xi[above])
                if auto:
                    shift[above] = l2
                e = shift[above]
                with np.errstate(over="ignore", under="ignore"):
                    f1, f2 = _growth(l1 + e), _growth(l2 - e)
                out[:, above] = np.array([y1 * f1, y1p * f1, y2 * f2, y2p * f2])
                res[above] = 0.0
            res[rest & ~above] = np.inf
        elif np.any(rest):
            idx = np.nonzero(rest)[0]
            if table is not None and idx.size != xi.size:
                table = table.take(idx)
            r1, r1p, r2, r2p, conv, used = self.series(xi[idx], table, "auto" if auto else shift[idx])
            shift[idx] = used
            out[:, idx] = r1, r1p, r2, r2p
            res[idx] = np.where(conv, self.residual(xi[idx], r1, r1p, r2, r2p), np.inf)
        pending = (zero | small) | (res > SERIES_OK)
        if np.any(pending & rest):
            xa, _, floor = self.anchor
            accept = rest & (res <= max(SERIES_OK, 10 * floor))
            redo = rest & ~accept
            below = redo & (xi < xa)
            if np.any(redo & ~below):
                worst = float(np.max(res[redo & ~below]))
                if worst > FAIL:
                    raise AccuracyError(
                        f"radial series inaccurate above the anchor (residual {worst:.2e})",
                        mode=self.coeffs.key,
                    )
            if np.any(below):
                pts = xi[below]
                y2, y2p, l2 = self._r2_dense(float(pts.min())).scaled(pts)
                if auto:
                    # move the series R1 to the path's exponent
                    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
                        g = _growth(l2 - shift[below])
                        out[0, below] *= g
                        out[1, below] *= g
                    shift[below] = l2
                with np.errstate(over="ignore", under="ignore"):
                    f2 = _growth(l2 - shift[below])
                out[2, below], out[3, below] = y2 * f2, y2p * f2
                # the j-series is trustworthy unless the mode is ill-conditioned
                trust = (self.cond < COND_R1_SERIES) & np.isfinite(out[0]) & np.isfinite(out[1])
                if np.any(trust & below):
                    res_try = self.residual(xi, *out)
                    trust &= res_try <= SERIES_OK
                redo_r1 = below & ~trust
                if np.any(redo_r1):
                    a, ap, l1 = self._r1_ode(xi[redo_r1])
                    with np.errstate(over="ignore", under="ignore"):
                        f1 = _growth(l1 + shift[redo_r1])
                    out[0, redo_r1], out[1, redo_r1] = a * f1, ap * f1
        res = self.residual(xi, *out)
        worst = float(np.max(res, initial=0.0))
        if not worst <= FAIL:
            raise AccuracyError(
                f"radial functions failed the Wronskian check (residual {worst:.2e})",
                mode=self.coeffs.key,
            )
        return out, res, shift


def _growth(log):
    """``exp(log)`` that is exactly 1 where ``log`` is 0."""
    log = np.asarray(log, dtype=float)
    return np.where(log == 0.0, 1.0, np.exp(log))


def radial(coeffs, xi) -> RadialEval:
    """``R1, R1', R3, R3'`` at a single ``xi`` (oblate ``xi = 0`` uses the disk limit)."""
    xi = float(xi)
    if coeffs.kind is Kind.OBLATE and xi == 0.0:
        return radial_at_disk(coeffs)
    r1, r1p, r2, r2p, res = coeffs.radial.evaluate(np.array([xi]))
    return RadialEval(
        complex(r1[0]), complex(r1p[0]), complex(r1[0], r2[0]), complex(r1p[0], r2p[0]), float(res[0])
    )


def radial_at_disk(coeffs) -> RadialEval:
    """Oblate radial functions at ``xi = 0`` from the analytic limit of the series."""
    if coeffs.kind is not Kind.OBLATE:
        raise DomainError("radial_at_disk needs oblate coefficients")
    r1, r1p, r2, r2p = coeffs.radial.disk_values()
    res = float(coeffs.radial.residual(0.0, r1, r1p, r2, r2p))
    return RadialEval(complex(r1), complex(r1p), complex(r1, r2), complex(r1p, r2p), res)


def radial_arrays(coeffs, xi, table: BesselTable | None = None):
    """Vectorised ``(r1, r1p, r3, r3p)`` as complex arrays."""
    r1, r1p, r2, r2p, _ = coeffs.radial.evaluate(xi, table)
    return r1 + 0j, r1p + 0j, r1 + 1j * r2, r1p + 1j * r2p

"""Separation eigenvalues and Legendre-series coefficients of the angle functions.

The angle function is expanded as ``S_mn(c, eta) = sum_r d_r P^m_{m+r}(eta)``
over one parity class ``r = (n - m) mod 2, +2, ...``.  In the orthonormal
Legendre basis the recurrence for ``d_r`` is a symmetric tridiagonal
eigenproblem::

    A[j, j]   = l (l + 1) + s c^2 (a_{l+1}^2 + a_l^2)
    A[j, j+1] = s c^2 a_{l+1} a_{l+2}          l = m + p + 2 j

with ``s = +1`` (prolate) or ``-1`` (oblate).  LAPACK picks the right
eigenvalue by index; the coefficients are then rebuilt from two-sided
continued fractions so that every ``d_r`` carries full relative accuracy,
including the rapidly decaying tail the Neumann series depends on.

Coefficients are scaled so that ``S_mn`` behaves like ``P_n^m`` at ``eta -> 1``
(``sum' d_r (2m + r)! / r! = (n + m)! / (n - m)!``), which also gives
``S_mn = P_n^m`` at ``c = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from ..coords import Kind
from ..errors import ConvergenceError, DomainError
from ._legendre import legendre_table, recurrence_coeff

MAX_CLASS_SIZE = 4096
TAIL_FLOOR = 1e-280


@dataclass(frozen=True)
class ModeIndex:
    m: int
    n: int

    def __post_init__(self):
        if self.m < 0 or self.n < self.m:
            raise DomainError(f"need 0 <= m <= n, got m={self.m}, n={self.n}")

    @property
    def parity(self) -> int:
        return (self.n - self.m) % 2


def _system(kind) -> Kind:
    kind = Kind(kind).spheroidal
    return kind


def class_matrix(kind, c: float, m: int, p: int, size: int):
    """Diagonal, off-diagonal and degrees ``l`` of one parity-class matrix."""
    s = 1.0 if _system(kind) is Kind.PROLATE else -1.0
    l = m + p + 2 * np.arange(size)
    cc = s * c * c
    diag = l * (l + 1.0) + cc * (recurrence_coeff(l + 1, m) ** 2 + recurrence_coeff(l, m) ** 2)
    off = cc * recurrence_coeff(l[:-1] + 1, m) * recurrence_coeff(l[:-1] + 2, m)
    return diag, off, l


def _ratios(diag, off, lam):
    """Backward ratios ``e_{j+1}/e_j`` and forward ratios ``e_{j-1}/e_j``."""
    size = diag.size
    up = np.zeros(size)
    for j in range(size - 2, -1, -1):
        den = diag[j + 1] - lam
        if j + 1 < size - 1:
            den += off[j + 1] * up[j + 1]
        up[j] = -off[j] / den if den != 0 else 0.0
    down = np.zeros(size)
    for j in range(1, size):
        den = diag[j - 1] - lam
        if j >= 2:
            den += off[j - 2] * down[j - 1]
        down[j] = -off[j - 1] / den if den != 0 else 0.0
    return up, down


def _mismatch(diag, off, lam, peak):
    up, down = _ratios(diag, off, lam)
    f = diag[peak] - lam
    if peak > 0:
        f += off[peak - 1] * down[peak]
    if peak < diag.size - 1:
        f += off[peak] * up[peak]
    return f, up, down


def _refine(diag, off, lam, peak, tol):
    """Secant refinement of the eigenvalue on the joined continued fraction."""
    f0, up, down = _mismatch(diag, off, lam, peak)
    h = 1e-8 * max(1.0, abs(lam))
    lam_prev, f_prev = lam + h, _mismatch(diag, off, lam + h, peak)[0]
    for _ in range(20):
        if f0 == 0.0 or f0 == f_prev:
            break
        step = f0 * (lam - lam_prev) / (f0 - f_prev)
        if abs(step) > 1e-6 * max(1.0, abs(lam)):
            # a secant step this large means the start was not the right root
            break
        lam_prev, f_prev = lam, f0
        lam = lam - step
        f0, up, down = _mismatch(diag, off, lam, peak)
        if abs(step) <= tol * max(1.0, abs(lam)):
            break
    return lam, up, down


@dataclass(frozen=True, eq=False)
class ModeCoefficients:
    """Eigenvalue, normalised ``d_r`` and normalization integral of one mode.

    ``d[i]`` multiplies ``P^m_{m + p + 2 i}`` where ``p = (n - m) % 2``.
    Instances are immutable; derived evaluators are cached on first use.
    """

    kind: Kind
    c: float
    m: int
    n: int
    lam: float
    d: np.ndarray = field(repr=False)
    n_mn: float
    truncation: int
    tail_bound: float

    def __post_init__(self):
        object.__setattr__(self, "kind", _system(self.kind))
        d = np.array(self.d, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "truncation", int(self.truncation))

    @property
    def parity(self) -> int:
        return (self.n - self.m) % 2

    @property
    def degrees(self) -> np.ndarray:
        return self.m + self.parity + 2 * np.arange(self.d.size)

    @property
    def key(self):
        return (self.kind.value, self.c, self.m, self.n)

    @cached_property
    def orthonormal_coeffs(self) -> np.ndarray:
        """Coefficients ``e_r`` of ``S`` in the orthonormal Legendre basis."""
        l = self.degrees
        m = self.m
        log_nu = 0.5 * (np.log((2 * l + 1) / 2.0) + gammaln(l - m + 1) - gammaln(l + m + 1))
        with np.errstate(over="ignore"):
            return self.d * np.exp(-log_nu)

    @cached_property
    def unit_coeffs(self) -> np.ndarray:
        """Orthonormal-basis coefficients of ``S_mn / sqrt(N_mn)``.

        Computed from ``d`` in logs, so it stays finite for orders where
        ``N_mn`` itself overflows.
        """
        l = self.degrees
        m = self.m
        log_nu = 0.5 * (np.log((2 * l + 1) / 2.0) + gammaln(l - m + 1) - gammaln(l + m + 1))
        with np.errstate(divide="ignore"):
            lg = np.log(np.abs(self.d)) - log_nu
        u = np.sign(self.d) * np.exp(lg - np.max(lg))
        return u / math.sqrt(math.fsum(u * u))

    @cached_property
    def radial(self):
        from ._radial import RadialSolver

        return RadialSolver(self)

    def same_as(self, other: "ModeCoefficients") -> bool:
        return (
            self.kind is other.kind
            and self.c == other.c
            and (self.m, self.n) == (other.m, other.n)
            and self.lam == other.lam
            and self.n_mn == other.n_mn
            and self.truncation == other.truncation
            and self.tail_bound == other.tail_bound
            and np.array_equal(self.d, other.d)
        )


def _class_eigenvalue(kind, c, m, p, idx, size):
    diag, off, l = class_matrix(kind, c, m, p, size)
    w, v = eigh_tridiagonal(diag, off, select="i", select_range=(idx, idx))
    return w[0], v[:, 0], diag, off


def solve_mode(kind, c: float, m: int, n: int, tol: float = 1e-13) -> ModeCoefficients:
    """Eigenvalue ``lambda_mn(c)`` and coefficients ``d_r`` scaled as in the module docstring.

    The truncation starts at ``2(n-m) + 32 + ceil(2c)`` Legendre degrees and
    doubles until the eigenvalue is stable to ``tol`` (relative).
    """
    kind = _system(kind)
    mode = ModeIndex(m, n)
    if not (c >= 0 and math.isfinite(c)):
        raise DomainError(f"c must be finite and non-negative, got {c!r}")
    if not tol > 0:
        raise DomainError("tol must be positive")
    p = mode.parity
    idx = (n - m) // 2
    span = 2 * (n - m) + 32 + math.ceil(2 * c)
    size = max(span // 2 + 1, idx + 8)
    prev = None
    while True:
        lam, vec, diag, off = _class_eigenvalue(kind, c, m, p, idx, size)
        # bisection in LAPACK is only accurate to ~eps * ||A||
        floor = 64 * np.finfo(float).eps * np.max(np.abs(diag))
        if prev is not None and abs(lam - prev) <= max(tol * max(1.0, abs(lam)), floor):
            break
        if size >= MAX_CLASS_SIZE:
            raise ConvergenceError(
                "eigenvalue did not stabilise", mode=(kind.value, c, m, n), truncation=size
            )
        prev = lam
        size = min(2 * size, MAX_CLASS_SIZE)

    if c == 0.0:
        e = np.zeros(size)
        e[idx] = 1.0
        lam = float(n * (n + 1))
    else:
        peak = int(np.argmax(np.abs(vec)))
        lam, e = _coefficients(kind, c, m, p, lam, peak, size, tol)
    return _normalise(kind, c, m, n, lam, e)


def _coefficients(kind, c, m, p, lam, peak, size, tol):
    """Two-sided continued-fraction coefficients, tail extended until negligible."""
    total = size
    while True:
        diag, off, _ = class_matrix(kind, c, m, p, total)
        lam, up, down = _refine(diag, off, lam, peak, tol)
        e = np.zeros(total)
        e[peak] = 1.0
        for j in range(peak, total - 1):
            e[j + 1] = e[j] * up[j]
        for j in range(peak, 0, -1):
            e[j - 1] = e[j] * down[j]
        big = np.max(np.abs(e))
        nz = np.nonzero(np.abs(e) > TAIL_FLOOR * big)[0]
        last = int(nz[-1]) if nz.size else peak
        if last < total - 4 or total >= MAX_CLASS_SIZE:
            return lam, e[: last + 1] / big
        total = min(2 * total, MAX_CLASS_SIZE)


def _normalise(kind, c, m, n, lam, e) -> ModeCoefficients:
    p = (n - m) % 2
    l = m + p + 2 * np.arange(e.size)
    r = l - m
    log_nu = 0.5 * (np.log((2 * l + 1) / 2.0) + gammaln(l - m + 1) - gammaln(l + m + 1))
    log_fac = gammaln(l + m + 1) - gammaln(r + 1)  # (2m + r)! / r!
    # S ~ P_n^m (1 - eta^2)^(m/2) scale as eta -> 1, for both parities
    log_target = gammaln(n + m + 1) - gammaln(n - m + 1)
    log_w = log_nu + log_fac
    # everything in logs: the factorials overflow long before the result does
    shift = float(np.max(log_w))
    total = math.fsum(e * np.exp(log_w - shift))
    if total == 0.0 or not math.isfinite(total):
        raise ConvergenceError("eta -> 1 normalization sum vanished", mode=(kind.value, c, m, n))
    log_scale = log_target - shift - math.log(abs(total))
    sign = math.copysign(1.0, total)
    d = sign * e * np.exp(log_nu + log_scale)
    log_n = 2 * log_scale + math.log(math.fsum(e * e))
    n_mn = math.exp(log_n) if log_n < 709.7 else math.inf  # beyond double range for very high m
    tail = abs(e[-1]) / np.max(np.abs(e))
    return ModeCoefficients(kind, float(c), m, n, float(lam), d, float(n_mn), e.size, float(tail))


def angle_s1(coeffs: ModeCoefficients, eta):
    """``S_mn(c, eta)`` and ``dS/deta``; scalars in, scalars out."""
    eta_arr = np.asarray(eta, dtype=float)
    if np.any(np.abs(eta_arr) > 1.0):
        raise DomainError("eta must lie in [-1, 1]")
    flat = np.atleast_1d(eta_arr).ravel()
    s, sp = angle_table(coeffs, flat)
    if coeffs.m == 1:
        ends = np.abs(flat) == 1.0
        if np.any(ends):
            red, _ = legendre_table(1, int(coeffs.degrees[-1]), flat[ends], derivative=False, reduced=True)
            t = coeffs.orthonormal_coeffs @ red[coeffs.parity :: 2]
            sp[ends] = -np.sign(flat[ends]) * np.sign(t) * np.inf
    if eta_arr.ndim == 0:
        return float(s[0]), float(sp[0])
    return s.reshape(eta_arr.shape), sp.reshape(eta_arr.shape)


def angle_table(coeffs: ModeCoefficients, eta, derivative: bool = True):
    """Vectorised ``S`` (and ``S'``) at the points ``eta``."""
    lmax = int(coeffs.degrees[-1])
    p, dp = legendre_table(coeffs.m, lmax, eta, derivative=derivative)
    e = coeffs.orthonormal_coeffs
    rows = slice(coeffs.parity, None, 2)
    s = e @ p[rows]
    if not derivative:
        return s, None
    with np.errstate(invalid="ignore"):
        sp = e @ dp[rows]
    return s, sp


def norm_nmn(coeffs: ModeCoefficients) -> float:
    """``int_{-1}^{1} S_mn^2 d eta`` in closed form from the coefficients."""
    l = coeffs.degrees
    m = coeffs.m
    log_w = np.log(2.0 / (2 * l + 1)) + gammaln(l + m + 1) - gammaln(l - m + 1)
    return math.fsum(coeffs.d * coeffs.d * np.exp(log_w))

"""Brute-force references for checking the primary special-function path.

Each oracle uses a different basis or method from the code it checks:

* eigenvalues from the dense, non-symmetric recurrence matrix in the
  unnormalised Legendre basis (numpy ``eigvals``);
* radial functions by adaptive Runge-Kutta integration of the radial ODE
  (scipy ``DOP853``) instead of Bessel series and Taylor stepping;
* integrals by adaptive Gauss-Kronrod quadrature (scipy ``quad``);
* free fields from their closed forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

from .coords import Kind
from .errors import ConvergenceError, DomainError
from .specfun import ModeCoefficients, angle_s1, radial


class OracleError(ConvergenceError):
    """An oracle could not reach its own accuracy target."""


@dataclass(frozen=True)
class OracleReport:
    quantity: str
    value: complex
    oracle: complex
    rel_diff: float
    tol: float
    passed: bool

    @classmethod
    def compare(cls, quantity: str, value, oracle, tol: float, scale: float | None = None) -> "OracleReport":
        ref = abs(oracle) if scale is None else scale
        diff = abs(value - oracle) / ref if ref > 0 else abs(value - oracle)
        return cls(quantity, value, oracle, float(diff), tol, bool(diff <= tol))

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.quantity}: rel diff {self.rel_diff:.2e} (tol {self.tol:.0e})"


# -- eigenvalues ----------------------------------------------------------
def flammer_matrix(kind, c: float, m: int, parity: int, truncation: int) -> np.ndarray:
    """Dense matrix ``M`` with ``M d = lambda d`` for the unnormalised coefficients ``d_r``.

    Row ``r`` holds ``gamma_r d_{r-2} + beta_r d_r + alpha_r d_{r+2}``.
    """
    kind = Kind(kind).spheroidal
    c2 = c * c if kind is Kind.PROLATE else -c * c
    size = int(truncation)
    mat = np.zeros((size, size))
    for j in range(size):
        r = parity + 2 * j
        mr = m + r
        beta = mr * (mr + 1) + (2 * mr * (mr + 1) - 2 * m * m - 1) * c2 / ((2 * mr - 1) * (2 * mr + 3))
        mat[j, j] = beta
        if j + 1 < size:
            mat[j, j + 1] = (2 * m + r + 2) * (2 * m + r + 1) * c2 / ((2 * mr + 3) * (2 * mr + 5))
        if j > 0:
            mat[j, j - 1] = r * (r - 1) * c2 / ((2 * mr - 3) * (2 * mr - 1))
    return mat


def dense_eigen_oracle(kind, c: float, m: int, parity: int, truncation: int = 200) -> np.ndarray:
    """Eigenvalues of the dense recurrence matrix, ascending."""
    if truncation < 50:
        raise DomainError("the dense oracle needs truncation >= 50")
    if parity not in (0, 1):
        raise DomainError("parity must be 0 or 1")
    w = np.linalg.eigvals(flammer_matrix(kind, c, m, parity, truncation))
    if np.max(np.abs(w.imag)) > 1e-8 * max(1.0, np.max(np.abs(w.real))):
        raise OracleError("dense recurrence matrix produced complex eigenvalues")
    return np.sort(w.real)


def eigenvalue_oracle(kind, c: float, m: int, n: int, truncation: int = 200) -> float:
    """``lambda_mn`` from the dense oracle (index ``(n - m) // 2`` within the parity class)."""
    return float(dense_eigen_oracle(kind, c, m, (n - m) % 2, truncation)[(n - m) // 2])


# -- radial ODE -----------------------------------------------------------
@dataclass(frozen=True)
class RadialSamples:
    xi: np.ndarray
    y: np.ndarray
    yp: np.ndarray


def _radial_rhs(kind: Kind, c: float, lam: float, m: int):
    c2 = c * c
    sg = -1.0 if kind is Kind.PROLATE else 1.0

    def rhs(xi, y):
        g = xi * xi + sg
        return [y[1], ((lam - c2 * xi * xi - sg * m * m / g) * y[0] - 2 * xi * y[1]) / g]

    return rhs


def ode_integrate_radial(kind, c: float, m: int, n: int, lam: float, xi_span, y0=None,
                         xi_eval=None, rtol: float = 1e-12) -> RadialSamples:
    """Integrate the radial equation over ``xi_span`` from initial ``(R, R')``.

    ``y0`` defaults to the primary ``R1`` values at ``xi_span[0]``.  The
    prolate span must stay at least 1e-3 away from ``xi = 1``.
    """
    kind = Kind(kind).spheroidal
    lo, hi = float(xi_span[0]), float(xi_span[1])
    if kind is Kind.PROLATE and min(lo, hi) < 1.001:
        raise DomainError("prolate ODE oracle must stay >= 1e-3 away from xi = 1")
    if kind is Kind.OBLATE and min(lo, hi) < 0:
        raise DomainError("oblate xi must be non-negative")
    if y0 is None:
        from .specfun import solve_mode

        ev = radial(solve_mode(kind, c, m, n), lo)
        y0 = (ev.r1.real, ev.r1p.real)
    y0 = [float(y0[0]), float(y0[1])]
    amp = max(abs(y0[0]), abs(y0[1]), 1e-300)
    if xi_eval is None:
        xi_eval = np.linspace(lo, hi, 50)
    xi_eval = np.asarray(xi_eval, dtype=float)
    sol = solve_ivp(
        _radial_rhs(kind, c, lam, m), (lo, hi), y0, method="DOP853", rtol=rtol, atol=rtol * amp * 1e-6,
        t_eval=xi_eval,
    )
    if not sol.success:
        raise OracleError(f"radial ODE oracle failed: {sol.message}", mode=(kind.value, c, m, n))
    return RadialSamples(sol.t, sol.y[0], sol.y[1])


def ode_wronskian(kind, c: float, coeffs: ModeCoefficients, xi_span, xi_eval=None, rtol: float = 1e-12):
    """``c (xi^2 -+ 1) W[R1, R2]`` along an independent integration of both solutions.

    Starts from the primary values at ``xi_span[0]``; an exact solver keeps it at 1.
    """
    kind = Kind(kind).spheroidal
    ev = radial(coeffs, float(xi_span[0]))
    a = ode_integrate_radial(kind, c, coeffs.m, coeffs.n, coeffs.lam, xi_span, (ev.r1.real, ev.r1p.real),
                             xi_eval, rtol)
    b = ode_integrate_radial(kind, c, coeffs.m, coeffs.n, coeffs.lam, xi_span, (ev.r2.real, ev.r2p.real),
                             xi_eval, rtol)
    sg = -1.0 if kind is Kind.PROLATE else 1.0
    return a.xi, c * (a.xi ** 2 + sg) * (a.y * b.yp - a.yp * b.y)


# -- quadrature -----------------------------------------------------------
def quadrature(f, a: float, b: float, tol: float = 1e-12, limit: int = 400) -> float:
    """Adaptive Gauss-Kronrod integral of ``f`` over ``[a, b]``; raises if ``tol`` is not met."""
    val, err = quad(f, a, b, epsabs=tol, epsrel=tol, limit=limit)
    if not err <= max(tol, tol * abs(val)) * 10:
        raise OracleError(f"quadrature error estimate {err:.1e} exceeds tolerance {tol:.1e}")
    return float(val)


def norm_by_quadrature(coeffs: ModeCoefficients, tol: float = 1e-12) -> float:
    """``int S_mn^2 d eta`` by quadrature of the evaluated angle function."""
    return _split_quad(lambda t: angle_s1(coeffs, t)[0] ** 2, tol)


def overlap_by_quadrature(first: ModeCoefficients, second: ModeCoefficients, tol: float = 1e-12) -> float:
    """``int S_mn S_mn' d eta``."""
    return _split_quad(lambda t: angle_s1(first, t)[0] * angle_s1(second, t)[0], tol)


def _split_quad(f, tol):
    # the integrands oscillate; halves keep the Kronrod subdivision cheap
    return quadrature(f, -1.0, 0.0, tol) + quadrature(f, 0.0, 1.0, tol)


# -- closed-form free fields ----------------------------------------------
def plane_wave_field(k: float, theta0: float, phi0: float, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = np.array([math.sin(theta0) * math.cos(phi0), math.sin(theta0) * math.sin(phi0), math.cos(theta0)])
    return np.exp(1j * k * (pts @ d))


def point_source_field(k: float, source, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(pts - np.asarray(source, dtype=float), axis=1)
    return np.exp(1j * k * r) / (4 * np.pi * r)

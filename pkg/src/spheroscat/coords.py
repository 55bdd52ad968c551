"""Prolate and oblate spheroidal coordinates.

Prolate::

    x = a sqrt(1 - eta^2) sqrt(xi^2 - 1) cos(phi)
    y = a sqrt(1 - eta^2) sqrt(xi^2 - 1) sin(phi)
    z = a eta xi

Oblate uses ``xi^2 + 1`` in place of ``xi^2 - 1``.  A disk of radius ``a``
is the oblate surface ``xi = 0``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * math.pi


class Kind(str, enum.Enum):
    PROLATE = "prolate"
    OBLATE = "oblate"
    DISK = "disk"

    @property
    def spheroidal(self) -> "Kind":
        """Coordinate system actually used (Disk maps to Oblate)."""
        return Kind.OBLATE if self is Kind.DISK else self

    @property
    def xi_min(self) -> float:
        return 1.0 if self is Kind.PROLATE else 0.0


@dataclass(frozen=True)
class Geometry:
    kind: Kind
    a: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not (self.a > 0 and math.isfinite(self.a)):
            raise DomainError(f"focal parameter a must be positive, got {self.a!r}")

    @property
    def system(self) -> Kind:
        return self.kind.spheroidal

    def canonical(self) -> "Geometry":
        """The Oblate geometry a Disk is equivalent to; other kinds unchanged."""
        if self.kind is Kind.DISK:
            return Geometry(Kind.OBLATE, self.a)
        return self


@dataclass(frozen=True)
class SpheroidalPoint:
    eta: float
    xi: float
    phi: float = 0.0

    def __post_init__(self):
        if not -1.0 <= self.eta <= 1.0:
            raise DomainError(f"eta must lie in [-1, 1], got {self.eta!r}")
        if not self.xi >= 0.0:
            raise DomainError(f"xi must be non-negative, got {self.xi!r}")
        if not 0.0 <= self.phi < TWO_PI:
            object.__setattr__(self, "phi", float(np.mod(self.phi, TWO_PI)))

    def validate_for(self, kind: Kind) -> None:
        if Kind(kind).spheroidal is Kind.PROLATE and self.xi < 1.0:
            raise DomainError(f"prolate xi must be >= 1, got {self.xi!r}")


def _radial_factor(system: Kind, xi):
    if system is Kind.PROLATE:
        return np.sqrt(np.maximum(xi * xi - 1.0, 0.0))
    return np.sqrt(xi * xi + 1.0)


def to_cartesian(g: Geometry, eta, xi, phi=0.0):
    """Map spheroidal ``(eta, xi, phi)`` (scalars or arrays) to ``(x, y, z)``."""
    eta = np.asarray(eta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    rho = g.a * np.sqrt(np.maximum(1.0 - eta * eta, 0.0)) * _radial_factor(g.system, xi)
    x = rho * np.cos(phi)
    y = rho * np.sin(phi)
    z = g.a * eta * xi
    if x.ndim == 0:
        return float(x), float(y), float(z)
    return x, y, z


def point_to_cartesian(g: Geometry, p: SpheroidalPoint):
    p.validate_for(g.kind)
    return to_cartesian(g, p.eta, p.xi, p.phi)


def from_cartesian(g: Geometry, x, y, z):
    """Inverse map; returns ``(eta, xi, phi)`` arrays (or floats for scalars).

    Conventions: ``phi`` in ``[0, 2 pi)`` with ``phi = 0`` on the symmetry
    axis, ``eta`` takes the sign of ``z`` with ``+0`` on ``z = 0``.
    """
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0 and np.ndim(z) == 0
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    a = g.a
    rho = np.hypot(x, y)
    phi = np.mod(np.arctan2(y, x), TWO_PI)
    phi = np.where(rho == 0.0, 0.0, phi)
    phi = np.where(phi >= TWO_PI, 0.0, phi)
    if g.system is Kind.PROLATE:
        r1 = np.sqrt(rho * rho + (z - a) ** 2)
        r2 = np.sqrt(rho * rho + (z + a) ** 2)
        xi = np.maximum((r1 + r2) / (2.0 * a), 1.0)
        eta = np.clip((r2 - r1) / (2.0 * a), -1.0, 1.0)
    else:
        # xi^2 - eta^2 = s and xi^2 eta^2 = zh^2, solved without cancellation
        rh = rho / a
        zh = z / a
        s = rh * rh + zh * zh - 1.0
        root = np.sqrt(s * s + 4.0 * zh * zh)
        with np.errstate(divide="ignore", invalid="ignore"):
            u_pos = 0.5 * (s + root)
            v_neg = 0.5 * (root - s)
            u = np.where(s > 0, u_pos, np.where(v_neg > 0, zh * zh / v_neg, 0.0))
            v = np.where(s > 0, np.where(u_pos > 0, zh * zh / u_pos, 0.0), v_neg)
        xi = np.sqrt(np.maximum(u, 0.0))
        eta = np.sqrt(np.clip(v, 0.0, 1.0))
    eta = np.where(z < 0, -np.abs(eta), np.abs(eta))
    if scalar:
        return float(eta), float(xi), float(phi)
    return eta, xi, phi


def point_from_cartesian(g: Geometry, x: float, y: float, z: float) -> SpheroidalPoint:
    eta, xi, phi = from_cartesian(g, x, y, z)
    return SpheroidalPoint(eta, xi, phi)


def surface_grid(g: Geometry, xi1: float, n_eta: int, n_phi: int):
    """Gauss-Legendre nodes in eta times uniform nodes in phi on ``xi = xi1``.

    Returns ``(points, weights)`` where ``points`` is a list of
    :class:`SpheroidalPoint` (eta-major order) and ``weights`` the matching
    product quadrature weights (eta weight times ``2 pi / n_phi``).
    """
    check_surface(g, xi1)
    if n_eta < 1 or n_phi < 1:
        raise DomainError("n_eta and n_phi must be >= 1")
    nodes, w = np.polynomial.legendre.leggauss(int(n_eta))
    phis = TWO_PI * np.arange(n_phi) / n_phi
    points = [SpheroidalPoint(float(e), float(xi1), float(p)) for e in nodes for p in phis]
    weights = np.repeat(w, n_phi) * (TWO_PI / n_phi)
    return points, weights


def check_surface(g: Geometry, xi1: float) -> None:
    if g.kind is Kind.DISK:
        if xi1 != 0.0:
            raise DomainError(f"a disk has xi1 = 0, got {xi1!r}")
        return
    if not math.isfinite(xi1) or xi1 < g.kind.xi_min:
        raise DomainError(f"xi1 = {xi1!r} invalid for {g.kind.value} geometry")


def xi_jacobian(g: Geometry, eta, xi, phi=0.0):
    """Partial derivatives ``d(x, y, z)/d xi`` used to turn gradients into d/dxi."""
    eta = np.asarray(eta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s = np.sqrt(np.maximum(1.0 - eta * eta, 0.0))
    f = _radial_factor(g.system, xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        dfdxi = np.where(f > 0, xi / f, np.inf)
    drho = g.a * s * dfdxi
    return drho * np.cos(phi), drho * np.sin(phi), g.a * eta * np.ones_like(xi)

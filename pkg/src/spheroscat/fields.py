"""Incident expansions, scattering coefficients and field evaluation.

Conventions (``c = k a``, ``eps_0 = 1``, ``eps_m = 2`` otherwise)::

    plane wave    V = 2 sum eps_m i^n / N_mn  S_mn(cos th0) S_mn(eta) R1_mn(xi) cos m(phi - phi0)
    point source  V = (i k / 2 pi) sum eps_m / N_mn  S_mn(eta0) S_mn(eta) R1_mn(xi<) R3_mn(xi>) cos m(phi - phi0)
    scattered     V = sum B_mn S_mn(eta) R3_mn(xi) cos m(phi - phi0)

On the surface the incident field is ``sum a_mn S R1 cos`` and the boundary
condition ``V + alpha dV/dxi = 0`` gives ``B_mn = -a_mn F_mn`` with
``F = (R1 + alpha R1') / (R3 + alpha R3')`` at ``xi1`` (soft: alpha = 0,
hard: alpha -> infinity).

Internally the sums use the unit-norm angle function ``S_mn / sqrt(N_mn)``,
which absorbs ``1 / N_mn`` and keeps high orders (where ``N_mn`` overflows)
representable.
"""
from __future__ import annotations

import enum
import math
import threading
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

from . import cache as _cache
from ._numerics import neumann_factor
from .coords import (
    Geometry,
    Kind,
    SpheroidalPoint,
    check_surface,
    from_cartesian,
    surface_grid,
    to_cartesian,
    xi_jacobian,
)
from .errors import AccuracyError, DomainError, ResonanceError, TruncationError
from .specfun import ModeCoefficients, solve_mode
from .specfun._bessel import BesselTable
from .specfun._legendre import legendre_table
from .specfun._radial import SMALL_XI

CHUNK = 4096
MAX_GEOMETRIC = 400
# point-source sums converge like (xi< / xi>)^N; beyond this ratio they get expensive
SLOW_RATIO = 0.9
SURFACE_SAMPLE = 64


# -- sources and boundary conditions -------------------------------------
@dataclass(frozen=True)
class PlaneWave:
    """``exp(i k d.r)`` with ``d = (sin th0 cos phi0, sin th0 sin phi0, cos th0)``."""

    theta0: float
    phi0: float = 0.0

    @property
    def direction(self) -> np.ndarray:
        st = math.sin(self.theta0)
        return np.array([st * math.cos(self.phi0), st * math.sin(self.phi0), math.cos(self.theta0)])

    @property
    def eta0(self) -> float:
        return math.cos(self.theta0)


@dataclass(frozen=True)
class PointSource:
    """``exp(i k R) / (4 pi R)`` emitted from spheroidal position ``(eta0, xi0, phi0)``."""

    eta0: float
    xi0: float
    phi0: float = 0.0

    def __post_init__(self):
        if not -1.0 <= self.eta0 <= 1.0:
            raise DomainError(f"eta0 must lie in [-1, 1], got {self.eta0!r}")

    def position(self, g: Geometry) -> np.ndarray:
        return np.array(to_cartesian(g, self.eta0, self.xi0, self.phi0), dtype=float)


IncidentSource = Union[PlaneWave, PointSource]


@dataclass(frozen=True)
class Soft:
    pass


@dataclass(frozen=True)
class Hard:
    pass


@dataclass(frozen=True)
class Robin:
    """``V + alpha dV/dxi = 0``; ``alpha`` may be complex (impedance)."""

    alpha: complex

    def __post_init__(self):
        if not np.isfinite(complex(self.alpha)):
            raise DomainError("Robin alpha must be finite; use Hard for the infinite limit")


BoundaryCondition = Union[Soft, Hard, Robin]


def boundary_factor(bc: BoundaryCondition, r1, r1p, r3, r3p, mode=None) -> complex:
    """``F`` in ``B = -a F``; raises :class:`ResonanceError` on a vanishing denominator."""
    if isinstance(bc, Robin) and bc.alpha == 0:
        bc = Soft()
    if isinstance(bc, Soft):
        num, den = r1, r3
        scale = abs(r3)
    elif isinstance(bc, Hard):
        num, den = r1p, r3p
        scale = abs(r3p)
    elif isinstance(bc, Robin):
        alpha = complex(bc.alpha)
        num, den = r1 + alpha * r1p, r3 + alpha * r3p
        scale = abs(r3) + abs(alpha) * abs(r3p)
    else:
        raise TypeError(f"unknown boundary condition {bc!r}")
    if den == 0 or abs(den) <= 1e-14 * scale:
        raise ResonanceError(f"boundary factor denominator vanishes for mode {mode}")
    return num / den


class Which(str, enum.Enum):
    INCIDENT = "incident"
    SCATTERED = "scattered"
    TOTAL = "total"


@dataclass(frozen=True)
class TruncationPolicy:
    """Stopping rule for the double mode sums.

    A mode is *small* when its largest contribution over the judging point
    set is below ``rel_tol`` times the running maximum.  The ``n`` loop stops
    after ``consecutive_small`` small modes (never before ``n - m >= ceil(c)``);
    the ``m`` loop stops after ``consecutive_small`` orders whose modes were
    all small.  ``None`` limits are chosen from ``c``.
    """

    rel_tol: float = 1e-8
    max_m: int | None = None
    max_n_excess: int | None = None
    consecutive_small: int = 3

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be positive")
        if self.consecutive_small < 1:
            raise DomainError("consecutive_small must be >= 1")

    def limits(self, c: float, xi_ref: float = 1.0, ratio: float = 0.0):
        """``(max_m, max_n_excess)``; ``ratio`` is the worst ``xi< / xi>`` of a point-source sum."""
        reach = math.ceil(2 * c * max(xi_ref, 1.0))
        geometric = 0
        if 0.0 < ratio < 1.0:
            geometric = min(MAX_GEOMETRIC, math.ceil(math.log(0.01 * self.rel_tol) / math.log(ratio)))
        auto_n = max(math.ceil(2 * c) + 16, reach + 30, geometric)
        n_ex = auto_n if self.max_n_excess is None else max(int(self.max_n_excess), 0)
        m_max = max(reach + 40, geometric) if self.max_m is None else int(self.max_m)
        return m_max, n_ex


@dataclass(frozen=True)
class ScatteringProblem:
    geometry: Geometry
    xi1: float
    k: float
    bc: BoundaryCondition
    source: IncidentSource
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)

    def __post_init__(self):
        check_surface(self.geometry, self.xi1)
        if self.geometry.system is Kind.PROLATE and not self.xi1 > 1.0:
            raise DomainError("a prolate scatterer needs xi1 > 1")
        if not (self.k > 0 and math.isfinite(self.k)):
            raise DomainError(f"k must be positive, got {self.k!r}")
        if isinstance(self.source, PointSource) and not self.source.xi0 > self.xi1:
            raise DomainError("the point source must lie strictly outside the scatterer (xi0 > xi1)")

    @property
    def c(self) -> float:
        return self.k * self.geometry.a

    @property
    def system(self) -> Kind:
        return self.geometry.system


# -- mode supply ----------------------------------------------------------
class ModeProvider:
    """Memoised access to mode coefficients, optionally backed by a disk cache.

    Thread-safe; coefficients are immutable and shared between callers.
    """

    def __init__(self, cache_dir=None, write_back: bool = True):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.write_back = write_back
        self._modes: dict = {}
        self._disk: dict = {}
        self._pending: dict = {}
        self._lock = threading.Lock()
        self.solved = 0
        self.loaded = 0

    def get(self, kind, c: float, m: int, n: int) -> ModeCoefficients:
        kind = Kind(kind).spheroidal
        key = (kind, float(c), m, n)
        with self._lock:
            hit = self._modes.get(key)
        if hit is not None:
            return hit
        co = None
        if self.cache_dir is not None:
            with self._lock:
                disk = self._disk.get((kind, float(c)))
            if disk is None:
                disk = _cache.load_all(self.cache_dir, kind, c)
                with self._lock:
                    self._disk[(kind, float(c))] = disk
            co = disk.get((m, n))
            if co is not None:
                self.loaded += 1
        if co is None:
            co = solve_mode(kind, c, m, n)
            self.solved += 1
            if self.cache_dir is not None and self.write_back:
                with self._lock:
                    self._pending.setdefault((kind, float(c)), []).append(co)
        with self._lock:
            return self._modes.setdefault(key, co)

    def flush(self) -> None:
        """Write freshly solved modes to the disk cache."""
        if self.cache_dir is None:
            return
        with self._lock:
            pending, self._pending = self._pending, {}
        for (kind, c), items in pending.items():
            _cache.store_many(self.cache_dir, items)
            with self._lock:
                disk = self._disk.setdefault((kind, c), {})
                disk.update({(co.m, co.n): co for co in items})

    def clear(self) -> None:
        with self._lock:
            self._modes.clear()
            self._disk.clear()


_DEFAULT = ModeProvider()


def default_provider() -> ModeProvider:
    return _DEFAULT


# -- coordinate helpers ---------------------------------------------------
def _as_spheroidal(g: Geometry, points):
    """``(eta, xi, phi)`` arrays from SpheroidalPoint(s), an (N, 3) Cartesian array or a tuple of arrays."""
    if isinstance(points, SpheroidalPoint):
        points = [points]
    if isinstance(points, (list, tuple)) and points and isinstance(points[0], SpheroidalPoint):
        for p in points:
            p.validate_for(g.system)
        eta = np.array([p.eta for p in points], dtype=float)
        xi = np.array([p.xi for p in points], dtype=float)
        phi = np.array([p.phi for p in points], dtype=float)
        return eta, xi, phi
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DomainError("points must be SpheroidalPoint(s) or an (N, 3) Cartesian array")
    eta, xi, phi = from_cartesian(g.canonical(), arr[:, 0], arr[:, 1], arr[:, 2])
    return np.atleast_1d(eta), np.atleast_1d(xi), np.atleast_1d(phi)


class _AngleRows:
    """Orthonormal Legendre rows for one ``m`` at fixed ``eta``, extended on demand."""

    def __init__(self, m: int, eta: np.ndarray, derivative: bool):
        self.m, self.derivative = m, derivative
        self.eta, self.inv = np.unique(eta, return_inverse=True)
        self.lmax = -1
        self.p = self.dp = None

    def values(self, coeffs: ModeCoefficients):
        e = coeffs.unit_coeffs
        big = np.max(np.abs(e))
        keep = np.nonzero(np.abs(e) > 1e-18 * big)[0]
        nkeep = int(keep[-1]) + 1 if keep.size else 1
        lmax = int(coeffs.degrees[nkeep - 1])
        if lmax > self.lmax:
            self.lmax = max(lmax, self.m + 64, 2 * self.lmax - self.m)
            self.p, self.dp = legendre_table(self.m, self.lmax, self.eta, derivative=self.derivative)
        rows = slice(coeffs.parity, coeffs.parity + 2 * nkeep, 2)
        s = (e[:nkeep] @ self.p[rows])[self.inv]
        sp = None
        if self.derivative:
            with np.errstate(invalid="ignore"):
                sp = (e[:nkeep] @ self.dp[rows])[self.inv]
        return s, sp


class _AngleAt:
    """``S_mn`` at one fixed ``eta`` for a sweep of modes, one table per ``m``."""

    def __init__(self, eta: float):
        self.eta = np.array([float(eta)])
        self.rows = None

    def __call__(self, coeffs: ModeCoefficients) -> float:
        if self.rows is None or self.rows.m != coeffs.m:
            self.rows = _AngleRows(coeffs.m, self.eta, False)
        return float(self.rows.values(coeffs)[0][0])


class _Radial:
    """Radial values for many modes at one fixed set of xi, sharing a Bessel table."""

    def __init__(self, c: float, xi: np.ndarray):
        self.c = c
        self.xi, self.inv = np.unique(xi, return_inverse=True)
        xi = self.xi
        self.table = None
        self._safe = np.where(xi >= SMALL_XI, c * xi, 1.0)

    def values(self, coeffs: ModeCoefficients, scaled: bool = False):
        """``r1, r1p, r2, r2p`` per point; ``scaled`` appends ``e`` with R1 = r1 exp(-e), R2 = r2 exp(e)."""
        if not coeffs.radial.extended:
            need = self._cap(coeffs)
            if self.table is None or self.table.lmax < need:
                want = max(need, 0 if self.table is None else 2 * self.table.lmax)
                self.table = BesselTable(self._safe, want)
        k = self.inv
        if scaled:
            r1, r1p, r2, r2p, _, e = coeffs.radial.evaluate_scaled(self.xi, self.table)
            return r1[k], r1p[k], r2[k], r2p[k], e[k]
        r1, r1p, r2, r2p, _ = coeffs.radial.evaluate(self.xi, self.table)
        return r1[k], r1p[k], r2[k], r2p[k]

    def _cap(self, coeffs):
        rest = self.xi[self.xi >= SMALL_XI]
        if rest.size == 0:
            return 4
        return min(coeffs.radial.rows_needed(self.c * float(rest.min())), int(coeffs.degrees[-1]) + 2)


class _Accumulator:
    """Neumaier-compensated running sum of complex arrays."""

    def __init__(self, shape):
        self.re = np.zeros(shape)
        self.im = np.zeros(shape)
        self.cre = np.zeros(shape)
        self.cim = np.zeros(shape)

    @staticmethod
    def _add(s, comp, t):
        new = s + t
        comp += np.where(np.abs(s) >= np.abs(t), (s - new) + t, (t - new) + s)
        return new

    def add(self, term):
        self.re = self._add(self.re, self.cre, term.real)
        self.im = self._add(self.im, self.cim, term.imag)

    @property
    def value(self):
        return (self.re + self.cre) + 1j * (self.im + self.cim)


@dataclass
class _LoopState:
    converged: bool = False
    tail: float = 0.0
    running_max: float = 0.0
    m_last: int = -1
    n_last: dict = field(default_factory=dict)
    reason: str = ""


def _mode_loop(c: float, policy: TruncationPolicy, xi_ref: float, axial: bool,
               visit: Callable[[int, int], float], ratio: float = 0.0) -> _LoopState:
    """Drive ``visit(m, n) -> contribution`` under the truncation policy."""
    m_max, n_excess = policy.limits(c, xi_ref, ratio)
    n_floor = math.ceil(c)
    k = policy.consecutive_small
    st = _LoopState()
    small_m = 0
    capped = ""
    for m in range(0, m_max + 1):
        if axial and m > 0:
            st.converged = True
            break
        small_n = 0
        m_peak = 0.0
        done = False
        for n in range(m, m + n_excess + 1):
            contrib = visit(m, n)
            st.running_max = max(st.running_max, contrib)
            m_peak = max(m_peak, contrib)
            st.n_last[m] = n
            rel = contrib / st.running_max if st.running_max > 0 else 0.0
            small_n = small_n + 1 if rel <= policy.rel_tol else 0
            if small_n >= k and n - m >= n_floor:
                done = True
                st.tail = max(st.tail, rel)
                break
        st.m_last = m
        if not done:
            capped = capped or f"n loop for m={m} hit max_n_excess={n_excess}"
            st.tail = max(st.tail, rel)
        small_m = small_m + 1 if m_peak <= policy.rel_tol * st.running_max else 0
        if small_m >= k:
            st.converged = True
            break
    else:
        st.reason = f"m loop hit max_m={m_max}"
        st.tail = max(st.tail, m_peak / st.running_max if st.running_max else 0.0)
    if capped:
        st.converged = False
        st.reason = "; ".join(r for r in (capped, st.reason) if r)
    return st


def _xi_ratio(system: Kind, xi, xi0: float) -> float:
    """Largest ratio of the radial sizes ``r< / r>`` between evaluation points and the source."""
    sg = -1.0 if system is Kind.PROLATE else 1.0
    big = np.sqrt(np.maximum(np.asarray(xi, dtype=float) ** 2 + sg, 0.0) + 1.0)
    big0 = math.sqrt(max(xi0 * xi0 + sg, 0.0) + 1.0)
    return float(np.max(np.minimum(big, big0) / np.maximum(big, big0)))


def _source_axial(source) -> bool:
    eta0 = source.eta0
    return abs(eta0) == 1.0


# -- closed forms ---------------------------------------------------------
def incident_exact(source: IncidentSource, k: float, point, geometry: Geometry | None = None):
    """Closed-form free field at Cartesian ``point`` (scalar or (N, 3) array)."""
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if isinstance(source, PlaneWave):
        val = np.exp(1j * k * (pts @ source.direction))
    elif isinstance(source, PointSource):
        if geometry is None:
            raise DomainError("a point source needs the geometry to locate it")
        r = np.linalg.norm(pts - source.position(geometry.canonical()), axis=1)
        if np.any(r == 0):
            raise DomainError("incident field evaluated at the point-source location")
        val = np.exp(1j * k * r) / (4 * np.pi * r)
    else:
        raise TypeError(f"unknown source {source!r}")
    return complex(val[0]) if single else val


def incident_exact_xi_derivative(source: IncidentSource, k: float, g: Geometry, eta, xi, phi):
    """``dV/dxi`` of the closed-form incident field via the chain rule."""
    x, y, z = to_cartesian(g.canonical(), eta, xi, phi)
    pts = np.stack([np.atleast_1d(x), np.atleast_1d(y), np.atleast_1d(z)], axis=1)
    jx, jy, jz = (np.atleast_1d(v) for v in xi_jacobian(g.canonical(), eta, xi, phi))
    jac = np.stack([jx, jy, jz], axis=1)
    v = incident_exact(source, k, pts, g)
    if isinstance(source, PlaneWave):
        grad = 1j * k * source.direction[None, :] * v[:, None]
    else:
        diff = pts - source.position(g.canonical())
        r = np.linalg.norm(diff, axis=1)
        grad = ((1j * k - 1.0 / r) * v / r)[:, None] * diff
    with np.errstate(invalid="ignore"):
        return np.sum(np.where(np.isfinite(jac), grad * jac, 0.0), axis=1)


# -- incident expansions --------------------------------------------------
def _expand(g: Geometry, k: float, source, eta, xi, phi, policy: TruncationPolicy,
            provider: ModeProvider | None, parts=("value",)):
    """Incident series at ``(eta, xi, phi)``; ``parts`` picks ``"value"`` and/or ``"xi"`` (d/dxi)."""
    provider = provider or _DEFAULT
    g = g.canonical()
    system, c = g.system, k * g.a
    accs = {p: _Accumulator(eta.size) for p in parts}
    radial = _Radial(c, xi)
    angle_cache: dict = {}
    dphi = phi - source.phi0
    angle_at = _AngleAt(source.eta0)
    point = isinstance(source, PointSource)
    if point:
        xi0 = source.xi0
        inner = xi < xi0
        if np.any((xi == xi0) & (eta == source.eta0) & (np.mod(dphi, 2 * np.pi) == 0)):
            raise DomainError("expansion evaluated at the point-source location")
        if _xi_ratio(system, xi, xi0) > SLOW_RATIO:
            warnings.warn("point-source expansion near xi = xi0 converges slowly; accuracy is degraded",
                          RuntimeWarning, stacklevel=3)

    def visit(m, n):
        co = provider.get(system, c, m, n)
        s0 = angle_at(co)
        if s0 == 0.0:
            return 0.0
        rows = angle_cache.get(m)
        if rows is None:
            angle_cache.clear()
            rows = angle_cache[m] = _AngleRows(m, eta, False)
        s, _ = rows.values(co)
        if point:
            # high orders overflow R2 and underflow R1; combine them through the exponents
            r1, r1p, r2, r2p, e = radial.values(co, scaled=True)
            a1, _, a2, _, _, e0 = (float(v[0]) for v in co.radial.evaluate_scaled(np.array([xi0])))
            with np.errstate(over="ignore", under="ignore"):
                both, up, down = np.exp(-e - e0), np.exp(e0 - e), np.exp(e - e0)
            coef = 1j * k / (2 * np.pi) * neumann_factor(m) * s0 * s
            with np.errstate(invalid="ignore", over="ignore"):
                rad = {
                    "value": np.where(inner, r1 * (a1 * both + 1j * a2 * up), a1 * (r1 * both + 1j * r2 * down)),
                    "xi": np.where(inner, r1p * (a1 * both + 1j * a2 * up), a1 * (r1p * both + 1j * r2p * down)),
                }
            if not all(np.all(np.isfinite(rad[p])) for p in accs):
                raise AccuracyError("point-source radial product overflowed", mode=co.key)
        else:
            r1, r1p, r2, r2p = radial.values(co)
            coef = 2.0 * neumann_factor(m) * (1j ** (n % 4)) * s0 * s
            rad = {"value": r1, "xi": r1p}
        cosm = np.cos(m * dphi)
        contrib = 0.0
        for p, acc in accs.items():
            term = coef * rad[p]
            if term.size:
                contrib = max(contrib, float(np.max(np.abs(term))) / (1.0 if p == "value" else max(c, 1.0)))
            acc.add(term * cosm)
        return contrib

    ratio = 0.0
    if point:
        xi_ref = float(max(np.max(xi), source.xi0))
        ratio = _xi_ratio(system, xi, source.xi0)
    else:
        xi_ref = float(np.max(xi))
    st = _mode_loop(c, policy, xi_ref, _source_axial(source), visit, ratio)
    out = [accs[p].value for p in parts]
    if not st.converged:
        raise TruncationError(
            f"incident expansion did not converge: {st.reason}", partial=out[0], tail=st.tail,
            truncation=(st.m_last, st.n_last.get(st.m_last)),
        )
    return out if len(out) > 1 else out[0]


def expand_plane_wave(g: Geometry, k: float, theta0: float, points, policy: TruncationPolicy | None = None,
                      phi0: float = 0.0, provider: ModeProvider | None = None):
    """Truncated spheroidal expansion of ``exp(i k d.r)`` at ``points``."""
    eta, xi, phi = _as_spheroidal(g, points)
    out = _expand(g, k, PlaneWave(theta0, phi0), eta, xi, phi, policy or TruncationPolicy(), provider)
    return complex(out[0]) if isinstance(points, SpheroidalPoint) else out


def expand_point_source(g: Geometry, k: float, eta0: float, xi0: float, points,
                        policy: TruncationPolicy | None = None, phi0: float = 0.0,
                        provider: ModeProvider | None = None):
    """Truncated spheroidal expansion of ``exp(i k R) / (4 pi R)`` at ``points``."""
    eta, xi, phi = _as_spheroidal(g, points)
    out = _expand(g, k, PointSource(eta0, xi0, phi0), eta, xi, phi, policy or TruncationPolicy(), provider)
    return complex(out[0]) if isinstance(points, SpheroidalPoint) else out


# -- scattering -----------------------------------------------------------
@dataclass(frozen=True)
class ModeTerm:
    """One retained mode.  ``a`` and ``B`` multiply the unit-norm angle function
    ``S_mn / sqrt(N_mn)``; :attr:`B_flammer` is the coefficient of ``S_mn`` itself."""

    m: int
    n: int
    coeffs: ModeCoefficients
    a: complex  # incident coefficient on the surface
    B: complex
    F: complex

    @property
    def A(self) -> complex:
        return 0j

    @property
    def B_flammer(self) -> complex:
        return self.B / math.sqrt(self.coeffs.n_mn)


@dataclass
class WaveCoefficients:
    """Scattering coefficients ``A_mn = 0`` and ``B_mn`` of a solved problem."""

    problem: ScatteringProblem
    terms: list
    converged: bool
    tail_estimate: float
    note: str = ""

    @property
    def B(self) -> dict:
        """``B_mn`` as the coefficient of ``S_mn R3_mn cos m(phi - phi0)``."""
        return {(t.m, t.n): t.B_flammer for t in self.terms}

    @property
    def A(self) -> dict:
        return {(t.m, t.n): 0j for t in self.terms}

    @property
    def m_max(self) -> int:
        return max((t.m for t in self.terms), default=-1)

    def n_max(self, m: int) -> int:
        return max((t.n for t in self.terms if t.m == m), default=-1)


def _surface_coefficient(problem: ScatteringProblem, co: ModeCoefficients, s0: float) -> complex:
    m, n = co.m, co.n
    src = problem.source
    if isinstance(src, PlaneWave):
        return 2.0 * neumann_factor(m) * (1j ** (n % 4)) * s0
    r1, _, r2, _ = (float(v[0]) for v in co.radial.evaluate(np.array([src.xi0]))[:4])
    return 1j * problem.k / (2 * np.pi) * neumann_factor(m) * s0 * complex(r1, r2)


def solve_scattering(problem: ScatteringProblem, provider: ModeProvider | None = None) -> WaveCoefficients:
    """Scattering coefficients for every retained mode.

    Truncation is judged on an eta-sample of the surface.  If user-imposed
    limits stop the sums early the result is returned with
    ``converged = False`` and a warning rather than an exception, so that
    deliberately truncated runs can still be inspected.
    """
    provider = provider or _DEFAULT
    g = problem.geometry.canonical()
    c, xi1 = problem.c, float(problem.xi1)
    eta_s, _ = np.polynomial.legendre.leggauss(SURFACE_SAMPLE)
    terms = []
    surf_cache: dict = {}
    angle_at = _AngleAt(problem.source.eta0)

    def visit(m, n):
        co = provider.get(g.system, c, m, n)
        s0 = angle_at(co)
        if s0 == 0.0:
            return 0.0
        r1, r1p, r2, r2p = (float(v[0]) for v in co.radial.evaluate(np.array([xi1]))[:4])
        r3, r3p = complex(r1, r2), complex(r1p, r2p)
        F = boundary_factor(problem.bc, r1, r1p, r3, r3p, mode=(g.system.value, c, m, n))
        a = _surface_coefficient(problem, co, s0)
        B = -a * F
        if not (np.isfinite(B) and np.isfinite(r3)):
            raise AccuracyError("scattering coefficient overflowed; the source is too close to the surface",
                                mode=co.key)
        terms.append(ModeTerm(m, n, co, a, B, F))
        rows = surf_cache.get(m)
        if rows is None:
            surf_cache.clear()
            rows = surf_cache[m] = _AngleRows(m, eta_s, False)
        smax = float(np.max(np.abs(rows.values(co)[0])))
        return smax * abs(a) * max(abs(r1) + abs(F * r3), (abs(r1p) + abs(F * r3p)) / max(c, 1.0))

    st = _mode_loop(c, problem.truncation, xi1, _source_axial(problem.source), visit)
    provider.flush()
    if not st.converged:
        warnings.warn(f"scattering series truncated before convergence ({st.reason}); "
                      f"tail estimate {st.tail:.1e}", RuntimeWarning, stacklevel=2)
    return WaveCoefficients(problem, terms, st.converged, st.tail, st.reason)


# -- field evaluation -----------------------------------------------------
def _check_outside(problem: ScatteringProblem, xi):
    tol = 1e-10 * max(1.0, problem.xi1)
    if np.any(xi < problem.xi1 - tol):
        raise DomainError("field requested strictly inside the scatterer")


def _scattered(problem: ScatteringProblem, wc: WaveCoefficients, eta, xi, phi, parts=("value",)):
    out = {p: np.empty(eta.size, dtype=complex) for p in parts}
    c = problem.c
    phi0 = problem.source.phi0
    by_m: dict = {}
    for t in wc.terms:
        by_m.setdefault(t.m, []).append(t)
    for lo in range(0, eta.size, CHUNK):
        sl = slice(lo, lo + CHUNK)
        e, x, p = eta[sl], xi[sl], phi[sl]
        accs = {q: _Accumulator(e.size) for q in parts}
        radial = _Radial(c, x)
        for m, items in sorted(by_m.items()):
            rows = _AngleRows(m, e, False)
            cosm = np.cos(m * (p - phi0))
            for t in items:
                s, _ = rows.values(t.coeffs)
                r1, r1p, r2, r2p = radial.values(t.coeffs)
                w = t.B * s * cosm
                if "value" in accs:
                    accs["value"].add(w * (r1 + 1j * r2))
                if "xi" in accs:
                    accs["xi"].add(w * (r1p + 1j * r2p))
        for q in parts:
            out[q][sl] = accs[q].value
    return [out[q] for q in parts]


def _incident_series(problem: ScatteringProblem, eta, xi, phi, parts, provider):
    policy = TruncationPolicy(rel_tol=problem.truncation.rel_tol,
                              consecutive_small=problem.truncation.consecutive_small)
    out = _expand(problem.geometry, problem.k, problem.source, eta, xi, phi, policy, provider, parts)
    return out if len(parts) > 1 else [out]


def _incident_exact_parts(problem: ScatteringProblem, eta, xi, phi, parts):
    g = problem.geometry
    out = []
    for p in parts:
        if p == "value":
            cart = np.stack([np.atleast_1d(v) for v in to_cartesian(g.canonical(), eta, xi, phi)], axis=1)
            out.append(incident_exact(problem.source, problem.k, cart, g))
        else:
            out.append(incident_exact_xi_derivative(problem.source, problem.k, g, eta, xi, phi))
    return out


def _field_parts(problem, coeffs, points, which, incident, provider, parts):
    which = Which(which)
    eta, xi, phi = _as_spheroidal(problem.geometry, points)
    if which is not Which.INCIDENT or incident != "exact":
        # the closed-form incident field is defined inside the body too
        _check_outside(problem, xi)
    inc = sca = None
    if which in (Which.SCATTERED, Which.TOTAL):
        sca = _scattered(problem, coeffs, eta, xi, phi, parts)
    if which in (Which.INCIDENT, Which.TOTAL):
        if incident == "series":
            inc = _incident_series(problem, eta, xi, phi, parts, provider)
        elif incident == "exact":
            inc = _incident_exact_parts(problem, eta, xi, phi, parts)
        else:
            raise ValueError("incident must be 'exact' or 'series'")
    return inc, sca


def eval_field(problem: ScatteringProblem, coeffs: WaveCoefficients, points, which=Which.TOTAL,
               incident: str = "exact", provider: ModeProvider | None = None) -> np.ndarray:
    """Field values at ``points`` (Cartesian (N, 3) array or SpheroidalPoints), in input order.

    ``incident="exact"`` uses the closed form for the incident part,
    ``"series"`` the spheroidal expansion.
    """
    inc, sca = _field_parts(problem, coeffs, points, which, incident, provider, ("value",))
    return sum(v[0] for v in (inc, sca) if v is not None)


def eval_field_xi_derivative(problem: ScatteringProblem, coeffs: WaveCoefficients, points, which=Which.TOTAL,
                             incident: str = "series", provider: ModeProvider | None = None) -> np.ndarray:
    """``dV/dxi`` at surface (or exterior) points; same conventions as :func:`eval_field`."""
    inc, sca = _field_parts(problem, coeffs, points, which, incident, provider, ("xi",))
    return sum(v[0] for v in (inc, sca) if v is not None)


# -- residuals ------------------------------------------------------------
@dataclass(frozen=True)
class ResidualReport:
    residual: float
    scale: float
    points: int
    converged: bool


def boundary_residual(problem: ScatteringProblem, coeffs: WaveCoefficients, n_eta: int = 64, n_phi: int = 16,
                      incident: str = "series", provider: ModeProvider | None = None) -> ResidualReport:
    """Normalised boundary-condition residual on a Gauss x uniform surface grid.

    soft ``max|V| / max|V_inc|``; hard ``max|dV/dxi| / max|dV_inc/dxi|``;
    Robin ``max|V + alpha dV/dxi| / (max|V_inc| + |alpha| max|dV_inc/dxi|)``.
    """
    pts, _ = surface_grid(problem.geometry, problem.xi1, n_eta, n_phi)
    (iv, ix), (sv, sx) = _field_parts(problem, coeffs, pts, Which.TOTAL, incident, provider, ("value", "xi"))
    bc = problem.bc
    if isinstance(bc, Robin) and bc.alpha == 0:
        bc = Soft()
    if isinstance(bc, Soft):
        num, scale = np.max(np.abs(iv + sv)), np.max(np.abs(iv))
    elif isinstance(bc, Hard):
        num, scale = np.max(np.abs(ix + sx)), np.max(np.abs(ix))
    else:
        alpha = complex(bc.alpha)
        num = np.max(np.abs(iv + sv + alpha * (ix + sx)))
        scale = np.max(np.abs(iv)) + abs(alpha) * np.max(np.abs(ix))
    return ResidualReport(float(num / scale), float(scale), len(pts), coeffs.converged)


# -- azimuthal frame ------------------------------------------------------
@dataclass(frozen=True)
class ZRotation:
    """Rotation by ``angle`` about the z axis (the symmetry axis)."""

    angle: float

    def apply(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ca, sa = math.cos(self.angle), math.sin(self.angle)
        x, y = pts[:, 0], pts[:, 1]
        return np.stack([ca * x - sa * y, sa * x + ca * y, pts[:, 2]], axis=1)

    def apply_source(self, source: IncidentSource) -> IncidentSource:
        phi0 = float(np.mod(source.phi0 + self.angle, 2 * np.pi))
        if isinstance(source, PlaneWave):
            return PlaneWave(source.theta0, phi0)
        return PointSource(source.eta0, source.xi0, phi0)

    def inverse(self) -> "ZRotation":
        return ZRotation(-self.angle)


def to_canonical_frame(points, source: IncidentSource):
    """Rotate points and source so that the source sits at ``phi0 = 0``; returns the rotation used."""
    rot = ZRotation(-source.phi0)
    return rot.apply(points), rot.apply_source(source), rot


def rotate_frame(theta_phi: float) -> ZRotation:
    """Rotation about the symmetry axis by ``theta_phi`` radians."""
    return ZRotation(float(theta_phi))

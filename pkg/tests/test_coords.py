import math

import numpy as np
import pytest

from spheroscat import DomainError, Geometry, Kind, SpheroidalPoint, from_cartesian, to_cartesian
from spheroscat.coords import check_surface, point_from_cartesian, surface_grid, xi_jacobian


@pytest.mark.parametrize("kind", [Kind.PROLATE, Kind.OBLATE])
def test_round_trip(kind, rng):
    g = Geometry(kind, 1.7)
    lo = 1.0 if kind is Kind.PROLATE else 0.0
    eta = rng.uniform(-1, 1, 500)
    xi = rng.uniform(lo, lo + 4, 500)
    phi = rng.uniform(0, 2 * math.pi, 500)
    e2, x2, p2 = from_cartesian(g, *to_cartesian(g, eta, xi, phi))
    assert np.allclose(e2, eta, atol=1e-10)
    assert np.allclose(x2, xi, atol=1e-10)
    assert np.allclose(np.cos(p2), np.cos(phi), atol=1e-12)


def test_prolate_surface_is_ellipsoid():
    g = Geometry(Kind.PROLATE, 2.0)
    eta = np.linspace(-1, 1, 41)
    x, y, z = to_cartesian(g, eta, 1.5, 0.7)
    semi_z, semi_r = 2.0 * 1.5, 2.0 * math.sqrt(1.5 ** 2 - 1)
    assert np.allclose((x ** 2 + y ** 2) / semi_r ** 2 + z ** 2 / semi_z ** 2, 1.0)


def test_oblate_surface_is_ellipsoid():
    g = Geometry(Kind.OBLATE, 1.0)
    eta = np.linspace(-1, 1, 41)
    x, y, z = to_cartesian(g, eta, 0.5, 0.0)
    assert np.allclose(x ** 2 / 1.25 + z ** 2 / 0.25, 1.0)


def test_disk_is_oblate_at_zero():
    g = Geometry(Kind.DISK, 1.0)
    assert g.canonical() == Geometry(Kind.OBLATE, 1.0)
    x, y, z = to_cartesian(g, 0.6, 0.0, 0.0)
    assert z == 0.0 and x == pytest.approx(0.8)


def test_conventions_on_axis_and_plane():
    g = Geometry(Kind.OBLATE, 1.0)
    eta, xi, phi = from_cartesian(g, 0.0, 0.0, 2.0)
    assert phi == 0.0 and eta == 1.0 and xi == pytest.approx(2.0)
    eta, xi, phi = from_cartesian(g, 0.5, 0.0, 0.0)
    assert eta == pytest.approx(math.sqrt(0.75)) and xi == 0.0
    eta, _, _ = from_cartesian(g, 0.5, 0.0, -0.0)
    assert math.copysign(1.0, eta) == 1.0
    p = point_from_cartesian(Geometry(Kind.PROLATE, 1.0), 0.0, -1.0, 0.0)
    assert p.phi == pytest.approx(1.5 * math.pi)


def test_from_cartesian_no_cancellation_near_focal_ring():
    g = Geometry(Kind.OBLATE, 1.0)
    eta, xi, _ = from_cartesian(g, 1.0 + 1e-9, 0.0, 1e-9)
    x, _, z = to_cartesian(g, eta, xi, 0.0)
    assert x == pytest.approx(1.0 + 1e-9, rel=1e-14)
    assert z == pytest.approx(1e-9, rel=1e-6)


def test_point_validation():
    with pytest.raises(DomainError):
        SpheroidalPoint(1.5, 2.0)
    with pytest.raises(DomainError):
        SpheroidalPoint(0.0, -0.1)
    assert SpheroidalPoint(0.0, 1.0, -0.5).phi == pytest.approx(2 * math.pi - 0.5)
    with pytest.raises(DomainError):
        SpheroidalPoint(0.0, 0.5).validate_for(Kind.PROLATE)
    with pytest.raises(DomainError):
        Geometry(Kind.PROLATE, 0.0)


def test_surface_checks():
    check_surface(Geometry(Kind.DISK), 0.0)
    with pytest.raises(DomainError):
        check_surface(Geometry(Kind.DISK), 0.1)
    with pytest.raises(DomainError):
        check_surface(Geometry(Kind.PROLATE), 0.9)
    with pytest.raises(DomainError):
        check_surface(Geometry(Kind.OBLATE), -0.1)


def test_surface_grid_weights_integrate_area_element():
    pts, w = surface_grid(Geometry(Kind.PROLATE), 1.5, 16, 8)
    assert len(pts) == 128
    assert w.sum() == pytest.approx(4 * math.pi)
    assert all(p.xi == 1.5 for p in pts)


def test_xi_jacobian_matches_finite_difference():
    g = Geometry(Kind.PROLATE, 1.3)
    eta, xi, phi, h = 0.3, 2.0, 0.9, 1e-6
    fd = (np.array(to_cartesian(g, eta, xi + h, phi)) - np.array(to_cartesian(g, eta, xi - h, phi))) / (2 * h)
    assert np.allclose(np.array(xi_jacobian(g, eta, xi, phi), dtype=float), fd, atol=1e-8)

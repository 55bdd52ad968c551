"""Command-line interface: field grids, boundary validation, cache precomputation, mode tables.

Exit codes: 0 success, 1 validation failed, 2 usage error, 3 numerical
failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import ast
import math
import operator
import os
import sys
import time
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import cache
from .coords import Geometry, Kind, from_cartesian
from .errors import ConvergenceError, DomainError, ResonanceError, SpheroscatError
from .fields import (
    Hard,
    ModeProvider,
    PlaneWave,
    PointSource,
    Robin,
    ScatteringProblem,
    Soft,
    TruncationPolicy,
    Which,
    boundary_residual,
    eval_field,
    solve_scattering,
)
from .specfun import solve_mode

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

CACHE_ENV = "SPHEROSCAT_CACHE_DIR"
DEFAULT_XI1 = {Kind.PROLATE: 1.5, Kind.OBLATE: 0.5, Kind.DISK: 0.0}
WINDOW_WAVELENGTHS = 2.0


class UsageError(SpheroscatError):
    pass


# -- argument parsing helpers ---------------------------------------------
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def parse_number(text: str) -> float:
    """A float or a small arithmetic expression in ``pi`` such as ``2*pi/3``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        raise ValueError

    try:
        return float(ev(ast.parse(text.strip(), mode="eval")))
    except (SyntaxError, ValueError, ZeroDivisionError, TypeError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


@dataclass(frozen=True)
class RunConfig:
    kind: Kind
    k: float
    a: float = 1.0
    xi1: float | None = None
    bc: str = "soft"
    alpha: float = 1.0
    source: str = "plane"
    theta0: float = math.pi
    phi0: float = 0.0
    eta0: float = 0.3
    xi0: float | None = None
    which: Which = Which.TOTAL
    rel_tol: float = 1e-8
    max_m: int | None = None
    max_n_excess: int | None = None
    cache_dir: str | None = None

    @property
    def surface(self) -> float:
        return DEFAULT_XI1[self.kind] if self.xi1 is None else self.xi1

    def label(self) -> str:
        bc = f"robin(alpha={self.alpha:g})" if self.bc == "robin" else self.bc
        return f"{self.kind.value}/{bc}/{self.source}"

    def problem(self) -> ScatteringProblem:
        g = Geometry(self.kind, self.a)
        bc = {"soft": Soft(), "hard": Hard()}.get(self.bc)
        if bc is None:
            bc = Robin(self.alpha)
        if self.source == "plane":
            src = PlaneWave(self.theta0, self.phi0)
        else:
            xi0 = self.surface + 2.0 if self.xi0 is None else self.xi0
            src = PointSource(self.eta0, xi0, self.phi0)
        policy = TruncationPolicy(self.rel_tol, self.max_m, self.max_n_excess)
        return ScatteringProblem(g, self.surface, self.k, bc, src, policy)


def _config(ns) -> RunConfig:
    return RunConfig(
        kind=Kind(ns.kind), k=ns.k, a=ns.a, xi1=ns.xi1, bc=ns.bc, alpha=ns.alpha, source=ns.source,
        theta0=ns.theta0, phi0=ns.phi0, eta0=ns.eta0, xi0=ns.xi0, which=Which(ns.which), rel_tol=ns.rel_tol,
        max_m=ns.max_m, max_n_excess=ns.max_n_excess, cache_dir=ns.cache_dir,
    )


def _provider(cache_dir) -> ModeProvider:
    return ModeProvider(cache_dir) if cache_dir else ModeProvider()


# -- grids ----------------------------------------------------------------
_PLANE_AXES = {"xz": (0, 2, 1), "yz": (1, 2, 0), "xy": (0, 1, 2)}


@dataclass(frozen=True)
class GridSpec:
    plane: str = "xz"
    offset: float = 0.0
    extents: tuple | None = None  # (u_min, u_max, v_min, v_max)
    resolution: tuple = (101, 101)
    points_file: str | None = None

    def __post_init__(self):
        if self.points_file is None:
            if self.plane not in _PLANE_AXES:
                raise UsageError(f"unknown plane {self.plane!r}")
            if min(self.resolution) < 2:
                raise UsageError("grid resolution must be >= 2 per axis")
            if self.extents is not None:
                u0, u1, v0, v1 = self.extents
                if not (u0 < u1 and v0 < v1):
                    raise UsageError("grid extents must be ordered (min < max)")

    def with_default_window(self, cfg: RunConfig) -> "GridSpec":
        """Body cross-section plus ``WINDOW_WAVELENGTHS`` wavelengths on every side."""
        if self.extents is not None or self.points_file is not None:
            return self
        axial, equatorial = body_semi_axes(cfg)
        pad = WINDOW_WAVELENGTHS * 2 * math.pi / cfg.k
        half = {0: equatorial + pad, 1: equatorial + pad, 2: axial + pad}
        iu, iv, _ = _PLANE_AXES[self.plane]
        return replace(self, extents=(-half[iu], half[iu], -half[iv], half[iv]))

    def points(self) -> np.ndarray:
        if self.points_file is not None:
            return read_points(self.points_file)
        iu, iv, iw = _PLANE_AXES[self.plane]
        nu, nv = self.resolution
        u = np.linspace(self.extents[0], self.extents[1], nu)
        v = np.linspace(self.extents[2], self.extents[3], nv)
        uu, vv = np.meshgrid(u, v)
        pts = np.empty((nu * nv, 3))
        pts[:, iu] = uu.ravel()
        pts[:, iv] = vv.ravel()
        pts[:, iw] = self.offset
        return pts


def body_semi_axes(cfg: RunConfig):
    """``(axial, equatorial)`` semi-axes of the scatterer."""
    xi1, a = cfg.surface, cfg.a
    if cfg.kind is Kind.PROLATE:
        return a * xi1, a * math.sqrt(xi1 * xi1 - 1.0)
    return a * xi1, a * math.sqrt(xi1 * xi1 + 1.0)


def read_points(path) -> np.ndarray:
    try:
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line[0].isalpha():
                    continue
                rows.append([float(v) for v in line.replace(",", " ").split()[:3]])
    except ValueError as exc:
        raise UsageError(f"{path}: malformed point row ({exc})") from None
    if not rows or any(len(r) != 3 for r in rows):
        raise UsageError(f"{path}: expected rows of x,y,z")
    return np.array(rows)


def inside_mask(cfg: RunConfig, pts: np.ndarray) -> np.ndarray:
    """Points strictly inside the body (or on the disk itself)."""
    g = Geometry(cfg.kind, cfg.a).canonical()
    _, xi, _ = from_cartesian(g, pts[:, 0], pts[:, 1], pts[:, 2])
    xi1 = cfg.surface
    if cfg.kind is Kind.DISK:
        return xi <= 1e-12
    return xi < xi1 - 1e-10 * max(1.0, xi1)


# -- output ---------------------------------------------------------------
def format_csv(pts: np.ndarray, values: np.ndarray) -> str:
    lines = ["x,y,z,re,im"]
    for (x, y, z), v in zip(pts.tolist(), values.tolist()):
        lines.append(f"{x:.17g},{y:.17g},{z:.17g},{v.real:.17g},{v.imag:.17g}")
    return "\n".join(lines) + "\n"


def write_pgm(path, image: np.ndarray, mask: np.ndarray) -> None:
    """8-bit binary PGM; masked pixels black, data scaled to 1..255; row 0 is the top."""
    img = np.asarray(image, dtype=float)
    ok = ~mask & np.isfinite(img)
    pix = np.zeros(img.shape, dtype=np.uint8)
    if np.any(ok):
        lo, hi = float(np.min(img[ok])), float(np.max(img[ok]))
        span = hi - lo if hi > lo else 1.0
        pix[ok] = (1 + np.round(254 * (img[ok] - lo) / span)).astype(np.uint8)
    pix = pix[::-1]
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


PLOT_SCRIPT = '''"""Plot a field grid written by ``spheroscat field``; needs numpy and matplotlib."""
import sys

import matplotlib.pyplot as plt
import numpy as np

data = np.genfromtxt({csv!r} if len(sys.argv) < 2 else sys.argv[1], delimiter=",", names=True)
nu, nv = {nu}, {nv}
u = data[{u!r}].reshape(nv, nu)
v = data[{v!r}].reshape(nv, nu)
val = data["re"] + 1j * data["im"]
img = np.abs(val) if {quantity!r} == "abs" else val.real
plt.pcolormesh(u, v, img.reshape(nv, nu), shading="auto", cmap="gray")
plt.gca().set_aspect("equal")
plt.xlabel({u!r})
plt.ylabel({v!r})
plt.colorbar(label={label!r})
plt.savefig({png!r}, dpi=150)
'''


def write_plot_script(path, csv_path, grid: GridSpec, quantity: str) -> None:
    names = "xyz"
    iu, iv, _ = _PLANE_AXES[grid.plane]
    text = PLOT_SCRIPT.format(
        csv=str(csv_path), nu=grid.resolution[0], nv=grid.resolution[1], u=names[iu], v=names[iv],
        quantity=quantity, label="|V|" if quantity == "abs" else "Re V", png=str(Path(path).with_suffix(".png")),
    )
    Path(path).write_text(text)


# -- commands -------------------------------------------------------------
def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def cmd_field(ns) -> int:
    cfg = _config(ns)
    problem = cfg.problem()
    grid = GridSpec(ns.plane, ns.offset, tuple(ns.extent) if ns.extent else None, tuple(ns.res), ns.points)
    grid = grid.with_default_window(cfg)
    pts = grid.points()
    t0 = time.perf_counter()
    provider = _provider(cfg.cache_dir)
    inside = inside_mask(cfg, pts)
    masked = inside if cfg.which is not Which.INCIDENT else np.zeros(len(pts), dtype=bool)
    values = np.full(len(pts), complex(np.nan, np.nan))
    wc = None
    if cfg.which is not Which.INCIDENT:
        wc = solve_scattering(problem, provider)
    if np.any(~masked):
        values[~masked] = eval_field(problem, wc, pts[~masked], cfg.which, incident="exact", provider=provider)
    text = format_csv(pts, values)
    if ns.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(ns.out).write_text(text)
    if np.any(masked):
        _log(f"masked {int(masked.sum())} of {len(pts)} points inside the scatterer (written as nan)")
    if ns.heatmap:
        if grid.points_file is not None:
            raise UsageError("--heatmap needs a plane grid, not a point file")
        nu, nv = grid.resolution
        img = np.abs(values) if ns.quantity == "abs" else values.real
        write_pgm(ns.heatmap, img.reshape(nv, nu), inside.reshape(nv, nu))
        if ns.out not in (None, "-"):
            write_plot_script(Path(ns.heatmap).with_suffix(".py"), ns.out, grid, ns.quantity)
    terms = 0 if wc is None else len(wc.terms)
    _log(f"{cfg.label()} c={problem.c:g}: {len(pts)} points, {terms} modes, {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def _oracle_checks(problem: ScatteringProblem, wc, provider) -> list:
    from .oracle import OracleReport, eigenvalue_oracle, ode_wronskian

    kind = problem.system
    c = problem.c
    lo = max(problem.xi1, 1.1) if kind is Kind.PROLATE else max(problem.xi1, 1.0)
    # ODE integration is only well conditioned for both solutions where they oscillate
    reach = max(1, min(wc.m_max, int(c * lo / 2)))
    picks = sorted({(0, 0), (1, 2), (reach, reach), (0, 2 * reach)})
    reports = []
    for m, n in picks:
        co = provider.get(kind, c, m, n)
        ref = eigenvalue_oracle(kind, c, m, n, truncation=max(200, (n - m) // 2 + 120))
        reports.append(OracleReport.compare(f"lambda({m},{n})", co.lam, ref, 1e-10))
        _, w = ode_wronskian(kind, c, co, (lo, lo + 2.0))
        reports.append(OracleReport.compare(f"wronskian({m},{n})", float(w[np.argmax(np.abs(w - 1))]), 1.0, 1e-8))
    return reports


def run_validate(cfg: RunConfig, n_eta: int = 64, n_phi: int = 16, provider=None):
    """``(report, coefficients)`` for one scenario."""
    problem = cfg.problem()
    provider = provider or _provider(cfg.cache_dir)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        wc = solve_scattering(problem, provider)
    return boundary_residual(problem, wc, n_eta, n_phi, provider=provider), wc


def cmd_validate(ns) -> int:
    cfg = _config(ns)
    provider = _provider(cfg.cache_dir)
    t0 = time.perf_counter()
    rep, wc = run_validate(cfg, ns.n_eta, ns.n_phi, provider)
    ok = bool(rep.residual <= ns.threshold)
    print(f"{cfg.label()} c={cfg.k * cfg.a:g} xi1={cfg.surface:g}: residual {rep.residual:.3e} "
          f"(threshold {ns.threshold:.0e}) over {rep.points} surface points, {len(wc.terms)} modes, "
          f"series {'converged' if wc.converged else 'TRUNCATED: ' + wc.note}, "
          f"{time.perf_counter() - t0:.1f} s -> {'PASS' if ok else 'FAIL'}")
    if ns.oracle:
        for r in _oracle_checks(cfg.problem(), wc, provider):
            print(r.line())
            ok = ok and r.passed
    return EXIT_OK if ok else EXIT_FAILED


def scenarios(k: float = 10.0, a: float = 1.0, alphas=(0.5, 1.0, 2.0), theta0: float = 2 * math.pi / 3,
              eta0: float = 0.3, **overrides):
    """The geometry x boundary condition x source matrix (Robin once per alpha)."""
    out = []
    for kind in (Kind.PROLATE, Kind.OBLATE, Kind.DISK):
        for bc in ("soft", "hard", "robin"):
            for alpha in (alphas if bc == "robin" else (1.0,)):
                for source in ("plane", "point"):
                    out.append(RunConfig(kind, k, a, bc=bc, alpha=alpha, source=source, theta0=theta0,
                                         eta0=eta0, **overrides))
    return out


def cmd_sweep(ns) -> int:
    alphas = tuple(ns.alphas)
    worst, failed = 0.0, 0
    t_all = time.perf_counter()
    cfgs = scenarios(ns.k, ns.a, alphas, ns.theta0, ns.eta0, rel_tol=ns.rel_tol, cache_dir=ns.cache_dir)
    # scenarios on the same coordinate system reuse each other's modes
    provider = _provider(ns.cache_dir)
    for cfg in cfgs:
        t0 = time.perf_counter()
        rep, wc = run_validate(cfg, ns.n_eta, ns.n_phi, provider)
        ok = rep.residual <= ns.threshold
        failed += not ok
        worst = max(worst, rep.residual)
        print(f"{'PASS' if ok else 'FAIL'} {cfg.label():32s} residual {rep.residual:.3e} "
              f"modes {len(wc.terms):5d} {time.perf_counter() - t0:6.1f} s", flush=True)
    print(f"{len(cfgs) - failed}/{len(cfgs)} scenarios pass, worst residual {worst:.3e}, "
          f"total {time.perf_counter() - t_all:.1f} s")
    return EXIT_OK if failed == 0 else EXIT_FAILED


def cmd_precompute(ns) -> int:
    kind = Kind(ns.kind).spheroidal
    c = float(ns.c)
    if ns.max_m < 0 or ns.max_n_excess < 0 or not c > 0:
        raise UsageError("need c > 0, max-m >= 0 and max-n-excess >= 0")
    directory = ns.cache_dir
    if not directory:
        raise UsageError(f"precompute needs --cache-dir or ${CACHE_ENV}")
    have = cache.load_all(directory, kind, c)
    new = failed = 0
    failures = []
    t0 = time.perf_counter()
    for m in range(ns.max_m + 1):
        batch = []
        for n in range(m, m + ns.max_n_excess + 1):
            if (m, n) in have:
                continue
            try:
                batch.append(solve_mode(kind, c, m, n))
            except SpheroscatError as exc:
                failed += 1
                failures.append(f"  m={m} n={n}: {exc}")
        if batch:
            cache.store_many(directory, batch)
            new += len(batch)
        _log(f"m={m}: {len(batch)} new, {time.perf_counter() - t0:.1f} s")
    total = (ns.max_m + 1) * (ns.max_n_excess + 1)
    print(f"{kind.value} c={c:g}: {new} modes stored, {total - new - failed} already cached, {failed} failed")
    for line in failures:
        print(line)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_modes(ns) -> int:
    from .specfun import angle_s1, norm_nmn, radial, radial_at_disk

    kind = Kind(ns.kind).spheroidal
    co = solve_mode(kind, ns.c, ns.m, ns.n)
    print(f"{kind.value} c={ns.c:g} m={ns.m} n={ns.n}")
    print(f"lambda {co.lam:.17g}")
    print(f"N_mn {norm_nmn(co) if math.isfinite(co.n_mn) else co.n_mn:.17g}")
    print("eta,S,dS")
    for eta in ns.eta:
        s, sp = angle_s1(co, eta)
        print(f"{eta:.17g},{s:.17g},{sp:.17g}")
    if ns.c == 0:
        print("radial functions are not defined at c = 0")
        return EXIT_OK
    print("xi,R1,dR1,R2,dR2,wronskian_residual")
    for xi in ns.xi:
        if kind is Kind.OBLATE and xi == 0.0:
            ev = radial_at_disk(co)
        else:
            ev = radial(co, xi)
        print(f"{xi:.17g},{ev.r1.real:.17g},{ev.r1p.real:.17g},{ev.r2.real:.17g},{ev.r2p.real:.17g},"
              f"{ev.wronskian_residual:.3e}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------
def _add_problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=[k.value for k in Kind], required=True)
    p.add_argument("--k", type=parse_number, required=True, help="wavenumber")
    p.add_argument("--a", type=parse_number, default=1.0, help="focal half-distance")
    p.add_argument("--xi1", type=parse_number, default=None,
                   help="surface coordinate (default 1.5 prolate, 0.5 oblate, 0 disk)")
    p.add_argument("--bc", choices=["soft", "hard", "robin"], default="soft")
    p.add_argument("--alpha", type=parse_number, default=1.0, help="Robin coefficient in V + alpha dV/dxi = 0")
    p.add_argument("--source", choices=["plane", "point"], default="plane")
    p.add_argument("--theta0", type=parse_number, default=math.pi, help="plane-wave polar angle (accepts pi)")
    p.add_argument("--phi0", type=parse_number, default=0.0, help="source azimuth")
    p.add_argument("--eta0", type=parse_number, default=0.3, help="point-source eta")
    p.add_argument("--xi0", type=parse_number, default=None, help="point-source xi (default xi1 + 2)")
    p.add_argument("--which", choices=[w.value for w in Which], default="total")
    _add_truncation_args(p)


def _add_truncation_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rel-tol", type=float, default=1e-8)
    p.add_argument("--max-m", type=int, default=None)
    p.add_argument("--max-n-excess", type=int, default=None)
    p.add_argument("--cache-dir", default=os.environ.get(CACHE_ENV) or None,
                   help=f"coefficient cache directory (default ${CACHE_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spheroscat", description="Acoustic scattering by spheroids and disks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field", help="evaluate a field on a grid and write CSV (+ heatmap)")
    _add_problem_args(p)
    p.add_argument("--plane", choices=sorted(_PLANE_AXES), default="xz")
    p.add_argument("--offset", type=parse_number, default=0.0, help="coordinate of the grid plane")
    p.add_argument("--extent", type=parse_number, nargs=4, metavar=("UMIN", "UMAX", "VMIN", "VMAX"),
                   help="grid window (default: body plus two wavelengths)")
    p.add_argument("--res", type=int, nargs=2, default=[101, 101], metavar=("NU", "NV"))
    p.add_argument("--points", default=None, help="CSV file of x,y,z points instead of a plane grid")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.add_argument("--heatmap", default=None, help="grayscale PGM output path")
    p.add_argument("--quantity", choices=["abs", "re"], default="abs")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("validate", help="boundary-condition residual on a surface grid")
    _add_problem_args(p)
    p.add_argument("--n-eta", type=int, default=64)
    p.add_argument("--n-phi", type=int, default=16)
    p.add_argument("--threshold", type=float, default=1e-6)
    p.add_argument("--oracle", action="store_true", help="also cross-check sample modes against the oracles")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="validate every geometry x boundary condition x source scenario")
    p.add_argument("--k", type=parse_number, default=10.0)
    p.add_argument("--a", type=parse_number, default=1.0)
    p.add_argument("--alphas", type=parse_number, nargs="+", default=[0.5, 1.0, 2.0])
    p.add_argument("--theta0", type=parse_number, default=2 * math.pi / 3)
    p.add_argument("--eta0", type=parse_number, default=0.3)
    p.add_argument("--n-eta", type=int, default=64)
    p.add_argument("--n-phi", type=int, default=16)
    p.add_argument("--threshold", type=float, default=1e-6)
    _add_truncation_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("precompute", help="fill the coefficient cache")
    p.add_argument("--kind", choices=[k.value for k in Kind], required=True)
    p.add_argument("--c", type=parse_number, required=True)
    p.add_argument("--max-m", type=int, default=20)
    p.add_argument("--max-n-excess", type=int, default=30, help="store n = m .. m + this")
    p.add_argument("--cache-dir", default=os.environ.get(CACHE_ENV) or None)
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("modes", help="tabulate one spheroidal mode")
    p.add_argument("--kind", choices=[k.value for k in Kind], required=True)
    p.add_argument("--c", type=parse_number, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--xi", type=parse_number, nargs="*", default=[])
    p.add_argument("--eta", type=parse_number, nargs="*", default=[])
    p.set_defaults(func=cmd_modes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (UsageError, DomainError) as exc:
        print(f"spheroscat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, ResonanceError) as exc:
        print(f"spheroscat: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, cache.CacheError) as exc:
        print(f"spheroscat: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

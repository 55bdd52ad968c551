"""On-disk store of precomputed mode coefficients.

One file per ``(kind, c)``: ``<dir>/<kind>_c<canonical c>.swf``.

Layout (little endian)::

    header   magic "SWFC" | u16 version | u8 kind | u8 len | canonical c (ascii)
             | f64 exact c | u32 record count
    record   u32 m | u32 n | f64 lambda | f64 N_mn | u32 truncation
             | f64 tail_bound | u32 len(d) | f64 * len(d) | u32 crc32(record bytes)

Files are replaced atomically (write to a temporary file, then rename), so a
reader sees either the old or the new file, never a torn one.
"""
from __future__ import annotations

import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coords import Kind
from .errors import SpheroscatError
from .specfun import ModeCoefficients

MAGIC = b"SWFC"
FORMAT_VERSION = 1
SUFFIX = ".swf"
_KIND_CODE = {Kind.PROLATE: 0, Kind.OBLATE: 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_HEAD = struct.Struct("<4sHBB")
_HEAD_TAIL = struct.Struct("<dI")
_REC = struct.Struct("<IIddIdI")
_CRC = struct.Struct("<I")


class CacheError(SpheroscatError):
    """Base class for cache failures (a miss is not an error)."""


class CacheIOError(CacheError, OSError):
    pass


class CacheVersionError(CacheError):
    pass


class CacheChecksumError(CacheError):
    pass


class CacheFormatError(CacheError):
    pass


def canonical_c(c: float) -> str:
    """``c`` rounded to 15 significant digits, as used in keys and file names."""
    return f"{float(c):.14e}"


@dataclass(frozen=True)
class CacheKey:
    kind: Kind
    c: float
    m: int
    n: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind).spheroidal)

    @property
    def canonical(self) -> str:
        return f"{self.kind.value}_c{canonical_c(self.c)}_m{self.m}_n{self.n}"

    @classmethod
    def of(cls, coeffs: ModeCoefficients) -> "CacheKey":
        return cls(coeffs.kind, coeffs.c, coeffs.m, coeffs.n)


def cache_path(directory, kind, c: float) -> Path:
    kind = Kind(kind).spheroidal
    return Path(directory) / f"{kind.value}_c{canonical_c(c)}{SUFFIX}"


def _encode_record(co: ModeCoefficients) -> bytes:
    d = np.ascontiguousarray(co.d, dtype="<f8")
    body = _REC.pack(co.m, co.n, co.lam, co.n_mn, co.truncation, co.tail_bound, d.size) + d.tobytes()
    return body + _CRC.pack(zlib.crc32(body))


def _encode(kind: Kind, c: float, records) -> bytes:
    canon = canonical_c(c).encode("ascii")
    parts = [_HEAD.pack(MAGIC, FORMAT_VERSION, _KIND_CODE[kind], len(canon)), canon]
    parts.append(_HEAD_TAIL.pack(c, len(records)))
    parts.extend(_encode_record(r) for r in records)
    return b"".join(parts)


def _decode(blob: bytes, path: Path):
    """``(kind, exact c, {(m, n): ModeCoefficients})`` from a file image."""
    try:
        magic, version, code, clen = _HEAD.unpack_from(blob, 0)
    except struct.error as exc:
        raise CacheFormatError(f"{path}: truncated header") from exc
    if magic != MAGIC:
        raise CacheFormatError(f"{path}: not a coefficient cache file")
    if version != FORMAT_VERSION:
        raise CacheVersionError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    if code not in _CODE_KIND:
        raise CacheFormatError(f"{path}: unknown kind code {code}")
    kind = _CODE_KIND[code]
    pos = _HEAD.size + clen
    try:
        c, count = _HEAD_TAIL.unpack_from(blob, pos)
    except struct.error as exc:
        raise CacheFormatError(f"{path}: truncated header") from exc
    if blob[_HEAD.size:pos].decode("ascii", "replace") != canonical_c(c):
        raise CacheChecksumError(f"{path}: header c does not match its canonical form")
    pos += _HEAD_TAIL.size
    records = {}
    for i in range(count):
        start = pos
        try:
            m, n, lam, n_mn, trunc, tail, nd = _REC.unpack_from(blob, pos)
            pos += _REC.size
            d = np.frombuffer(blob, dtype="<f8", count=nd, offset=pos).astype(float)
            pos += 8 * nd
            (crc,) = _CRC.unpack_from(blob, pos)
        except (struct.error, ValueError) as exc:
            raise CacheFormatError(f"{path}: record {i} truncated") from exc
        if zlib.crc32(blob[start:pos]) != crc:
            raise CacheChecksumError(f"{path}: checksum mismatch in record {i} (m={m}, n={n})")
        pos += _CRC.size
        records[(m, n)] = ModeCoefficients(kind, c, m, n, lam, d, n_mn, trunc, tail)
    if pos != len(blob):
        raise CacheFormatError(f"{path}: {len(blob) - pos} trailing bytes")
    return kind, c, records


def _read(path: Path):
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        return None
    except OSError as exc:
        raise CacheIOError(f"cannot read {path}: {exc}") from exc
    return _decode(blob, path)


def load_all(directory, kind, c: float) -> dict:
    """Every record stored for ``(kind, c)``; empty on a miss."""
    got = _read(cache_path(directory, kind, c))
    if got is None or got[1] != float(c):
        return {}
    return got[2]


def load(directory, key: CacheKey) -> ModeCoefficients | None:
    """Validated coefficients for ``key`` or ``None`` when absent."""
    return load_all(directory, key.kind, key.c).get((key.m, key.n))


def store_many(directory, coeffs_list) -> Path | None:
    """Insert or replace several records of one ``(kind, c)`` in a single rewrite."""
    coeffs_list = list(coeffs_list)
    if not coeffs_list:
        return None
    kind, c = coeffs_list[0].kind, coeffs_list[0].c
    if any(co.kind is not kind or co.c != c for co in coeffs_list):
        raise ValueError("store_many needs records of a single (kind, c)")
    directory = Path(directory)
    path = cache_path(directory, kind, c)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CacheIOError(f"cannot create {directory}: {exc}") from exc
    current = load_all(directory, kind, c)
    changed = False
    for co in coeffs_list:
        old = current.get((co.m, co.n))
        if old is None or not old.same_as(co):
            current[(co.m, co.n)] = co
            changed = True
    if not changed and path.exists():
        return path
    blob = _encode(kind, c, [current[k] for k in sorted(current)])
    _atomic_write(path, blob)
    return path


def store(directory, coeffs: ModeCoefficients) -> Path:
    """Persist one record; storing an identical record again changes nothing."""
    return store_many(directory, [coeffs])


def _atomic_write(path: Path, data: bytes) -> None:
    try:
        fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
    except OSError as exc:
        raise CacheIOError(f"cannot write {path}: {exc}") from exc


def export_text(directory, kind, c: float) -> Path:
    """Human-readable dump next to the binary file (``.txt``); for debugging."""
    path = cache_path(directory, kind, c)
    got = _read(path)
    if got is None:
        raise CacheIOError(f"no cache file {path}")
    kind, c, records = got
    lines = [f"# kind={kind.value} c={canonical_c(c)} exact_c={float(c)!r} records={len(records)}"]
    for (m, n), co in sorted(records.items()):
        lines.append(
            f"mode m={m} n={n} lambda={float(co.lam)!r} n_mn={float(co.n_mn)!r} "
            f"truncation={co.truncation} tail_bound={float(co.tail_bound)!r}"
        )
        lines.extend(f"  {float(v)!r}" for v in co.d)
    out = path.with_suffix(".txt")
    _atomic_write(out, ("\n".join(lines) + "\n").encode())
    return out


def read_text(path) -> dict:
    """Parse a text export back into coefficients (round-trips to the last bit)."""
    records, cur, header = {}, None, None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            fields = dict(tok.split("=", 1) for tok in line[1:].split())
            header = (Kind(fields["kind"]), float(fields["exact_c"]))
        elif line.startswith("mode"):
            if cur is not None:
                records[(cur["m"], cur["n"])] = cur
            f = dict(tok.split("=", 1) for tok in line.split()[1:])
            cur = {"m": int(f["m"]), "n": int(f["n"]), "lam": float(f["lambda"]), "n_mn": float(f["n_mn"]),
                   "truncation": int(f["truncation"]), "tail": float(f["tail_bound"]), "d": []}
        elif line.strip():
            cur["d"].append(float(line))
    if cur is not None:
        records[(cur["m"], cur["n"])] = cur
    if header is None:
        raise CacheFormatError(f"{path}: missing header line")
    kind, c = header
    return {
        k: ModeCoefficients(kind, c, r["m"], r["n"], r["lam"], np.array(r["d"]), r["n_mn"], r["truncation"], r["tail"])
        for k, r in records.items()
    }

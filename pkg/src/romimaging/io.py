"""File formats: velocity models, ROMD data, ROMP reduced models, image CSV/PGM.

Binary layouts are little-endian.  ROMD: ``b"ROMD"``, ``uint32`` version,
``uint32`` m, ``uint32`` 2n, ``float64`` tau, then ``2n`` row-major ``m x m``
float64 matrices.  ROMP: ``b"ROMP"``, ``uint32`` version, ``uint32`` m,
``uint32`` n, ``float64`` mu, then ``P`` (``mn x mn``) and ``B`` (``mn x m``).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .media import Grid2D, VelocityModel
from .propagate import SampledData
from .rom import ReducedModel

ROMD_MAGIC = b"ROMD"
ROMP_MAGIC = b"ROMP"
FORMAT_VERSION = 1

_ROMD_HEADER = struct.Struct("<4sIIId")
_ROMP_HEADER = struct.Struct("<4sIIId")


# -- velocity models ---------------------------------------------------------


def write_velocity_model(path, model, fmt="csv"):
    """Text header of ``key=value`` lines, ``END``, then row-major node values.

    ``fmt="csv"`` writes one depth row per line; ``"f64le"`` appends raw
    little-endian binary64 after the header.
    """
    if fmt not in ("csv", "f64le"):
        raise ValidationError(f"unknown velocity file format {fmt!r}")
    g = model.grid
    header = {
        "nx": g.nx,
        "ny": g.ny,
        "h": repr(g.h),
        "origin": f"{float(g.origin[0])!r},{float(g.origin[1])!r}",
        "unit": "m/s",
        "format": fmt,
        "boundary": ",".join(f"{k}:{v}" for k, v in sorted(model.boundary.items())),
    }
    text = "".join(f"{k}={v}\n" for k, v in header.items()) + "END\n"
    path = Path(path)
    if fmt == "csv":
        rows = "\n".join(",".join(repr(float(v)) for v in row) for row in model.c)
        path.write_text(text + rows + "\n")
    else:
        path.write_bytes(text.encode() + np.ascontiguousarray(model.c, dtype="<f8").tobytes())


def read_velocity_model(path):
    """Inverse of :func:`write_velocity_model`; values are converted to m/s."""
    raw = Path(path).read_bytes()
    end = raw.find(b"END\n")
    if end < 0:
        raise ValidationError(f"{path}: missing END line in velocity header")
    header = {}
    for line in raw[:end].decode().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"{path}: malformed header line {line!r}")
        header[key.strip()] = value.strip()
    try:
        nx, ny, h = int(header["nx"]), int(header["ny"]), float(header["h"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"{path}: header needs nx, ny and h") from exc
    origin = tuple(float(v) for v in header.get("origin", "0,0").split(","))
    unit = header.get("unit", "m/s")
    fmt = header.get("format", "csv")
    boundary = {}
    if header.get("boundary"):
        for item in header["boundary"].split(","):
            edge, _, label = item.partition(":")
            boundary[edge] = label
    body = raw[end + 4 :]
    if fmt == "csv":
        values = np.loadtxt(body.decode().splitlines(), delimiter=",", ndmin=2)
    elif fmt == "f64le":
        values = np.frombuffer(body, dtype="<f8")
    else:
        raise ValidationError(f"{path}: unknown format {fmt!r}")
    if values.size != nx * ny:
        raise ValidationError(f"{path}: expected {nx * ny} values, found {values.size}")
    grid = Grid2D(nx, ny, h, origin)
    return VelocityModel(grid, values.reshape(ny, nx), boundary, unit)


# -- ROMD / ROMP -------------------------------------------------------------


def write_romd(path, data):
    D = np.ascontiguousarray(data.D, dtype="<f8")
    head = _ROMD_HEADER.pack(ROMD_MAGIC, FORMAT_VERSION, data.m, data.n2, float(data.tau))
    Path(path).write_bytes(head + D.tobytes())


def read_romd(path, tag="clean"):
    """Read a ROMD file into :class:`SampledData`."""
    raw = Path(path).read_bytes()
    if len(raw) < _ROMD_HEADER.size:
        raise ValidationError(f"{path}: truncated ROMD header")
    magic, version, m, n2, tau = _ROMD_HEADER.unpack_from(raw)
    if magic != ROMD_MAGIC:
        raise ValidationError(f"{path}: not a ROMD file")
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported ROMD version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_ROMD_HEADER.size)
    if body.size != n2 * m * m:
        raise ValidationError(f"{path}: expected {n2 * m * m} values, found {body.size}")
    return SampledData(body.reshape(n2, m, m), tau, tag, {"source": str(path)})


def write_romp(path, rm):
    head = _ROMP_HEADER.pack(ROMP_MAGIC, FORMAT_VERSION, rm.m, rm.n, float(rm.mu))
    P = np.ascontiguousarray(rm.P, dtype="<f8")
    B = np.ascontiguousarray(rm.B, dtype="<f8")
    Path(path).write_bytes(head + P.tobytes() + B.tobytes())


def read_romp(path):
    """Read a ROMP file; the diagonal-block convention is not stored and reads back as the default."""
    raw = Path(path).read_bytes()
    if len(raw) < _ROMP_HEADER.size:
        raise ValidationError(f"{path}: truncated ROMP header")
    magic, version, m, n, mu = _ROMP_HEADER.unpack_from(raw)
    if magic != ROMP_MAGIC:
        raise ValidationError(f"{path}: not a ROMP file")
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported ROMP version {version}")
    mn = m * n
    body = np.frombuffer(raw, dtype="<f8", offset=_ROMP_HEADER.size)
    if body.size != mn * mn + mn * m:
        raise ValidationError(f"{path}: size does not match m={m}, n={n}")
    P = body[: mn * mn].reshape(mn, mn).copy()
    B = body[mn * mn :].reshape(mn, m).copy()
    return ReducedModel(P, B, m, n, mu)


def data_to_csv(path, data):
    """Long-format CSV ``k,i,j,value``."""
    n2, m, _ = data.D.shape
    k, i, j = np.meshgrid(np.arange(n2), np.arange(m), np.arange(m), indexing="ij")
    table = np.column_stack([k.ravel(), i.ravel(), j.ravel()])
    with open(path, "w") as fh:
        fh.write("k,i,j,value\n")
        for (kk, ii, jj), v in zip(table, data.D.ravel()):
            fh.write(f"{kk},{ii},{jj},{float(v)!r}\n")


# -- images ------------------------------------------------------------------


def write_image_csv(path, values):
    np.savetxt(path, np.asarray(values, dtype=float), delimiter=",", fmt="%.17g")


def read_image_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_pgm(path, values):
    """16-bit binary PGM, min-max normalized; the affine map goes to ``<path>.map.txt``.

    ``value = offset + scale * pixel`` recovers the field up to quantization.
    """
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    scale = (hi - lo) / 65535.0 if hi > lo else 0.0
    pix = np.zeros(v.shape, dtype=">u2") if scale == 0 else np.rint((v - lo) / scale).astype(">u2")
    ny, nx = v.shape
    path = Path(path)
    path.write_bytes(f"P5\n{nx} {ny}\n65535\n".encode() + pix.tobytes())
    sidecar = path.with_name(path.name + ".map.txt")
    sidecar.write_text(f"offset={lo!r}\nscale={scale!r}\n# value = offset + scale * pixel\n")
    return sidecar


def read_pgm(path):
    """Return ``(pixels, offset, scale)`` for a file written by :func:`write_pgm`."""
    path = Path(path)
    raw = path.read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValidationError(f"{path}: not a binary PGM")
    nx, ny = (int(t) for t in parts[1].split())
    pix = np.frombuffer(parts[3], dtype=">u2").reshape(ny, nx)
    mapping = {}
    for line in path.with_name(path.name + ".map.txt").read_text().splitlines():
        if "=" in line and not line.startswith("#"):
            key, _, val = line.partition("=")
            mapping[key] = float(val)
    return pix, mapping["offset"], mapping["scale"]


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")

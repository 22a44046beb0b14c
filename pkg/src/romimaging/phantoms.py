"""Deterministic synthetic velocity models.

Coordinates passed to the generators are fractions of the domain extent
(``0`` = top/left node, ``1`` = bottom/right node) unless stated otherwise.
"""

import numpy as np

from .errors import ValidationError
from .media import DEFAULT_BOUNDARY, Grid2D, VelocityModel

PHANTOM_KINDS = ("two_reflectors", "layered", "point", "circular_phantom")

# default reflector geometry: a slanted extended reflector and a deeper one with a branch
_DEFAULT_REFLECTORS = (
    ((0.15, 0.30), (0.85, 0.36)),
    ((0.10, 0.62), (0.50, 0.58), (0.90, 0.64)),
)
_DEFAULT_BRANCH = ((0.50, 0.58), (0.68, 0.80))


def gradient_background(grid, c_top, c_bottom):
    """Velocity increasing linearly with depth from ``c_top`` to ``c_bottom``."""
    frac = np.linspace(0.0, 1.0, grid.ny)[:, None]
    return np.broadcast_to(c_top + (c_bottom - c_top) * frac, grid.shape).copy()


def _rasterize_polyline(grid, points, thickness):
    """Mask of nodes covered by a polyline ``z(x)`` drawn ``thickness`` nodes thick downward."""
    pts = np.asarray(points, dtype=float)
    if np.any(pts < 0) or np.any(pts > 1):
        raise ValidationError(f"reflector {pts.tolist()} extends outside the domain")
    xs = pts[:, 0] * (grid.nx - 1)
    zs = pts[:, 1] * (grid.ny - 1)
    mask = np.zeros(grid.shape, dtype=bool)
    if np.all(np.diff(xs) > 0):
        cols = np.arange(int(np.ceil(xs[0])), int(np.floor(xs[-1])) + 1)
        tops = np.rint(np.interp(cols, xs, zs)).astype(int)
        for ix, iy in zip(cols, tops):
            mask[iy : min(iy + thickness, grid.ny), ix] = True
        return mask
    # steep or vertical pieces: sample densely along segments
    for (x0, z0), (x1, z1) in zip(zip(xs[:-1], zs[:-1]), zip(xs[1:], zs[1:])):
        count = int(np.ceil(max(abs(x1 - x0), abs(z1 - z0)))) * 2 + 1
        for t in np.linspace(0.0, 1.0, count):
            ix = int(np.rint(x0 + t * (x1 - x0)))
            iy = int(np.rint(z0 + t * (z1 - z0)))
            mask[iy : min(iy + thickness, grid.ny), ix : min(ix + thickness, grid.nx)] = True
    return mask


def two_reflectors(
    grid,
    c_top=2000.0,
    c_bottom=3000.0,
    c_reflector=1000.0,
    thickness=2,
    reflectors=_DEFAULT_REFLECTORS,
    branch=_DEFAULT_BRANCH,
):
    """Smooth gradient background with two extended low-velocity reflectors.

    Returns the model and the boolean reflector mask.
    """
    c = gradient_background(grid, c_top, c_bottom)
    mask = np.zeros(grid.shape, dtype=bool)
    for line in reflectors:
        mask |= _rasterize_polyline(grid, line, thickness)
    if branch is not None:
        mask |= _rasterize_polyline(grid, branch, thickness)
    c[mask] = c_reflector
    return c, mask


def layered(grid, interfaces=(0.35, 0.7), velocities=(2000.0, 2500.0, 3000.0)):
    """Horizontal layers; ``interfaces`` are depth fractions, one fewer than ``velocities``."""
    if len(velocities) != len(interfaces) + 1:
        raise ValidationError("need exactly one more velocity than interfaces")
    if any(not 0 < f < 1 for f in interfaces) or list(interfaces) != sorted(interfaces):
        raise ValidationError("interfaces must be increasing fractions inside (0, 1)")
    depth = np.linspace(0.0, 1.0, grid.ny)
    layer = np.searchsorted(np.asarray(interfaces), depth, side="right")
    c = np.asarray(velocities, dtype=float)[layer][:, None] * np.ones(grid.nx)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[1:] = layer[1:, None] != layer[:-1, None]
    return c, mask


def point(grid, location=None, contrast=0.1, radius=0, c_top=2000.0, c_bottom=None):
    """Background plus a small inclusion of relative velocity change ``contrast``.

    ``location`` is an ``(iy, ix)`` node; ``radius`` in nodes (0 is a single node).
    """
    c_bottom = c_top if c_bottom is None else c_bottom
    c = gradient_background(grid, c_top, c_bottom)
    if location is None:
        location = (grid.ny // 2, grid.nx // 2)
    iy0, ix0 = (int(v) for v in location)
    if not (0 <= iy0 < grid.ny and 0 <= ix0 < grid.nx):
        raise ValidationError(f"point reflector {location} outside the domain")
    iy, ix = np.mgrid[: grid.ny, : grid.nx]
    mask = (iy - iy0) ** 2 + (ix - ix0) ** 2 <= radius**2
    c[mask] *= 1.0 + contrast
    return c, mask


def _star(theta, r0, spikes=5, depth=0.35):
    return r0 * (1.0 + depth * np.cos(spikes * theta))


def circular_phantom(
    grid,
    diameter=0.17,
    c_outside=1500.0,
    c_tissue=1540.0,
    c_fat=1470.0,
    c_benign=1570.0,
    c_malignant=1600.0,
    fat_thickness=0.012,
    roughness=0.25,
    seed=7,
):
    """Breast-like ultrasound phantom: disc with a rough fatty layer and six lesions.

    Lengths in meters.  Four lesions are round (benign), two are star shaped
    (malignant; top-left and bottom-most).  The roughness of the fatty layer's
    inner surface is a fixed random Fourier series drawn from ``seed``.
    """
    X, Z = grid.coords()
    cx = grid.origin[0] + 0.5 * (grid.nx - 1) * grid.h
    cz = grid.origin[1] + 0.5 * (grid.ny - 1) * grid.h
    R = 0.5 * diameter
    extent = min(grid.nx - 1, grid.ny - 1) * grid.h
    if diameter > extent:
        raise ValidationError(f"phantom diameter {diameter} m exceeds the domain extent {extent} m")
    dx, dz = X - cx, Z - cz
    r = np.hypot(dx, dz)
    th = np.arctan2(dz, dx)

    rng = np.random.default_rng(seed)
    modes = np.arange(3, 12)
    amp = rng.normal(size=modes.size) / modes
    phase = rng.uniform(0, 2 * np.pi, size=modes.size)
    wobble = np.sum(amp[:, None, None] * np.cos(modes[:, None, None] * th + phase[:, None, None]), axis=0)
    wobble *= roughness * fat_thickness / max(np.max(np.abs(wobble)), 1e-300)
    inner = R - fat_thickness + wobble

    c = np.full(grid.shape, c_outside)
    mask = np.zeros(grid.shape, dtype=bool)
    c[r <= R] = c_fat
    c[r <= inner] = c_tissue

    # (polar angle, radial fraction, size, malignant)
    lesions = [
        (3 * np.pi / 4 + np.pi, 0.50, 0.012, True),  # top-left (z grows downward)
        (np.pi / 2, 0.62, 0.010, True),  # bottom-most
        (-np.pi / 4, 0.45, 0.009, False),
        (0.0, 0.15, 0.008, False),
        (np.pi, 0.30, 0.007, False),
        (np.pi / 5, 0.55, 0.006, False),
    ]
    for ang, rf, size, malignant in lesions:
        lx = cx + rf * R * np.cos(ang)
        lz = cz + rf * R * np.sin(ang)
        lr = np.hypot(X - lx, Z - lz)
        if malignant:
            inside = lr <= _star(np.arctan2(Z - lz, X - lx), size)
            c[inside] = c_malignant
        else:
            inside = lr <= size
            c[inside] = c_benign
        mask |= inside
    return c, mask


def make_phantom(kind, grid, boundary=None, return_mask=False, **params):
    """Build a synthetic :class:`VelocityModel` of the given ``kind``.

    Parameters
    ----------
    kind : {"two_reflectors", "layered", "point", "circular_phantom"}
    grid : Grid2D or dict
        Grid, or keyword arguments for :class:`Grid2D`.
    boundary : dict, optional
        Edge labels; defaults to a reflective top and Dirichlet elsewhere
        (all edges reflective for ``circular_phantom``).
    return_mask : bool
        Also return the boolean mask of reflector / inclusion nodes.
    **params
        Forwarded to the generator of ``kind``.
    """
    if isinstance(grid, dict):
        grid = Grid2D(**grid)
    generators = {
        "two_reflectors": two_reflectors,
        "layered": layered,
        "point": point,
        "circular_phantom": circular_phantom,
    }
    if kind not in generators:
        raise ValidationError(f"unknown phantom kind {kind!r}; expected one of {PHANTOM_KINDS}")
    if boundary is None:
        boundary = dict(DEFAULT_BOUNDARY)
        if kind == "circular_phantom":
            boundary = {e: "accessible" for e in boundary}
    c, mask = generators[kind](grid, **params)
    model = VelocityModel(grid, c, boundary)
    return (model, mask) if return_mask else model

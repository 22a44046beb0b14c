"""Grids, velocity models, transducer arrays and the symmetrized wave operator.

All quantities are SI internally: meters, seconds, m/s.  A field on the grid
is stored as a 2D array of shape ``(ny, nx)``; row ``iy`` is depth, column
``ix`` is the lateral coordinate.  Flattened fields use C order, so node
``(iy, ix)`` has index ``iy * nx + ix``.

Boundary handling
-----------------
Every one of the ``nx * ny`` nodes is an unknown.  Each edge of the rectangle
carries a label:

* ``"accessible"``: reflective (zero Neumann) wall located half a spacing
  outside the boundary row; the ghost value mirrors the boundary node.
* ``"inaccessible"``: zero Dirichlet wall located one spacing outside the
  boundary row; the ghost value is eliminated.

Both choices keep the discrete Laplacian exactly symmetric.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy import ndimage, special

from .errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)

EDGES = ("top", "bottom", "left", "right")
ACCESSIBLE = "accessible"
INACCESSIBLE = "inaccessible"

DEFAULT_BOUNDARY = {
    "top": ACCESSIBLE,
    "bottom": INACCESSIBLE,
    "left": INACCESSIBLE,
    "right": INACCESSIBLE,
}

_UNIT_SCALE = {"m/s": 1.0, "km/s": 1e3, "cm/s": 1e-2}


@dataclasses.dataclass(frozen=True)
class Grid2D:
    """Uniform tensor product grid.

    Parameters
    ----------
    nx, ny : int
        Node counts along the lateral (x) and depth (z) directions.
    h : float
        Node spacing in meters.
    origin : tuple of float
        Physical ``(x, z)`` coordinates of node ``(0, 0)``.
    """

    nx: int
    ny: int
    h: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if int(self.nx) < 3 or int(self.ny) < 3:
            raise ValidationError(f"grid too small: nx={self.nx}, ny={self.ny} (need >= 3)")
        if not np.isfinite(self.h) or self.h <= 0:
            raise ValidationError(f"grid spacing must be positive, got {self.h}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def N(self):
        return self.nx * self.ny

    @property
    def x(self):
        return self.origin[0] + self.h * np.arange(self.nx)

    @property
    def z(self):
        return self.origin[1] + self.h * np.arange(self.ny)

    def index(self, iy, ix):
        return int(iy) * self.nx + int(ix)

    def coords(self):
        """Return ``(X, Z)`` coordinate arrays of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.z)


@dataclasses.dataclass(frozen=True, eq=False)
class VelocityModel:
    """Acoustic velocity sampled on grid nodes (always stored in m/s)."""

    grid: Grid2D
    c: np.ndarray
    boundary: Mapping[str, str] = dataclasses.field(default_factory=lambda: dict(DEFAULT_BOUNDARY))
    unit: str = "m/s"

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.shape != self.grid.shape:
            raise ValidationError(f"velocity shape {c.shape} does not match grid {self.grid.shape}")
        if self.unit not in _UNIT_SCALE:
            raise ValidationError(f"unknown velocity unit {self.unit!r}")
        c = c * _UNIT_SCALE[self.unit]
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise ValidationError("velocity must be finite and strictly positive everywhere")
        boundary = dict(DEFAULT_BOUNDARY)
        boundary.update(self.boundary)
        for edge, label in boundary.items():
            if edge not in EDGES or label not in (ACCESSIBLE, INACCESSIBLE):
                raise ValidationError(f"bad boundary label {edge}={label}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "boundary", boundary)
        object.__setattr__(self, "unit", "m/s")

    @property
    def accessible_edges(self):
        return [e for e in EDGES if self.boundary[e] == ACCESSIBLE]

    def with_velocity(self, c):
        return VelocityModel(self.grid, c, self.boundary)

    def digest(self):
        """Short content hash used for provenance."""
        hsh = hashlib.sha256()
        hsh.update(repr((self.grid, sorted(self.boundary.items()))).encode())
        hsh.update(np.ascontiguousarray(self.c).tobytes())
        return hsh.hexdigest()[:16]


def edge_nodes(grid, edge):
    """``(iy, ix)`` pairs of the boundary row/column belonging to ``edge``."""
    if edge == "top":
        return [(0, ix) for ix in range(grid.nx)]
    if edge == "bottom":
        return [(grid.ny - 1, ix) for ix in range(grid.nx)]
    if edge == "left":
        return [(iy, 0) for iy in range(grid.ny)]
    if edge == "right":
        return [(iy, grid.nx - 1) for iy in range(grid.ny)]
    raise ValidationError(f"unknown edge {edge!r}")


@dataclasses.dataclass(frozen=True, eq=False)
class TransducerArray:
    """Collocated source/receiver positions with weight function theta.

    ``positions`` is an ``(m, 2)`` integer array of ``(iy, ix)`` node indices.
    """

    positions: np.ndarray
    theta: np.ndarray = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=int).reshape(-1, 2)
        if len(pos) == 0:
            raise ValidationError("transducer array is empty")
        if len({tuple(p) for p in pos}) != len(pos):
            raise ValidationError("transducer positions must be distinct")
        theta = np.ones(len(pos)) if self.theta is None else np.asarray(self.theta, dtype=float)
        if theta.shape != (len(pos),):
            raise ValidationError("theta must have one weight per transducer")
        pos.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "theta", theta)

    @property
    def m(self):
        return len(self.positions)

    @classmethod
    def along_edge(cls, grid, m, edge="top", start=None, stop=None):
        """``m`` transducers spread uniformly over ``[start, stop]`` node indices of an edge.

        The default span keeps one node clear of each corner.
        """
        length = grid.nx if edge in ("top", "bottom") else grid.ny
        start = 1 if start is None else int(start)
        stop = length - 2 if stop is None else int(stop)
        if m > stop - start + 1:
            raise ValidationError(f"cannot place {m} distinct transducers on {stop - start + 1} nodes")
        idx = np.round(np.linspace(start, stop, m)).astype(int) if m > 1 else np.array([(start + stop) // 2])
        nodes = edge_nodes(grid, edge)
        return cls(np.array([nodes[i] for i in idx]))

    @classmethod
    def perimeter(cls, grid, m):
        """``m`` transducers spaced uniformly around the whole boundary, clockwise from the top-left."""
        ring = (
            [(0, ix) for ix in range(grid.nx - 1)]
            + [(iy, grid.nx - 1) for iy in range(grid.ny - 1)]
            + [(grid.ny - 1, ix) for ix in range(grid.nx - 1, 0, -1)]
            + [(iy, 0) for iy in range(grid.ny - 1, 0, -1)]
        )
        if m > len(ring):
            raise ValidationError("more transducers than boundary nodes")
        idx = np.floor(np.arange(m) * len(ring) / m).astype(int)
        return cls(np.array([ring[i] for i in idx]))

    def subset(self, start, stop):
        """Transducers ``start..stop`` (0-based, inclusive)."""
        return TransducerArray(self.positions[start : stop + 1], self.theta[start : stop + 1])

    def flat_indices(self, grid):
        return self.positions[:, 0] * grid.nx + self.positions[:, 1]

    def validate_on(self, model):
        """Raise unless every position is a node of an accessible edge."""
        grid = model.grid
        allowed = set()
        for edge in model.accessible_edges:
            allowed.update(edge_nodes(grid, edge))
        for iy, ix in self.positions:
            if not (0 <= iy < grid.ny and 0 <= ix < grid.nx):
                raise ValidationError(f"transducer ({iy}, {ix}) lies outside the grid")
            if (iy, ix) not in allowed:
                raise ValidationError(f"transducer ({iy}, {ix}) is not on an accessible edge")


@dataclasses.dataclass(frozen=True)
class WaveletSpec:
    """Gaussian wavelet duration ``sigma``, sampling interval ``tau`` and sample count ``n2 = 2n``."""

    sigma: float
    tau: float
    n2: int

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValidationError(f"sigma must be non-negative, got {self.sigma}")
        if not self.tau > 0:
            raise ValidationError(f"tau must be positive, got {self.tau}")
        if int(self.n2) != self.n2 or self.n2 < 4 or self.n2 % 2:
            raise ValidationError(f"n2 must be an even integer >= 4, got {self.n2}")
        object.__setattr__(self, "n2", int(self.n2))

    @classmethod
    def from_tau(cls, tau, n2):
        """Use the recommended ratio ``tau = sqrt(3)/2 * sigma``."""
        return cls(sigma=2.0 * tau / np.sqrt(3.0), tau=tau, n2=n2)

    @property
    def n(self):
        return self.n2 // 2

    @property
    def terminal_time(self):
        return self.tau * (self.n2 - 1)


@dataclasses.dataclass(frozen=True, eq=False)
class SymmetrizedOperator:
    """Sparse symmetric matrix ``C L C`` with a Gershgorin bound on its spectral radius."""

    matrix: sp.csr_matrix
    lam_max: float
    grid: Grid2D

    def __matmul__(self, x):
        return self.matrix @ x

    @property
    def N(self):
        return self.grid.N

    def toarray(self):
        return self.matrix.toarray()


def laplacian(grid, boundary):
    """Five-point Laplacian with the boundary treatment described in the module docstring."""
    ny, nx, h = grid.ny, grid.nx, grid.h
    idx = np.arange(grid.N).reshape(ny, nx)
    inv_h2 = 1.0 / h**2
    diag = np.full((ny, nx), -4.0 * inv_h2)
    rows, cols = [], []
    # horizontal and vertical neighbor pairs, each added once per direction
    rows += [idx[:, :-1].ravel(), idx[:, 1:].ravel(), idx[:-1, :].ravel(), idx[1:, :].ravel()]
    cols += [idx[:, 1:].ravel(), idx[:, :-1].ravel(), idx[1:, :].ravel(), idx[:-1, :].ravel()]
    # mirrored ghost at a reflective wall adds +u_i back to the diagonal
    if boundary["top"] == ACCESSIBLE:
        diag[0, :] += inv_h2
    if boundary["bottom"] == ACCESSIBLE:
        diag[-1, :] += inv_h2
    if boundary["left"] == ACCESSIBLE:
        diag[:, 0] += inv_h2
    if boundary["right"] == ACCESSIBLE:
        diag[:, -1] += inv_h2
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    off = sp.coo_matrix((np.full(r.size, inv_h2), (r, c)), shape=(grid.N, grid.N))
    return (off + sp.diags(diag.ravel())).tocsr()


def build_symmetrized_operator(model):
    """Assemble ``A_h = C L_h C`` for a velocity model.

    Returns
    -------
    SymmetrizedOperator
        Exactly symmetric, negative semidefinite; ``lam_max`` bounds the
        spectral radius by Gershgorin disks.
    """
    grid = model.grid
    lap = laplacian(grid, model.boundary)
    cvec = sp.diags(model.c.ravel())
    A = (cvec @ lap @ cvec).tocsr()
    # c_i L_ij c_j and c_j L_ji c_i are different float products only in order
    A = ((A + A.T) * 0.5).tocsr()
    A.sort_indices()
    lam_max = float(np.max(np.asarray(abs(A).sum(axis=1)).ravel()))
    return SymmetrizedOperator(A, lam_max, grid)


def delta_field(grid, array):
    """Discrete boundary deltas ``theta_j * e_j`` as an ``(N, m)`` array (value ``theta/h`` at the node)."""
    E = np.zeros((grid.N, array.m))
    E[array.flat_indices(grid), np.arange(array.m)] = array.theta / grid.h
    return E


def chebyshev_exp_degree(z, tol=1e-12, max_degree=20000):
    """Degree ``K`` with ``2 * sum_{k>K} ive(k, z) <= tol``.

    ``exp(z (x - 1)) = ive(0, z) + 2 sum_k ive(k, z) T_k(x)`` on ``[-1, 1]``.
    """
    if z == 0:
        return 0
    kmax = int(min(max_degree, max(64, 2 * z + 40 * np.sqrt(z + 1) + 64)))
    coef = special.ive(np.arange(kmax + 1), z)
    tail = 2.0 * np.cumsum(coef[::-1])[::-1]  # tail[k] = 2 sum_{j>=k}
    ok = np.nonzero(tail <= tol)[0]
    if ok.size == 0:
        raise NumericalError(
            f"exponential expansion did not reach tolerance {tol:g} within degree {kmax} (z={z:g})"
        )
    return max(int(ok[0]) - 1, 0)


def expm_apply(op, beta, X, tol=1e-12):
    """Apply ``exp(beta * A)`` to the columns of ``X`` for a symmetric NSD operator.

    Chebyshev expansion of the exponential on ``[-lam_max, 0]`` whose
    coefficients are exponentially scaled modified Bessel functions.
    The remainder bound is ``tol`` relative to ``||X||``.
    """
    X = np.asarray(X, dtype=float)
    if beta < 0:
        raise ValidationError("beta must be non-negative")
    if beta == 0 or op.lam_max == 0:
        return X.copy()
    lam = op.lam_max
    z = 0.5 * beta * lam
    degree = chebyshev_exp_degree(z, tol)
    coef = special.ive(np.arange(degree + 1), z)
    coef[1:] *= 2.0
    # shifted operator x = 1 + 2 A / lam has spectrum in [-1, 1]
    def shifted(Y):
        return Y + (2.0 / lam) * (op.matrix @ Y)

    t_prev = X
    out = coef[0] * X
    if degree == 0:
        return out
    t_cur = shifted(X)
    out = out + coef[1] * t_cur
    for k in range(2, degree + 1):
        t_prev, t_cur = t_cur, 2.0 * shifted(t_cur) - t_prev
        out += coef[k] * t_cur
    logger.debug("exp(beta A) applied with degree %d (z=%.3g)", degree, z)
    return out


def build_transducer_field(op, model, array, wavelet, tol=1e-12):
    """Mollified transducer field ``b = exp(sigma^2 A_h / 4) theta e`` of shape ``(N, m)``."""
    array.validate_on(model)
    E = delta_field(model.grid, array)
    return expm_apply(op, wavelet.sigma**2 / 4.0, E, tol=tol)


def gaussian_smooth_velocity(model, width_x, width_y):
    """Kinematic model by separable Gaussian smoothing.

    ``width_x`` and ``width_y`` are the kernel standard deviations in meters.
    The kernel is truncated at four standard deviations and the field is
    extended by reflection at the domain edges.
    """
    if width_x < 0 or width_y < 0:
        raise ValidationError("smoothing widths must be non-negative")
    c = np.array(model.c, dtype=float)
    h = model.grid.h
    # a kernel narrower than half a cell after truncation is the identity
    if 4.0 * width_x / h >= 0.5:
        c = ndimage.gaussian_filter1d(c, width_x / h, axis=1, mode="reflect", truncate=4.0)
    if 4.0 * width_y / h >= 0.5:
        c = ndimage.gaussian_filter1d(c, width_y / h, axis=0, mode="reflect", truncate=4.0)
    # normalized positive kernel: output is a convex combination of input values
    c = np.clip(c, model.c.min(), model.c.max())
    return model.with_velocity(c)


def constant_velocity(model, value):
    """Same grid and boundary labels, constant velocity ``value`` (m/s)."""
    return model.with_velocity(np.full(model.grid.shape, float(value)))

"""ROM backprojection, composite sub-array imaging, RTM baseline and diagnostics."""

from __future__ import annotations

import dataclasses
import hashlib
import logging

import numpy as np
from scipy import ndimage

from .errors import NumericalError, ValidationError
from .propagate import SampledData, simulate
from .rom import CONVENTIONS, orthogonalize_snapshots, reduce

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True, eq=False)
class Image:
    """Scalar image on the grid, shape ``(ny, nx)``, plus provenance."""

    values: np.ndarray
    grid: object
    method: str
    meta: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise NumericalError(f"{self.method} image contains non-finite values")
        object.__setattr__(self, "values", values)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class SubArrayPartition:
    """Sub-array index ranges (1-based, inclusive) with positive weights."""

    ranges: tuple
    weights: tuple = None

    def __post_init__(self):
        ranges = tuple((int(a), int(b)) for a, b in self.ranges)
        weights = tuple(1.0 for _ in ranges) if self.weights is None else tuple(float(w) for w in self.weights)
        if len(weights) != len(ranges) or not ranges:
            raise ValidationError("partition needs one weight per (non-empty list of) ranges")
        if any(w <= 0 for w in weights):
            raise ValidationError("partition weights must be positive")
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "weights", weights)

    def validate(self, m):
        for lo, hi in self.ranges:
            if not 1 <= lo <= hi <= m:
                raise ValidationError(f"sub-array [{lo}, {hi}] outside [1, {m}]")
            if hi - lo + 1 < 2:
                raise ValidationError(f"sub-array [{lo}, {hi}] has fewer than 2 transducers")

    @classmethod
    def uniform(cls, m, count, size):
        """``count`` equally spaced (possibly overlapping) windows of ``size`` transducers."""
        if size > m or count < 1:
            raise ValidationError("invalid uniform partition")
        starts = np.rint(np.linspace(1, m - size + 1, count)).astype(int) if count > 1 else [1]
        return cls(tuple((int(s), int(s) + size - 1) for s in starts))


def _hash_array(a):
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()[:16]


@dataclasses.dataclass(frozen=True, eq=False)
class KinematicPipeline:
    """Everything derived from the kinematic model that imaging reuses."""

    basis: object
    rom: object
    data: SampledData
    substeps: int
    model_hash: str


def kinematic_basis(c_o, array, wavelet, substeps=None, convention="spd_sqrt"):
    """Orthonormal snapshot basis and ROM of the kinematic model.

    The basis comes from the snapshots themselves; the ROM comes from the
    kinematic data via :func:`romimaging.rom.reduce`, with the same
    diagonal-block convention as the data-side ROM must use.

    Returns
    -------
    KinematicPipeline
    """
    if convention not in CONVENTIONS:
        raise ValidationError(f"unknown convention {convention!r}")
    data, snaps, P, _ = simulate(c_o, array, wavelet, substeps, keep_snapshots=wavelet.n)
    basis, _ = orthogonalize_snapshots(snaps, convention)
    basis = dataclasses.replace(basis, source=c_o.digest())
    rom = reduce(data, convention)
    return KinematicPipeline(basis, rom, data, P.substeps, c_o.digest())


def bp_functional(V, dP):
    """``V(x) dP V(x)^T`` evaluated for every row ``x`` of ``V``."""
    return np.einsum("ij,ij->i", V @ dP, V)


def backprojection_image(D, c_o, array, wavelet, substeps=None, convention="spd_sqrt", kinematic=None, rom=None):
    """ROM backprojection image ``V_o(x) (P - P_o) V_o(x)^T``.

    Parameters
    ----------
    D : SampledData
        Measured (possibly regularized) data.
    c_o : VelocityModel
        Kinematic model.
    kinematic : KinematicPipeline, optional
        Precomputed output of :func:`kinematic_basis`, reused across data sets.
    rom : ReducedModel, optional
        Precomputed data-side ROM.
    """
    if D.m != array.m:
        raise ValidationError(f"data has m={D.m} but the array has {array.m} transducers")
    if kinematic is None:
        kinematic = kinematic_basis(c_o, array, wavelet, substeps, convention)
    rm_o = kinematic.rom
    if D.n != rm_o.n or D.m != rm_o.m:
        raise ValidationError(f"data (m={D.m}, n={D.n}) does not match kinematic ROM (m={rm_o.m}, n={rm_o.n})")
    rm = reduce(D, convention) if rom is None else rom
    if rm.convention != rm_o.convention:
        raise ValidationError(f"ROM conventions differ: {rm.convention} vs {rm_o.convention}")
    values = bp_functional(kinematic.basis.values, rm.P - rm_o.P)
    meta = {
        "kinematic_model": kinematic.model_hash,
        "rom_hash": _hash_array(rm.P),
        "kinematic_rom_hash": _hash_array(rm_o.P),
        "convention": convention,
        "mu": rm.mu,
        "data_tag": D.tag,
    }
    return Image(values, c_o.grid, "BP", meta)


def distance_to_array(grid, array):
    """Euclidean distance (m) from each node to the nearest transducer, shape ``(ny, nx)``."""
    iy, ix = np.mgrid[: grid.ny, : grid.nx]
    d2 = (iy[..., None] - array.positions[:, 0]) ** 2 + (ix[..., None] - array.positions[:, 1]) ** 2
    return grid.h * np.sqrt(d2.min(axis=-1))


def depth_scale(img, array, a0=1.0, a1=None):
    """Multiply the image by ``a0 + a1 * dist(x, array)``.

    ``a1`` defaults to the reciprocal of the largest node-to-array distance,
    which keeps the multiplier inside ``[a0, a0 + 1]``.
    """
    if a0 < 0 or (a1 is not None and a1 < 0):
        raise ValidationError("depth-scaling coefficients must be non-negative")
    dist = distance_to_array(img.grid, array)
    if a1 is None:
        a1 = 1.0 / dist.max() if dist.max() > 0 else 0.0
    meta = dict(img.meta, depth_scale=(float(a0), float(a1)))
    return Image(img.values * (a0 + a1 * dist), img.grid, img.method, meta)


def composite_image(D, partition, c_o, array, wavelet, substeps=None, convention="spd_sqrt", on_failure="raise"):
    """Weighted sum of BP images computed from sub-array data blocks.

    ``on_failure="skip"`` logs and drops sub-arrays whose ROM cannot be
    factorized; ``"raise"`` propagates the error.
    """
    partition.validate(array.m)
    total = None
    used, failed = [], []
    for (lo, hi), eta in zip(partition.ranges, partition.weights):
        sub_data = D.restrict(lo - 1, hi - 1)
        sub_array = array.subset(lo - 1, hi - 1)
        try:
            img = backprojection_image(sub_data, c_o, sub_array, wavelet, substeps, convention)
        except NumericalError as exc:
            if on_failure != "skip":
                raise
            logger.warning("sub-array [%d, %d] skipped: %s", lo, hi, exc)
            failed.append((lo, hi))
            continue
        part = eta * img.values
        total = part if total is None else total + part
        used.append((lo, hi))
    if total is None:
        raise NumericalError("every sub-array ROM failed")
    meta = {"partition": partition.ranges, "weights": partition.weights, "used": used, "failed": failed}
    return Image(total, c_o.grid, "BP", meta)


def rtm_image(D, c_o, array, wavelet, substeps=None, laplacian_filter=True):
    """Pre-stack reverse time migration with a zero-lag cross-correlation condition.

    The residual ``D^k - D_o^k`` (measured minus kinematic prediction) is
    re-injected through the transducer field in reverse time,
    ``w^k = 2 P_o w^{k+1} - w^{k+2} + b R^k``, and correlated source by
    source with the forward fields ``u_j^k`` of the kinematic model.  With
    ``laplacian_filter`` the image is passed through ``-h^2 Laplacian`` to
    remove the low-wavenumber backscatter footprint.
    """
    if D.m != array.m:
        raise ValidationError(f"data has m={D.m} but the array has {array.m} transducers")
    pred, snaps, P, b = simulate(c_o, array, wavelet, substeps, keep_snapshots=wavelet.n2)
    if pred.n2 != D.n2:
        raise ValidationError(f"data has {D.n2} samples, kinematic prediction {pred.n2}")
    residual = D.D - pred.D
    forward = snaps.fields  # (2n, N, m)
    img = np.zeros(c_o.grid.N)
    w_next = np.zeros_like(b)
    w_next2 = np.zeros_like(b)
    for k in reversed(range(D.n2)):
        w = 2.0 * P(w_next) - w_next2 + b @ residual[k]
        img += np.einsum("ij,ij->i", forward[k], w)
        w_next2, w_next = w_next, w
    if laplacian_filter:
        img = -ndimage.laplace(img.reshape(c_o.grid.shape), mode="nearest")
    meta = {"kinematic_model": c_o.digest(), "data_tag": D.tag, "laplacian_filter": laplacian_filter}
    return Image(img, c_o.grid, "RTM", meta)


def delta_diagnostic(V_o, V, node):
    """``y -> sum_k v_o^k(x) . v^k(y)`` for a fixed node ``x`` (flat index or ``(iy, ix)``)."""
    if V_o.values.shape != V.values.shape or V_o.m != V.m or V_o.n != V.n:
        raise ValidationError("bases must share m, n and grid")
    grid = V_o.grid
    idx = grid.index(*node) if isinstance(node, tuple) else int(node)
    field = V.values @ V_o.values[idx]
    return field.reshape(grid.shape)


def fwhm_cells(profile, peak):
    """Full width at half maximum (in cells, linearly interpolated) of a 1D profile around ``peak``."""
    p = np.asarray(profile, dtype=float)
    half = 0.5 * p[peak]
    i = peak
    while i > 0 and p[i - 1] >= half:
        i -= 1
    left = float(i)
    if i > 0:
        left = i - (p[i] - half) / (p[i] - p[i - 1])
    j = peak
    while j < len(p) - 1 and p[j + 1] >= half:
        j += 1
    right = float(j)
    if j < len(p) - 1:
        right = j + (p[j] - half) / (p[j] - p[j + 1])
    return right - left


def schrodinger_potential(c, sigma_imp, h=None):
    """Potential ``q = sqrt(sigma) div(c grad(1/sqrt(sigma)))``.

    ``c`` may be a :class:`VelocityModel` (its grid spacing is used) or an
    array together with ``h``.  Derivatives are second-order centered in the
    interior and second-order one-sided at the edges.
    """
    if hasattr(c, "grid"):
        h = c.grid.h
        c = c.c
    c = np.asarray(c, dtype=float)
    sig = np.asarray(sigma_imp, dtype=float)
    if h is None:
        raise ValidationError("grid spacing h is required for array input")
    if sig.shape != c.shape:
        raise ValidationError("impedance and velocity shapes differ")
    if np.any(sig <= 0) or not np.all(np.isfinite(sig)):
        raise ValidationError("impedance must be finite and strictly positive")
    f = 1.0 / np.sqrt(sig)
    axes = range(c.ndim)
    grads = np.gradient(f, h, edge_order=2)
    grads = list(grads) if isinstance(grads, (list, tuple)) else [grads]
    div = sum(np.gradient(c * g, h, axis=a, edge_order=2) for a, g in zip(axes, grads))
    return np.sqrt(sig) * div

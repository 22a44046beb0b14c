"""Discrete wave propagation and array data synthesis.

The propagator over one sampling interval is ``P_h = T_s(I + dt^2 A_h / 2)``
with ``dt = tau / s``: ``s`` leapfrog steps.  Because ``T_k(T_s(x)) =
T_{ks}(x)``, the snapshots ``T_k(P_h) b`` are the leapfrog solution sampled
every ``s`` fine steps, and all Chebyshev moment identities used by the ROM
hold exactly for the synthesized data (up to rounding).
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging

import numpy as np

from .errors import NumericalError, StabilityError, ValidationError
from .media import build_symmetrized_operator, build_transducer_field

logger = logging.getLogger(__name__)

#: stability margin for the automatic substep count: dt^2 lam_max <= 3.6
STABILITY_TARGET = 3.6


def default_substeps(lam_max, tau, target=STABILITY_TARGET):
    """Smallest ``s`` with ``(tau / s)^2 * lam_max <= target``."""
    return max(1, int(np.ceil(tau * np.sqrt(lam_max / target))))


@dataclasses.dataclass(frozen=True, eq=False)
class DiscretePropagator:
    """``T_s(I + (tau/s)^2 A_h / 2)`` acting on ``(N, m)`` fields."""

    op: object
    tau: float
    substeps: int = None

    def __post_init__(self):
        s = default_substeps(self.op.lam_max, self.tau) if self.substeps is None else int(self.substeps)
        if s < 1:
            raise ValidationError("substep count must be >= 1")
        object.__setattr__(self, "substeps", s)
        ratio = self.dt**2 * self.op.lam_max
        if not ratio < 4.0:
            raise StabilityError(
                f"unstable fine step: (tau/s)^2 * lam_max = {ratio:.4g} >= 4 "
                f"(lam_max={self.op.lam_max:.6g}, tau={self.tau:g}, s={s})",
                lam_max=self.op.lam_max,
            )

    @property
    def dt(self):
        return self.tau / self.substeps

    def fine_step(self, f):
        """``(I + dt^2 A / 2) f``."""
        return f + (0.5 * self.dt**2) * (self.op.matrix @ f)

    def __call__(self, f):
        return apply_propagator(self, f)


def apply_propagator(P, f):
    """Apply ``T_s(P_fine)`` to ``f`` via the three-term recurrence."""
    f = np.asarray(f, dtype=float)
    g_prev, g = f, P.fine_step(f)
    for _ in range(P.substeps - 1):
        g_prev, g = g, 2.0 * P.fine_step(g) - g_prev
    return g


@dataclasses.dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Snapshots ``u^0 .. u^{n-1}`` stored as an ``(n, N, m)`` array."""

    fields: np.ndarray
    grid: object
    tau: float

    @property
    def n(self):
        return self.fields.shape[0]

    @property
    def m(self):
        return self.fields.shape[2]

    def as_matrix(self):
        """``U`` as an ``(N, m n)`` matrix, block ``k`` in columns ``k m .. (k+1) m - 1``."""
        n, N, m = self.fields.shape
        return np.ascontiguousarray(self.fields.transpose(1, 0, 2).reshape(N, n * m))


@dataclasses.dataclass(frozen=True, eq=False)
class SampledData:
    """Time series of ``2n`` symmetric ``m x m`` data matrices.

    Attributes
    ----------
    D : ndarray, shape (2n, m, m)
    tau : float
    tag : str
        ``"clean"``, ``"noisy"`` or ``"regularized"``.
    meta : dict
        Free-form provenance (noise seed, mu, symmetrization deviation, ...).
    """

    D: np.ndarray
    tau: float
    tag: str = "clean"
    meta: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        D = np.array(self.D, dtype=float)
        if D.ndim != 3 or D.shape[1] != D.shape[2]:
            raise ValidationError(f"data must have shape (2n, m, m), got {D.shape}")
        if D.shape[0] < 2 or D.shape[0] % 2:
            raise ValidationError(f"need an even number (>= 2) of time samples, got {D.shape[0]}")
        if not np.all(np.isfinite(D)):
            raise ValidationError("data contains non-finite values")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)

    @property
    def m(self):
        return self.D.shape[1]

    @property
    def n2(self):
        return self.D.shape[0]

    @property
    def n(self):
        return self.D.shape[0] // 2

    def digest(self):
        return hashlib.sha256(self.D.tobytes()).hexdigest()[:16]

    def restrict(self, start, stop):
        """Data of transducers ``start..stop`` (0-based, inclusive)."""
        sl = slice(start, stop + 1)
        return SampledData(self.D[:, sl, sl], self.tau, self.tag, dict(self.meta, subarray=(start, stop)))

    def truncate(self, n):
        """First ``2 n`` samples."""
        if n > self.n:
            raise ValidationError(f"cannot truncate {self.n2} samples to 2n={2 * n}")
        return SampledData(self.D[: 2 * n], self.tau, self.tag, dict(self.meta))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _check_finite(field, k):
    if not np.all(np.isfinite(field)):
        raise NumericalError(f"non-finite wavefield at time step {k}")


def chebyshev_iterates(P, b, count):
    """Yield ``T_k(P_h) b`` for ``k = 0 .. count-1``."""
    if count <= 0:
        return
    prev = np.asarray(b, dtype=float)
    yield prev
    if count == 1:
        return
    cur = P(prev)
    _check_finite(cur, 1)
    yield cur
    for k in range(2, count):
        prev, cur = cur, 2.0 * P(cur) - prev
        _check_finite(cur, k)
        yield cur


def compute_snapshots(P, b, n):
    """First ``n`` snapshots ``u^k = T_k(P_h) b``."""
    grid = P.op.grid
    fields = np.stack(list(chebyshev_iterates(P, b, n)))
    return SnapshotSet(fields, grid, P.tau)


def symmetrize_data(D, tol=1e-12):
    """Return ``(D + D^T)/2`` per sample and the largest relative asymmetry.

    Raises if the asymmetry exceeds ``tol`` relative to the sample norm.
    """
    D = np.asarray(D, dtype=float)
    asym = D - D.transpose(0, 2, 1)
    norms = np.linalg.norm(D, axis=(1, 2))
    rel = np.linalg.norm(asym, axis=(1, 2)) / np.where(norms > 0, norms, 1.0)
    dev = float(rel.max()) if rel.size else 0.0
    logger.info("data symmetrization deviation %.3e", dev)
    if dev > tol:
        raise NumericalError(f"data asymmetry {dev:.3e} exceeds tolerance {tol:g}")
    return 0.5 * (D + D.transpose(0, 2, 1)), dev


def simulate(model, array, wavelet, substeps=None, keep_snapshots=0, sym_tol=1e-12):
    """Simulate data and optionally keep the first ``keep_snapshots`` snapshots.

    Returns ``(SampledData, SnapshotSet or None, propagator, b)``.
    """
    op = build_symmetrized_operator(model)
    P = DiscretePropagator(op, wavelet.tau, substeps)
    b = build_transducer_field(op, model, array, wavelet)
    h2 = model.grid.h ** 2
    D = np.empty((wavelet.n2, array.m, array.m))
    kept = []
    for k, u in enumerate(chebyshev_iterates(P, b, wavelet.n2)):
        D[k] = h2 * (b.T @ u)
        if k < keep_snapshots:
            kept.append(u)
    D, dev = symmetrize_data(D, sym_tol)
    meta = {"model": model.digest(), "substeps": P.substeps, "symmetry_deviation": dev}
    data = SampledData(D, wavelet.tau, "clean", meta)
    snaps = SnapshotSet(np.stack(kept), model.grid, wavelet.tau) if kept else None
    return data, snaps, P, b


def simulate_data(model, array, wavelet, substeps=None):
    """Sampled data ``D^k = h^2 b^T u^k`` for ``k = 0 .. 2n-1``."""
    return simulate(model, array, wavelet, substeps)[0]


@dataclasses.dataclass(frozen=True, eq=False)
class DenseOracle:
    """Dense reference quantities computed by eigendecomposition."""

    P: np.ndarray
    b: np.ndarray
    snapshots: np.ndarray  # (2n, N, m)
    D: np.ndarray  # (2n, m, m)
    eigvals: np.ndarray
    eigvecs: np.ndarray


DENSE_ORACLE_MAX_N = 2500


def dense_oracle(model, array, wavelet, substeps=None):
    """Exact snapshots and data through the eigendecomposition of ``A_h``.

    ``T_k(T_s(x)) = cos(k s arccos x)`` is evaluated on the eigenvalues of
    the fine-step matrix, so nothing here shares code with the recurrences.
    """
    grid = model.grid
    if grid.N > DENSE_ORACLE_MAX_N:
        raise ValidationError(f"dense oracle limited to N <= {DENSE_ORACLE_MAX_N}, got {grid.N}")
    op = build_symmetrized_operator(model)
    s = default_substeps(op.lam_max, wavelet.tau) if substeps is None else int(substeps)
    A = op.toarray()
    lam, Q = np.linalg.eigh(A)
    dt = wavelet.tau / s
    fine = np.clip(1.0 + 0.5 * dt**2 * lam, -1.0, 1.0)
    theta = np.arccos(fine)
    P = (Q * np.cos(s * theta)) @ Q.T
    E = np.zeros((grid.N, array.m))
    E[array.flat_indices(grid), np.arange(array.m)] = array.theta / grid.h
    b = (Q * np.exp(wavelet.sigma**2 * lam / 4.0)) @ (Q.T @ E)
    coeff = Q.T @ b
    snaps = np.stack([Q @ (np.cos(k * s * theta)[:, None] * coeff) for k in range(wavelet.n2)])
    D = grid.h**2 * np.einsum("im,kin->kmn", b, snaps)
    return DenseOracle(P, b, snaps, D, lam, Q)

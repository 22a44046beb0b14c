"""Multiplicative data noise and spectral-shift regularization of the mass matrix."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging

import numpy as np

from .errors import RegularizationError, ValidationError
from .propagate import SampledData
from .rom import assemble_mass

logger = logging.getLogger(__name__)

#: safety margin in ``lam_min(M) > DELTA_PD * trace(M) / (m n)``
DELTA_PD = 1e-12


@dataclasses.dataclass(frozen=True)
class NoiseSpec:
    """Relative noise level ``epsilon`` and the RNG seed."""

    epsilon: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValidationError(f"noise level must be >= 0, got {self.epsilon}")


@dataclasses.dataclass(frozen=True)
class MuSchedule:
    """Geometric sweep ``mu = start * factor^i`` stopped at ``cap``."""

    start: float = 1.0
    factor: float = 1.05
    cap: float = 100.0
    delta: float = DELTA_PD

    def __post_init__(self):
        if self.start < 1.0:
            raise ValidationError("mu must start at a value >= 1")
        if self.factor <= 1.0:
            raise ValidationError("mu factor must exceed 1")
        if self.cap < self.start:
            raise ValidationError("mu cap is below the starting value")


@dataclasses.dataclass(frozen=True, eq=False)
class RegularizationResult:
    """Regularized data, the accepted ``mu`` and the sweep history.

    ``history`` holds ``(mu, lam_min, threshold)`` for every tested value.
    """

    data: SampledData
    mu: float
    iterations: int
    history: tuple

    def history_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "mu", "lam_min", "threshold"])
        for i, (mu, lam, thr) in enumerate(self.history):
            writer.writerow([i, repr(mu), repr(lam), repr(thr)])
        return buf.getvalue()


def add_noise(D, spec):
    """``D^k * (1 + eps G^k)`` entrywise, with ``G^k`` symmetric standard normal.

    The upper triangle (diagonal included) of every ``G^k`` is iid N(0, 1)
    and mirrored, so reciprocity survives exactly.
    """
    if spec.epsilon == 0:
        return D.replace(meta=dict(D.meta, noise_eps=0.0, noise_seed=spec.seed))
    rng = np.random.default_rng(spec.seed)
    n2, m, _ = D.D.shape
    iu = np.triu_indices(m)
    G = np.zeros((n2, m, m))
    G[:, iu[0], iu[1]] = rng.standard_normal((n2, iu[0].size))
    G = G + np.triu(G, 1).transpose(0, 2, 1)
    noisy = D.D * (1.0 + spec.epsilon * G)
    meta = dict(D.meta, noise_eps=float(spec.epsilon), noise_seed=int(spec.seed))
    return SampledData(noisy, D.tau, "noisy", meta)


def min_eig(M):
    """Smallest eigenvalue of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def scale_first_sample(D, mu):
    """Copy of ``D`` with only ``D^0`` multiplied by ``mu``."""
    arr = np.array(D.D)
    arr[0] *= mu
    return SampledData(arr, D.tau, "regularized", dict(D.meta, mu=float(mu)))


def regularize(D, schedule=None):
    """Smallest ``mu`` of the schedule making the mass matrix safely positive definite.

    Only ``D^0`` is scaled; it enters the diagonal blocks of the mass matrix
    alone, so ``lam_min`` grows monotonically with ``mu``.

    Parameters
    ----------
    D : SampledData
        Noisy data.
    schedule : MuSchedule, optional

    Returns
    -------
    RegularizationResult

    Raises
    ------
    RegularizationError
        If ``mu`` passes the cap without reaching positive definiteness.
    """
    schedule = schedule or MuSchedule()
    asym = np.max(np.abs(D.D - D.D.transpose(0, 2, 1)))
    if asym > 1e-12 * max(np.max(np.abs(D.D)), 1e-300):
        raise ValidationError("data samples must be symmetric before regularization")
    mn = D.m * D.n
    history = []
    mu = schedule.start
    while mu <= schedule.cap:
        candidate = scale_first_sample(D, mu)
        M = assemble_mass(candidate)
        lam = min_eig(M)
        thr = schedule.delta * np.trace(M) / mn
        history.append((float(mu), lam, float(thr)))
        if lam > thr:
            if mu == 1.0:
                # nothing to shift: hand back the input samples untouched
                candidate = D.replace(meta=dict(D.meta, mu=1.0))
            logger.info("regularization accepted mu=%.6g after %d step(s)", mu, len(history))
            return RegularizationResult(candidate, float(mu), len(history), tuple(history))
        mu *= schedule.factor
    raise RegularizationError(
        f"mass matrix still not positive definite at mu={history[-1][0]:.4g} (cap {schedule.cap}); "
        "data too corrupted"
    )

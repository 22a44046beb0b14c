"""Data-driven reduced order model of the wave propagator.

Everything in this module consumes only the sampled data ``D^k`` (plus
snapshots, in :func:`orthogonalize_snapshots`, for models that are known).
Block matrices are plain ``(m n, m n)`` ndarrays with ``m x m`` blocks.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np

from .errors import BlockCholeskyError, ValidationError

logger = logging.getLogger(__name__)

CONVENTIONS = ("spd_sqrt", "cholesky", "eig")

#: Schur complement eigenvalues below ``EPS_PD * trace`` count as non-positive
EPS_PD = 1e-14


def _blocks(D, n):
    D = getattr(D, "D", D)
    D = np.asarray(D, dtype=float)
    if D.shape[0] < 2 * n:
        raise ValidationError(f"need 2n={2 * n} samples, have {D.shape[0]}")
    return D


def assemble_mass(D, n=None):
    """Mass matrix ``M_{k,l} = (D^{k+l} + D^{|k-l|}) / 2``.

    ``D`` is a :class:`~romimaging.propagate.SampledData` or a ``(2n, m, m)``
    array; ``n`` defaults to half the sample count.
    """
    arr = getattr(D, "D", D)
    n = np.asarray(arr).shape[0] // 2 if n is None else n
    D = _blocks(D, n)
    k = np.arange(n)
    K, L = np.meshgrid(k, k, indexing="ij")
    blocks = 0.5 * (D[K + L] + D[np.abs(K - L)])  # (n, n, m, m)
    m = D.shape[1]
    return blocks.transpose(0, 2, 1, 3).reshape(n * m, n * m)


def assemble_stiffness(D, n=None):
    """Stiffness matrix ``S_{k,l} = (D^{k+l+1} + D^{|k-l+1|} + D^{|k+l-1|} + D^{|k-l-1|}) / 4``."""
    arr = getattr(D, "D", D)
    n = np.asarray(arr).shape[0] // 2 if n is None else n
    D = _blocks(D, n)
    k = np.arange(n)
    K, L = np.meshgrid(k, k, indexing="ij")
    blocks = 0.25 * (D[K + L + 1] + D[np.abs(K - L + 1)] + D[np.abs(K + L - 1)] + D[np.abs(K - L - 1)])
    m = D.shape[1]
    return blocks.transpose(0, 2, 1, 3).reshape(n * m, n * m)


def _diag_factor(S, convention):
    """Factor ``F`` with ``F F^T = S`` for a symmetric positive definite block."""
    w, Q = np.linalg.eigh(S)
    if convention == "spd_sqrt":
        return (Q * np.sqrt(w)) @ Q.T
    if convention == "eig":
        return Q * np.sqrt(w)
    if convention == "cholesky":
        return np.linalg.cholesky(S)
    raise ValidationError(f"unknown diagonal-block convention {convention!r}")


def block_cholesky(M, m, convention="spd_sqrt", eps_pd=EPS_PD):
    """Block lower triangular ``L`` with ``L L^T = M``.

    Parameters
    ----------
    M : ndarray, shape (m n, m n)
        Symmetric matrix with ``m x m`` blocks.
    m : int
        Block size.
    convention : {"spd_sqrt", "cholesky", "eig"}
        How each diagonal block is obtained from its Schur complement:
        symmetric positive definite square root, lower Cholesky factor, or
        ``Q diag(sqrt(w))`` from the eigendecomposition.

    Raises
    ------
    BlockCholeskyError
        If a Schur complement has an eigenvalue ``<= eps_pd * trace``; the
        exception carries the failing block index.
    """
    M = np.asarray(M, dtype=float)
    size = M.shape[0]
    if M.shape != (size, size) or size % m:
        raise ValidationError(f"matrix of shape {M.shape} is not made of {m}x{m} blocks")
    if convention not in CONVENTIONS:
        raise ValidationError(f"unknown diagonal-block convention {convention!r}")
    n = size // m
    L = np.zeros_like(M)
    for k in range(n):
        rk = slice(k * m, (k + 1) * m)
        Lk = L[rk, : k * m]
        schur = M[rk, rk] - Lk @ Lk.T
        schur = 0.5 * (schur + schur.T)
        w = np.linalg.eigvalsh(schur)
        trace = np.trace(schur)
        if not (trace > 0 and w[0] > eps_pd * trace):
            raise BlockCholeskyError(
                f"Schur complement of block {k} is not positive definite "
                f"(min eig {w[0]:.3e}, trace {trace:.3e}); regularize the data",
                block=k,
            )
        Lkk = _diag_factor(schur, convention)
        L[rk, rk] = Lkk
        if k + 1 < n:
            below = slice((k + 1) * m, None)
            rhs = M[below, rk] - L[below, : k * m] @ Lk.T
            # X Lkk^T = rhs  <=>  Lkk X^T = rhs^T
            L[below, rk] = np.linalg.solve(Lkk, rhs.T).T
    return L


def block_forward_solve(L, X, m):
    """Solve ``L Y = X`` for block lower triangular ``L`` by block forward substitution."""
    X = np.asarray(X, dtype=float)
    n = L.shape[0] // m
    Y = np.empty_like(X)
    for k in range(n):
        rk = slice(k * m, (k + 1) * m)
        rhs = X[rk] - L[rk, : k * m] @ Y[: k * m]
        Y[rk] = np.linalg.solve(L[rk, rk], rhs)
    return Y


def block_backward_solve_transpose(L, X, m):
    """Solve ``L^T Y = X`` for block lower triangular ``L``."""
    X = np.asarray(X, dtype=float)
    n = L.shape[0] // m
    Y = np.empty_like(X)
    for k in reversed(range(n)):
        rk = slice(k * m, (k + 1) * m)
        rhs = X[rk] - L[(k + 1) * m :, rk].T @ Y[(k + 1) * m :]
        Y[rk] = np.linalg.solve(L[rk, rk].T, rhs)
    return Y


@dataclasses.dataclass(frozen=True, eq=False)
class ReducedModel:
    """Reduced propagator ``P`` (``mn x mn``) and transducer matrix ``B`` (``mn x m``)."""

    P: np.ndarray
    B: np.ndarray
    m: int
    n: int
    mu: float = 1.0
    convention: str = "spd_sqrt"
    data_hash: str = ""
    symmetry_deviation: float = 0.0

    def block(self, k, l):
        m = self.m
        return self.P[k * m : (k + 1) * m, l * m : (l + 1) * m]


def reduce(D, convention="spd_sqrt", n=None, eps_pd=EPS_PD):
    """ROM from sampled data: ``P = L^{-1} S L^{-T}``, ``B = L^{-1} [D^0; ...; D^{n-1}]``.

    ``D`` is :class:`SampledData` (or a raw ``(2n, m, m)`` array).  The
    Cholesky factor is only used through block triangular solves.
    """
    arr = np.asarray(getattr(D, "D", D), dtype=float)
    n = arr.shape[0] // 2 if n is None else n
    m = arr.shape[1]
    M = assemble_mass(arr, n)
    S = assemble_stiffness(arr, n)
    L = block_cholesky(M, m, convention, eps_pd)
    A = block_forward_solve(L, S, m)  # L^{-1} S
    P = block_forward_solve(L, A.T, m)  # L^{-1} (L^{-1} S)^T = L^{-1} S L^{-T}
    dev = float(np.linalg.norm(P - P.T) / max(np.linalg.norm(P), 1e-300))
    logger.info("reduced propagator asymmetry %.3e", dev)
    P = 0.5 * (P + P.T)
    B = block_forward_solve(L, arr[:n].reshape(n * m, m), m)
    meta = getattr(D, "meta", {}) or {}
    digest = D.digest() if hasattr(D, "digest") else ""
    return ReducedModel(P, B, m, n, float(meta.get("mu", 1.0)), convention, digest, dev)


def resimulate_all(rm, count):
    """``F^k = B^T T_k(P) B`` for ``k = 0 .. count-1`` as a ``(count, m, m)`` array."""
    out = np.empty((count, rm.m, rm.m))
    prev = rm.B
    if count > 0:
        out[0] = rm.B.T @ prev
    if count > 1:
        cur = rm.P @ prev
        out[1] = rm.B.T @ cur
        for k in range(2, count):
            prev, cur = cur, 2.0 * (rm.P @ cur) - prev
            out[k] = rm.B.T @ cur
    return out


def resimulate(rm, k):
    """Single resimulated datum ``F^k``."""
    if k < 0:
        raise ValidationError("k must be non-negative")
    return resimulate_all(rm, k + 1)[k]


def interpolation_errors(rm, D):
    """Relative Frobenius errors ``||F^k - D^k|| / ||D^k||`` over all samples of ``D``."""
    arr = np.asarray(getattr(D, "D", D))
    F = resimulate_all(rm, arr.shape[0])
    return np.linalg.norm(F - arr, axis=(1, 2)) / np.linalg.norm(arr, axis=(1, 2))


@dataclasses.dataclass(frozen=True)
class StructureReport:
    """Off-tridiagonal mass of ``P`` and sub-top mass of ``B``, both relative."""

    off_tridiagonal: float
    below_top: float
    tol: float

    @property
    def passed(self):
        return self.off_tridiagonal <= self.tol and self.below_top <= self.tol

    def to_text(self):
        return (
            f"off_tridiagonal_max_rel {self.off_tridiagonal:.6e}\n"
            f"b_below_top_max_rel {self.below_top:.6e}\n"
            f"tolerance {self.tol:.3e}\n"
            f"status {'PASS' if self.passed else 'FAIL'}\n"
        )


def verify_structure(rm, tol=1e-8):
    """Check block tridiagonality of ``P`` and the top-block-only shape of ``B``.

    Magnitudes are max-abs entries relative to the max-abs entry of ``P``
    (resp. the top block of ``B``).
    """
    m, n = rm.m, rm.n
    idx = np.arange(n * m) // m
    far = np.abs(idx[:, None] - idx[None, :]) >= 2
    pscale = np.max(np.abs(rm.P)) or 1.0
    off = float(np.max(np.abs(rm.P[far])) / pscale) if far.any() else 0.0
    top = np.max(np.abs(rm.B[:m])) or 1.0
    below = float(np.max(np.abs(rm.B[m:])) / top) if n > 1 else 0.0
    return StructureReport(off, below, tol)


@dataclasses.dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """Orthonormalized snapshots ``V`` as an ``(N, m n)`` array (``h^2 V^T V = I``)."""

    values: np.ndarray
    m: int
    n: int
    grid: object
    source: str = ""

    def at(self, index):
        """Row ``V(x)`` at flat node ``index``."""
        return self.values[index]


def gramian(U, h):
    """``h^2 U^T U`` for an ``(N, k)`` snapshot matrix."""
    return h**2 * (U.T @ U)


def orthogonalize_snapshots(snapshots, convention="spd_sqrt", eps_pd=EPS_PD):
    """Implicit block QR ``U = V L^T`` through the block Cholesky factor of the Gramian.

    Returns ``(OrthonormalBasis, L)``.
    """
    U = snapshots.as_matrix()
    h = snapshots.grid.h
    G = gramian(U, h)
    G = 0.5 * (G + G.T)
    L = block_cholesky(G, snapshots.m, convention, eps_pd)
    V = block_forward_solve(L, U.T, snapshots.m).T  # U L^{-T}
    basis = OrthonormalBasis(V, snapshots.m, snapshots.n, snapshots.grid)
    return basis, L

"""Dense symmetric linear algebra and randomization primitives.

Eigenvalues are always returned in non-increasing order. The default solver
is LAPACK (``numpy.linalg.eigh``); a cyclic Jacobi solver is kept alongside as
an independent reference and for callers that want a dependency-free path.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .exceptions import InvalidInput, NotPSD

RANK_RTOL = 1e-12


class EigenPair(NamedTuple):
    U: np.ndarray
    d: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.d) @ self.U.T


ZERO = None  # marker for an all-zero block in OrthogonalBlockMatrix


@dataclass(frozen=True)
class OrthogonalBlockMatrix:
    """Block-diagonal matrix whose blocks are orthogonal or zero.

    ``blocks`` is a sequence of ``(size, Q)`` pairs with ``Q`` either a
    ``size x size`` orthogonal array or :data:`ZERO`.
    """

    blocks: tuple
    total_dim: int

    def __post_init__(self):
        if sum(size for size, _ in self.blocks) != self.total_dim:
            raise InvalidInput("block sizes do not add up to total_dim")

    @property
    def sizes(self):
        return [size for size, _ in self.blocks]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.total_dim, self.total_dim))
        pos = 0
        for size, Q in self.blocks:
            if Q is not ZERO:
                out[pos:pos + size, pos:pos + size] = Q
            pos += size
        return out

    def apply(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros_like(y, dtype=float)
        pos = 0
        for size, Q in self.blocks:
            if Q is not ZERO:
                out[pos:pos + size] = Q @ y[pos:pos + size]
            pos += size
        return out


def symmetrize(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise InvalidInput(f"expected a square matrix, got shape {A.shape}")
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _check_finite(A):
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix contains non-finite entries")


def jacobi_eigen(A, tol: float = 1e-12, max_sweeps: int = 100) -> EigenPair:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Stops once the off-diagonal Frobenius norm is at most ``tol * ||A||_F``
    or after ``max_sweeps`` sweeps.
    """
    A = symmetrize(A).copy()
    _check_finite(A)
    m = A.shape[0]
    V = np.eye(m)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return EigenPair(V, np.zeros(m))
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))  # direct sum: subtracting the diagonal norm cancels
        if off <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                # rotation angle zeroing A[p, q] (Golub & Van Loan, Alg. 8.4.1)
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                A[p, q] = A[q, p] = 0.0
                Vp = V[:, p].copy()
                V[:, p] = c * Vp - s * V[:, q]
                V[:, q] = s * Vp + c * V[:, q]
    d = np.diag(A).copy()
    order = np.argsort(-d, kind="stable")
    return EigenPair(V[:, order], d[order])


def sym_eigen(A, method: str = "lapack") -> EigenPair:
    """Eigendecomposition ``A = U diag(d) U'`` with ``d`` non-increasing.

    Works on a single matrix or a stack (``...x r x r``) with ``method='lapack'``.
    """
    A = symmetrize(A)
    _check_finite(A)
    if method == "jacobi":
        if A.ndim != 2:
            raise InvalidInput("jacobi solver handles a single matrix only")
        return jacobi_eigen(A)
    if method != "lapack":
        raise InvalidInput(f"unknown eigen method {method!r}")
    d, U = np.linalg.eigh(A)
    return EigenPair(U[..., ::-1], d[..., ::-1])


def _as_vector(d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 1:
        raise InvalidInput("expected a vector of eigenvalues")
    return d


def truncate_tail(d, keep: int) -> np.ndarray:
    """Zero every eigenvalue after the first ``keep``."""
    d = _as_vector(d)
    if not 0 <= keep <= d.size:
        raise InvalidInput(f"keep={keep} outside [0, {d.size}]")
    out = d.copy()
    out[keep:] = 0.0
    return out


def rank_tolerance(d, dim: Optional[int] = None):
    d = np.asarray(d, dtype=float)
    dim = d.shape[-1] if dim is None else dim
    return dim * np.maximum(d[..., 0] if d.shape[-1] else 0.0, 0.0) * RANK_RTOL


def numerical_rank(d, dim: Optional[int] = None):
    """Number of eigenvalues above ``dim * max(d) * 1e-12`` (works on stacks)."""
    d = np.asarray(d, dtype=float)
    if d.shape[-1] == 0:
        return np.zeros(d.shape[:-1], dtype=int) if d.ndim > 1 else 0
    tol = rank_tolerance(d, dim)
    top = d[..., 0]
    rank = np.sum(d > np.expand_dims(tol, -1), axis=-1)
    rank = np.where(top > 0, rank, 0)
    return int(rank) if np.ndim(rank) == 0 else rank


def pinv_sqrt_diag(d, keep) -> np.ndarray:
    """Diagonal of ``((diag(d))^{1/2})^+`` after keeping only the first ``keep`` entries.

    ``keep`` may be an array matching the leading (batch) shape of ``d``.
    """
    d = np.asarray(d, dtype=float)
    idx = np.arange(d.shape[-1])
    mask = (idx < np.expand_dims(np.asarray(keep), -1)) & (d > 0)
    out = np.zeros_like(d)
    out[mask] = 1.0 / np.sqrt(d[mask])
    return out


def sqrt_diag(d, keep) -> np.ndarray:
    """Diagonal of ``diag(d)^{1/2}`` with the tail after ``keep`` and negatives zeroed."""
    d = np.asarray(d, dtype=float)
    idx = np.arange(d.shape[-1])
    mask = (idx < np.expand_dims(np.asarray(keep), -1)) & (d > 0)
    return np.where(mask, np.sqrt(np.where(mask, d, 0.0)), 0.0)


def sqrt_psd(A) -> np.ndarray:
    """Symmetric PSD square root; raises :class:`NotPSD` on materially negative eigenvalues."""
    U, d = sym_eigen(A)
    if d.size and d[-1] < -rank_tolerance(d):
        raise NotPSD(f"smallest eigenvalue {d[-1]:.3g} is materially negative")
    return symmetrize((U * np.sqrt(np.maximum(d, 0.0))) @ U.T)


def moore_penrose(A) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix via its eigendecomposition."""
    U, d = sym_eigen(A)
    if not d.size:
        return np.zeros((0, 0))
    big = np.abs(d) > d.size * np.max(np.abs(d)) * RANK_RTOL
    inv = np.zeros_like(d)
    inv[big] = 1.0 / d[big]
    return symmetrize((U * inv) @ U.T)


def haar_orthogonal(m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an ``m x m`` orthogonal matrix from the Haar measure.

    QR of a standard-normal matrix, with column ``j`` of ``Q`` multiplied by
    ``sign(R_jj)`` so the law is exactly Haar.
    """
    if int(m) != m or m < 1:
        raise InvalidInput(f"dimension must be a positive integer, got {m}")
    return _haar_from_normals(rng.standard_normal((int(m), int(m))))


def _haar_from_normals(Z: np.ndarray) -> np.ndarray:
    if Z.shape == (1, 1):
        return np.where(Z >= 0, 1.0, -1.0)
    Q, R = np.linalg.qr(Z)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def rademacher_diag(r: int, rng: np.random.Generator) -> np.ndarray:
    """Vector of ``r`` i.i.d. fair random signs."""
    if int(r) != r or r < 1:
        raise InvalidInput(f"dimension must be a positive integer, got {r}")
    return 2.0 * rng.integers(0, 2, size=int(r)) - 1.0


def block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    sizes = [b.shape[0] for b in blocks]
    out = np.zeros((sum(sizes), sum(sizes)))
    pos = 0
    for b, s in zip(blocks, sizes):
        out[pos:pos + s, pos:pos + s] = b
        pos += s
    return out


def batched_pinv_psd(S: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse of a stack of symmetric PSD matrices (``... x m x m``)."""
    U, d = sym_eigen(S)
    tol = np.expand_dims(rank_tolerance(d), -1)
    big = (d > tol) & (np.expand_dims(d[..., 0], -1) > 0)
    inv = np.where(big, 1.0 / np.where(big, d, 1.0), 0.0)
    return (U * inv[..., None, :]) @ np.swapaxes(U, -1, -2)


"""Covariance corrections of permutation contrast estimates.

A permuted contrast ``sqrt(n) theta_pi`` has limit covariance ``Sigma_pi``
(the pooled-sample structure) instead of ``Sigma``. Each case below maps it
to a vector whose conditional limit covariance is ``Sigma``:

* case 1: ``Sigma^{1/2} (Sigma_pi^{1/2})^+ theta_pi``; needs ``Sigma_pi`` of full rank.
* case 2: ``U D^{1/2} (D_pi^{1/2})^+ R U_pi' theta_pi`` with ``R`` a diagonal of
  random signs; needs distinct eigenvalues of ``Sigma_pi``.
* case 3: as case 2 with ``R`` replaced by a block-diagonal Haar matrix whose
  blocks follow the detected eigenvalue clusters of ``Sigma_pi``.

Eigenvalue tails beyond ``keep`` are zeroed on both sides before the chain.
"""

import warnings
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Tuple

import numpy as np

from .contrasts import ContrastSpec
from .exceptions import CaseInapplicable, InvalidInput
from .linalg import (ZERO, EigenPair, OrthogonalBlockMatrix, _haar_from_normals, numerical_rank,
                     pinv_sqrt_diag, sqrt_diag, sym_eigen, truncate_tail)

DEFAULT_EPS = 0.1
DEFAULT_RN_EXPONENT = 0.25
GAP_WARN = 1e-6


class Case(IntEnum):
    CASE1 = 1
    CASE2 = 2
    CASE3 = 3


def parse_case_mode(mode) -> Optional[Case]:
    """``'auto'`` gives None; ``1/2/3`` (int or str) give the matching :class:`Case`."""
    if mode is None or (isinstance(mode, str) and mode.lower() == "auto"):
        return None
    try:
        return Case(int(mode))
    except (TypeError, ValueError):
        raise InvalidInput(f"case must be auto, 1, 2 or 3; got {mode!r}") from None


def default_rn(sizes, exponent: float = DEFAULT_RN_EXPONENT) -> float:
    """``(min_i n_i)^exponent``."""
    if exponent <= 0:
        raise InvalidInput("r_n exponent must be positive")
    return float(np.min(sizes)) ** exponent


@dataclass(frozen=True)
class CorrectionInputs:
    theta_pi: np.ndarray
    eig_sigma: EigenPair
    eig_sigma_pi: EigenPair
    keep: int
    case: Case = Case.CASE3
    eps: float = DEFAULT_EPS
    r_n: float = 1.0

    def __post_init__(self):
        r = np.asarray(self.theta_pi).shape[0]
        for eig in (self.eig_sigma, self.eig_sigma_pi):
            if eig.U.shape != (r, r) or eig.d.shape != (r,):
                raise InvalidInput("eigendecompositions must match the length of theta_pi")
        if not self.eps > 0 or not self.r_n > 0:
            raise InvalidInput("eps and r_n must be positive")
        if not 0 <= self.keep <= r:
            raise InvalidInput(f"keep={self.keep} outside [0, {r}]")


@dataclass(frozen=True)
class GapStructure:
    """Eigenvalue clusters of ``Sigma_pi``; indices are 1-based.

    ``boundaries`` is ``(1, i_1, ..., i_J, r + 1)`` and block ``j`` covers
    indices ``boundaries[j] .. boundaries[j+1] - 1``.
    """

    I: Tuple[int, ...]
    r: int
    zero_tail: bool

    @property
    def J(self) -> int:
        return len(self.I)

    @property
    def boundaries(self) -> Tuple[int, ...]:
        return (1,) + tuple(self.I) + (self.r + 1,)

    @property
    def block_sizes(self) -> Tuple[int, ...]:
        b = self.boundaries
        return tuple(b[j + 1] - b[j] for j in range(len(b) - 1))


def detect_gaps(d_pi, r_n: float, eps: float) -> GapStructure:
    """Indices ``i`` in ``2..r`` with ``r_n (d_{i-1} - d_i) > eps``; tail zeroed if ``r_n d_r <= eps``."""
    d = np.asarray(d_pi, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise InvalidInput("expected a non-empty eigenvalue vector")
    if not r_n > 0 or not eps > 0:
        raise InvalidInput("r_n and eps must be positive")
    jumps = r_n * (d[:-1] - d[1:]) > eps
    I = tuple(int(i) + 2 for i in np.flatnonzero(jumps))
    return GapStructure(I, d.size, bool(r_n * d[-1] <= eps))


def build_R_eps(gaps: GapStructure, rng: np.random.Generator) -> OrthogonalBlockMatrix:
    """Fresh Haar orthogonal blocks on each cluster; the last one is zero if ``zero_tail``."""
    sizes = gaps.block_sizes
    normals = rng.standard_normal(sum(s * s for s in sizes))
    blocks, pos = [], 0
    for j, s in enumerate(sizes):
        Z = normals[pos:pos + s * s].reshape(s, s)
        pos += s * s
        if gaps.zero_tail and j == len(sizes) - 1:
            blocks.append((s, ZERO))
        else:
            blocks.append((s, _haar_from_normals(Z)))
    return OrthogonalBlockMatrix(tuple(blocks), gaps.r)


def correct_case1(theta_pi, sigma_hat, sigma_hat_pi) -> np.ndarray:
    theta_pi = np.asarray(theta_pi, dtype=float)
    U, d = sym_eigen(sigma_hat)
    Up, dp = sym_eigen(sigma_hat_pi)
    if numerical_rank(dp) < dp.size:
        raise CaseInapplicable("case 1 needs a full-rank permutation covariance")
    y = Up.T @ theta_pi * pinv_sqrt_diag(dp, dp.size)
    return U @ (sqrt_diag(d, d.size) * (U.T @ (Up @ y)))


def _chain(inp: CorrectionInputs, z: np.ndarray) -> np.ndarray:
    scale = sqrt_diag(inp.eig_sigma.d, inp.keep) * pinv_sqrt_diag(inp.eig_sigma_pi.d, inp.keep)
    return inp.eig_sigma.U @ (scale * z)


def correct_case2(inputs: CorrectionInputs, rng: np.random.Generator) -> np.ndarray:
    y = inputs.eig_sigma_pi.U.T @ np.asarray(inputs.theta_pi, dtype=float)
    signs = 2.0 * rng.integers(0, 2, size=y.size) - 1.0
    return _chain(inputs, signs * y)


def correct_case3(inputs: CorrectionInputs, rng: np.random.Generator) -> np.ndarray:
    y = inputs.eig_sigma_pi.U.T @ np.asarray(inputs.theta_pi, dtype=float)
    gaps = detect_gaps(truncate_tail(inputs.eig_sigma_pi.d, inputs.keep), inputs.r_n, inputs.eps)
    return _chain(inputs, build_R_eps(gaps, rng).apply(y))


def contrast_rank(spec: ContrastSpec) -> int:
    return int(np.linalg.matrix_rank(spec.H))


def case_select(mode, eig_sigma: EigenPair, eig_sigma_pi: EigenPair, spec: ContrastSpec):
    """Resolve the case to run and the truncation rank ``keep``.

    ``auto`` picks case 1 when ``Sigma_pi`` is numerically of full rank and
    case 3 otherwise.
    """
    r = spec.r
    rank_pi = numerical_rank(eig_sigma_pi.d)
    keep = min(numerical_rank(eig_sigma.d), rank_pi, contrast_rank(spec))
    case = parse_case_mode(mode)
    if case is None:
        return (Case.CASE1 if rank_pi == r else Case.CASE3), keep
    if case is Case.CASE1 and rank_pi < r:
        raise CaseInapplicable(f"case 1 needs rank(Sigma_pi) = {r}, estimated rank is {rank_pi}")
    if case is Case.CASE2:
        d = eig_sigma_pi.d[:max(keep, 1)]
        if d.size > 1 and np.min(d[:-1] - d[1:]) < GAP_WARN:
            warnings.warn("case 2 assumes distinct eigenvalues of Sigma_pi; estimated gaps below 1e-6",
                          RuntimeWarning, stacklevel=2)
    return case, keep


# batched forms used by the engine: theta (B, r), eigenpairs of Sigma_pi stacked (B, r, r) / (B, r)

def batched_case1(theta, eig_sigma: EigenPair, Upi, dpi) -> np.ndarray:
    keep_pi = numerical_rank(dpi)
    y = np.einsum("bji,bj->bi", Upi, theta) * pinv_sqrt_diag(dpi, keep_pi)
    x = np.einsum("bij,bj->bi", Upi, y)
    U, d = eig_sigma
    return (x @ U * sqrt_diag(d, d.size)) @ U.T


def batched_rotated(theta, eig_sigma: EigenPair, Upi, dpi, keep, case: Case, rngs, eps: float, r_n: float) -> np.ndarray:
    """Cases 2 and 3 for a batch; ``rngs[b]`` supplies iteration ``b``'s randomness."""
    B, r = theta.shape
    y = np.einsum("bji,bj->bi", Upi, theta)
    if case is Case.CASE2:
        signs = np.stack([2.0 * g.integers(0, 2, size=r) - 1.0 for g in rngs]) if B else np.zeros((0, r))
        z = signs * y
    elif case is Case.CASE3:
        z = np.empty_like(y)
        dtr = np.where(np.arange(r) < keep[:, None], dpi, 0.0)
        for b in range(B):
            gaps = detect_gaps(dtr[b], r_n, eps)
            z[b] = build_R_eps(gaps, rngs[b]).apply(y[b])
    else:
        raise InvalidInput(f"batched_rotated handles cases 2 and 3, got {case}")
    scale = sqrt_diag(np.broadcast_to(eig_sigma.d, dpi.shape), keep) * pinv_sqrt_diag(dpi, keep)
    return (scale * z) @ eig_sigma.U.T

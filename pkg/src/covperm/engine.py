"""Observed statistics and ``B`` covariance-corrected permutation replicates.

Iteration ``b`` (1-based) draws its permutation from ``derive_stream(seed, b)``
and its correction randomness from substream ``c`` of the same key, where
``c`` is the case number. Different cases evaluated on one dataset therefore
share permutations but not signs or rotations. Work is cut into fixed-size
chunks whose boundaries do not depend on the worker count, so results are
byte-identical for any number of threads.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np

from .contrasts import ContrastSpec
from .correction import (DEFAULT_EPS, DEFAULT_RN_EXPONENT, Case, batched_case1, batched_rotated,
                         case_select, contrast_rank, default_rn)
from .exceptions import InvalidInput
from .linalg import numerical_rank, sym_eigen, symmetrize
from .moments import GroupedSample, MeanEstimator
from .statistics import Kernel, block_statistics
from .survival import RMSTEstimator, SurvivalSample, rmst_theta

MIN_B = 99
WORKERS_ENV = "COVPERM_WORKERS"


def derive_stream(seed: int, index: int, substream: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, index, substream)``.

    Philox counter-based generator keyed by ``(seed mod 2^64, index)``; the
    substream number occupies the third counter word, which leaves 2^128
    draws per substream before any overlap.
    """
    key = np.array([int(seed) % 2**64, int(index) % 2**64], dtype=np.uint64)
    counter = np.array([0, 0, int(substream) % 2**64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInput(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RunConfig:
    B: int = 1999
    alpha: float = 0.05
    seed: int = 0
    case: Union[str, int] = "auto"
    eps: float = DEFAULT_EPS
    rn_exponent: float = DEFAULT_RN_EXPONENT
    kernel: str = "student"
    theta0: Optional[tuple] = None
    # studentiser inside permutation statistics: "original" keeps Gamma-hat, "permuted" recomputes it
    gamma_pi: str = "original"
    workers: int = 1
    chunk_size: int = 64

    def __post_init__(self):
        if int(self.B) != self.B or self.B < MIN_B:
            raise InvalidInput(f"B must be an integer >= {MIN_B}, got {self.B}")
        if not 0 < self.alpha < 1:
            raise InvalidInput(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.eps > 0 or not self.rn_exponent > 0:
            raise InvalidInput("eps and rn_exponent must be positive")
        if self.gamma_pi not in ("original", "permuted"):
            raise InvalidInput("gamma_pi must be 'original' or 'permuted'")
        if self.workers < 1 or self.chunk_size < 1:
            raise InvalidInput("workers and chunk_size must be positive")
        Kernel.parse(self.kernel)


@dataclass
class PermutationRun:
    W_obs: np.ndarray
    W_perm: np.ndarray
    W_perm_naive: np.ndarray
    case: Case
    labels: list
    diagnostics: Dict[str, object] = field(default_factory=dict)
    theta_perm: Optional[np.ndarray] = None  # B x r corrected sqrt(n) theta^pi, when requested

    @property
    def B(self) -> int:
        return self.W_perm.shape[0]


def _estimator(sample):
    if isinstance(sample, SurvivalSample):
        return RMSTEstimator(sample)
    if isinstance(sample, GroupedSample):
        return MeanEstimator(sample)
    raise InvalidInput(f"unsupported sample type {type(sample).__name__}")


def _degenerate_count(spec: ContrastSpec, S: np.ndarray) -> int:
    S = S if S.ndim == 3 else S[None]
    return int(sum(np.sum(np.trace(S[:, a:b, a:b], axis1=1, axis2=2) <= 0) for a, b, _ in spec.blocks))


def run_cases(sample, spec: ContrastSpec, cfg: RunConfig, cases: Sequence = None,
              keep_vectors: bool = False) -> Dict[Case, PermutationRun]:
    """Run several correction cases on shared permutations.

    ``cases`` defaults to ``[cfg.case]``; ``'auto'`` entries are resolved per
    the observed rank structure. With ``keep_vectors`` each run also carries
    the corrected contrast vectors.
    """
    if spec.k != sample.k or spec.d != sample.d:
        raise InvalidInput(f"contrast is for k={spec.k}, d={spec.d}; sample has k={sample.k}, d={sample.d}")
    if isinstance(sample, SurvivalSample):
        rmst_theta(spec, sample)  # raises VarianceUndefined when a group has no event before tau
    kernel = Kernel.parse(cfg.kernel)
    est = _estimator(sample)
    n = sample.n
    H = np.asarray(spec.H)
    mu, gamma = est.observed()
    theta = H @ mu
    theta0 = np.zeros(spec.r) if cfg.theta0 is None else np.asarray(cfg.theta0, dtype=float)
    if theta0.shape != (spec.r,):
        raise InvalidInput(f"theta0 must have length {spec.r}")
    sigma = symmetrize(H @ gamma @ H.T)
    eig_sigma = sym_eigen(sigma)
    W_obs = block_statistics(spec, np.sqrt(n) * (theta - theta0), sigma, kernel)[0]

    eig_ref = sym_eigen(symmetrize(H @ est.gamma_pi_reference() @ H.T))
    resolved = []
    keep_ref = None
    for mode in (cases if cases is not None else [cfg.case]):
        c, keep_ref = case_select(mode, eig_sigma, eig_ref, spec)
        if c not in resolved:
            resolved.append(c)
    r_n = default_rn(sample.sizes, cfg.rn_exponent)
    rank_sigma = numerical_rank(eig_sigma.d)
    rank_H = contrast_rank(spec)

    B = int(cfg.B)
    starts = list(range(0, B, cfg.chunk_size))

    def chunk(start):
        idx = range(start + 1, min(start + cfg.chunk_size, B) + 1)
        perms = np.stack([derive_stream(cfg.seed, b).permutation(n) for b in idx])
        mu_p, gamma_p = est.permuted(perms)
        theta_p = np.sqrt(n) * mu_p @ H.T
        S_pi = symmetrize(H @ gamma_p @ H.T)
        Upi, dpi = sym_eigen(S_pi)
        rank_pi = numerical_rank(dpi)
        keep = np.minimum(np.minimum(rank_pi, rank_sigma), rank_H)
        S_stat = S_pi if cfg.gamma_pi == "permuted" else sigma
        naive = block_statistics(spec, theta_p, S_pi, kernel)
        out = {}
        for c in resolved:
            if c is Case.CASE1:
                corrected = batched_case1(theta_p, eig_sigma, Upi, dpi)
            else:
                rngs = [derive_stream(cfg.seed, b, int(c)) for b in idx]
                corrected = batched_rotated(theta_p, eig_sigma, Upi, dpi, keep, c, rngs, cfg.eps, r_n)
            out[c] = (block_statistics(spec, corrected, S_stat, kernel), corrected if keep_vectors else None)
        return out, naive, rank_pi, _degenerate_count(spec, S_stat) if cfg.gamma_pi == "permuted" else 0

    workers = min(cfg.workers, len(starts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(chunk, starts))
    else:
        results = [chunk(s) for s in starts]

    naive = np.vstack([res[1] for res in results])
    ranks_pi = np.concatenate([res[2] for res in results])
    degenerate = sum(res[3] for res in results)
    gaps = eig_ref.d[:-1] - eig_ref.d[1:]
    runs = {}
    for c in resolved:
        W_perm = np.vstack([res[0][c][0] for res in results])
        vectors = np.vstack([res[0][c][1] for res in results]) if keep_vectors else None
        diag = {
            "case": int(c),
            "kernel": kernel.value,
            "B": B,
            "seed": int(cfg.seed),
            "n": n,
            "r": spec.r,
            "L": spec.L,
            "rank_H": rank_H,
            "rank_sigma": rank_sigma,
            "rank_sigma_pi_ref": numerical_rank(eig_ref.d),
            "rank_sigma_pi_min": int(ranks_pi.min()),
            "rank_sigma_pi_max": int(ranks_pi.max()),
            "keep_ref": int(keep_ref),
            "min_gap_sigma_pi_ref": float(gaps.min()) if gaps.size else float("nan"),
            "eps": cfg.eps,
            "r_n": r_n,
            "gamma_pi": cfg.gamma_pi,
            "degenerate_obs": _degenerate_count(spec, sigma),
            "degenerate_perm": degenerate,
        }
        runs[c] = PermutationRun(W_obs, W_perm, naive, c, spec.labels, diag, vectors)
    return runs


def resolve_case(sample, spec: ContrastSpec, mode) -> Case:
    """The case ``run`` would use for ``mode`` on this sample."""
    est = _estimator(sample)
    H = np.asarray(spec.H)
    _, gamma = est.observed()
    eig_sigma = sym_eigen(symmetrize(H @ gamma @ H.T))
    eig_ref = sym_eigen(symmetrize(H @ est.gamma_pi_reference() @ H.T))
    return case_select(mode, eig_sigma, eig_ref, spec)[0]


def run(sample, spec: ContrastSpec, cfg: RunConfig, keep_vectors: bool = False) -> PermutationRun:
    """Observed statistics plus ``cfg.B`` corrected permutation replicates for one case."""
    return next(iter(run_cases(sample, spec, cfg, keep_vectors=keep_vectors).values()))

"""Group means, the nuisance matrix Gamma-hat, Sigma-hat, and permutation counterparts."""

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .contrasts import ContrastSpec
from .exceptions import InsufficientData, InvalidInput
from .linalg import block_diag, symmetrize


@dataclass(frozen=True)
class GroupedSample:
    """``k`` groups of ``d``-variate observations; group ``i`` is an ``n_i x d`` array."""

    groups: tuple

    def __post_init__(self):
        groups = []
        for g in self.groups:
            g = np.asarray(g, dtype=float)
            if g.ndim == 1:
                g = g[:, None]
            if g.ndim != 2:
                raise InvalidInput("each group must be a vector or an n_i x d matrix")
            g = g.copy()
            g.setflags(write=False)
            groups.append(g)
        if len(groups) < 2:
            raise InvalidInput("need at least two groups")
        if len({g.shape[1] for g in groups}) != 1:
            raise InvalidInput("all groups must share the same dimension d")
        for i, g in enumerate(groups):
            if g.shape[0] < 2:
                raise InsufficientData(f"group {i + 1} has {g.shape[0]} observation(s); need >= 2")
            if not np.all(np.isfinite(g)):
                raise InvalidInput(f"group {i + 1} contains non-finite values")
        object.__setattr__(self, "groups", tuple(groups))

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def d(self) -> int:
        return self.groups[0].shape[1]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.shape[0] for g in self.groups])

    @property
    def n(self) -> int:
        return int(self.sizes.sum())

    @property
    def pooled(self) -> np.ndarray:
        return np.vstack(self.groups)

    @classmethod
    def from_pooled(cls, pooled: np.ndarray, sizes: Sequence[int]) -> "GroupedSample":
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        return cls(tuple(pooled[bounds[i]:bounds[i + 1]] for i in range(len(sizes))))

    @classmethod
    def from_csv(cls, path) -> "GroupedSample":
        """Long format: column ``group`` (1..k) then ``y1..yd``."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise InvalidInput(f"{path}: empty file") from None
            if not header or header[0] != "group" or len(header) < 2:
                raise InvalidInput(f"{path}: header must be 'group,y1,...,yd'")
            labels, rows = [], []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise InvalidInput(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
                try:
                    labels.append(int(row[0]))
                    rows.append([float(x) for x in row[1:]])
                except ValueError:
                    raise InvalidInput(f"{path}:{lineno}: malformed row {row!r}") from None
        labels = np.array(labels)
        data = np.array(rows)
        k = int(labels.max()) if labels.size else 0
        if labels.size == 0 or labels.min() < 1 or set(labels.tolist()) != set(range(1, k + 1)):
            raise InvalidInput(f"{path}: group labels must be 1..k with every group present")
        return cls(tuple(data[labels == i] for i in range(1, k + 1)))


@dataclass(frozen=True)
class MomentEstimates:
    mu_hat: np.ndarray
    gamma_hat: np.ndarray
    sigma_hat: np.ndarray


def group_mean_vector(s: GroupedSample) -> np.ndarray:
    return np.concatenate([g.mean(axis=0) for g in s.groups])


def gamma_hat(s: GroupedSample) -> np.ndarray:
    """Block-diagonal ``(+)_i n/n_i * Cov_i`` with unbiased (``n_i - 1``) covariances."""
    blocks = []
    for g in s.groups:
        if g.shape[0] < 2:
            raise InsufficientData("covariance needs n_i >= 2")
        c = g - g.mean(axis=0)
        blocks.append(s.n / g.shape[0] * (c.T @ c) / (g.shape[0] - 1))
    return symmetrize(block_diag(blocks))


def sigma_hat(spec: ContrastSpec, gamma: np.ndarray) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (spec.H.shape[1], spec.H.shape[1]):
        raise InvalidInput(f"gamma has shape {gamma.shape}, expected {(spec.H.shape[1],) * 2}")
    return symmetrize(spec.H @ gamma @ spec.H.T)


def permute_pooled(s: GroupedSample, perm) -> GroupedSample:
    """Reassign pooled rows ``Y[perm]`` to groups of the original sizes.

    ``perm`` is a 0-based permutation of ``range(n)``.
    """
    perm = np.asarray(perm)
    if perm.shape != (s.n,) or not np.array_equal(np.sort(perm), np.arange(s.n)):
        raise InvalidInput("perm must be a permutation of 0..n-1")
    return GroupedSample.from_pooled(s.pooled[perm], s.sizes)


def theta_hat(spec: ContrastSpec, s: GroupedSample) -> np.ndarray:
    if spec.k != s.k or spec.d != s.d:
        raise InvalidInput(f"contrast is for k={spec.k}, d={spec.d}; sample has k={s.k}, d={s.d}")
    return spec.H @ group_mean_vector(s)


def estimate_moments(spec: ContrastSpec, s: GroupedSample) -> MomentEstimates:
    g = gamma_hat(s)
    return MomentEstimates(group_mean_vector(s), g, sigma_hat(spec, g))


class MeanEstimator:
    """Vectorised group means and Gamma-hat for many permutations of one sample."""

    def __init__(self, sample: GroupedSample):
        self.sample = sample
        self.pooled = sample.pooled
        self.sizes = sample.sizes
        self.bounds = np.concatenate([[0], np.cumsum(self.sizes)])
        self.n = sample.n
        self.k = sample.k
        self.d = sample.d

    def observed(self):
        return group_mean_vector(self.sample), gamma_hat(self.sample)

    def permuted(self, perms: np.ndarray):
        """Return ``(mu, gamma)`` of shapes ``(B, k*d)`` and ``(B, k*d, k*d)``."""
        X = self.pooled[perms]  # B x n x d
        B, k, d = perms.shape[0], self.k, self.d
        mu = np.empty((B, k * d))
        gamma = np.zeros((B, k * d, k * d))
        for i in range(k):
            a, b = self.bounds[i], self.bounds[i + 1]
            Xi = X[:, a:b, :]
            m = Xi.mean(axis=1)
            C = Xi - m[:, None, :]
            cov = np.einsum("bni,bnj->bij", C, C) / (b - a - 1)
            mu[:, i * d:(i + 1) * d] = m
            gamma[:, i * d:(i + 1) * d, i * d:(i + 1) * d] = self.n / (b - a) * cov
        return mu, gamma

    def gamma_pi_reference(self) -> np.ndarray:
        """Plug-in for the permutation limit of Gamma: ``(+)_i n/n_i * pooled covariance``."""
        c = self.pooled - self.pooled.mean(axis=0)
        pooled_cov = (c.T @ c) / (self.n - 1)
        return block_diag([self.n / ni * pooled_cov for ni in self.sizes])

"""Kaplan-Meier curves, restricted mean survival time (RMST) and its variance.

The variance is the Greenwood-type estimator

    sum_{event times t_j <= tau} A(t_j)^2 d_j / (Y_j (Y_j - d_j)),
    A(t) = int_t^tau S(u) du,

with ``d_j / Y_j^2`` substituted when ``Y_j == d_j`` (last at-risk
individual fails). Ties put events before censorings.
"""

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .contrasts import ContrastSpec
from .exceptions import InvalidInput, VarianceUndefined


@dataclass(frozen=True)
class SurvivalSample:
    """Right-censored data for ``k`` groups: ``groups[i] = (times, status)``."""

    groups: tuple
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidInput(f"tau must be positive, got {self.tau}")
        groups = []
        for i, (t, s) in enumerate(self.groups):
            t = np.asarray(t, dtype=float).ravel()
            s = np.asarray(s).ravel()
            if t.shape != s.shape or t.size == 0:
                raise InvalidInput(f"group {i + 1}: times and status must be non-empty and of equal length")
            if not np.all(np.isfinite(t)) or np.any(t < 0):
                raise InvalidInput(f"group {i + 1}: times must be finite and >= 0")
            if not np.all(np.isin(s, (0, 1))):
                raise InvalidInput(f"group {i + 1}: status must be 0 or 1")
            groups.append((t, s.astype(int)))
        if len(groups) < 2:
            raise InvalidInput("need at least two groups")
        object.__setattr__(self, "groups", tuple(groups))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def d(self) -> int:
        return 1

    @property
    def sizes(self) -> np.ndarray:
        return np.array([t.size for t, _ in self.groups])

    @property
    def n(self) -> int:
        return int(self.sizes.sum())

    @property
    def pooled(self) -> np.ndarray:
        """``n x 2`` array of (time, status) pairs."""
        return np.vstack([np.column_stack([t, s]) for t, s in self.groups])

    @classmethod
    def from_pooled(cls, pooled: np.ndarray, sizes: Sequence[int], tau: float) -> "SurvivalSample":
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        return cls(tuple((pooled[a:b, 0], pooled[a:b, 1].astype(int)) for a, b in zip(bounds[:-1], bounds[1:])), tau)

    @classmethod
    def from_csv(cls, path, tau: float) -> "SurvivalSample":
        """Columns ``group`` (1..k), ``time``, ``status``."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise InvalidInput(f"{path}: empty file") from None
            if header != ["group", "time", "status"]:
                raise InvalidInput(f"{path}: header must be 'group,time,status'")
            g, t, s = [], [], []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 3:
                    raise InvalidInput(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
                try:
                    g.append(int(row[0]))
                    t.append(float(row[1]))
                    s.append(int(row[2]))
                except ValueError:
                    raise InvalidInput(f"{path}:{lineno}: malformed row {row!r}") from None
        g, t, s = np.array(g), np.array(t), np.array(s)
        k = int(g.max()) if g.size else 0
        if g.size == 0 or set(g.tolist()) != set(range(1, k + 1)):
            raise InvalidInput(f"{path}: group labels must be 1..k with every group present")
        return cls(tuple((t[g == i], s[g == i]) for i in range(1, k + 1)), tau)


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous step function: 1 before ``times[0]``, ``values[j]`` on ``[times[j], times[j+1])``."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        vals = np.concatenate([[1.0], self.values])
        return vals[idx + 1]


def _km_table(times, status):
    times = np.asarray(times, dtype=float).ravel()
    status = np.asarray(status).ravel()
    if times.size == 0:
        raise InvalidInput("Kaplan-Meier needs at least one observation")
    if times.shape != status.shape:
        raise InvalidInput("times and status must have equal length")
    uniq, inverse = np.unique(times, return_inverse=True)
    events = np.bincount(inverse, weights=(status == 1).astype(float), minlength=uniq.size)
    counts = np.bincount(inverse, minlength=uniq.size).astype(float)
    at_risk = np.cumsum(counts[::-1])[::-1]
    mask = events > 0
    return uniq[mask], events[mask], at_risk[mask]


def kaplan_meier(times, status) -> StepSurvival:
    t, d, y = _km_table(times, status)
    return StepSurvival(t, np.cumprod(1.0 - d / y))


def _interval_weights(jump_times, tau):
    """Widths of ``[0,t1), [t1,t2), ..., [tm, tau)`` clipped to ``[0, tau]``."""
    p = np.minimum(jump_times, tau)
    return np.diff(np.concatenate([[0.0], p, [tau]]))


def rmst(S: StepSurvival, tau: float) -> float:
    """Exact integral of ``S`` over ``[0, tau]``."""
    if not tau > 0:
        raise InvalidInput("tau must be positive")
    w = _interval_weights(S.times, tau)
    return float(w @ np.concatenate([[1.0], S.values]))


def rmst_variance(times, status, tau: float) -> float:
    t, d, y = _km_table(times, status)
    S = np.cumprod(1.0 - d / y)
    wv = _interval_weights(t, tau) * np.concatenate([[1.0], S])
    A = np.cumsum(wv[::-1])[::-1][1:]  # A[j] = integral from t_j to tau
    use = t <= tau
    denom = np.where(y > d, y * (y - d), y * y)
    return float(np.sum(np.where(use, A * A * d / denom, 0.0)))


def rmst_theta(spec: ContrastSpec, sample: SurvivalSample):
    """Return ``(theta_hat, gamma_hat)`` with ``gamma_hat = diag(n * Var(mu_hat_i))``."""
    if spec.d != 1 or spec.k != sample.k:
        raise InvalidInput("RMST contrasts need d=1 and k matching the sample")
    mu = np.empty(sample.k)
    var = np.empty(sample.k)
    for i, (t, s) in enumerate(sample.groups):
        if not np.any((s == 1) & (t <= sample.tau)):
            raise VarianceUndefined(f"group {i + 1} has no event at or before tau={sample.tau}")
        mu[i] = rmst(kaplan_meier(t, s), sample.tau)
        var[i] = rmst_variance(t, s, sample.tau)
    return spec.H @ mu, np.diag(sample.n * var)


class RMSTEstimator:
    """Vectorised per-group RMST and variance for many permutations of one sample."""

    def __init__(self, sample: SurvivalSample):
        self.sample = sample
        self.tau = sample.tau
        self.sizes = sample.sizes
        self.bounds = np.concatenate([[0], np.cumsum(self.sizes)])
        self.n = sample.n
        self.k = sample.k
        self.d = 1
        pooled = sample.pooled
        self.order = np.argsort(pooled[:, 0], kind="stable")
        t_sorted = pooled[self.order, 0]
        self.status_sorted = pooled[self.order, 1]
        self.uniq, self.starts = np.unique(t_sorted, return_index=True)
        self.weights = _interval_weights(self.uniq, self.tau)
        self.before_tau = self.uniq <= self.tau
        self.position_group = np.repeat(np.arange(self.k), self.sizes)

    def observed(self):
        mu, gamma = self.permuted(np.arange(self.n)[None, :])
        return mu[0], gamma[0]

    def permuted(self, perms: np.ndarray):
        B = perms.shape[0]
        labels = np.empty((B, self.n), dtype=np.int64)
        np.put_along_axis(labels, perms, self.position_group[None, :], axis=1)
        labels = labels[:, self.order]
        mu = np.empty((B, self.k))
        var = np.empty((B, self.k))
        for i in range(self.k):
            M = (labels == i).astype(float)
            cnt = np.add.reduceat(M, self.starts, axis=1)
            ev = np.add.reduceat(M * self.status_sorted, self.starts, axis=1)
            Y = np.cumsum(cnt[:, ::-1], axis=1)[:, ::-1]
            safe_Y = np.where(Y > 0, Y, 1.0)
            S = np.cumprod(1.0 - ev / safe_Y, axis=1)
            wv = self.weights * np.concatenate([np.ones((B, 1)), S], axis=1)
            tail = np.cumsum(wv[:, ::-1], axis=1)[:, ::-1]
            mu[:, i] = tail[:, 0]
            A = tail[:, 1:]
            denom = np.where(Y > ev, Y * (Y - ev), safe_Y * safe_Y)
            term = np.where(self.before_tau & (ev > 0), A * A * ev / denom, 0.0)
            var[:, i] = term.sum(axis=1)
        gamma = np.zeros((B, self.k, self.k))
        idx = np.arange(self.k)
        gamma[:, idx, idx] = self.n * var
        return mu, gamma

    def gamma_pi_reference(self) -> np.ndarray:
        # only the rank of H Gamma H' matters for case selection
        return np.diag(self.n / self.sizes.astype(float))

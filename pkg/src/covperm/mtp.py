"""Multiple-test decisions from a permutation (or simulated) statistic matrix.

Balanced critical values use one common marginal level ``beta`` for every
hypothesis, chosen as large as possible on the grid ``{j/B}`` while the
proportion of rows with at least one exceedance stays at or below alpha.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import chi2

from .contrasts import ContrastSpec
from .exceptions import InsufficientReplicates, InvalidInput, MethodUnavailable, NotPSD
from .linalg import rank_tolerance, sym_eigen
from .statistics import Kernel, block_statistics

REPORT_COLUMNS = ("hypothesis", "statistic", "critical_value", "p_adjusted", "reject")


@dataclass
class TestReport:
    labels: List[str]
    statistic: np.ndarray
    critical_value: np.ndarray
    p_adjusted: np.ndarray
    reject: np.ndarray
    alpha: float
    method: str
    B: int
    diagnostics: Dict[str, object] = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def any_reject(self) -> bool:
        return bool(np.any(self.reject))

    def rows(self):
        for lab, w, q, p, rej in zip(self.labels, self.statistic, self.critical_value, self.p_adjusted, self.reject):
            yield {"hypothesis": lab, "statistic": float(w), "critical_value": float(q),
                   "p_adjusted": None if p is None or np.isnan(p) else float(p), "reject": bool(rej)}

    def _meta(self):
        meta = {"method": self.method, "alpha": self.alpha, "B": self.B}
        meta.update(self.diagnostics)
        return meta

    def to_tsv(self) -> str:
        lines = [f"# {key}={value}" for key, value in self._meta().items()]
        lines.append("\t".join(REPORT_COLUMNS))
        for row in self.rows():
            p = "NA" if row["p_adjusted"] is None else f"{row['p_adjusted']:.6g}"
            lines.append(f"{row['hypothesis']}\t{row['statistic']:.10g}\t{row['critical_value']:.10g}\t{p}\t"
                         f"{int(row['reject'])}")
        return "\n".join(lines) + "\n"

    def to_json_lines(self) -> str:
        lines = [json.dumps({"diagnostics": self._meta()}, sort_keys=True, default=str)]
        lines += [json.dumps(row, sort_keys=True) for row in self.rows()]
        return "\n".join(lines) + "\n"


def _matrix(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.ndim != 2 or not np.all(np.isfinite(W)):
        raise InvalidInput("statistic matrix must be a finite B x L array")
    return W


def balanced_critical_values(W_perm, alpha: float) -> np.ndarray:
    """Critical values ``q_l`` sharing one marginal exceedance level.

    Column quantiles at level ``j/B`` are the ``(B - j)``-th order statistics.
    Row ``b`` exceeds some ``q_l(j)`` iff ``j >= t_b`` with
    ``t_b = min_l #{b' : W[b', l] >= W[b, l]}``; so the largest admissible
    ``j`` is the largest with ``#{b : t_b <= j} <= alpha B``. If even ``j = 1``
    is not admissible the column maxima are returned (no row exceeds them).
    """
    W = _matrix(W_perm)
    B = W.shape[0]
    if not 0 < alpha < 1:
        raise InvalidInput("alpha must lie in (0, 1)")
    if B * alpha < 1:
        raise InsufficientReplicates(f"B={B} is too small for alpha={alpha}; need B >= {int(np.ceil(1 / alpha))}")
    S = np.sort(W, axis=0)
    # number of column entries >= W[b, l]: ties count toward larger quantiles
    geq = np.stack([B - np.searchsorted(S[:, l], W[:, l], side="left") for l in range(W.shape[1])], axis=1)
    t = geq.min(axis=1)
    count = np.cumsum(np.bincount(t, minlength=B + 1))  # count[j] = #{b : t_b <= j}
    admissible = np.flatnonzero(count[1:B + 1] <= alpha * B)
    j = int(admissible.max()) + 1 if admissible.size else 0
    return S[B - 1 - j] if j > 0 else S[B - 1]


def marginal_pvalues(W_obs, W_perm) -> np.ndarray:
    W = _matrix(W_perm)
    w = np.atleast_1d(np.asarray(W_obs, dtype=float))
    return (1.0 + np.sum(W >= w[None, :], axis=0)) / (W.shape[0] + 1.0)


def adjusted_pvalues_minp(W_obs, W_perm) -> np.ndarray:
    """Single-step min-p adjustment on the permutation matrix."""
    W = _matrix(W_perm)
    B = W.shape[0]
    p = marginal_pvalues(W_obs, W)
    S = np.sort(W, axis=0)
    row_p = np.stack([(B - np.searchsorted(S[:, l], W[:, l], side="left")) / B for l in range(W.shape[1])], axis=1)
    min_p = np.sort(row_p.min(axis=1))
    counts = np.searchsorted(min_p, p, side="right")
    return np.minimum(1.0, (1.0 + counts) / (B + 1.0))


def _report(labels, W_obs, q, p, alpha, method, B, diagnostics=None) -> TestReport:
    W_obs = np.atleast_1d(np.asarray(W_obs, dtype=float))
    labels = list(labels) if labels is not None else [f"H{i + 1}" for i in range(W_obs.size)]
    return TestReport(labels, W_obs, np.asarray(q, dtype=float), np.asarray(p, dtype=float), W_obs > q,
                      alpha, method, B, dict(diagnostics or {}))


def multiple_test(W_obs, W_perm, alpha: float, labels=None, method: str = "corrected-permutation",
                  diagnostics=None) -> TestReport:
    q = balanced_critical_values(W_perm, alpha)
    return _report(labels, W_obs, q, adjusted_pvalues_minp(W_obs, W_perm), alpha, method, _matrix(W_perm).shape[0],
                   diagnostics)


def report_from_run(run, alpha: float, method: Optional[str] = None) -> TestReport:
    return multiple_test(run.W_obs, run.W_perm, alpha, run.labels, method or f"permutation-case{int(run.case)}",
                         run.diagnostics)


def bonferroni_naive(W_obs, W_perm_naive, alpha: float, labels=None) -> TestReport:
    """Reject ``l`` iff its uncorrected permutation p-value is at most ``alpha / L``."""
    W = _matrix(W_perm_naive)
    L = W.shape[1]
    p = marginal_pvalues(W_obs, W)
    B = W.shape[0]
    # largest count c of permuted values >= W_obs with (1 + c)/(B + 1) <= alpha/L
    m = int(np.sum((1.0 + np.arange(B + 1)) / (B + 1.0) <= alpha / L)) - 1
    S = np.sort(W, axis=0)
    q = S[B - 1 - m] if 0 <= m < B else (np.full(L, np.inf) if m < 0 else np.full(L, -np.inf))
    return _report(labels, W_obs, q, np.minimum(1.0, p * L), alpha, "bonferroni-naive-permutation", B)


def simulate_gaussian_statistics(sigma_hat, spec: ContrastSpec, kernel, draws: int, rng: np.random.Generator):
    """``draws x L`` kernel values of ``Y ~ N_r(0, Sigma_hat)`` studentised by ``Sigma_hat``."""
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    U, d = sym_eigen(sigma_hat)
    if d.size and d[-1] < -rank_tolerance(d):
        raise NotPSD(f"covariance has eigenvalue {d[-1]:.3g}")
    Y = (rng.standard_normal((draws, d.size)) * np.sqrt(np.maximum(d, 0.0))) @ U.T
    return block_statistics(spec, Y, sigma_hat, kernel)


def asymptotic_multiple(W_obs, sigma_hat, spec: ContrastSpec, alpha: float, kernel="student", draws: int = 1999,
                        rng: Optional[np.random.Generator] = None, labels=None) -> TestReport:
    if draws < 1000:
        raise InvalidInput("asymptotic_multiple needs at least 1000 draws")
    rng = np.random.default_rng(0) if rng is None else rng
    sims = simulate_gaussian_statistics(sigma_hat, spec, kernel, draws, rng)
    return multiple_test(W_obs, sims, alpha, labels if labels is not None else spec.labels, "asymptotic-multiple")


def chi2_quantile(prob: float, df: float) -> float:
    return float(chi2.ppf(prob, df))


def asymptotic_bonferroni(W_obs, alpha: float, df: Sequence[int], kernel="student", labels=None) -> TestReport:
    """Reject ``l`` iff ``W_obs_l`` exceeds the chi-square(df_l) quantile at ``1 - alpha/L``."""
    if Kernel.parse(kernel) not in (Kernel.STUDENT, Kernel.WTS):
        raise MethodUnavailable("the chi-square Bonferroni test needs a student or WTS kernel")
    W_obs = np.atleast_1d(np.asarray(W_obs, dtype=float))
    df = np.broadcast_to(np.asarray(df), W_obs.shape)
    L = W_obs.size
    q = np.array([chi2_quantile(1 - alpha / L, f) for f in df])
    p = np.minimum(1.0, L * chi2.sf(W_obs, df))
    return _report(labels, W_obs, q, p, alpha, "asymptotic-bonferroni", 0)

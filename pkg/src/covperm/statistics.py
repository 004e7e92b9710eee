"""Statistic kernels ``w_l(x, Gamma)`` applied block by block.

Every kernel sees the block's (sqrt(n)-scaled, centred) contrast estimate
``x`` and the block ``S_l = H_l Gamma H_l'`` of the studentising matrix.
Degenerate studentisers (zero variance or trace) give a statistic of 0.
"""

from enum import Enum
from typing import Sequence, Union

import numpy as np

from .contrasts import ContrastSpec
from .exceptions import InvalidInput
from .linalg import batched_pinv_psd


class Kernel(str, Enum):
    STUDENT = "student"
    WTS = "wts"
    ATS = "ats"
    SIGNED = "signed"
    ABS = "abs"

    @classmethod
    def parse(cls, value) -> "Kernel":
        try:
            return cls(value.value if isinstance(value, Enum) else str(value).lower())
        except ValueError:
            raise InvalidInput(f"unknown statistic {value!r}; choose from {[k.value for k in cls]}") from None

    @property
    def chi2_limit(self) -> bool:
        return self in (Kernel.STUDENT, Kernel.WTS)


def student_sq(x: float, sigma2: float) -> float:
    """``x^2 / sigma2``, and 0 when ``sigma2 == 0``."""
    if sigma2 < 0:
        raise InvalidInput("variance must be non-negative")
    return 0.0 if sigma2 == 0 else float(x) ** 2 / sigma2


def wts(x, M) -> float:
    """Quadratic form ``x' M x`` with ``M`` a (pseudo-)inverse covariance."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (x.size, x.size):
        raise InvalidInput(f"M has shape {M.shape}, expected {(x.size, x.size)}")
    return float(x @ M @ x)


def ats(x, trace_val: float) -> float:
    """``x'x / trace_val``; 0 when the trace is 0."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return 0.0 if trace_val <= 0 else float(x @ x) / trace_val


def block_statistics(spec: ContrastSpec, X: np.ndarray, S: np.ndarray, kernel) -> np.ndarray:
    """Evaluate one kernel on every block for a batch.

    Parameters
    ----------
    X : (B, r) array of scaled contrast estimates.
    S : (r, r) or (B, r, r) studentising matrix ``H Gamma H'``.

    Returns
    -------
    (B, L) array of statistics.
    """
    kernel = Kernel.parse(kernel)
    X = np.atleast_2d(X)
    B = X.shape[0]
    out = np.empty((B, spec.L))
    for ell, (a, b, _) in enumerate(spec.blocks):
        x = X[:, a:b]
        Sl = S[..., a:b, a:b]
        if kernel is Kernel.ATS:
            tr = np.trace(Sl, axis1=-2, axis2=-1)
            tr = np.broadcast_to(tr, (B,))
            out[:, ell] = np.where(tr > 0, np.sum(x * x, axis=1) / np.where(tr > 0, tr, 1.0), 0.0)
        elif kernel is Kernel.WTS:
            M = batched_pinv_psd(Sl)
            out[:, ell] = np.einsum("bi,bij,bj->b" if M.ndim == 3 else "bi,ij,bj->b", x, M, x)
        else:
            if b - a != 1:
                raise InvalidInput(f"{kernel.value} kernel needs one row per hypothesis; block {ell + 1} has {b - a}")
            v = np.broadcast_to(Sl[..., 0, 0], (B,))
            pos = v > 0
            safe = np.where(pos, v, 1.0)
            x0 = x[:, 0]
            if kernel is Kernel.STUDENT:
                out[:, ell] = np.where(pos, x0 * x0 / safe, 0.0)
            elif kernel is Kernel.SIGNED:
                out[:, ell] = np.where(pos, x0 / np.sqrt(safe), 0.0)
            else:
                out[:, ell] = np.where(pos, np.abs(x0) / np.sqrt(safe), 0.0)
    return out


def evaluate_all(spec: ContrastSpec, theta_scaled, gamma, kernels: Union[str, Kernel, Sequence] = Kernel.STUDENT):
    """Statistics for every hypothesis from ``sqrt(n)(theta_hat - theta_0)`` and Gamma-hat.

    ``kernels`` is one kernel for all blocks or one per block.
    """
    theta_scaled = np.asarray(theta_scaled, dtype=float)
    if theta_scaled.shape != (spec.r,):
        raise InvalidInput(f"theta has shape {theta_scaled.shape}, expected ({spec.r},)")
    gamma = np.asarray(gamma, dtype=float)
    S = spec.H @ gamma @ spec.H.T
    S = 0.5 * (S + S.T)
    if isinstance(kernels, (str, Kernel)):
        return block_statistics(spec, theta_scaled[None, :], S, kernels)[0]
    kernels = list(kernels)
    if len(kernels) != spec.L:
        raise InvalidInput("need one kernel per hypothesis block")
    full = {kern: block_statistics(spec, theta_scaled[None, :], S, kern)[0] for kern in set(map(Kernel.parse, kernels))}
    return np.array([full[Kernel.parse(kern)][ell] for ell, kern in enumerate(kernels)])

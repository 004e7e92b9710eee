"""Hypothesis matrices ``H`` and their per-hypothesis row blocks ``H_l``."""

import csv
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import InvalidInput

CONTRAST_ATOL = 1e-12


@dataclass(frozen=True)
class ContrastSpec:
    """Hypothesis matrix ``H`` (``r x k*d``) partitioned into ``L`` row blocks.

    ``blocks`` holds ``(start, stop, label)`` row ranges; hypothesis ``l``
    concerns ``H[start:stop] @ mu``.
    """

    H: np.ndarray
    blocks: Tuple[Tuple[int, int, str], ...]
    k: int
    d: int = 1
    family: str = field(default="custom", compare=False)

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        H.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "blocks", tuple((int(a), int(b), str(lab)) for a, b, lab in self.blocks))
        if self.k < 1 or self.d < 1:
            raise InvalidInput("k and d must be positive")
        if H.shape[1] != self.k * self.d:
            raise InvalidInput(f"H has {H.shape[1]} columns, expected k*d = {self.k * self.d}")
        pos = 0
        for start, stop, _ in self.blocks:
            if start != pos or stop <= start:
                raise InvalidInput("row blocks must be contiguous, non-empty and in order")
            pos = stop
        if pos != H.shape[0]:
            raise InvalidInput("row blocks do not cover every row of H")

    @property
    def r(self) -> int:
        return self.H.shape[0]

    @property
    def L(self) -> int:
        return len(self.blocks)

    @property
    def r_ell(self) -> List[int]:
        return [stop - start for start, stop, _ in self.blocks]

    @property
    def labels(self) -> List[str]:
        return [lab for _, _, lab in self.blocks]

    def block(self, ell: int) -> np.ndarray:
        start, stop, _ = self.blocks[ell]
        return self.H[start:stop]

    def as_global(self, label: str = "global") -> "ContrastSpec":
        """Same matrix treated as a single hypothesis (``L = 1``)."""
        return ContrastSpec(self.H, ((0, self.r, label),), self.k, self.d, self.family)


def _check_k(k):
    if int(k) != k or k < 2:
        raise InvalidInput(f"need at least two groups, got k={k}")
    return int(k)


def dunnett(k: int) -> ContrastSpec:
    """Many-to-one comparisons against group 1: row ``l`` is ``e_{l+1} - e_1``."""
    k = _check_k(k)
    H = np.zeros((k - 1, k))
    H[:, 0] = -1.0
    H[np.arange(k - 1), np.arange(1, k)] = 1.0
    blocks = tuple((i, i + 1, f"{i + 2}-1") for i in range(k - 1))
    return ContrastSpec(H, blocks, k, 1, "dunnett")


def centering(k: int) -> ContrastSpec:
    """Each group against the grand mean: ``I - 11'/k``."""
    k = _check_k(k)
    H = np.eye(k) - np.full((k, k), 1.0 / k)
    blocks = tuple((i, i + 1, f"{i + 1}-mean") for i in range(k))
    return ContrastSpec(H, blocks, k, 1, "centering")


def tukey(k: int) -> ContrastSpec:
    """All pairwise comparisons, rows ordered (1,2), (1,3), ..., (1,k), (2,3), ..."""
    k = _check_k(k)
    rows, blocks = [], []
    for a in range(k):
        for b in range(a + 1, k):
            row = np.zeros(k)
            row[a], row[b] = -1.0, 1.0
            blocks.append((len(rows), len(rows) + 1, f"{b + 1}-{a + 1}"))
            rows.append(row)
    return ContrastSpec(np.array(rows), tuple(blocks), k, 1, "tukey")


FAMILIES = {"dunnett": dunnett, "tukey": tukey, "centering": centering}


def make_contrast(family: str, k: int, d: int = 1) -> ContrastSpec:
    try:
        factory = FAMILIES[family]
    except KeyError:
        raise InvalidInput(f"unknown contrast family {family!r}; choose from {sorted(FAMILIES)}") from None
    return expand_multivariate(factory(k), d)


def expand_multivariate(spec: ContrastSpec, d: int) -> ContrastSpec:
    """Replace each scalar row ``h_l`` by the block ``h_l (x) I_d``."""
    if int(d) != d or d < 1:
        raise InvalidInput(f"dimension must be a positive integer, got d={d}")
    if spec.d != 1:
        raise InvalidInput("expand_multivariate expects a univariate (d=1) spec")
    d = int(d)
    if d == 1:
        return spec
    I = np.eye(d)
    H = np.vstack([np.kron(spec.block(ell), I) for ell in range(spec.L)])
    blocks = tuple((start * d, stop * d, lab) for start, stop, lab in spec.blocks)
    return ContrastSpec(H, blocks, spec.k, d, spec.family)


def check_contrast(spec: ContrastSpec) -> bool:
    """True iff ``H (1_k (x) I_d) = 0`` up to ``1e-12``."""
    ones = np.kron(np.ones((spec.k, 1)), np.eye(spec.d))
    return bool(np.max(np.abs(spec.H @ ones), initial=0.0) <= CONTRAST_ATOL)


def from_matrix(H, k: int, d: int = 1, block_sizes: Optional[Sequence[int]] = None,
                labels: Optional[Sequence[str]] = None) -> ContrastSpec:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    sizes = list(block_sizes) if block_sizes is not None else [1] * H.shape[0]
    labels = list(labels) if labels is not None else [f"H{i + 1}" for i in range(len(sizes))]
    if len(labels) != len(sizes):
        raise InvalidInput("one label per block required")
    bounds = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    blocks = tuple((bounds[i], bounds[i + 1], labels[i]) for i in range(len(sizes)))
    return ContrastSpec(H, blocks, k, d)


def write_csv(spec: ContrastSpec, fh) -> None:
    """Write rows of ``H`` with a leading ``block`` label column to an open text handle."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["block"] + [f"c{j + 1}" for j in range(spec.H.shape[1])])
    for start, stop, lab in spec.blocks:
        for row in spec.H[start:stop]:
            w.writerow([lab] + [repr(float(x)) for x in row])


def to_csv(spec: ContrastSpec, path) -> None:
    with open(path, "w", newline="") as fh:
        write_csv(spec, fh)


def from_csv(path, k: int, d: int = 1) -> ContrastSpec:
    """Read a contrast CSV; consecutive rows sharing a ``block`` label form one hypothesis.

    Without a ``block`` column every row is its own hypothesis.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInput(f"{path}: empty contrast file")
    header, body = rows[0], rows[1:]
    has_label = header[0].strip().lower() == "block"
    labels, values = [], []
    for lineno, row in enumerate(body, start=2):
        try:
            vals = [float(x) for x in (row[1:] if has_label else row)]
        except ValueError:
            raise InvalidInput(f"{path}:{lineno}: non-numeric contrast entry") from None
        labels.append(row[0] if has_label else f"H{lineno - 1}")
        values.append(vals)
    if not values:
        raise InvalidInput(f"{path}: no contrast rows")
    sizes, block_labels = [], []
    for lab in labels:
        if block_labels and block_labels[-1] == lab:
            sizes[-1] += 1
        else:
            block_labels.append(lab)
            sizes.append(1)
    if len(set(block_labels)) != len(block_labels):
        raise InvalidInput(f"{path}: rows of one block must be consecutive")
    return from_matrix(np.array(values), k, d, sizes, block_labels)

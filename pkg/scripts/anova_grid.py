"""Univariate multiple-contrast grid: designs x variance patterns x distributions x contrasts.

Balanced sizes are K*(14,...,14) and unbalanced K*(4,8,...,24) for K in {1,2,4}.
Variance patterns are homoscedastic, increasing and decreasing scales. Under
``--alternative`` the last group mean is shifted by 1.5.

    python3 scripts/anova_grid.py --K 1 --n-sim 200 -o results/anova_grid.tsv
"""

import argparse
import itertools
import sys
from pathlib import Path

from covperm.engine import default_workers
from covperm.sim import ANOVA_DISTRIBUTIONS, Scenario, metrics_tsv, run_scenario

K_VALUES = (1, 2, 4)
BASE_SIZES = {"balanced": (14,) * 6, "unbalanced": (4, 8, 12, 16, 20, 24)}
SCALES = {"homoscedastic": (1.0,) * 6, "increasing": (1.0, 1.25, 1.5, 1.75, 2.0, 2.25),
          "decreasing": (2.25, 2.0, 1.75, 1.5, 1.25, 1.0)}
CONTRASTS = ("dunnett", "centering", "tukey")


def methods_for(contrast: str, design: str):
    # full-rank permutation covariance only for many-to-one; distinct eigenvalues only when unbalanced
    perm = ["case1"] if contrast == "dunnett" else []
    perm += ["case2"] if design == "unbalanced" else []
    return tuple(perm + ["case3", "bonferroni", "asymptotic", "asymptotic-bonferroni"])


def grid(K_values, n_sim, B, alternative):
    seed = 1000
    for K, design, pattern, dist, contrast in itertools.product(K_values, BASE_SIZES, SCALES,
                                                                  ANOVA_DISTRIBUTIONS, CONTRASTS):
        seed += 1
        yield Scenario(name=f"anova_{contrast}_{design}_K{K}_{pattern}_{dist}" + ("_alt" if alternative else ""),
                       application="anova", k=6, sizes=tuple(K * s for s in BASE_SIZES[design]),
                       distribution=dist, scales=SCALES[pattern],
                       mu=(0, 0, 0, 0, 0, 1.5) if alternative else None, contrast=contrast,
                       methods=methods_for(contrast, design), n_sim=n_sim, B=B, seed=seed)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--K", type=int, nargs="+", default=list(K_VALUES))
    p.add_argument("--n-sim", type=int, default=1000)
    p.add_argument("--B", type=int, default=499)
    p.add_argument("--alternative", action="store_true")
    p.add_argument("--workers", type=int, default=default_workers())
    p.add_argument("--output", "-o", type=Path)
    args = p.parse_args(argv)
    rows = []
    for sc in grid(args.K, args.n_sim, args.B, args.alternative):
        print(f"running {sc.name}", file=sys.stderr)
        rows.extend(run_scenario(sc, workers=args.workers))
    table = metrics_tsv(rows)
    if args.output:
        args.output.parent.mkdir(parents=True, exist_ok=True)
        args.output.write_text(table)
    sys.stdout.write(table)


if __name__ == "__main__":
    main()

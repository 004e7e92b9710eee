"""Command line entry point: ``covperm {test,simulate,contrasts}``.

Exit codes: 0 success, 2 invalid input, 3 correction case not applicable.
"""

import argparse
import sys
import time
from pathlib import Path
from typing import List, Optional

from . import contrasts as contrasts_mod
from .correction import DEFAULT_EPS, DEFAULT_RN_EXPONENT
from .engine import RunConfig, default_workers, derive_stream, run
from .exceptions import CaseInapplicable, CovPermError, MethodUnavailable
from .moments import GroupedSample
from .mtp import asymptotic_bonferroni, asymptotic_multiple, bonferroni_naive, report_from_run
from .sim import (bundled_scenarios, load_scenario, metrics_tsv, observed_theta_sigma, run_scenario,
                  with_overrides)
from .survival import SurvivalSample

EXIT_OK, EXIT_INVALID, EXIT_CASE = 0, 2, 3
METHODS = ("corrected", "bonferroni", "asymptotic", "asymptotic-bonferroni")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="covperm", description="Covariance-corrected multiple permutation tests.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="test contrasts on a CSV data file")
    t.add_argument("data", help="CSV with header group,y1..yd (or group,time,status with --tau)")
    src = t.add_mutually_exclusive_group()
    src.add_argument("--contrast", default="dunnett", choices=sorted(contrasts_mod.FAMILIES))
    src.add_argument("--contrast-file", help="CSV of contrast rows (optional leading 'block' column)")
    t.add_argument("--stat", default="student", choices=["student", "wts", "ats", "signed", "abs"])
    t.add_argument("--case", default="auto", choices=["auto", "1", "2", "3"])
    t.add_argument("--method", default="corrected", choices=METHODS)
    t.add_argument("--B", type=int, default=1999)
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--eps", type=float, default=DEFAULT_EPS)
    t.add_argument("--rn-exponent", type=float, default=DEFAULT_RN_EXPONENT)
    t.add_argument("--gamma-pi", default="original", choices=["original", "permuted"])
    t.add_argument("--tau", type=float, help="RMST horizon; switches to survival input")
    t.add_argument("--draws", type=int, default=1999, help="Gaussian draws for --method asymptotic")
    t.add_argument("--output", "-o", help="report path (default: stdout)")
    t.add_argument("--format", default="tsv", choices=["tsv", "json-lines"])
    t.add_argument("--workers", type=_positive_int)
    t.add_argument("--timing", action="store_true", help="include wall-clock runtime in the report")

    s = sub.add_parser("simulate", help="run Monte-Carlo scenarios")
    s.add_argument("scenarios", nargs="*", help="scenario files or bundled names")
    s.add_argument("--list", action="store_true", help="list bundled scenarios")
    s.add_argument("--output", "-o", help="TSV to append metric rows to")
    s.add_argument("--n-sim", type=int)
    s.add_argument("--B", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=_positive_int)
    s.add_argument("--dry-run", action="store_true", help="list planned runs without computing")

    c = sub.add_parser("contrasts", help="write a contrast matrix as CSV")
    c.add_argument("--family", required=True, choices=sorted(contrasts_mod.FAMILIES))
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--d", type=int, default=1)
    c.add_argument("--output", "-o")
    return p


def _write(text: str, path: Optional[str]):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_test(args) -> int:
    data = Path(args.data)
    if not data.is_file():
        raise _UsageError(f"data file not found: {data}")
    workers = args.workers or default_workers()
    cfg = RunConfig(B=args.B, alpha=args.alpha, seed=args.seed, case=args.case, eps=args.eps,
                    rn_exponent=args.rn_exponent, kernel=args.stat, gamma_pi=args.gamma_pi, workers=workers)
    if args.method == "asymptotic-bonferroni" and args.stat not in ("student", "wts"):
        raise MethodUnavailable("the chi-square Bonferroni test needs --stat student or wts")
    sample = SurvivalSample.from_csv(data, args.tau) if args.tau is not None else GroupedSample.from_csv(data)
    if args.contrast_file:
        spec = contrasts_mod.from_csv(args.contrast_file, sample.k, sample.d)
        if not contrasts_mod.check_contrast(spec):
            print("covperm: warning: contrast rows do not sum to zero within groups; "
                  "permutation validity is not guaranteed", file=sys.stderr)
    else:
        spec = contrasts_mod.make_contrast(args.contrast, sample.k, sample.d)

    start = time.perf_counter()
    result = run(sample, spec, cfg)
    if args.method == "corrected":
        report = report_from_run(result, cfg.alpha)
    elif args.method == "bonferroni":
        report = bonferroni_naive(result.W_obs, result.W_perm_naive, cfg.alpha, result.labels)
    else:
        _, sigma = observed_theta_sigma(spec, sample)
        if args.method == "asymptotic":
            report = asymptotic_multiple(result.W_obs, sigma, spec, cfg.alpha, args.stat, args.draws,
                                         derive_stream(cfg.seed, 0, 9), result.labels)
        else:
            report = asymptotic_bonferroni(result.W_obs, cfg.alpha, spec.r_ell, args.stat, result.labels)
    report.diagnostics.update({k: v for k, v in result.diagnostics.items() if k not in report.diagnostics})
    elapsed = time.perf_counter() - start
    if args.timing:
        report.diagnostics["runtime_s"] = round(elapsed, 3)
    else:
        print(f"runtime {elapsed:.3f}s", file=sys.stderr)
    _write(report.to_tsv() if args.format == "tsv" else report.to_json_lines(), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.list:
        print("\n".join(bundled_scenarios()))
        return EXIT_OK
    if not args.scenarios:
        raise _UsageError("give at least one scenario (or --list)")
    scenarios = [with_overrides(load_scenario(name), n_sim=args.n_sim, B=args.B, seed=args.seed)
                 for name in args.scenarios]
    if args.dry_run:
        for sc in scenarios:
            print(f"{sc.name}\t{sc.application}\tk={sc.k}\td={sc.d}\tsizes={','.join(map(str, sc.sizes))}\t"
                  f"methods={','.join(sc.methods)}\tn_sim={sc.n_sim}\tB={sc.B}")
        return EXIT_OK
    workers = args.workers or default_workers()
    rows = []
    for sc in scenarios:
        rows.extend(run_scenario(sc, workers=workers))
    table = metrics_tsv(rows)
    if args.output:
        out = Path(args.output)
        body = table if not out.exists() or out.stat().st_size == 0 else table.split("\n", 1)[1]
        with out.open("a") as fh:
            fh.write(body)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_contrasts(args) -> int:
    spec = contrasts_mod.make_contrast(args.family, args.k, args.d)
    if args.output:
        contrasts_mod.to_csv(spec, args.output)
    else:
        contrasts_mod.write_csv(spec, sys.stdout)
    return EXIT_OK


COMMANDS = {"test": cmd_test, "simulate": cmd_simulate, "contrasts": cmd_contrasts}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"covperm: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CaseInapplicable as exc:
        print(f"covperm: case not applicable: {exc}", file=sys.stderr)
        return EXIT_CASE
    except (CovPermError, ValueError, OSError) as exc:
        print(f"covperm: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points.

Subcommands:

* ``test``          run a verdict battery (coordinate or subcube testers)
* ``estimate-kl``   run the additive KL estimator battery
* ``summarize``     aggregate report files into a table (text and CSV)
* ``adversary gen`` write an adversarial model file

The packaged frozen-constants file can be overridden by pointing the
``CONDTEST_CONSTANTS`` environment variable at an alternative JSON file.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import adversaries, models
from .errors import CondtestError
from .harness import ExperimentConfig, run, summarize, summary_text, write_summary_csv


def _add_battery_args(sub, testers):
    sub.add_argument("--visible", required=True, help="visible model file")
    sub.add_argument("--hidden", required=True, help="hidden model file")
    sub.add_argument("--oracle", default=None,
                     help="oracle mode: general, coordinate, subcube, pairwise")
    if testers:
        sub.add_argument("--tester", required=True, choices=testers)
    sub.add_argument("--eps", type=float, required=True)
    sub.add_argument("--trials", type=int, required=True)
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--budget-scale", type=float, default=1.0)
    sub.add_argument("--backend", default="exact", choices=("exact", "glauber"))
    sub.add_argument("--C", type=float, default=None,
                     help="tensorization constant certificate (default 1)")
    sub.add_argument("--balance", type=float, default=None,
                     help="eta or b certificate; computed from the visible model if omitted")
    sub.add_argument("--parallel", type=int, default=None,
                     help="worker processes (default: all cores)")
    sub.add_argument("--out", required=True, help="report path (NDJSON; CSV written alongside)")


def _battery_config(args, tester) -> ExperimentConfig:
    oracle = args.oracle
    if oracle is None:
        oracle = "coordinate" if tester.startswith("coordinate") else "subcube"
    return ExperimentConfig(
        visible=args.visible,
        hidden=args.hidden,
        oracle=oracle,
        tester=tester,
        eps=args.eps,
        trials=args.trials,
        seed=args.seed,
        out=args.out,
        budget_scale=args.budget_scale,
        parallelism=args.parallel,
        backend=args.backend,
        C=args.C,
        balance=args.balance,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="condtest")
    commands = parser.add_subparsers(dest="command", required=True)

    test_cmd = commands.add_parser("test", help="run an identity-testing battery")
    _add_battery_args(
        test_cmd, ("coordinate-kl", "coordinate-tv", "subcube-kl", "subcube-approx")
    )

    est_cmd = commands.add_parser("estimate-kl", help="run the KL-estimation battery")
    _add_battery_args(est_cmd, None)

    sum_cmd = commands.add_parser("summarize", help="aggregate report files")
    sum_cmd.add_argument("paths", nargs="+")
    sum_cmd.add_argument("--csv", default=None, help="also write the table as CSV")

    adv_cmd = commands.add_parser("adversary", help="adversarial model files")
    adv_sub = adv_cmd.add_subparsers(dest="adversary_command", required=True)
    gen = adv_sub.add_parser("gen", help="generate an adversarial model file")
    gen.add_argument("--family", required=True, choices=("subcube-bad", "matched-ising"))
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--eps", type=float, required=True)
    gen.add_argument("--rho", type=float, default=None,
                     help="matched-ising coupling multiplier (default: calibrated table)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "test":
            report = run(_battery_config(args, args.tester))
            frac = report.accept_fraction()
            print(f"wrote {args.out}: {len(report.rows)} trials, accept fraction {frac:.3f}")
        elif args.command == "estimate-kl":
            report = run(_battery_config(args, "kl-estimate"))
            estimates = [r["estimate"] for r in report.rows if r["estimate"] is not None]
            mean = float(np.mean(estimates)) if estimates else float("nan")
            violations = sum(bool(r["support_violation"]) for r in report.rows)
            print(
                f"wrote {args.out}: {len(report.rows)} runs, mean estimate {mean:.4f}, "
                f"support violations {violations}"
            )
        elif args.command == "summarize":
            entries = summarize(args.paths)
            print(summary_text(entries))
            if args.csv:
                write_summary_csv(entries, args.csv)
                print(f"wrote {args.csv}")
        elif args.command == "adversary":
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
            if args.family == "subcube-bad":
                spec = adversaries.random_subcube_bad(args.n, args.eps, rng)
            else:
                spec = adversaries.matched_ising_spec(args.n, args.eps, rho=args.rho, rng=rng)
            models.save_model(spec, args.out)
            print(f"wrote {args.out}")
    except CondtestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

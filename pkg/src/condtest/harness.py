"""Experiment runner: seeded trial batteries over model files.

A battery is described by an :class:`ExperimentConfig`, runs one tester
against one (visible, hidden) model pair for a number of independent
seeded trials, and lands in a report file: newline-delimited JSON records
(one header, then one record per trial) plus a CSV projection next to it.

Trial seeds derive from the config seed as ``seed + trial_id``; inside a
trial the oracle, the tester, and the provider draw their own integer
seeds from that root through one SeedSequence, so serial and parallel
executions produce identical rows.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import constants
from .at_tester import (
    coordinate_query_budget,
    identity_test_coordinate,
    identity_test_tv,
)
from .errors import ConfigError, IncompatibleMode, SchemaMismatch
from .models import balance_profile, load_model
from .oracles import CAPABILITIES, OracleHandle, OracleMode
from .subcube import (
    ExactPrefixProvider,
    FPRASPrefixProvider,
    estimate_kl_global,
    identity_test_subcube,
)

SCHEMA_VERSION = 1

TESTERS = ("coordinate-kl", "coordinate-tv", "subcube-kl", "subcube-approx", "kl-estimate")

_NEEDS = {
    "coordinate-kl": {"coordinate", "general"},
    "coordinate-tv": {"coordinate", "general"},
    "subcube-kl": {"subcube"},
    "subcube-approx": {"subcube"},
    "kl-estimate": {"subcube"},
}


@dataclass
class ExperimentConfig:
    visible: str
    hidden: str
    oracle: str
    tester: str
    eps: float
    trials: int
    seed: int
    out: str
    budget_scale: float = 1.0
    parallelism: int | None = None
    backend: str = "exact"
    C: float | None = None
    balance: float | None = None  # eta (coordinate testers) or b (subcube ones)

    def __post_init__(self):
        if self.tester not in TESTERS:
            raise ConfigError(f"field 'tester': unknown value {self.tester!r}")
        try:
            self.oracle_mode = OracleMode(self.oracle)
        except ValueError:
            raise ConfigError(f"field 'oracle': unknown value {self.oracle!r}") from None
        if self.trials < 1:
            raise ConfigError("field 'trials': must be at least 1")
        if self.eps <= 0:
            raise ConfigError("field 'eps': must be positive")
        if self.budget_scale <= 0:
            raise ConfigError("field 'budget_scale': must be positive")
        if self.backend not in ("exact", "glauber"):
            raise ConfigError(f"field 'backend': unknown value {self.backend!r}")
        if not _NEEDS[self.tester] <= CAPABILITIES[self.oracle_mode]:
            raise IncompatibleMode(
                f"tester {self.tester} needs {sorted(_NEEDS[self.tester])} "
                f"queries; oracle mode {self.oracle} provides {sorted(CAPABILITIES[self.oracle_mode])}"
            )

    def echo(self) -> dict:
        doc = asdict(self)
        doc.pop("out")
        doc.pop("parallelism")
        return doc


def derive_trial_seeds(seed: int, trial: int):
    """Documented split: root = seed + trial, then three child integers."""
    root = np.random.SeedSequence(seed + trial)
    oracle_seed, tester_seed, provider_seed = (
        int(v) for v in root.generate_state(3, np.uint64)
    )
    return oracle_seed, tester_seed, provider_seed


def _resolve_balance(config: ExperimentConfig, visible) -> float:
    if config.balance is not None:
        return float(config.balance)
    if config.tester.startswith("coordinate"):
        return min(balance_profile(visible).eta, 0.5)
    return min(balance_profile(visible, prefix_only=True).b, 0.5)


def _run_trial(args):
    config, visible, hidden, balance, trial = args
    oracle_seed, tester_seed, provider_seed = derive_trial_seeds(config.seed, trial)
    handle = OracleHandle(
        hidden, config.oracle_mode, backend=config.backend, seed=oracle_seed
    )
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(tester_seed)))
    t0 = time.perf_counter()
    C = config.C if config.C is not None else 1.0
    row = {
        "trial": trial,
        "seed": config.seed + trial,
        "verdict": None,
        "estimate": None,
        "support_violation": False,
        "levels_visited": None,
        "rounds": None,
    }
    if config.tester == "coordinate-kl":
        rep = identity_test_coordinate(
            visible, handle, config.eps, C=C, eta=balance,
            budget_scale=config.budget_scale, rng=rng,
        )
        row.update(verdict=rep.verdict.value, levels_visited=rep.levels_visited)
        queries = rep.queries
    elif config.tester == "coordinate-tv":
        rep = identity_test_tv(
            visible, handle, config.eps, C=C, eta=balance,
            budget_scale=config.budget_scale, rng=rng,
        )
        row.update(verdict=rep.verdict.value, levels_visited=rep.levels_visited)
        queries = rep.queries
    elif config.tester in ("subcube-kl", "subcube-approx"):
        if config.tester == "subcube-approx":
            prng = np.random.Generator(np.random.Philox(np.random.SeedSequence(provider_seed)))
            provider = FPRASPrefixProvider(visible, prng)
        else:
            provider = ExactPrefixProvider(visible)
        rep = identity_test_subcube(
            visible, handle, config.eps, b=balance, provider=provider,
            budget_scale=config.budget_scale, rng=rng,
        )
        row.update(verdict=rep.verdict.value, levels_visited=rep.levels_visited)
        queries = rep.queries
    else:
        rep = estimate_kl_global(
            visible, handle, config.eps, b=balance,
            budget_scale=config.budget_scale, rng=rng,
        )
        row.update(
            estimate=rep.estimate,
            support_violation=rep.support_violation,
            rounds=rep.rounds,
        )
        queries = rep.queries
    row["wall_time_s"] = time.perf_counter() - t0
    for mode, count in queries.items():
        row[f"queries_{mode}"] = count
    return row


@dataclass
class Report:
    header: dict
    rows: list = field(default_factory=list)

    def accept_fraction(self) -> float | None:
        verdicts = [r["verdict"] for r in self.rows if r["verdict"] is not None]
        if not verdicts:
            return None
        accepted = sum(1 for v in verdicts if v == "equal")
        return accepted / len(verdicts)


def run(config: ExperimentConfig) -> Report:
    """Execute the battery and write the report files.

    Returns the in-memory report; the exit-status convention (success on
    completion regardless of verdicts) is the CLI's concern.
    """
    try:
        visible = load_model(config.visible)
    except OSError as exc:
        raise ConfigError(f"field 'visible': cannot read {config.visible} ({exc})") from exc
    try:
        hidden = load_model(config.hidden)
    except OSError as exc:
        raise ConfigError(f"field 'hidden': cannot read {config.hidden} ({exc})") from exc
    balance = _resolve_balance(config, visible)
    header = {
        "schema_version": SCHEMA_VERSION,
        "package_version": _package_version(),
        "constants_digest": constants.DIGEST,
        "config": config.echo(),
        "resolved_balance": balance,
    }
    tasks = [(config, visible, hidden, balance, t) for t in range(config.trials)]
    workers = config.parallelism
    if workers is None:
        import os

        workers = os.cpu_count() or 1
    if workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=min(workers, config.trials)) as pool:
            rows = list(pool.map(_run_trial, tasks, chunksize=max(1, config.trials // (4 * workers))))
    else:
        rows = [_run_trial(t) for t in tasks]
    rows.sort(key=lambda r: r["trial"])
    report = Report(header=header, rows=rows)
    _write_report(report, config.out)
    return report


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("condtest")
    except Exception:
        return "unknown"


_CSV_COLUMNS = (
    "trial", "seed", "verdict", "estimate", "support_violation", "levels_visited",
    "rounds", "queries_general", "queries_coordinate", "queries_subcube",
    "queries_pairwise", "wall_time_s",
)


def _write_report(report: Report, out: str) -> None:
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"header": report.header}, sort_keys=True) + "\n")
        for row in report.rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    with open(path.with_suffix(".csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in report.rows:
            writer.writerow(row)


def read_report(path) -> Report:
    rows = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if "header" in doc:
                header = doc["header"]
            else:
                rows.append(doc)
    if header is None:
        raise SchemaMismatch(f"report {path} carries no header record")
    return Report(header=header, rows=rows)


def _wilson_interval(successes: int, total: int, z: float = 1.96):
    if total == 0:
        return (0.0, 1.0)
    phat = successes / total
    denom = 1 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == total else min(1.0, center + half)
    return (lo, hi)


def summarize(paths) -> list:
    """Aggregate one or more reports into per-config summary rows.

    Reports sharing a config (everything except the seed) pool their
    trials; acceptance rates carry Wilson intervals, query counts are
    summarized by quantiles, and coordinate-KL batteries over binary
    alphabets report the measured-to-budget ratio.
    """
    reports = [read_report(p) for p in paths]
    versions = {r.header["schema_version"] for r in reports}
    if len(versions) > 1:
        raise SchemaMismatch(f"mixed report schema versions: {sorted(versions)}")
    groups: dict = {}
    for rep in reports:
        cfg = dict(rep.header["config"])
        cfg.pop("seed", None)
        key = json.dumps(cfg, sort_keys=True)
        groups.setdefault(key, []).extend(
            (rep.header, row) for row in rep.rows
        )
    out = []
    for key, items in sorted(groups.items()):
        cfg = json.loads(key)
        rows = [row for _, row in items]
        totals = [
            sum(row.get(f"queries_{mode}", 0) for mode in
                ("general", "coordinate", "subcube", "pairwise"))
            for row in rows
        ]
        entry = {
            "tester": cfg["tester"],
            "visible": cfg["visible"],
            "hidden": cfg["hidden"],
            "eps": cfg["eps"],
            "trials": len(rows),
            "queries_p50": float(np.percentile(totals, 50)),
            "queries_p90": float(np.percentile(totals, 90)),
            "queries_max": int(max(totals)),
        }
        verdicts = [row["verdict"] for row in rows if row["verdict"] is not None]
        if verdicts:
            accepted = sum(1 for v in verdicts if v == "equal")
            lo, hi = _wilson_interval(accepted, len(verdicts))
            entry.update(
                accept_rate=accepted / len(verdicts),
                accept_ci_low=lo,
                accept_ci_high=hi,
            )
        estimates = [row["estimate"] for row in rows if row.get("estimate") is not None]
        if estimates:
            entry.update(
                estimate_mean=float(np.mean(estimates)),
                estimate_std=float(np.std(estimates)),
                support_violations=sum(bool(r.get("support_violation")) for r in rows),
            )
        header = items[0][0]
        if cfg["tester"] == "coordinate-kl":
            C = cfg.get("C") or 1.0
            balance = header.get("resolved_balance", cfg.get("balance"))
            n = _model_dimension(cfg["visible"])
            if balance and n:
                budget = coordinate_query_budget(
                    n, cfg["eps"], C, balance, cfg.get("budget_scale", 1.0)
                )
                entry["budget_ratio_max"] = max(totals) / budget
        out.append(entry)
    return out


def _model_dimension(path):
    try:
        return load_model(path).n
    except Exception:
        return None


def summary_text(entries) -> str:
    lines = []
    for e in entries:
        parts = [f"{e['tester']:>14s}", f"eps={e['eps']:<6g}", f"trials={e['trials']:<4d}"]
        if "accept_rate" in e:
            parts.append(
                f"accept={e['accept_rate']:.3f} [{e['accept_ci_low']:.3f}, {e['accept_ci_high']:.3f}]"
            )
        if "estimate_mean" in e:
            parts.append(f"estimate={e['estimate_mean']:.4f}+-{e['estimate_std']:.4f}")
            if e.get("support_violations"):
                parts.append(f"violations={e['support_violations']}")
        parts.append(f"q50={e['queries_p50']:.3g}")
        if "budget_ratio_max" in e:
            parts.append(f"budget_used={e['budget_ratio_max']:.2%}")
        lines.append("  ".join(parts))
    return "\n".join(lines)


def write_summary_csv(entries, path) -> None:
    fieldnames = sorted({k for e in entries for k in e})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for e in entries:
            writer.writerow(e)

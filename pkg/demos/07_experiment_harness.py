"""Seeded trial batteries, report files, and aggregation.

The same flow is available from the command line:

    condtest adversary gen --family subcube-bad --n 8 --eps 0.6 --seed 5 --out bad.json
    condtest test --visible uniform.json --hidden bad.json --tester coordinate-kl \
        --eps 1.0 --trials 100 --seed 3 --out far.ndjson
    condtest summarize far.ndjson --csv summary.csv

Run:  python demos/07_experiment_harness.py
"""

import tempfile
from pathlib import Path

from condtest.harness import ExperimentConfig, run, summarize, summary_text
from condtest.models import SubcubeBad, Uniform, save_model

workdir = Path(tempfile.mkdtemp(prefix="condtest-demo-"))
print("writing model files and reports under", workdir)

uniform = workdir / "uniform8.json"
save_model(Uniform(8, 2), uniform)
bad = workdir / "bad8.json"
save_model(SubcubeBad(n=8, A=(3,), sigma=(0, 1, 1, 0, 1, 0, 0, 1)), bad)

batteries = [
    ("null", uniform, uniform),
    ("far", uniform, bad),
]
outs = []
for name, visible, hidden in batteries:
    out = workdir / f"{name}.ndjson"
    config = ExperimentConfig(
        visible=str(visible),
        hidden=str(hidden),
        oracle="coordinate",
        tester="coordinate-kl",
        eps=1.0,
        trials=20,
        seed=2024,
        out=str(out),
        budget_scale=0.5,
    )
    report = run(config)
    outs.append(str(out))
    print(f"{name:5s} battery: accept fraction {report.accept_fraction():.2f}, "
          f"rows in {out.name} (+ .csv projection)")

print("\naggregate view:")
print(summary_text(summarize(outs)))

print("\nrerunning the far battery with the same seed reproduces every row")
from condtest.harness import read_report  # noqa: E402

config = ExperimentConfig(
    visible=str(uniform), hidden=str(bad), oracle="coordinate",
    tester="coordinate-kl", eps=1.0, trials=20, seed=2024,
    out=str(workdir / "far2.ndjson"), budget_scale=0.5,
)
run(config)


def stripped(path):
    return [
        {k: v for k, v in row.items() if k != "wall_time_s"}
        for row in read_report(path).rows
    ]


print("  rows identical:", stripped(outs[1]) == stripped(str(workdir / "far2.ndjson")))

"""Frozen numeric constants used by the testers and estimators.

Two kinds of constants live here.  Literals stated by the algorithms
themselves (sample-size factors, schedule factors) are module-level Python
constants.  Constants that were frozen after Monte Carlo calibration (the
l2 statistic budget factor, query-budget envelopes, the entropy-estimator
sample-size coefficient, the matched-pair coupling table) are read from a
versioned JSON file at import time.  Set the environment variable
``CONDTEST_CONSTANTS`` to an alternative path to override the packaged
file; reports record a digest of whichever file was loaded.
"""

from __future__ import annotations

import hashlib
import json
import os
from importlib import resources

# Sample-size and schedule literals.  Each is the exact factor used by the
# corresponding procedure; none of these are tunable.
AMPLIFY_FACTOR = 18          # majority vote repetitions: ceil(18 ln(1/delta))
MEDIAN_AMPLIFY_FACTOR = 13   # median-of-estimates repetitions: ceil(13 ln(1/delta))
BERNOULLI_MEAN_FACTOR = 10   # mean tester: m = ceil(10 (1+gamma) / (gamma^2 q))
BERNOULLI_CASE1_FACTOR = 64  # two-sided Bernoulli interval test: m = ceil(64/eps)
ZETA_DENOM_FACTOR = 10       # light-mass cutoff: zeta = eps / (10 k' ln(2/b))
STAGE1_GAMMA_FACTOR = 5      # light-mass inflation: gamma = eps/(5 q(Q2) ln(2/b)) - 1
G_SAMPLES_FACTOR = 8         # log-mass estimator: m = ceil(8 ln^2(1/b) / eps^2)
GLOBAL_PAIRS_FACTOR = 8      # global KL estimator: L = ceil(8 n^2 ln^2(1/b) / eps^2)
TV_STAGE1_MARGIN = 2         # support-screening samples: 2 * ceil(2 ln 3 / eps)

ENV_VAR = "CONDTEST_CONSTANTS"


def _load() -> tuple[dict, str]:
    path = os.environ.get(ENV_VAR)
    if path:
        with open(path, "rb") as fh:
            raw = fh.read()
    else:
        raw = resources.files(__package__).joinpath("_constants.json").read_bytes()
    return json.loads(raw), hashlib.sha256(raw).hexdigest()


_DATA, DIGEST = _load()

SCHEMA_VERSION: int = _DATA["schema_version"]

# Calibrated: sample budget factor of the Poissonized l2 statistic.
L2_C0: float = float(_DATA["l2_c0"])

# Calibrated: envelope constants for per-run query-count assertions.
BUDGET_COORDINATE_K2: float = float(_DATA["budget_coordinate_k2"])
BUDGET_KL_SMALL: float = float(_DATA["budget_kl_small"])

# Calibrated: entropy estimator sample-size coefficient plus the Monte
# Carlo grid it was validated on (rows: k, eps, delta, m, fail_rate).
ENTROPY_C: float = float(_DATA["entropy_c"])
ENTROPY_CALIBRATION: list = list(_DATA["entropy_calibration"])

# Calibrated: smallest matched-pair coupling multiplier rho per (n, eps)
# with distance to uniform at least eps (rows: n, eps, rho).
MATCHED_ISING_RHO: list = list(_DATA["matched_ising_rho"])


def as_dict() -> dict:
    """Snapshot of the loaded calibrated constants."""
    return dict(_DATA)

"""Frozen-constants file loading and the environment override."""

import json
import subprocess
import sys

from condtest import constants


def test_packaged_values_loaded():
    assert constants.SCHEMA_VERSION == 1
    assert constants.L2_C0 >= 1.0
    assert constants.BUDGET_COORDINATE_K2 > 0
    assert constants.BUDGET_KL_SMALL > 0
    assert constants.ENTROPY_C > 0
    assert len(constants.DIGEST) == 64
    assert constants.ENTROPY_CALIBRATION, "calibration grid must ship with the package"
    assert constants.MATCHED_ISING_RHO, "coupling table must ship with the package"


def test_literal_factors_documented():
    assert constants.AMPLIFY_FACTOR == 18
    assert constants.BERNOULLI_MEAN_FACTOR == 10
    assert constants.BERNOULLI_CASE1_FACTOR == 64
    assert constants.G_SAMPLES_FACTOR == 8
    assert constants.GLOBAL_PAIRS_FACTOR == 8


def test_environment_override(tmp_path):
    doc = constants.as_dict()
    doc["l2_c0"] = 99.5
    alt = tmp_path / "alt.json"
    alt.write_text(json.dumps(doc))
    out = subprocess.run(
        [sys.executable, "-c", "from condtest import constants; print(constants.L2_C0, constants.DIGEST)"],
        capture_output=True,
        text=True,
        env={"PATH": "/usr/bin:/bin", "CONDTEST_CONSTANTS": str(alt)},
        check=True,
    )
    value, digest = out.stdout.split()
    assert float(value) == 99.5
    assert digest != constants.DIGEST

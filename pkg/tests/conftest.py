import copy
import json
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]

SMALL = {
    "name": "small",
    "seed": 5,
    "forward": {"f_c": 100000.0, "duration": 0.0001, "dt": 1e-7},
    "observation": {"model": "analytic", "noise": 0.0, "peak_amplitude": 100000.0},
    "inversion_model": "analytic",
    "true_anomaly_mm": [-10.0, 20.0],
    "landscape": {"nx": 4, "nz": 3},
    "strategies": {
        "pso": {"pop": 6, "gens": 2},
        "uhsa1": {"a": 0.0, "Nc": 6},
        "uhsa2": {"a": 0.0, "Nc": 6},
        "gp": {"n_doe": 10, "n_holdout": 3, "lhs_iterations": 2, "lhs_swaps": 20,
               "pso": {"pop": 10, "gens": 3}},
    },
}


@pytest.fixture
def small_spec_dict():
    return copy.deepcopy(SMALL)


@pytest.fixture
def small_spec_file(tmp_path, small_spec_dict):
    small_spec_dict["output_dir"] = str(tmp_path / "out")
    path = tmp_path / "small.json"
    path.write_text(json.dumps(small_spec_dict))
    return path

"""Shared fixtures: small fitted run directories reused across test modules.

Chains are kept short here; statistical quality is covered by the dedicated
surrogate tests and the acceptance suite.
"""

import json

import pytest

from actionpath.pipeline import RunConfig, cmd_fit, cmd_plan, cmd_synth


@pytest.fixture(scope="session")
def synth_run(tmp_path_factory):
    """Synthetic dataset, fitted and planned with a fast configuration."""
    out = tmp_path_factory.mktemp("synth_run")
    config = RunConfig.from_dict(
        {
            "dataset": {"kind": "synthetic"},
            "out_dir": str(out),
            "seed": 0,
            "regressor": {"folds": 3},
            "surrogate": {"k_range": [1, 2], "iterations": 150, "warmup": 60},
            "intervention": {"top_n": 2},
            "cell_sigma": 0.5,
            "L": 150,
            "instances": {"ids": [0, 1, 2]},
        }
    )
    cmd_synth(config)
    fit = cmd_fit(config)
    plan = cmd_plan(config)
    return {"config": config, "dir": out, "fit": fit, "plan": plan}


@pytest.fixture(scope="session")
def gappy_run(tmp_path_factory):
    """CSV dataset with missing cells in one intervention feature, fitted;
    planning is left to the tests so they can inspect skip behavior."""
    out = tmp_path_factory.mktemp("gappy_run")
    rows = ["x1,x2,y"]
    import numpy as np

    rng = np.random.default_rng(0)
    for i in range(60):
        x1 = "NA" if i % 4 == 0 else f"{rng.normal():.6f}"
        x2 = f"{rng.normal():.6f}"
        y = f"{rng.normal() * 2 + 1:.6f}"
        rows.append(f"{x1},{x2},{y}")
    csv_path = out / "gappy.csv"
    csv_path.write_text("\n".join(rows) + "\n")
    schema_path = out / "gappy.schema.json"
    schema_path.write_text(
        json.dumps(
            [
                {"name": "x1", "kind": "continuous", "role": "feature"},
                {"name": "x2", "kind": "continuous", "role": "feature"},
                {"name": "y", "kind": "continuous", "role": "response"},
            ]
        )
    )
    config = RunConfig.from_dict(
        {
            "dataset": {
                "kind": "csv",
                "path": str(csv_path),
                "schema_path": str(schema_path),
            },
            "out_dir": str(out),
            "seed": 0,
            "regressor": {"folds": 3},
            "surrogate": {"k_range": [1], "iterations": 100, "warmup": 40},
            "intervention": {"features": ["x1"]},
            "cell_sigma": 0.5,
            "L": 60,
        }
    )
    cmd_fit(config)
    return {"config": config, "dir": out}

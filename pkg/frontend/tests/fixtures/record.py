"""Regenerate the recorded service responses used by the webui tests.

Runs the seeded demo pipeline into a scratch directory, starts the API
in-process, captures raw response bytes, and rewrites the .json files next
to this script. Byte parity between the batch artifact and the /v1/plan
response is asserted during recording, so the fixtures stay anchored to the
pipeline output.

Usage: python3 frontend/tests/fixtures/record.py
"""

import json
import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from actionpath.pipeline import RunConfig, cmd_fit, cmd_plan, cmd_synth
from actionpath.service import create_app

HERE = Path(__file__).resolve().parent


def build_run(out: Path) -> RunConfig:
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
    cmd_fit(config)
    cmd_plan(config)
    return config


def save(name: str, content: bytes):
    (HERE / name).write_bytes(content)
    print(f"wrote {name} ({len(content)} bytes)")


def main():
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        build_run(out)
        client = TestClient(create_app(str(out)))

        r = client.post("/v1/plan", json={"instance_id": 0})
        assert r.status_code == 200, r.text
        on_disk = (out / "plans" / "instance_0000.json").read_bytes()
        assert r.content == on_disk, "service response diverged from the batch artifact"
        save("plan_default.json", r.content)

        payload = json.loads(r.content)
        iv = payload["config"]["intervention"]

        r = client.post("/v1/plan", json={"instance_id": 0, "intervention": [iv[1]]})
        assert r.status_code == 200, r.text
        save("plan_toggled.json", r.content)

        r = client.post("/v1/plan", json={"instance_id": 0, "L": 0})
        assert r.status_code == 200, r.text
        single = json.loads(r.content)
        assert len(single["steps"]) == 1 and single["score"] == 0.0
        save("plan_single.json", r.content)

        # a target the default path crosses strictly between origin and end
        preds = [s["prediction"] for s in payload["steps"]]
        target = (preds[0] + preds[-1]) / 2.0
        r = client.post(
            "/v1/plan",
            json={"instance_id": 0, "constraints": {"target_value": target}},
        )
        assert r.status_code == 200, r.text
        save("plan_target.json", r.content)
        (HERE / "plan_target_value.json").write_text(json.dumps({"target": target}) + "\n")
        print(f"wrote plan_target_value.json (target={target})")

        r = client.get("/v1/instances")
        assert r.status_code == 200
        save("instances.json", r.content)

        feats = json.loads(r.content)["instances"][0]["features"]
        r = client.post("/v1/density", json={"x": feats})
        assert r.status_code == 200
        save("density.json", r.content)

        r = client.post("/v1/plan", json={"instance_id": 0, "L": 60000})
        assert r.status_code == 400 and r.json()["code"] == "l_too_large"
        save("error_l_too_large.json", r.content)

        r = client.post("/v1/plan", json={"instance_id": 99999})
        assert r.status_code == 404
        save("error_unknown_instance.json", r.content)
    print("done")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Report rendering: step ladders, 2-D path projections, score histogram.

Every figure is written as SVG with a fixed hash salt and no embedded date,
so reruns produce identical bytes. Each figure has a CSV table next to it
carrying the same numbers.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path as FsPath

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .data import impute_median, split
from .pipeline import PipelineError, RunConfig, _load_dataset

plt.rcParams["svg.hashsalt"] = "actionpath"

__all__ = ["render_run", "step_ladder", "projection", "score_histogram"]

_SVG_META = {"Date": None}


def _write_csv(path: FsPath, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def _save(fig, path: FsPath):
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return str(path)


def step_ladder(payload: dict, out_dir: FsPath):
    """Ladder view of one plan: which variable moves at each step, and the
    predicted response trace underneath."""
    iid = payload["instance_id"]
    steps = payload["steps"]
    features = payload["config"]["intervention"]
    rows = [
        (i, s["feature"] or "", s["move"], s["prediction"], s["log_density"])
        for i, s in enumerate(steps)
    ]
    csv_path = _write_csv(
        out_dir / f"ladder_{iid:04d}.csv",
        ("step", "feature", "move", "prediction", "log_density"),
        rows,
    )

    fig, (ax_moves, ax_pred) = plt.subplots(
        2, 1, figsize=(7, 4.5), sharex=True, height_ratios=[2, 1]
    )
    lanes = {f: i for i, f in enumerate(features)}
    for i, s in enumerate(steps[1:], start=1):
        lane = lanes[s["feature"]]
        ax_moves.annotate(
            "",
            xy=(i, lane + 0.3 * s["move"]),
            xytext=(i, lane - 0.3 * s["move"]),
            arrowprops=dict(arrowstyle="-|>", color="tab:blue"),
        )
    ax_moves.set_yticks(range(len(features)), features)
    ax_moves.set_ylim(-0.5, len(features) - 0.5)
    ax_moves.set_title(f"instance {iid}: intervention order")
    ax_moves.grid(True, axis="x", alpha=0.3)

    ax_pred.plot(range(len(steps)), [s["prediction"] for s in steps], marker="o", ms=3)
    ax_pred.set_xlabel("step")
    ax_pred.set_ylabel("prediction")
    ax_pred.grid(True, alpha=0.3)
    fig.tight_layout()
    svg_path = _save(fig, out_dir / f"ladder_{iid:04d}.svg")
    return [csv_path, svg_path]


def projection(payload: dict, train_xy, names, out_dir: FsPath):
    """Training scatter on the first two intervention features with the path
    polyline overlaid (real units)."""
    iid = payload["instance_id"]
    fx, fy = names
    fnames = payload["feature_names"]
    ix, iy = fnames.index(fx), fnames.index(fy)
    path_xy = [(s["coords_real"][ix], s["coords_real"][iy]) for s in payload["steps"]]
    rows = [("train", x, y) for x, y in train_xy] + [("path", x, y) for x, y in path_xy]
    csv_path = _write_csv(out_dir / f"projection_{iid:04d}.csv", ("kind", fx, fy), rows)

    fig, ax = plt.subplots(figsize=(5.5, 5))
    ax.scatter(*zip(*train_xy), s=8, alpha=0.35, color="0.6", label="training data")
    px, py = zip(*path_xy)
    ax.plot(px, py, "-o", color="tab:red", ms=4, label="planned path")
    ax.plot(px[0], py[0], "s", color="tab:red", ms=8, mfc="none", label="start")
    ax.set_xlabel(fx)
    ax.set_ylabel(fy)
    ax.set_title(f"instance {iid}: path over data support")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    svg_path = _save(fig, out_dir / f"projection_{iid:04d}.svg")
    return [csv_path, svg_path]


def score_histogram(summary: dict, out_dir: FsPath):
    edges = summary["histogram"]["bin_edges"]
    counts = summary["histogram"]["counts"]
    rows = [(edges[i], edges[i + 1], counts[i]) for i in range(len(counts))]
    csv_path = _write_csv(out_dir / "scores.csv", ("bin_lo", "bin_hi", "count"), rows)

    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    widths = [edges[i + 1] - edges[i] for i in range(len(counts))]
    ax.bar(edges[:-1], counts, width=widths, align="edge", edgecolor="white")
    ax.axvline(0.0, color="0.3", lw=1, ls="--")
    ax.set_xlabel("actionability score")
    ax.set_ylabel("instances")
    ax.set_title(
        f"median {summary['median_score']:.2f}, "
        f"{100 * summary['positive_fraction']:.0f}% positive"
    )
    fig.tight_layout()
    svg_path = _save(fig, out_dir / "scores.svg")
    return [csv_path, svg_path]


def render_run(run_dir) -> dict:
    """Render all report artifacts for a completed plan stage."""
    run_dir = FsPath(run_dir)
    plans_dir = run_dir / "plans"
    summary_path = plans_dir / "summary.json"
    if not summary_path.exists():
        raise PipelineError(f"no plan summary at {summary_path}")
    with open(summary_path, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    with open(run_dir / "bundle.json", "r", encoding="utf-8") as fh:
        bundle = json.load(fh)

    out_dir = run_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = score_histogram(summary, out_dir)

    payloads = []
    for item in summary["instances"]:
        p = plans_dir / f"instance_{item['instance_id']:04d}.json"
        with open(p, "r", encoding="utf-8") as fh:
            payloads.append(json.load(fh))

    # real-space training scatter for the projection backdrop
    train_xy = None
    proj_names = None
    if payloads:
        iv = payloads[0]["config"]["intervention"]
        if len(iv) >= 2:
            proj_names = iv[:2]
            config = RunConfig.from_dict(bundle["config"])
            ds = _load_dataset(config)
            train_raw, _ = split(ds, config.split_fraction, seed=config.seed)
            train = impute_median(train_raw, train_raw)
            cx, cy = (train.column_index(n) for n in proj_names)
            train_xy = list(zip(train.values[:, cx].tolist(), train.values[:, cy].tolist()))

    for payload in payloads:
        artifacts.extend(step_ladder(payload, out_dir))
        if train_xy is not None:
            artifacts.extend(projection(payload, train_xy, proj_names, out_dir))

    index = {
        "median_score": summary["median_score"],
        "positive_fraction": summary["positive_fraction"],
        "instances": [i["instance_id"] for i in summary["instances"]],
        "skipped": summary["skipped"],
        "artifacts": sorted(str(FsPath(a).relative_to(run_dir)) for a in artifacts),
    }
    index_path = out_dir / "index.json"
    index_path.write_text(
        json.dumps(index, sort_keys=True, indent=1, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    artifacts.append(str(index_path))
    return {"artifacts": artifacts, "index": str(index_path)}

"""End-to-end orchestration: config, artifacts, batch planning, ledger.

A run directory accumulates plain JSON/CSV artifacts stage by stage:
dataset -> fitted models -> per-instance plans -> report tables/figures.
Everything is seeded and artifacts are written in a canonical form so two
runs with the same config are byte-identical (timestamps live only in the
ledger).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from .data import (
    DataError,
    Dataset,
    SyntheticSpec,
    diabetes_dataset,
    drop_outliers_3sigma,
    dump_schema,
    fit_standardizer,
    gen_synthetic,
    impute_median,
    load_csv,
    load_schema,
    schema_from_json,
    schema_to_json,
    split,
    write_csv,
    Standardizer,
)
from .regressor import (
    DEFAULT_GRID,
    GbtHyperParams,
    GbtModel,
    cross_validate,
    evaluate,
    fit_gbt,
    rfe,
)
from .surrogate import McmcConfig, SurrogateModel, select_K
from .planner import Constraints, PlannerError, build_grid, path_search

__all__ = [
    "PipelineError",
    "ConfigError",
    "RunConfig",
    "RunLedger",
    "RUN_CONFIG_SCHEMA",
    "canonical_json",
    "cmd_synth",
    "cmd_fit",
    "cmd_plan",
    "cmd_report",
    "load_bundle",
]


class PipelineError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["dataset", "out_dir"],
    "additionalProperties": False,
    "properties": {
        "dataset": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["synthetic", "diabetes", "csv"]},
                "path": {"type": "string"},
                "schema_path": {"type": "string"},
                "synthetic": {"type": "object"},
            },
        },
        "split_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "regressor": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid": {"type": "array", "items": {"type": "object"}},
                "folds": {"type": "integer", "minimum": 2},
                "rfe_keep": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "surrogate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_range": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 1,
                },
                "iterations": {"type": "integer", "minimum": 2},
                "warmup": {"type": "integer", "minimum": 1},
                "density_mode": {"enum": ["sample-average", "map-sample"]},
                "density_draws": {"type": "integer", "minimum": 1},
            },
        },
        "intervention": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "features": {"type": "array", "items": {"type": "string"}},
                "top_n": {"type": "integer", "minimum": 1},
                "exclude": {"type": "array", "items": {"type": "string"}},
            },
        },
        "cell_sigma": {"type": "number", "exclusiveMinimum": 0},
        "L": {"type": "integer", "minimum": 0},
        "direction": {"enum": ["minimize", "maximize"]},
        "constraints": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "feature_bounds": {"type": "object"},
                "prediction_floor": {"type": ["number", "null"]},
                "prediction_ceiling": {"type": ["number", "null"]},
                "target_value": {"type": ["number", "null"]},
            },
        },
        "instances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "response_min": {"type": "number"},
                "response_max": {"type": "number"},
                "ids": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
        "out_dir": {"type": "string"},
    },
}


@dataclass
class RunConfig:
    dataset: dict
    out_dir: str
    split_fraction: float = 0.8
    seed: int = 0
    regressor: dict = field(default_factory=dict)
    surrogate: dict = field(default_factory=dict)
    intervention: dict = field(default_factory=dict)
    cell_sigma: float = 0.2
    L: int = 20000
    direction: str = "minimize"
    constraints: dict = field(default_factory=dict)
    instances: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if jsonschema is not None:
            try:
                jsonschema.validate(raw, RUN_CONFIG_SCHEMA)
            except jsonschema.ValidationError as e:
                raise ConfigError(f"config validation failed: {e.message}") from e
        known = {f for f in cls.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "out_dir": self.out_dir,
            "split_fraction": self.split_fraction,
            "seed": self.seed,
            "regressor": self.regressor,
            "surrogate": self.surrogate,
            "intervention": self.intervention,
            "cell_sigma": self.cell_sigma,
            "L": self.L,
            "direction": self.direction,
            "constraints": self.constraints,
            "instances": self.instances,
        }

    # -- derived pieces -----------------------------------------------------

    def mcmc_config(self) -> McmcConfig:
        s = self.surrogate
        return McmcConfig(
            iterations=s.get("iterations", 1500),
            warmup=s.get("warmup", 500),
            seed=self.seed,
            density_mode=s.get("density_mode", "sample-average"),
            density_draws=s.get("density_draws", 64),
        )

    def k_range(self):
        return self.surrogate.get("k_range", [1, 2, 3, 4])

    def hyper_grid(self):
        raw = self.regressor.get("grid")
        if not raw:
            return DEFAULT_GRID
        return [GbtHyperParams.from_dict({**g, "seed": g.get("seed", self.seed)}) for g in raw]

    def planner_constraints(self) -> Constraints:
        c = self.constraints
        bounds = {
            k: (v[0], v[1]) for k, v in c.get("feature_bounds", {}).items()
        }
        return Constraints(
            feature_bounds=bounds,
            prediction_floor=c.get("prediction_floor"),
            prediction_ceiling=c.get("prediction_ceiling"),
            target_value=c.get("target_value"),
        )


# ---------------------------------------------------------------------------
# canonical artifact I/O

def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def _write_artifact(path: FsPath, obj) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(obj), encoding="utf-8")
    return str(path)


def _read_artifact(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


@dataclass
class RunLedger:
    """Append-only record of pipeline stages and their artifacts."""

    path: FsPath
    entries: list = field(default_factory=list)

    @classmethod
    def open(cls, run_dir) -> "RunLedger":
        p = FsPath(run_dir) / "ledger.json"
        entries = []
        if p.exists():
            entries = _read_artifact(p).get("stages", [])
        return cls(path=p, entries=entries)

    def record(self, stage: str, artifacts, seed: int, wall_time: float, metrics=None):
        base = self.path.parent
        rel = []
        for a in artifacts:
            p = FsPath(a)
            if not p.exists():
                raise PipelineError(f"ledger artifact missing on disk: {a}")
            try:
                rel.append(str(p.relative_to(base)))
            except ValueError:
                rel.append(str(p))
        self.entries.append(
            {
                "stage": stage,
                "artifacts": rel,
                "seed": seed,
                "wall_time_s": round(wall_time, 3),
                "metrics": metrics or {},
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            }
        )
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(canonical_json({"stages": self.entries}), encoding="utf-8")

    def stage(self, name: str) -> dict:
        for e in reversed(self.entries):
            if e["stage"] == name:
                return e
        raise PipelineError(f"stage {name!r} has not run in this directory")


# ---------------------------------------------------------------------------
# dataset handling

def _load_dataset(config: RunConfig) -> Dataset:
    kind = config.dataset.get("kind")
    if kind == "synthetic":
        spec = SyntheticSpec.from_dict(config.dataset.get("synthetic", {})) if config.dataset.get(
            "synthetic"
        ) else SyntheticSpec()
        return gen_synthetic(spec, seed=config.seed)
    if kind == "diabetes":
        return diabetes_dataset()
    if kind == "csv":
        path = config.dataset.get("path")
        schema_path = config.dataset.get("schema_path")
        if not path or not schema_path:
            raise ConfigError("csv dataset needs both path and schema_path")
        return load_csv(path, load_schema(schema_path))
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _design(ds: Dataset, names=None):
    names = names or [c.name for c in ds.feature_columns]
    X = ds.values[:, [ds.column_index(n) for n in names]]
    return X, ds.response


def _surrogate_inputs(ds: Dataset):
    cont = ds.continuous_feature_indices()
    disc = ds.discrete_feature_indices()
    xc = ds.values[:, cont]
    xd = ds.values[:, disc].astype(np.int64) if disc else np.zeros((ds.n, 0), dtype=np.int64)
    return xc, xd


# ---------------------------------------------------------------------------
# stages

def cmd_synth(config: RunConfig) -> dict:
    """Generate the synthetic table and write CSV + schema."""
    t0 = time.time()
    out = FsPath(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSpec.from_dict(config.dataset.get("synthetic", {})) if config.dataset.get(
        "synthetic"
    ) else SyntheticSpec()
    ds = gen_synthetic(spec, seed=config.seed)
    csv_path = out / "dataset.csv"
    schema_path = out / "dataset.schema.json"
    write_csv(ds, csv_path)
    dump_schema(ds.schema, schema_path)
    ledger = RunLedger.open(out)
    ledger.record(
        "synth",
        [csv_path, schema_path],
        config.seed,
        time.time() - t0,
        {"rows": ds.n, "columns": len(ds.schema)},
    )
    return {"dataset": str(csv_path), "schema": str(schema_path), "rows": ds.n}


def _select_intervention(config: RunConfig, model: GbtModel, schema) -> list:
    names = [c.name for c in schema if c.role != "response"]
    cont = [c.name for c in schema if c.role != "response" and c.kind == "continuous"]
    iv = config.intervention
    if iv.get("features"):
        for f in iv["features"]:
            if f not in names:
                raise ConfigError(f"intervention feature {f!r} not in dataset")
        return list(iv["features"])
    exclude = set(iv.get("exclude", []))
    ranked = [n for n, _ in model.importance().ranked() if n in cont and n not in exclude]
    top_n = iv.get("top_n", min(5, len(ranked)))
    if top_n > len(names):
        raise ConfigError("intervention top_n exceeds feature count")
    return ranked[:top_n]


def cmd_fit(config: RunConfig) -> dict:
    """Split, cross-validate, fit the regressor, then fit the surrogate."""
    t0 = time.time()
    out = FsPath(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ledger = RunLedger.open(out)
    stage = "load"
    try:
        ds = _load_dataset(config)
        stage = "split"
        train_raw, test_raw = split(ds, config.split_fraction, seed=config.seed)
        train = impute_median(train_raw, train_raw)
        test = impute_median(train_raw, test_raw)
        std = fit_standardizer(train)
        train_s, test_s = std.apply(train), std.apply(test)

        stage = "rfe"
        feature_names = [c.name for c in train_s.feature_columns]
        keep = config.regressor.get("rfe_keep")
        if keep:
            X_all, y_all = _design(train_s)
            kept = set(
                rfe(
                    X_all, y_all, feature_names, keep=keep,
                    folds=config.regressor.get("folds", 5), seed=config.seed,
                )
            )
            # canonical schema order everywhere downstream
            feature_names = [n for n in feature_names if n in kept]

        stage = "cv"
        X, y = _design(train_s, feature_names)
        hp = cross_validate(X, y, config.hyper_grid(), folds=config.regressor.get("folds", 5), seed=config.seed)

        stage = "fit_gbt"
        model = fit_gbt(X, y, hp, feature_names=feature_names)
        Xte, yte = _design(test_s, feature_names)
        m_train = evaluate(model, X, y)
        m_test = evaluate(model, Xte, yte)
        sigma = m_test["rmse"] / 2.0

        stage = "surrogate"
        surr_train = drop_outliers_3sigma(train_s)
        if keep:
            kept_cols = [c for c in surr_train.schema if c.role == "response" or c.name in feature_names]
            surr_train = Dataset(
                schema=kept_cols,
                values=surr_train.values[:, [surr_train.column_index(c.name) for c in kept_cols]],
                provenance=surr_train.provenance,
            )
        xc, xd = _surrogate_inputs(surr_train)
        X_surr, _ = _design(surr_train, feature_names)
        preds = model.predict_batch(X_surr)
        sm = select_K(xc, xd, preds, config.k_range(), sigma, config.mcmc_config())

        stage = "artifacts"
        stats = {}
        for c in train_s.feature_columns:
            col = train_s.values[:, train_s.column_index(c.name)]
            col = col[np.isfinite(col)]
            stats[c.name] = {
                "sigma": float(col.std()),
                "min": float(col.min()),
                "max": float(col.max()),
            }
        reg_path = _write_artifact(
            out / "regressor.json",
            model.to_dict(standardizer=std, metrics={"train": m_train, "test": m_test}),
        )
        sur_path = _write_artifact(out / "surrogate.json", sm.to_dict())
        bundle = {
            "schema": schema_to_json(ds.schema),
            "feature_names": feature_names,
            "train_stats": stats,
            "split_fraction": config.split_fraction,
            "seed": config.seed,
            "sigma": sigma,
            # out_dir normalized so the artifact is location-independent
            "config": {**config.to_dict(), "out_dir": "."},
        }
        bundle_path = _write_artifact(out / "bundle.json", bundle)
    except Exception as e:
        ledger.record(f"fit:error:{stage}", [], config.seed, time.time() - t0, {"error": str(e)})
        if isinstance(e, (DataError, ConfigError)):
            raise
        raise PipelineError(f"fit failed at stage {stage!r}: {e}") from e

    metrics = {
        "rmse_train": m_train["rmse"],
        "rmse_test": m_test["rmse"],
        "r2_train": m_train["r2"],
        "r2_test": m_test["r2"],
        "sigma": sigma,
        "wbic_table": {str(k): v for k, v in sm.wbic_table.items()},
        "chosen_k": sm.spec.k,
        "hyperparams": hp.to_dict(),
    }
    ledger.record("fit", [reg_path, sur_path, bundle_path], config.seed, time.time() - t0, metrics)
    return {"regressor": reg_path, "surrogate": sur_path, "bundle": bundle_path, **metrics}


def load_bundle(run_dir):
    """Load the fit artifacts back: (bundle dict, regressor, standardizer, surrogate)."""
    out = FsPath(run_dir)
    if not (out / "bundle.json").exists():
        raise PipelineError(f"no fit artifacts in {out}; run fit first")
    bundle = _read_artifact(out / "bundle.json")
    reg_raw = _read_artifact(out / "regressor.json")
    model = GbtModel.from_dict(reg_raw)
    std = Standardizer.from_dict(reg_raw["standardizer"])
    sm = SurrogateModel.from_dict(_read_artifact(out / "surrogate.json"))
    return bundle, model, std, sm


def _test_instances(config: RunConfig, std: Standardizer):
    """Rebuild the test split and standardize it with the bundle's scaler.

    Rows keep their missing cells so planning can skip them with a reason."""
    ds = _load_dataset(config)
    _, test = split(ds, config.split_fraction, seed=config.seed)
    return std.apply(test), test


def _filter_ids(config: RunConfig, test_raw: Dataset):
    sel = config.instances
    resp = test_raw.response
    ids = list(range(test_raw.n))
    if sel.get("ids") is not None:
        bad = [i for i in sel["ids"] if not 0 <= i < test_raw.n]
        if bad:
            raise ConfigError(f"instance ids out of range: {bad}")
        ids = list(sel["ids"])
    if sel.get("response_min") is not None:
        ids = [i for i in ids if resp[i] >= sel["response_min"]]
    if sel.get("response_max") is not None:
        ids = [i for i in ids if resp[i] <= sel["response_max"]]
    return ids


def plan_one_instance(
    instance_std: np.ndarray,
    instance_id: int,
    bundle: dict,
    model: GbtModel,
    std: Standardizer,
    sm: SurrogateModel,
    config: RunConfig,
    intervention: list | None = None,
    cancel_check=None,
):
    """Plan a single standardized instance; returns the PlanResult dict with
    de-standardized step coordinates added."""
    schema = schema_from_json(bundle["schema"])
    feature_schema = [c for c in schema if c.role != "response"]
    feature_names = [c.name for c in feature_schema]
    keep = bundle["feature_names"]
    # grid lives over the regressor's feature set, in its column order
    used_schema = [c for c in feature_schema if c.name in keep]
    used_ids = [feature_names.index(c.name) for c in used_schema]
    inst_used = instance_std[used_ids]
    if intervention is None:
        intervention = _select_intervention(config, model, schema)
    for fname in intervention:
        if fname not in keep:
            raise ConfigError(f"intervention feature {fname!r} was dropped by feature selection")
    missing = [
        c.name
        for c, v in zip(used_schema, inst_used)
        if not np.isfinite(v) and c.name not in intervention
    ]
    if missing:
        raise PlannerError(f"instance has missing feature values: {missing}")
    train_stats = {
        n: (
            bundle["train_stats"][n]["sigma"],
            bundle["train_stats"][n]["min"],
            bundle["train_stats"][n]["max"],
        )
        for n in bundle["train_stats"]
    }
    grid = build_grid(
        inst_used,
        used_schema,
        train_stats,
        intervention,
        config.cell_sigma,
        config.direction,
    )
    seed = int(np.random.SeedSequence([config.seed, 4, instance_id]).generate_state(1)[0])
    result = path_search(
        grid,
        sm,
        model,
        L=config.L,
        constraints=config.planner_constraints(),
        seed=seed,
        cancel_check=cancel_check,
    )
    payload = result.to_dict(grid)
    used_names = [c.name for c in used_schema]
    for step in payload["steps"]:
        real = std.invert_columns(used_names, np.asarray(step["coords"], dtype=np.float64))
        step["coords_real"] = [float(v) for v in real]
    payload["instance_id"] = instance_id
    payload["feature_names"] = used_names
    return payload


def cmd_plan(config: RunConfig, workers: int = 4) -> dict:
    """Batch path search over the filtered test instances.

    Instances run on a small thread pool over the shared read-only bundle;
    results are keyed by instance id so parallelism cannot affect output."""
    t0 = time.time()
    out = FsPath(config.out_dir)
    bundle, model, std, sm = load_bundle(out)
    test_s, test_raw = _test_instances(config, std)
    ids = _filter_ids(config, test_raw)
    if not ids:
        raise ConfigError("instance filter matched nothing")

    feature_names = [c.name for c in test_s.feature_columns]
    schema = schema_from_json(bundle["schema"])
    intervention = _select_intervention(config, model, schema)
    sm._stack()  # warm the shared density cache before the pool starts
    plans_dir = out / "plans"
    plans_dir.mkdir(parents=True, exist_ok=True)
    col_ids = [test_s.column_index(n) for n in feature_names]

    def run(iid):
        row = test_s.values[iid, col_ids]
        return plan_one_instance(row, iid, bundle, model, std, sm, config, intervention)

    outcomes = {}
    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(ids)))) as pool:
        futures = {pool.submit(run, iid): iid for iid in ids}
        for fut in as_completed(futures):
            iid = futures[fut]
            try:
                outcomes[iid] = fut.result()
            except PlannerError as e:
                outcomes[iid] = {"skip_reason": str(e)}

    artifacts = []
    scores = []
    skipped = []
    for iid in ids:
        payload = outcomes[iid]
        if "skip_reason" in payload:
            skipped.append({"instance_id": iid, "reason": payload["skip_reason"]})
            continue
        artifacts.append(_write_artifact(plans_dir / f"instance_{iid:04d}.json", payload))
        scores.append((iid, payload["score"]))

    if not scores:
        raise PipelineError("every instance was skipped")
    vals = np.array([s for _, s in scores])
    edges = np.histogram_bin_edges(vals, bins=10)
    counts, _ = np.histogram(vals, bins=edges)
    summary = {
        "instances": [{"instance_id": i, "score": s} for i, s in scores],
        "skipped": skipped,
        "median_score": float(np.median(vals)),
        "positive_fraction": float((vals > 0).mean()),
        "histogram": {"bin_edges": [float(e) for e in edges], "counts": [int(c) for c in counts]},
    }
    sum_path = _write_artifact(plans_dir / "summary.json", summary)
    artifacts.append(sum_path)
    ledger = RunLedger.open(out)
    ledger.record(
        "plan",
        artifacts,
        config.seed,
        time.time() - t0,
        {
            "instances_planned": len(scores),
            "instances_skipped": len(skipped),
            "median_score": summary["median_score"],
            "positive_fraction": summary["positive_fraction"],
        },
    )
    return {"summary": sum_path, "planned": len(scores), "skipped": len(skipped), **{
        "median_score": summary["median_score"],
        "positive_fraction": summary["positive_fraction"],
    }}


def cmd_report(config: RunConfig) -> dict:
    """Render step ladders, projections, and the score histogram."""
    from . import report as report_mod

    t0 = time.time()
    out = FsPath(config.out_dir)
    ledger = RunLedger.open(out)
    ledger.stage("plan")  # raises if planning has not run
    result = report_mod.render_run(out)
    ledger.record("report", result["artifacts"], config.seed, time.time() - t0, {
        "figures": len([a for a in result["artifacts"] if str(a).endswith(".svg")]),
    })
    return result

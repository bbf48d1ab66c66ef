"""HTTP JSON API over a fitted model bundle.

The service is read-only: it loads one run directory's artifacts at startup
and answers instance listings, plan requests, and density probes. Responses
are pure functions of (bundle, request), so the planner endpoint returns
byte-identical payloads to the batch pipeline for the same inputs.
"""

from __future__ import annotations

import asyncio
import hashlib
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, ConfigDict

from . import __version__
from .data import DataError, schema_from_json
from .pipeline import (
    ConfigError,
    RunConfig,
    _select_intervention,
    _test_instances,
    canonical_json,
    load_bundle,
    plan_one_instance,
)
from .planner import PlannerError

__all__ = ["ModelBundle", "create_app", "ServiceSettings", "main"]

DEFAULT_MAX_L = 50000


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail=None):
        self.status = status
        self.body = {"code": code, "message": message, "detail": detail}
        super().__init__(message)


@dataclass
class ModelBundle:
    """Everything one service process serves: artifacts plus the rebuilt,
    standardized test split they were planned against."""

    run_dir: str
    bundle: dict
    model: object
    std: object
    surrogate: object
    config: RunConfig
    test_std: object
    test_raw: object
    bundle_id: str

    @classmethod
    def load(cls, run_dir) -> "ModelBundle":
        run_dir = FsPath(run_dir)
        bundle, model, std, sm = load_bundle(run_dir)
        config = RunConfig.from_dict(bundle["config"])
        test_std, test_raw = _test_instances(config, std)
        digest = hashlib.sha256((run_dir / "bundle.json").read_bytes()).hexdigest()[:12]
        if set(bundle["feature_names"]) - {c.name for c in test_raw.feature_columns}:
            raise ConfigError("bundle feature list does not match the dataset schema")
        sm._stack()  # warm the density cache once, before concurrent requests
        return cls(
            run_dir=str(run_dir),
            bundle=bundle,
            model=model,
            std=std,
            surrogate=sm,
            config=config,
            test_std=test_std,
            test_raw=test_raw,
            bundle_id=digest,
        )

    # -- helpers ------------------------------------------------------------

    def feature_names(self):
        return [c.name for c in self.test_raw.feature_columns]

    def kept_names(self):
        return list(self.bundle["feature_names"])

    def instance_row_std(self, instance_id: int) -> np.ndarray:
        names = self.feature_names()
        cols = [self.test_std.column_index(n) for n in names]
        return self.test_std.values[instance_id, cols]

    def predictions(self) -> np.ndarray:
        names = self.kept_names()
        cols = [self.test_std.column_index(n) for n in names]
        return self.model.predict_batch(self.test_std.values[:, cols])

    def standardize_features(self, values: dict) -> np.ndarray:
        """Real-space dict over all features -> standardized full vector."""
        names = self.feature_names()
        missing = [n for n in names if n not in values]
        extra = [n for n in values if n not in names]
        if missing or extra:
            raise ApiError(
                400, "bad_features", "feature set mismatch",
                {"missing": missing, "unexpected": extra},
            )
        out = np.array([float(values[n]) for n in names], dtype=np.float64)
        cont = [n for n in names if n in self.std.columns]
        idx = [names.index(n) for n in cont]
        out[idx] = self.std.apply_columns(cont, out[idx])
        return out


class PlanRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    instance_id: int | None = None
    features: dict[str, float] | None = None
    intervention: list[str] | None = None
    cell_sigma: float | None = None
    L: int | None = None
    direction: str | None = None
    constraints: dict | None = None
    seed: int | None = None


class DensityRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    x: dict[str, float] | list[float]
    y: float | None = None


def _require_bundle(app) -> ModelBundle:
    mb = app.state.bundle
    if mb is None:
        raise ApiError(503, "no_bundle", "no model bundle loaded", None)
    return mb


def _parse_filter(raw: str):
    """`response>=NUM` or `response<=NUM`; whitespace tolerated."""
    text = raw.replace(" ", "")
    for op in (">=", "<="):
        if text.startswith("response" + op):
            try:
                return op, float(text[len("response" + op):])
            except ValueError:
                break
    raise ApiError(400, "bad_filter", "malformed filter", {"filter": raw})


def create_app(bundle_dir=None, max_l: int = DEFAULT_MAX_L, workers: int = 4) -> FastAPI:
    app = FastAPI(title="actionpath", version=__version__)
    app.state.bundle = ModelBundle.load(bundle_dir) if bundle_dir else None
    app.state.max_l = max_l
    app.state.pool = ThreadPoolExecutor(max_workers=workers)

    origin = os.environ.get("ACTIONPATH_CORS_ORIGIN", "*")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ApiError)
    async def _api_error(request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body)

    @app.exception_handler(Exception)
    async def _unhandled(request, exc):
        return JSONResponse(
            status_code=500,
            content={"code": "internal", "message": str(exc), "detail": None},
        )

    @app.get("/v1/health")
    async def health():
        mb = app.state.bundle
        if mb is None:
            return JSONResponse(
                status_code=503,
                content={"code": "no_bundle", "message": "no model bundle loaded", "detail": None},
            )
        return {"status": "ok", "build": __version__, "bundle": mb.bundle_id}

    @app.get("/v1/instances")
    async def instances(filter: str | None = None):
        mb = _require_bundle(app)
        names = mb.feature_names()
        resp = mb.test_raw.response
        preds = mb.predictions()
        keep = np.ones(mb.test_raw.n, dtype=bool)
        if filter:
            op, threshold = _parse_filter(filter)
            keep = resp >= threshold if op == ">=" else resp <= threshold
        cols = [mb.test_raw.column_index(n) for n in names]
        out = []
        for i in np.flatnonzero(keep):
            i = int(i)
            row = mb.test_raw.values[i, cols]
            out.append(
                {
                    "id": i,
                    "features": {
                        n: (float(v) if np.isfinite(v) else None) for n, v in zip(names, row)
                    },
                    "response": float(resp[i]) if np.isfinite(resp[i]) else None,
                    "prediction": float(preds[i]) if np.isfinite(preds[i]) else None,
                }
            )
        return {"instances": out, "count": len(out)}

    @app.post("/v1/plan")
    async def plan(req: PlanRequest, request: Request):
        mb = _require_bundle(app)
        if (req.instance_id is None) == (req.features is None):
            raise ApiError(
                400, "bad_request", "provide exactly one of instance_id or features", None
            )
        L = req.L if req.L is not None else mb.config.L
        if L > app.state.max_l:
            raise ApiError(
                400, "l_too_large", f"L exceeds the service ceiling {app.state.max_l}", {"L": L}
            )
        overrides = {"L": L}
        if req.cell_sigma is not None:
            overrides["cell_sigma"] = req.cell_sigma
        if req.direction is not None:
            if req.direction not in ("minimize", "maximize"):
                raise ApiError(400, "bad_direction", "direction must be minimize or maximize", None)
            overrides["direction"] = req.direction
        if req.constraints is not None:
            overrides["constraints"] = req.constraints
        if req.seed is not None:
            overrides["seed"] = req.seed
        if req.intervention is not None:
            overrides["intervention"] = {"features": req.intervention}
        try:
            config = RunConfig.from_dict({**mb.config.to_dict(), **overrides})
        except ConfigError as e:
            raise ApiError(400, "bad_config", str(e), None)

        if req.instance_id is not None:
            iid = req.instance_id
            if not 0 <= iid < mb.test_raw.n:
                raise ApiError(404, "unknown_instance", f"no test instance {iid}", {"id": iid})
            row = mb.instance_row_std(iid)
        else:
            iid = 0
            row = mb.standardize_features(req.features)

        schema = schema_from_json(mb.bundle["schema"])
        try:
            intervention = _select_intervention(config, mb.model, schema)
        except ConfigError as e:
            raise ApiError(400, "bad_intervention", str(e), None)

        kept = mb.kept_names()
        names = mb.feature_names()
        iv_missing = [
            n for n in intervention if not np.isfinite(row[names.index(n)])
        ]
        if iv_missing or any(
            not np.isfinite(row[names.index(n)]) for n in kept
        ):
            raise ApiError(
                422,
                "missing_values",
                "instance is missing values needed for planning",
                {"features": iv_missing or [n for n in kept if not np.isfinite(row[names.index(n)])]},
            )

        cancel = threading.Event()

        def work():
            return plan_one_instance(
                row, iid, mb.bundle, mb.model, mb.std, mb.surrogate, config,
                intervention, cancel_check=cancel.is_set,
            )

        loop = asyncio.get_running_loop()
        fut = loop.run_in_executor(app.state.pool, work)
        try:
            while not fut.done():
                if await request.is_disconnected():
                    cancel.set()
                await asyncio.sleep(0.02)
            payload = fut.result()
        except PlannerError as e:
            if cancel.is_set():
                return Response(status_code=204)
            raise ApiError(400, "planner_error", str(e), None)
        except (ConfigError, DataError) as e:
            raise ApiError(400, "bad_config", str(e), None)
        if req.features is not None:
            payload["instance_id"] = None
        return Response(content=canonical_json(payload), media_type="application/json")

    @app.post("/v1/density")
    async def density(req: DensityRequest):
        mb = _require_bundle(app)
        names = mb.feature_names()
        if isinstance(req.x, list):
            if len(req.x) != len(names):
                raise ApiError(
                    400, "bad_arity",
                    f"expected {len(names)} feature values, got {len(req.x)}",
                    {"expected": names},
                )
            values = dict(zip(names, req.x))
        else:
            values = req.x
        row = mb.standardize_features(values)

        kept = mb.kept_names()
        schema = schema_from_json(mb.bundle["schema"])
        kinds = {c.name: c.kind for c in schema}
        kept_ids = [names.index(n) for n in kept]
        x_used = row[kept_ids]
        cont_ids = [i for i, n in enumerate(kept) if kinds[n] == "continuous"]
        disc_ids = [i for i, n in enumerate(kept) if kinds[n] == "discrete"]
        xc = x_used[cont_ids][None, :]
        xd = (
            x_used[disc_ids].astype(np.int64)[None, :]
            if disc_ids
            else np.zeros((1, 0), dtype=np.int64)
        )
        pred = float(mb.model.predict_batch(x_used[None, :])[0])
        y = req.y if req.y is not None else pred
        ld = float(mb.surrogate.node_log_density_batch(xc, xd, np.array([y]))[0])
        return {"log_density": ld, "prediction": pred}

    return app


@dataclass
class ServiceSettings:
    bundle: str | None
    bind: str
    port: int
    max_l: int

    @classmethod
    def from_env_and_args(cls, args) -> "ServiceSettings":
        env = os.environ
        return cls(
            bundle=args.bundle or env.get("ACTIONPATH_BUNDLE"),
            bind=args.bind or env.get("ACTIONPATH_BIND", "127.0.0.1"),
            port=args.port or int(env.get("ACTIONPATH_PORT", "8080")),
            max_l=args.max_l or int(env.get("ACTIONPATH_MAX_L", str(DEFAULT_MAX_L))),
        )


def main(settings: ServiceSettings):
    import uvicorn

    app = create_app(settings.bundle, max_l=settings.max_l)
    uvicorn.run(app, host=settings.bind, port=settings.port, log_level="warning")

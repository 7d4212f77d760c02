"""HTTP facade over the simulation harness.

Every run-producing operation lives behind a POST endpoint so the CLI (or a
remote client) drives experiments through one typed surface:

    GET  /health            liveness + package version
    POST /simulate          run or resume an ensemble, returns the manifest
    POST /verify            law verdicts for a finished run directory
    POST /sweep             multi-viscosity scaling runs + Sobolev fits
    POST /rescale           Landau amplitude rescaling report
    POST /export            rewrite the CSV tables from stats.npz

Request bodies carry the experiment configuration as an optional-field
mirror of ExperimentConfig: fields left null fall back to the package
defaults, so the service never duplicates default values.  Domain errors
(bad configs, missing runs, failed survival) come back as HTTP 400 with the
original message; nothing is retried or queued, a request blocks until the
work is done.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .config import ExperimentConfig
from .run import (
    RunFailure,
    applicable_laws,
    export_run,
    load_stats,
    rescale_run,
    run_experiment,
    sweep,
    verify_run,
)


class ConfigModel(BaseModel):
    """Optional-field mirror of ExperimentConfig; null means package default."""

    model_config = ConfigDict(extra="forbid")

    nu: float
    seed: int | None = None
    ensemble: int | None = None
    solver: str | None = None
    forcing: dict | None = None
    K: int | None = None
    n_grid: int | None = None
    n_cells: int | None = None
    cfl: float | None = None
    dt_max: float | None = None
    safety: float | None = None
    fixed_dt: float | None = None
    burn_in: float | None = None
    window: float | None = None
    sample_every: float | None = None
    n_stats: int | None = None
    l_min: float | None = None
    l_max: float | None = None
    per_decade: int | None = None
    p_list: list[float] | None = None
    nonlinearity: bool | None = None
    store_snapshots: bool | None = None
    store_series: bool | None = None
    survival_threshold: float | None = None
    tolerances: dict | None = None
    output_dir: str | None = None
    schema_version: int | None = None

    def to_config(self) -> ExperimentConfig:
        fields = {k: v for k, v in self.model_dump().items() if v is not None}
        return ExperimentConfig.from_dict(fields)


class SimulateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: ConfigModel
    workers: int | None = None


class VerifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    run_dir: str
    laws: list[str] | None = None
    tolerances: dict[str, float] | None = None


class SweepRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: ConfigModel
    nu_list: list[float] = Field(min_length=1)
    sweep_dir: str
    workers: int | None = None


class RescaleRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    run_dir: str
    mu: float
    out_dir: str | None = None


class ExportRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    run_dir: str


def _domain(call, *args, **kwargs):
    try:
        return call(*args, **kwargs)
    except (RunFailure, ValueError, OSError) as err:
        raise HTTPException(status_code=400, detail=str(err)) from err


def _require_run_dir(run_dir: str) -> Path:
    path = Path(run_dir)
    if not (path / "config.yaml").exists():
        raise HTTPException(status_code=400, detail=f"{run_dir} is not a run directory (no config.yaml)")
    return path


def create_app() -> FastAPI:
    app = FastAPI(title="burglab", version=__version__)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/simulate")
    def simulate(req: SimulateRequest) -> dict:
        cfg = _domain(req.config.to_config)
        if not (cfg.output_dir or "").strip():
            raise HTTPException(status_code=400, detail="config.output_dir is required")
        manifest = _domain(run_experiment, cfg, workers=req.workers)
        return {"manifest": manifest}

    @app.post("/verify")
    def verify(req: VerifyRequest) -> dict:
        run_dir = _require_run_dir(req.run_dir)
        verdicts = _domain(verify_run, run_dir, law_ids=req.laws, tolerances=req.tolerances)
        return {
            "run_dir": str(run_dir),
            "all_passed": all(v.passed for v in verdicts),
            "verdicts": [v.to_dict() for v in verdicts],
        }

    @app.post("/sweep")
    def run_sweep(req: SweepRequest) -> dict:
        cfg = _domain(req.config.to_config)
        summary = _domain(sweep, cfg, req.nu_list, req.sweep_dir, workers=req.workers)
        summary["all_passed"] = all(v["passed"] for v in summary["verdicts"])
        return summary

    @app.post("/rescale")
    def rescale(req: RescaleRequest) -> dict:
        run_dir = _require_run_dir(req.run_dir)
        if req.mu <= 0:
            raise HTTPException(status_code=400, detail="mu must be positive")
        summary = _domain(rescale_run, run_dir, req.mu, out_dir=req.out_dir)
        summary["all_passed"] = all(v["passed"] for v in summary["verdicts"])
        return summary

    @app.post("/export")
    def export(req: ExportRequest) -> dict:
        run_dir = _require_run_dir(req.run_dir)
        stats = _domain(load_stats, run_dir)
        files = _domain(export_run, run_dir, stats)
        return {"run_dir": str(run_dir), "files": files}

    @app.get("/laws")
    def laws_for(nu: float = 2e-3, solver: str = "auto", snapshots: bool = False) -> dict:
        cfg = _domain(ExperimentConfig, nu=nu, solver=solver, store_snapshots=snapshots)
        return {"laws": applicable_laws(cfg)}

    return app


app = create_app()

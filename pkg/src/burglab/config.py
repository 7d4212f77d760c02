"""Experiment configuration: one YAML-serializable object drives a whole run.

The config hash identifies the physics and numerics (forcing, solver
parameters, ensemble layout, statistics grids) while ignoring bookkeeping
like the output directory or worker count, so resumed or re-sharded runs of
the same experiment agree on the hash.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import yaml

from .forcing import ForcingSpec
from .godunov import GodunovConfig
from .spectral import SolverConfig, default_n_grid, default_truncation

SCHEMA_VERSION = 1
P_DEFAULT = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass
class ExperimentConfig:
    nu: float
    seed: int = 0
    ensemble: int = 1
    solver: str = "auto"  # auto -> godunov when nu == 0, else spectral
    forcing: dict = field(default_factory=lambda: {"family": "power_law", "decay": 2.0, "s_max": 8, "intensity": 1.0})
    K: int | None = None
    n_grid: int | None = None
    n_cells: int = 4096
    cfl: float = 0.45
    dt_max: float = 1.0e-3
    safety: float = 0.25
    fixed_dt: float | None = None
    burn_in: float = 10.0
    window: float = 10.0
    sample_every: float = 0.05
    n_stats: int | None = None
    l_min: float | None = None
    l_max: float = 0.25
    per_decade: int = 32
    p_list: tuple = P_DEFAULT
    nonlinearity: bool = True
    store_snapshots: bool = False
    store_series: bool = False
    survival_threshold: float = 0.8
    tolerances: dict = field(default_factory=dict)
    output_dir: str | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.nu < 0 or self.nu > 1:
            raise ValueError("nu must lie in [0, 1] (0 only for the godunov solver)")
        if self.solver == "auto":
            self.solver = "godunov" if self.nu == 0.0 else "spectral"
        if self.solver not in ("spectral", "godunov"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.solver == "spectral" and self.nu == 0.0:
            raise ValueError("the spectral solver needs nu > 0; use solver=godunov for nu = 0")
        if self.solver == "godunov" and self.nu != 0.0:
            raise ValueError("the godunov solver is the inviscid endpoint (nu = 0)")
        if self.ensemble < 1:
            raise ValueError("ensemble must be >= 1")
        if not 0.0 < self.survival_threshold <= 1.0:
            raise ValueError("survival_threshold must lie in (0, 1]")
        if self.burn_in < 0 or self.window <= 0 or self.sample_every <= 0:
            raise ValueError("burn_in >= 0, window > 0, sample_every > 0 required")
        for horizon, name in ((self.burn_in, "burn_in"), (self.window, "window")):
            ratio = horizon / self.sample_every
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(f"{name} must be a multiple of sample_every")
        if self.solver == "spectral":
            if self.K is None:
                self.K = default_truncation(self.nu)
            if self.n_grid is None:
                self.n_grid = default_n_grid(self.K)
        self.p_list = tuple(float(p) for p in self.p_list)
        if 3.0 not in self.p_list:
            raise ValueError("p_list must include 3 (the budget checks need it)")
        self.schema_version = int(self.schema_version)
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        self.forcing_spec()  # validate eagerly

    def forcing_spec(self) -> ForcingSpec:
        f = dict(self.forcing)
        family = f.pop("family", "power_law")
        if family == "power_law":
            return ForcingSpec.power_law(**f)
        if family == "explicit":
            return ForcingSpec.from_dict({int(k): float(v) for k, v in f["coefficients"].items()})
        raise ValueError(f"unknown forcing family {family!r}")

    def solver_config(self) -> SolverConfig:
        if self.solver != "spectral":
            raise ValueError("solver_config() applies to spectral runs")
        return SolverConfig(
            nu=self.nu,
            K=self.K,
            n_grid=self.n_grid,
            dt_max=self.dt_max,
            safety=self.safety,
            fixed_dt=self.fixed_dt,
            nonlinearity=self.nonlinearity,
        )

    def godunov_config(self) -> GodunovConfig:
        if self.solver != "godunov":
            raise ValueError("godunov_config() applies to godunov runs")
        return GodunovConfig(n=self.n_cells, cfl=self.cfl, dt_max=self.dt_max, fixed_dt=self.fixed_dt)

    @property
    def stats_grid_size(self) -> int:
        if self.n_stats is not None:
            return self.n_stats
        return self.n_grid if self.solver == "spectral" else self.n_cells

    @property
    def spectrum_size(self) -> int:
        return self.K if self.solver == "spectral" else self.n_cells // 3

    def bracket(self):
        from .observables import BracketSpec

        return BracketSpec(self.burn_in, self.window)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["p_list"] = list(self.p_list)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "p_list" in data and data["p_list"] is not None:
            data["p_list"] = tuple(data["p_list"])
        return cls(**data)

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_yaml(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)

    def config_hash(self) -> str:
        # ensemble is excluded on purpose: trajectory i depends only on
        # (physics, numerics, seed, i), so growing an ensemble in place is a
        # resume, not a different experiment
        ident = self.to_dict()
        for transient in ("output_dir", "store_snapshots", "store_series", "ensemble"):
            ident.pop(transient, None)
        blob = json.dumps(ident, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

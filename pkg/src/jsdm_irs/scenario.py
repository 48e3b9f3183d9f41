"""Scenario files, sweep execution, and machine-readable result emission."""
from __future__ import annotations

import concurrent.futures
import json
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
import yaml

from .channel import CovarianceSet, aggregate_covariances, build_covariance_set
from .config import (SWEEP_PARAMETERS, SystemConfig, apply_sweep_value,
                     config_from_dict)
from .detequiv import DEContext, DESolution
from .exceptions import ConfigError
from .gradient import initial_phases, random_phases
from .montecarlo import run_monte_carlo
from .power import alternating_optimization
from .prebeam import build_prebeamformer_set

SCHEMA_VERSION = 1

CSV_COLUMNS = ("swept_value", "de_sum_se", "mc_sum_se", "rel_error",
               "optimizer_iterations", "wall_time_s", "seed")


@dataclass
class Scenario:
    """One experiment: a base config, exactly one sweep axis, and run flags."""

    config: SystemConfig
    sweep_parameter: Optional[str] = None
    sweep_values: List = field(default_factory=list)
    optimize_phases: bool = True
    random_phase_baseline: bool = False
    random_phase_draws: int = 100
    no_irs_baseline: bool = False
    mc_realizations: int = 1000
    output: str = "results.csv"
    out_format: str = "csv"
    workers: int = 1


def load_scenario(path: str) -> Scenario:
    """Parse and validate a YAML scenario file (see CONFIG_SCHEMA.md)."""
    with open(path, "r") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("file", "scenario file must be a mapping")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version",
                          f"expected {SCHEMA_VERSION}, got {version!r}")
    if "system" not in raw or not isinstance(raw["system"], dict):
        raise ConfigError("system", "missing [system] section")
    config = config_from_dict(raw["system"])
    scenario = Scenario(config=config)
    sweep = raw.get("sweep")
    if sweep is not None:
        parameter = sweep.get("parameter")
        if parameter not in SWEEP_PARAMETERS:
            raise ConfigError("sweep.parameter",
                              f"must be one of {SWEEP_PARAMETERS}, got {parameter!r}")
        values = sweep.get("values")
        if not isinstance(values, list) or len(values) == 0:
            raise ConfigError("sweep.values", "must be a non-empty list")
        scenario.sweep_parameter = parameter
        scenario.sweep_values = list(values)
    run = raw.get("run", {})
    known = {"optimize_phases", "random_phase_baseline", "random_phase_draws",
             "no_irs_baseline", "mc_realizations", "output", "format", "workers"}
    for key in run:
        if key not in known:
            raise ConfigError(f"run.{key}", "unknown run option")
    scenario.optimize_phases = bool(run.get("optimize_phases", True))
    scenario.random_phase_baseline = bool(run.get("random_phase_baseline", False))
    scenario.random_phase_draws = int(run.get("random_phase_draws", 100))
    scenario.no_irs_baseline = bool(run.get("no_irs_baseline", False))
    scenario.mc_realizations = int(run.get("mc_realizations", 1000))
    scenario.output = str(run.get("output", "results.csv"))
    fmt = str(run.get("format", "csv"))
    if fmt not in ("csv", "records"):
        raise ConfigError("run.format", f"must be 'csv' or 'records', got {fmt!r}")
    scenario.out_format = fmt
    scenario.workers = int(run.get("workers", 1))
    return scenario


def without_irs(covs: CovarianceSet) -> CovarianceSet:
    """Zero out the IRS-side scattering (direct-link-only baseline)."""
    N = covs.R_IRS[0].shape[0]
    zeros = np.zeros((N, N))
    return CovarianceSet(R_BS=covs.R_BS, R_IRS=[zeros] * covs.G, H1=covs.H1,
                         beta1=covs.beta1, beta_d=covs.beta_d,
                         beta2=np.zeros(covs.G))


@dataclass
class ResultRow:
    """One sweep point. wall_time_s is informational and excluded from the
    byte-level reproducibility guarantee (see CONFIG_SCHEMA.md)."""

    index: int
    swept_value: float
    de_sum_se: float
    mc_sum_se: float
    rel_error: float
    optimizer_iterations: int
    wall_time_s: float
    seed: int
    extras: dict = field(default_factory=dict)


def feedback_overhead(config: SystemConfig) -> dict:
    """Training-feedback coefficient counts: JSDM (K_bar*G*b_bar) vs full (K*M)."""
    jsdm = config.K_bar * config.G * config.b_bar
    baseline = config.K_total * config.M
    return {"jsdm_coefficients": jsdm, "baseline_coefficients": baseline,
            "saving_factor": baseline / jsdm if jsdm else float("inf")}


def evaluate_sweep_point(config: SystemConfig, scenario: Scenario,
                         index: int, value) -> ResultRow:
    """Run the full pipeline (statistics, optimization, DE, MC) at one point."""
    t0 = time.perf_counter()
    cfg = (apply_sweep_value(config, scenario.sweep_parameter, value)
           if scenario.sweep_parameter is not None else config)
    covs = build_covariance_set(cfg)
    extras: dict = {"config": _config_dict(cfg)}
    if scenario.optimize_phases:
        ao = alternating_optimization(covs, cfg)
        s, P, B, de = ao.s, ao.P, ao.B, ao.de
        opt_iters = int(sum(r.iterations for r in ao.pga_results))
        extras["ao_rounds"] = ao.rounds
        extras["outer_trace"] = [float(x) for x in ao.outer_trace]
        extras["pga_steps"] = [list(map(float, row))
                               for r in ao.pga_results for row in r.steps]
        extras["powers"] = P.tolist()
    else:
        s = initial_phases(cfg.N)
        P = np.full(cfg.G, cfg.P_max / cfg.G)
        prebeam = build_prebeamformer_set(aggregate_covariances(covs, s),
                                          cfg.r_star, cfg.b_bar)
        B = prebeam.B
        de = DEContext.from_covariances(covs, B, P, cfg).solve(s)
        opt_iters = 0
        extras["powers"] = P.tolist()
    mc = run_monte_carlo(cfg, covs, B, s, P, scenario.mc_realizations,
                         seed=cfg.seed, de=de, collect_samples=False)
    extras["de"] = de.to_record()
    extras["mc_group_rate"] = mc.group_rate.tolist()
    extras["de_group_rel_err"] = (mc.de_rel_err.tolist()
                                  if mc.de_rel_err is not None else None)
    if scenario.random_phase_baseline:
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=cfg.seed, spawn_key=(0x5EED,)))
        ctx = DEContext.from_covariances(covs, B, P, cfg)
        draws = [ctx.objective(random_phases(cfg.N, rng))
                 for _ in range(scenario.random_phase_draws)]
        extras["random_phase_mean_se"] = float(np.mean(draws))
        extras["random_phase_max_se"] = float(np.max(draws))
    if scenario.no_irs_baseline:
        covs0 = without_irs(covs)
        prebeam0 = build_prebeamformer_set(aggregate_covariances(covs0, s),
                                           cfg.r_star, cfg.b_bar)
        de0 = DEContext.from_covariances(covs0, prebeam0.B, P, cfg).solve(s)
        extras["no_irs_sum_se"] = de0.sum_se
    mc_se = mc.sum_se
    rel = abs(de.sum_se - mc_se) / abs(mc_se) if mc_se else float("nan")
    return ResultRow(index=index, swept_value=float(value), de_sum_se=de.sum_se,
                     mc_sum_se=mc_se, rel_error=rel,
                     optimizer_iterations=opt_iters,
                     wall_time_s=time.perf_counter() - t0, seed=cfg.seed,
                     extras=extras)


def _config_dict(config: SystemConfig) -> dict:
    out = {}
    for name in SystemConfig.__dataclass_fields__:
        value = getattr(config, name)
        if isinstance(value, tuple):
            value = list(value)
        out[name] = value
    return out


def run_scenario(scenario: Scenario, workers: Optional[int] = None) -> List[ResultRow]:
    """Evaluate every sweep point; rows come back ordered by sweep index."""
    if scenario.sweep_parameter is None:
        raise ConfigError("sweep", "run requires a [sweep] section")
    workers = scenario.workers if workers is None else workers
    points = list(enumerate(scenario.sweep_values))
    if workers <= 1 or len(points) <= 1:
        rows = [evaluate_sweep_point(scenario.config, scenario, i, v)
                for i, v in points]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(evaluate_sweep_point, scenario.config,
                                   scenario, i, v) for i, v in points]
            rows = [f.result() for f in futures]
    return sorted(rows, key=lambda r: r.index)


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_results(rows: Sequence[ResultRow], out_format: str, path: str) -> None:
    """Write rows as CSV (fixed column order) or JSON-lines records.

    Output is byte-stable for identical rows: shortest-roundtrip float
    formatting, sorted record keys, no timestamps beyond the wall_time_s
    column carried by the rows themselves.
    """
    if out_format == "csv":
        lines = [",".join(CSV_COLUMNS)]
        for r in rows:
            lines.append(",".join(_format_cell(v) for v in (
                r.swept_value, r.de_sum_se, r.mc_sum_se, r.rel_error,
                r.optimizer_iterations, r.wall_time_s, r.seed)))
        payload = "\n".join(lines) + "\n"
    elif out_format == "records":
        out = []
        for r in rows:
            rec = {"index": r.index, "swept_value": r.swept_value,
                   "de_sum_se": r.de_sum_se, "mc_sum_se": r.mc_sum_se,
                   "rel_error": r.rel_error,
                   "optimizer_iterations": r.optimizer_iterations,
                   "wall_time_s": r.wall_time_s, "seed": r.seed}
            rec.update(r.extras)
            out.append(json.dumps(rec, sort_keys=True))
        payload = "\n".join(out) + ("\n" if out else "")
    else:
        raise ConfigError("run.format", f"unknown format {out_format!r}")
    with open(path, "w") as fh:
        fh.write(payload)

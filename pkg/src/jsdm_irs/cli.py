"""Command-line experiment runner.

Subcommands:
  run       execute a scenario sweep and write the result file
  validate  DE-vs-MC comparison at the scenario's base operating point
  gradcheck finite-difference audit of the closed-form phase gradient
  overhead  JSDM feedback-coefficient counts vs the full-CSI baseline
  diag      block-diagonalization leakage and rank diagnostics

Exit codes: 0 success, 2 config/schema violation, 3 infeasible JSDM
dimensions, 4 unwritable output path, 1 any other module error.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace as dc_replace

import numpy as np

from .channel import (build_covariance_set, aggregate_covariances,
                      effective_rank_report, sample_channels, substream)
from .config import replace_config
from .detequiv import DEContext
from .exceptions import ConfigError, InfeasibleDimensionError
from .gradient import finite_difference_check, initial_phases, sinr_gradient
from .montecarlo import run_monte_carlo
from .prebeam import build_prebeamformer_set
from .scenario import (emit_results, feedback_overhead, load_scenario,
                       run_scenario)

ENV_WORKERS = "JSDM_IRS_WORKERS"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jsdm-irs", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("run", "run a scenario sweep"),
            ("validate", "DE-vs-MC validation at the base config"),
            ("gradcheck", "finite-difference gradient audit"),
            ("overhead", "feedback overhead report"),
            ("diag", "pre-beamforming diagnostics")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario YAML file")
        p.add_argument("--seed", type=int, default=None, help="override RNG seed")
        p.add_argument("--out", default=None, help="override output path")
        p.add_argument("--workers", type=int,
                       default=int(os.environ.get(ENV_WORKERS, "1")),
                       help="concurrent sweep workers")
        p.add_argument("--mc", type=int, default=None,
                       help="override Monte-Carlo realization count")
        p.add_argument("--format", choices=("csv", "records"), default=None,
                       help="override result format")
        if name == "gradcheck":
            p.add_argument("--points", type=int, default=3,
                           help="random phase points to audit")
    return parser


def _prepare(args):
    scenario = load_scenario(args.config)
    if args.seed is not None:
        scenario.config = replace_config(scenario.config, seed=args.seed)
    if args.mc is not None:
        scenario.mc_realizations = args.mc
    if args.out is not None:
        scenario.output = args.out
    if args.format is not None:
        scenario.out_format = args.format
    return scenario


def _cmd_run(args) -> int:
    scenario = _prepare(args)
    rows = run_scenario(scenario, workers=args.workers)
    try:
        emit_results(rows, scenario.out_format, scenario.output)
    except OSError as exc:
        print(f"error: cannot write {scenario.output!r}: {exc}", file=sys.stderr)
        return 4
    print(f"wrote {len(rows)} rows to {scenario.output}")
    return 0


def _cmd_validate(args) -> int:
    scenario = _prepare(args)
    cfg = scenario.config
    covs = build_covariance_set(cfg)
    s = initial_phases(cfg.N)
    P = np.full(cfg.G, cfg.P_max / cfg.G)
    prebeam = build_prebeamformer_set(aggregate_covariances(covs, s),
                                      cfg.r_star, cfg.b_bar)
    de = DEContext.from_covariances(covs, prebeam.B, P, cfg).solve(s)
    mc = run_monte_carlo(cfg, covs, prebeam.B, s, P, scenario.mc_realizations,
                         seed=cfg.seed, de=de, collect_samples=False)
    print(f"DE-vs-MC over {mc.n_realizations} realizations "
          f"(tau={cfg.tau}, SNR={cfg.snr_dB:.1f} dB)")
    for g in range(cfg.G):
        print(f"  group {g}: DE rate {de.rate_per_ue[g]:.4f}  "
              f"MC rate {mc.group_rate[g]:.4f}  rel err {mc.de_rel_err[g]:.3%}")
    print(f"  sum SE: DE {de.sum_se:.4f}  MC {mc.sum_se:.4f} bits/s/Hz")
    print(f"  worst per-realization power deviation: {mc.tx_power_max_dev:.2e}")
    return 0


def _cmd_gradcheck(args) -> int:
    scenario = _prepare(args)
    cfg = scenario.config
    covs = build_covariance_set(cfg)
    s0 = initial_phases(cfg.N)
    P = np.full(cfg.G, cfg.P_max / cfg.G)
    prebeam = build_prebeamformer_set(aggregate_covariances(covs, s0),
                                      cfg.r_star, cfg.b_bar)
    ctx = DEContext.from_covariances(covs, prebeam.B, P, cfg)
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for point in range(args.points):
        s = s0 if point == 0 else np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.N))
        err = finite_difference_check(ctx, s, rng=rng)
        print(f"point {point}: max relative FD error {err:.3e}")
        worst = max(worst, err)
    print(f"worst over {args.points} points: {worst:.3e}")
    return 0


def _cmd_overhead(args) -> int:
    scenario = _prepare(args)
    report = feedback_overhead(scenario.config)
    print(f"JSDM feedback coefficients : {report['jsdm_coefficients']}")
    print(f"full-CSI baseline          : {report['baseline_coefficients']}")
    print(f"saving factor              : {report['saving_factor']:.3g}")
    return 0


def _cmd_diag(args) -> int:
    scenario = _prepare(args)
    cfg = scenario.config
    covs = build_covariance_set(cfg)
    s = initial_phases(cfg.N)
    R = aggregate_covariances(covs, s)
    prebeam = build_prebeamformer_set(R, cfg.r_star, cfg.b_bar)
    leak = prebeam.leakage()
    ortho = max(float(np.abs(B.conj().T @ B - np.eye(cfg.b_bar)).max())
                for B in prebeam.B)
    print(f"max B^H B orthonormality error : {ortho:.3e}")
    print(f"max inter-group BD leakage     : {leak.max():.3e}")
    for g, es in enumerate(prebeam.eigen):
        top = es.Lambda[:min(3, es.r_g)]
        print(f"  group {g}: rank {es.r_g}, top eigenvalues {np.array2string(top, precision=3)}")
    for g in range(cfg.G):
        for i in range(g + 1, cfg.G):
            cosang = np.linalg.svd(prebeam.eigen[g].U_star.conj().T
                                   @ prebeam.eigen[i].U_star, compute_uv=False)
            print(f"  groups ({g},{i}): max principal-angle cosine {cosang[0]:.4f}")
    real = sample_channels(covs, s, cfg, substream(cfg.seed, 0))
    ranks = effective_rank_report(real)
    print(f"overall-channel ranks per group (need >= K_bar={cfg.K_bar}): {ranks}")
    if args.out:
        try:
            np.savez(args.out,
                     **{f"B_{g}": prebeam.B[g] for g in range(cfg.G)},
                     **{f"eigenvalues_{g}": prebeam.eigen[g].Lambda
                        for g in range(cfg.G)},
                     leakage=leak)
        except OSError as exc:
            print(f"error: cannot write {args.out!r}: {exc}", file=sys.stderr)
            return 4
        print(f"wrote diagnostics to {args.out}")
    return 0


_COMMANDS = {"run": _cmd_run, "validate": _cmd_validate,
             "gradcheck": _cmd_gradcheck, "overhead": _cmd_overhead,
             "diag": _cmd_diag}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleDimensionError as exc:
        print(f"infeasible configuration: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # module errors surface as diagnostics, exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

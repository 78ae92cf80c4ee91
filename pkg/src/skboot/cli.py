"""Command-line front end: parse a config file, dispatch experiments, write CSV.

Exit codes: 2 for configuration errors, 3 for numerical failures, 4 for
rejection-sampling starvation.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from . import harness, queueing, uq
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    DegenerateSample,
    FitFailure,
    NoConvergence,
    NumericalFailure,
    SingularCovariance,
    SingularTraffic,
    UndefinedStarvation,
    ValidityStarvation,
)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_STARVATION = 4

log = logging.getLogger("skboot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skboot",
        description="Input and metamodel uncertainty quantification for "
        "stochastic simulations via metamodel-assisted bootstrapping.",
    )
    parser.add_argument("--config", required=True, help="TOML experiment file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--workers", type=int, help="override the worker count")
    parser.add_argument(
        "--preset",
        choices=("desk", "paper"),
        help="desk: R<=200, B=500 for quick runs; paper: R=1000, B=2000",
    )
    parser.add_argument("--out-dir", help="override the output directory")
    parser.add_argument(
        "--dry-run", action="store_true", help="validate the config and exit"
    )
    parser.add_argument("--tag", default="run", help="suffix for output file names")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("uq", "one end-to-end interval estimation run"),
        ("coverage", "coverage study over the (m, k, n) grid"),
        ("pu", "unstable-bootstrap-fraction study per data size"),
        ("sensitivity", "hyperparameter-estimation sensitivity study"),
        ("oracle", "print the analytic traffic solution at the true moments"),
        ("design-dump", "build and export one experiment design"),
    ]:
        sub.add_parser(name, help=help_text)
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.uq = dataclasses.replace(cfg.uq, seed=args.seed)
        cfg.grid = dataclasses.replace(cfg.grid, base_seed=args.seed)
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out_dir is not None:
        from pathlib import Path

        cfg.out_dir = Path(args.out_dir)
    if args.preset == "desk":
        cfg.uq = dataclasses.replace(cfg.uq, B=500)
        cfg.grid = dataclasses.replace(cfg.grid, R=min(cfg.grid.R, 200))
        cfg.sensitivity_R = min(cfg.sensitivity_R, 100)
    elif args.preset == "paper":
        cfg.uq = dataclasses.replace(cfg.uq, B=2000)
        cfg.grid = dataclasses.replace(cfg.grid, R=1000)
        cfg.sensitivity_R = 1000
    return cfg


def cmd_uq(cfg: RunConfig, tag: str) -> None:
    dataset = cfg.dataset(np.random.default_rng(cfg.seed))
    result = uq.run_aci(dataset, cfg.topology, cfg.protocol, cfg.uq)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    result.save_summary(cfg.out_dir / f"uq_{tag}.json")
    result.save_detail(cfg.out_dir / f"uq_{tag}_detail.csv")
    print(f"CI0     [{result.ci0[0]:.6g}, {result.ci0[1]:.6g}]")
    print(f"CI+     [{result.ci_plus[0]:.6g}, {result.ci_plus[1]:.6g}]")
    print(f"ratio   {result.ratio:.4f}  (input share of total uncertainty)")
    print(f"P_U     {result.p_u_hat:.4f}  (unstable bootstrap fraction)")
    print(f"rejected undefined moments: {result.n_rejected_undefined}")


def cmd_coverage(cfg: RunConfig, tag: str) -> None:
    rows = harness.coverage_experiment(
        cfg.grid, cfg.topology, cfg.models, cfg.protocol, cfg.uq, workers=cfg.workers
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    harness.write_coverage_csv(rows, cfg.out_dir / f"coverage_{tag}.csv")
    harness.scatter_export(rows, cfg.out_dir / f"scatter_{tag}.csv", cfg.uq.alpha)
    for row in rows:
        print(
            f"m={row.m} k={row.k} n={row.n}: "
            f"CI0 {row.coverage_ci0:.3f} CI+ {row.coverage_ci_plus:.3f} "
            f"ratio {row.ratio_mean:.3f}"
        )


def cmd_pu(cfg: RunConfig, tag: str) -> None:
    rows = harness.pu_experiment(
        cfg.grid.m_levels,
        cfg.topology,
        cfg.models,
        B=cfg.uq.B,
        R=cfg.grid.R,
        base_seed=cfg.seed,
        workers=cfg.workers,
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    harness.write_pu_csv(rows, cfg.out_dir / f"pu_{tag}.csv")
    for row in rows:
        print(f"m={row.m}: mean P_U {row.p_u_mean:.4f} (SD {row.p_u_sd:.4f})")


def cmd_sensitivity(cfg: RunConfig, tag: str) -> None:
    pair = harness.sensitivity_experiment(
        cfg.sensitivity_cell,
        cfg.topology,
        cfg.models,
        cfg.protocol,
        cfg.uq,
        R=cfg.sensitivity_R,
        base_seed=cfg.seed,
        workers=cfg.workers,
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    harness.write_sensitivity_csv(pair, cfg.out_dir / f"sensitivity_{tag}.csv")
    for label, row in zip(("case1", "case2"), pair):
        print(
            f"{label}: CI+ coverage {row.coverage_ci_plus:.3f} "
            f"width {row.width_ci_plus_mean:.3f}"
        )


def cmd_oracle(cfg: RunConfig, tag: str) -> None:
    x = cfg.models.moment_vector()
    result = queueing.jackson_oracle(cfg.topology, x, cfg.models.layout)
    print("lambda:", np.array2string(result.arrival_rates, precision=6))
    print("rho:   ", np.array2string(result.utilizations, precision=6))
    if result.stable:
        print(f"expected number in system: {result.expected_number:.6g}")
    else:
        print("UNSTABLE")


def cmd_design_dump(cfg: RunConfig, tag: str) -> None:
    from . import design as design_mod

    dataset = cfg.dataset(np.random.default_rng(cfg.seed))
    design = design_mod.build_design(
        dataset, cfg.uq.q, cfg.uq.k, cfg.uq.N, np.random.default_rng(cfg.seed + 1)
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / f"design_{tag}.csv"
    design.save_csv(path)
    print(f"wrote {design.k} design points with n={design.reps} to {path}")


_COMMANDS = {
    "uq": cmd_uq,
    "coverage": cmd_coverage,
    "pu": cmd_pu,
    "sensitivity": cmd_sensitivity,
    "oracle": cmd_oracle,
    "design-dump": cmd_design_dump,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dry_run:
        print("config OK")
        return 0
    try:
        _COMMANDS[args.command](cfg, args.tag)
    except (UndefinedStarvation, ValidityStarvation, DegenerateSample) as exc:
        print(f"starvation: {exc}", file=sys.stderr)
        return EXIT_STARVATION
    except (
        NumericalFailure,
        FitFailure,
        SingularCovariance,
        SingularTraffic,
        NoConvergence,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())

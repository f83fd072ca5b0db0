"""Command line entry point.

Examples
--------
    dualrail steady --set N=2 --set r=1 --set pattern=reversed --out results/pair
    dualrail sweep --config sweep.yaml --workers 4
    dualrail preset fig2c --out results/fig2c
    dualrail list-presets
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from ..errors import ConfigError, ConvergenceError, ResourceGuardError, ThresholdError, TruncationError
from .config import PARAMS, TASKS, ExperimentConfig, config_from_dict, load_config
from .presets import PRESET_NOTES, PRESETS, get_preset
from .sweep import exit_code_for, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_GUARD = 0, 1, 2, 3


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        key = key.strip()
        if key not in PARAMS:
            raise ConfigError(f"unknown parameter {key!r}")
        out[key] = yaml.safe_load(text)
    return out


def _load(args, task: str | None) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = config_from_dict({})
    overrides = _parse_set(getattr(args, "set", None))
    if overrides:
        cfg = cfg.with_(spec={**cfg.spec, **overrides},
                        axes=tuple(a for a in cfg.axes if a[0] not in overrides))
    if task is not None:
        cfg = cfg.with_(task=task)
    if args.format:
        cfg = cfg.with_(formats=(args.format,))
    if args.workers:
        cfg = cfg.with_(workers=args.workers)
    return cfg


def _write_trajectory(cfg: ExperimentConfig, out: Path) -> None:
    from ..dynamics import evolve, prep_stop
    from ..liouvillian import build_generator
    from .config import spec_from_params

    spec = spec_from_params(cfg.points()[0], cfg.solver)
    traj = evolve(build_generator(spec), t_end=cfg.solver.t_end, method=cfg.solver.method,
                  rtol=cfg.solver.rtol, atol=cfg.solver.atol, record=cfg.solver.record,
                  stop=prep_stop(spec.N), pairs=[(i, i) for i in range(1, spec.N + 1)])
    traj.to_csv(out / "trajectory.csv")


def _run(cfg: ExperimentConfig, args) -> int:
    out = Path(args.out or cfg.out_dir)
    result = run_sweep(cfg, out, workers=cfg.workers, retry_failed=args.retry_failed)
    for row in result.rows:
        if row["status"] != "ok":
            print(f"point {row['index']} failed: {row['error']}", file=sys.stderr)
    if cfg.task == "evolve" and len(result.rows) == 1 and result.ok:
        _write_trajectory(cfg, out)
    print(f"{len(result.rows)} rows ({result.n_failed} failed) -> {out}")
    return exit_code_for(result)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualrail", description="Dual-rail entanglement network simulations")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="YAML experiment file")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="override a spec parameter (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="parallel worker processes")
        p.add_argument("--format", choices=("csv", "json"), help="write only this table format")
        p.add_argument("--retry-failed", action="store_true", help="recompute points recorded as failed")

    for task in TASKS:
        common(sub.add_parser(task, help=f"run the {task} task on the configured spec or grid"))
    common(sub.add_parser("sweep", help="run the configured task over the sweep grid"))
    p = sub.add_parser("preset", help="run a named preset experiment")
    p.add_argument("name")
    common(p, config=False)
    sub.add_parser("list-presets", help="list the available presets")
    sub.add_parser("list-params", help="list canonical parameter names")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list-presets":
            for name in PRESETS:
                print(f"{name:10s} {PRESET_NOTES.get(name, '')}")
            return EXIT_OK
        if args.command == "list-params":
            for name, doc in PARAMS.items():
                print(f"{name:22s} {doc}")
            return EXIT_OK
        if args.command == "preset":
            cfg = get_preset(args.name)
            if args.format:
                cfg = cfg.with_(formats=(args.format,))
            if args.workers:
                cfg = cfg.with_(workers=args.workers)
        else:
            cfg = _load(args, None if args.command == "sweep" else args.command)
        return _run(cfg, args)
    except (ConfigError, ThresholdError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceGuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ConvergenceError, TruncationError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

::

    medianflow run --preset sharpness --out runs/sharp --set solver.K_max=50
    medianflow validate --config my.toml
    medianflow oracle quantile --samples samples.jsonl
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import PRESETS, build_config, run_experiment
from .grid import ConfigurationError


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise ConfigurationError("--threads must be >= 1")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _cmd_run(args) -> int:
    _set_threads(args.threads)
    cfg = build_config(args.preset, args.config, args.set or (), args.out, args.seed)
    status = run_experiment(cfg)
    if status == 0:
        print(f"wrote {cfg.output_dir}")
    return status


def _cmd_validate(args) -> int:
    cfg = build_config(args.preset, args.config, args.set or ())
    kind = "topology optimization" if cfg.is_topopt else "segmentation"
    print(f"ok: preset {cfg.preset} ({kind}), grid {cfg.grid.nx}x{cfg.grid.ny}, "
          f"tau {cfg.solver.tau:g}, lambda_tilde {cfg.solver.lambda_tilde:g}")
    return 0


def _cmd_oracle(args) -> int:
    from .oracles import check_quantile_samples

    with open(args.samples) as fh:
        samples = [json.loads(line) for line in fh if line.strip()]
    results = check_quantile_samples(samples, step=args.step)
    bad = [r for r in results if not r.ok]
    for r in bad:
        print(f"violation: sample {r.index}: selected {r.selected:.6g} with potential "
              f"{r.potential:.12g} > scan minimum {r.scan_min:.12g}")
    print(f"{len(results)} samples, {len(bad)} violations")
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medianflow",
                                     description="Median-filter interface optimization.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment preset")
    run.add_argument("--preset", choices=PRESETS)
    run.add_argument("--config", help="TOML file with configuration keys")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override one configuration key (repeatable)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--threads", type=int, help="cap on worker threads")
    run.add_argument("--seed", type=int, help="seed for the randomized input")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="check a configuration without running it")
    val.add_argument("--config", required=True)
    val.add_argument("--preset", choices=PRESETS)
    val.add_argument("--set", action="append", metavar="KEY=VALUE")
    val.set_defaults(func=_cmd_validate)

    orc = sub.add_parser("oracle", help="brute-force checks")
    orc_sub = orc.add_subparsers(dest="oracle", required=True)
    q = orc_sub.add_parser("quantile", help="quantile filter against a potential scan")
    q.add_argument("--samples", required=True,
                   help="JSON lines with 'values', 'weights' and 'T'")
    q.add_argument("--step", type=float, default=1e-3)
    q.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

One subcommand per inference engine plus ``experiment`` for config files and
presets, and listing helpers.  Every run writes its outputs and a
``record.json`` into the directory named by ``--out``.

Examples::

    abc rejection --model normal_mean --summary sample_mean \\
        --truth 0.5 --budget 2000 --seed 7 --out runs/demo
    abc experiment --preset gk-table --seed 11 --out runs/gk
    abc experiment --config my-study.toml
    abc list-models
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    ExperimentConfig,
    PRESETS,
    list_presets,
    load_config,
    preset_config,
    run_experiment,
)
from .models import MODEL_REGISTRY


def _parse_param(text: str):
    """Parse KEY=VALUE with a JSON value, falling back to a bare string."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(
            f"expected KEY=VALUE, got {text!r}"
        )
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _param_dict(pairs) -> dict:
    return dict(pairs or [])


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0,
                        help="64-bit seed driving every random stream (default 0)")
    parser.add_argument("--threads", type=int, default=0,
                        help="worker threads; 0 reads ABC_THREADS, else 1")
    parser.add_argument("--out", default="",
                        help="output directory (default abc-<subcommand>)")
    parser.add_argument("--budget", type=int, default=0,
                        help="total simulated datasets across all stages")


def _add_model_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True,
                        help="model id (see: abc list-models)")
    parser.add_argument("--model-param", action="append", type=_parse_param,
                        metavar="KEY=VALUE", help="model constructor argument")
    parser.add_argument("--summary", default="default",
                        help="summary id (default: the model's conventional summary)")
    parser.add_argument("--summary-param", action="append", type=_parse_param,
                        metavar="KEY=VALUE", help="summary constructor argument")
    parser.add_argument("--engine-param", action="append", type=_parse_param,
                        metavar="KEY=VALUE",
                        help="engine setting (h, kernel, n_steps, ...)")
    data = parser.add_mutually_exclusive_group()
    data.add_argument("--observed", type=float, nargs="+", metavar="VALUE",
                      help="observed values given inline")
    data.add_argument("--observed-csv", default="",
                      help="numeric CSV file holding the observed data")
    data.add_argument("--truth", type=float, nargs="+", metavar="VALUE",
                      help="simulate the observed dataset at this parameter value")


_ENGINE_DEFAULT_BUDGETS = {
    "rejection": 2000,
    "is": 2000,
    "mcmc": 2000,
    "semiauto": 4000,
    "sequential": 4000,
    "baseline": 4000,
}


def _engine_config(engine: str, args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        seed=args.seed,
        out_dir=args.out or f"abc-{engine}",
        engine=engine,
        model=args.model,
        model_params=_param_dict(args.model_param),
        summary=args.summary,
        summary_params=_param_dict(args.summary_param),
        engine_params=_param_dict(args.engine_param),
        budget=args.budget or _ENGINE_DEFAULT_BUDGETS[engine],
        threads=args.threads,
        observed=list(args.observed or []),
        observed_csv=args.observed_csv,
        truth=list(args.truth or []),
    )


def _report(record) -> None:
    print(f"status: {record.status}")
    print(f"wall time: {record.wall_time_s:.2f} s")
    for key, value in sorted(record.acceptance_rates.items()):
        print(f"{key} rate: {value:.4g}")
    for key, value in sorted(record.simulation_counts.items()):
        print(f"simulations[{key}]: {value}")
    for name in sorted(record.outputs):
        print(f"wrote: {name}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abc",
        description="Likelihood-free inference runs with reproducible outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for engine, text in (
        ("rejection", "accept-or-reject sampling against the prior"),
        ("is", "importance-weighted variant of the rejection engine"),
        ("mcmc", "random-walk chain targeting the smoothed posterior"),
        ("semiauto", "regression-trained summaries, then a final run"),
        ("sequential", "particle filter over a growing observation series"),
        ("baseline", "synthetic-likelihood chain or auxiliary-statistic search"),
    ):
        p = sub.add_parser(engine, help=text)
        _add_model_options(p)
        _add_run_options(p)

    exp = sub.add_parser("experiment", help="run a config file or a named preset")
    group = exp.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", default="", help="TOML or JSON experiment config")
    group.add_argument("--preset", default="", choices=list_presets(),
                       help="built-in small-scale study")
    exp.add_argument("--engine-param", action="append", type=_parse_param,
                     metavar="KEY=VALUE", help="preset parameter override")
    _add_run_options(exp)

    sub.add_parser("list-models", help="print the available model ids")
    sub.add_parser("list-presets", help="print the built-in experiment presets")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "list-models":
        for name in sorted(MODEL_REGISTRY):
            print(name)
        return 0
    if args.command == "list-presets":
        for name in list_presets():
            print(f"{name}: {PRESETS[name]['description']}")
        return 0

    if args.command == "experiment":
        if args.config:
            config = load_config(args.config)
            if args.seed:
                config.seed = args.seed
            if args.out:
                config.out_dir = args.out
            if args.threads:
                config.threads = args.threads
            if args.budget:
                config.budget = args.budget
            if args.engine_param:
                config.engine_params.update(_param_dict(args.engine_param))
        else:
            config = preset_config(args.preset, seed=args.seed,
                                   out_dir=args.out,
                                   **_param_dict(args.engine_param))
            if args.threads:
                config.threads = args.threads
            if args.budget:
                config.budget = args.budget
    else:
        config = _engine_config(args.command, args)

    try:
        record = run_experiment(config)
    except Exception as exc:  # noqa: BLE001 - a CLI reports, it does not crash
        print(f"error: {exc}", file=sys.stderr)
        print(f"a failure record was written to {config.out_dir}/record.json",
              file=sys.stderr)
        return 1
    _report(record)
    return 0


if __name__ == "__main__":
    sys.exit(main())

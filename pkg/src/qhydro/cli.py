"""Command-line front end: ``qhydro run|list|describe|validate``."""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import (ConfigurationError, InadmissibleError, MeshTanglingError, NumericError,
                     UnsupportedTransformError)
from .runner import ScenarioResult, execute, write_json, write_outputs
from .scenarios import bundled_names, bundled_scenario, resolve

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
OUTPUT_ENV = "QHYDRO_OUTPUT_ROOT"


def output_root(cli_value: str | None) -> Path:
    """``--output`` wins, then the environment variable, then ``./qhydro_output``."""
    if cli_value:
        return Path(cli_value)
    return Path(os.environ.get(OUTPUT_ENV, "qhydro_output"))


def _cmd_run(args) -> int:
    try:
        scenario = resolve(args.config)
        scenario.validate()
    except (ConfigurationError, InadmissibleError, UnsupportedTransformError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = output_root(args.output) / scenario.name
    try:
        result = execute(scenario)
    except (MeshTanglingError, NumericError, FloatingPointError) as exc:
        outdir.mkdir(parents=True, exist_ok=True)
        info = {"scenario": scenario.name, "error": type(exc).__name__, "message": str(exc)}
        for attr in ("node", "time", "min_jacobian"):
            if getattr(exc, attr, None) is not None:
                info[attr] = getattr(exc, attr)
        write_json(outdir / "failure.json", info)
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    write_outputs(result, outdir)
    _print_checks(result)
    print(f"outputs written to {outdir}")
    return EXIT_OK if result.passed else EXIT_TOLERANCE


def _print_checks(result: ScenarioResult) -> None:
    for c in result.checks:
        op = ">=" if c.lower else "<="
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<32} {c.value:.3e} {op} {c.limit:.1e}")
    print(f"{result.scenario.name}: {'PASS' if result.passed else 'FAIL'}")


def _cmd_list(args) -> int:
    for name in bundled_names():
        print(f"{name:<34} {bundled_scenario(name).description}")
    return EXIT_OK


def _cmd_describe(args) -> int:
    try:
        sc = bundled_scenario(args.name)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    grid = sc.grid.to_dict()
    print(f"{sc.name} ({sc.dim}D)")
    print(f"  {sc.description}")
    print(f"  exercises: {sc.exercises}")
    print(f"  state: {sc.state} {sc.state_params}")
    print(f"  potential: {sc.potential.kind} {sc.potential.params}")
    print(f"  label grid: {grid['lo']} .. {grid['hi']}, counts {grid['counts']}")
    cfg = sc.integration
    print(f"  integration: t_end={cfg.t_end:g}, cfl={cfg.cfl:g}, snapshots={cfg.snapshots}")
    if sc.diagnostics:
        print("  diagnostics: " + ", ".join(f"{k}={v}" for k, v in sc.diagnostics.items()))
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        scenario = resolve(args.config)
        scenario.validate()
    except (ConfigurationError, InadmissibleError, UnsupportedTransformError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{scenario.name}: configuration valid")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhydro",
                                     description="Lagrangian quantum hydrodynamics scenarios")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a scenario file or bundled scenario")
    p.add_argument("config")
    p.add_argument("--output", help=f"output root (default ${OUTPUT_ENV} or ./qhydro_output)")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("list", help="list bundled scenarios")
    p.set_defaults(func=_cmd_list)
    p = sub.add_parser("describe", help="describe a bundled scenario")
    p.add_argument("name")
    p.set_defaults(func=_cmd_describe)
    p = sub.add_parser("validate", help="check a scenario without running it")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

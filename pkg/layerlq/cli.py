"""Command-line surface: compose, synthesize, simulate, bench, casestudy."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import pandas as pd

from layerlq import config
from layerlq.errors import LayerLQError, ScenarioError
from layerlq.reports import dumps, error_payload, write_json, write_table_csv, write_trace_csv
from layerlq.services.bench import run_bench
from layerlq.services.scenarios import Scenario, florentine_scenario, load_scenario
from layerlq.services.simulate import CONTROLLERS, compare_controllers, run_scenario
from layerlq.services.synthesis import compose, synthesize

logger = logging.getLogger("layerlq")


def _json_print(payload: Any) -> None:
    print(dumps(payload))


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return n


def _parse_weights(value: Optional[str]):
    if value is None:
        return None
    payload = json.loads(value)
    if not isinstance(payload, list):
        raise ScenarioError("--weights expects a JSON list with one entry per layer")
    return tuple(None if w is None else tuple(float(v) for v in w) for w in payload)


# ------------------------------------------------------------------------------
# Subcommands
# ------------------------------------------------------------------------------
def cmd_compose(scenario: Scenario, out_dir: Optional[Path] = None) -> dict:
    plant = compose(scenario.layers)
    payload = {
        "schema_version": config.SCHEMA_VERSION,
        "scenario": scenario.name,
        "layer_dims": list(plant.layer_dims),
        "dimension": plant.dim,
        "inputs": plant.b_otimes.shape[1],
        "uncertainty_directions": [m.d for m in plant.delta_structure],
    }
    if out_dir is not None:
        out_dir = config.ensure_output_dir(out_dir)
        pd.DataFrame(plant.a_oplus).to_csv(out_dir / "a_oplus.csv", index=False, header=False)
        pd.DataFrame(plant.b_otimes).to_csv(out_dir / "b_otimes.csv", index=False, header=False)
        payload["written"] = [str(out_dir / "a_oplus.csv"), str(out_dir / "b_otimes.csv")]
    return payload


def cmd_synthesize(scenario: Scenario, strict: bool = False, report_path: Optional[Path] = None) -> tuple[dict, int]:
    report = synthesize(
        scenario.layers,
        scenario.q1,
        scenario.r1,
        strategy=scenario.strategy,
        m_list=scenario.m_list,
        strict=strict or scenario.strict,
    )
    payload = {"scenario": scenario.name, **report.to_dict()}
    if report_path is not None:
        write_json(payload, report_path)
    return payload, 0 if report.passed else 4


def cmd_simulate(
    scenario: Scenario,
    controller: Optional[str] = None,
    trace_path: Optional[Path] = None,
    report_path: Optional[Path] = None,
) -> dict:
    cost, trace = run_scenario(scenario, controller)
    payload = {"scenario": scenario.name, **cost.to_dict()}
    if trace_path is not None:
        write_trace_csv(trace, trace_path)
    if report_path is not None:
        write_json(payload, report_path)
    return payload


def cmd_bench(max_provinces: int, csv_path: Optional[Path] = None, monolithic: bool = True) -> dict:
    rows = run_bench(max_provinces, monolithic=monolithic)
    if csv_path is not None:
        write_table_csv(rows, csv_path)
    print(pd.DataFrame(rows).to_string(index=False), file=sys.stderr)
    return {"schema_version": config.SCHEMA_VERSION, "rows": rows}


def cmd_casestudy(provinces: int, out_dir: Path, weight: Optional[float] = None) -> dict:
    scenario = florentine_scenario(provinces) if weight is None else florentine_scenario(provinces, weight=weight)
    out_dir = config.ensure_output_dir(out_dir)
    results = compare_controllers(scenario)
    payload: dict = {"schema_version": config.SCHEMA_VERSION, "scenario": scenario.name, "reports": {}}
    for name, (cost, trace) in results.items():
        payload["reports"][name] = cost.to_dict()
        write_json(cost.to_dict(), out_dir / f"{name}_report.json")
        write_trace_csv(trace, out_dir / f"{name}_trace.csv")
    write_json(payload, out_dir / "casestudy.json")
    return payload


# ------------------------------------------------------------------------------
# Parser
# ------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layerlq", description="Guaranteed-cost LQ synthesis for layered networks")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--seed", type=int, default=None, help=f"overrides LAYERLQ_SEED (default {config.DEFAULT_SEED})")
    sub = parser.add_subparsers(dest="command", required=True)

    compose_cmd = sub.add_parser("compose", help="Compose layers and report dimensions")
    compose_cmd.add_argument("scenario", help="scenario JSON file or florentine:<N>")
    compose_cmd.add_argument("--out", type=Path, default=None, help="write composed matrices as CSV here")

    synth_cmd = sub.add_parser("synthesize", help="Layered guaranteed-cost design with all checks")
    synth_cmd.add_argument("scenario")
    synth_cmd.add_argument("--strict-certificates", action="store_true", help="require G_i negative definite")
    synth_cmd.add_argument("--report", type=Path, default=None)

    sim_cmd = sub.add_parser("simulate", help="Simulate a controller on the realized plant")
    sim_cmd.add_argument("scenario")
    sim_cmd.add_argument("--controller", choices=CONTROLLERS, default=None)
    sim_cmd.add_argument("--weights", type=str, default=None, help="realized weights per layer, e.g. '[[2.0], null, null]'")
    sim_cmd.add_argument("--trace", type=Path, default=None)
    sim_cmd.add_argument("--report", type=Path, default=None)

    bench_cmd = sub.add_parser("bench", help="Layered vs monolithic timing over province counts")
    bench_cmd.add_argument("--max-provinces", type=_positive_int, default=4)
    bench_cmd.add_argument("--csv", type=Path, default=None)
    bench_cmd.add_argument("--no-monolithic", action="store_true")

    case_cmd = sub.add_parser("casestudy", help="Bundled case studies")
    case_sub = case_cmd.add_subparsers(dest="case", required=True)
    flor = case_sub.add_parser("florentine", help="Baseline vs guaranteed on the Florentine network")
    flor.add_argument("--provinces", type=_positive_int, default=1)
    flor.add_argument("--weight", type=float, default=None, help="realized flip weight (default 2)")
    flor.add_argument("--out", type=Path, default=config.OUTPUT_DIR)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    if args.seed is not None:
        os.environ["LAYERLQ_SEED"] = str(args.seed)

    try:
        if args.command == "compose":
            _json_print(cmd_compose(load_scenario(args.scenario), args.out))
            return 0
        if args.command == "synthesize":
            payload, code = cmd_synthesize(load_scenario(args.scenario), args.strict_certificates, args.report)
            _json_print(payload)
            return code
        if args.command == "simulate":
            scenario = load_scenario(args.scenario)
            weights = _parse_weights(args.weights)
            if weights is not None:
                scenario = scenario.with_weights(weights)
            _json_print(cmd_simulate(scenario, args.controller, args.trace, args.report))
            return 0
        if args.command == "bench":
            _json_print(cmd_bench(args.max_provinces, args.csv, not args.no_monolithic))
            return 0
        if args.command == "casestudy":
            _json_print(cmd_casestudy(args.provinces, args.out, args.weight))
            return 0
    except LayerLQError as e:
        logger.error("%s failed: %s", args.command, e)
        _json_print(error_payload(e))
        return e.exit_code
    except json.JSONDecodeError as e:
        _json_print(error_payload(ScenarioError(f"invalid JSON argument: {e.msg}")))
        return 2
    return 2

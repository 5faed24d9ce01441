"""Wall-clock comparison of the layered design against a monolithic modified-ARE solve."""
from __future__ import annotations

import logging
import time
from typing import Any, Dict, List

from layerlq.errors import ScenarioError, SynthesisError
from layerlq.services.scenarios import MAX_BUNDLED_PROVINCES, florentine_scenario
from layerlq.services.synthesis import compose, monolithic_design, synthesize

logger = logging.getLogger("layerlq")

# phases of `synthesize` that produce the controller; the rest only check it
SYNTHESIS_PHASES = ("compose", "layer1_solve", "certificates", "assemble")
VERIFY_PHASES = ("ranks", "verify", "stabilizability")


def bench_size(provinces: int, count: int = 10, monolithic: bool = True) -> Dict[str, Any]:
    scenario = florentine_scenario(provinces)
    report = synthesize(scenario.layers, scenario.q1, scenario.r1, count=count)
    if report.design is None:
        raise SynthesisError(f"layered synthesis failed at {provinces} provinces", failure=report.failure)

    timings = report.diagnostics["timings_s"]
    row: Dict[str, Any] = {
        "provinces": provinces,
        "dimension": report.plant.dim,
        "layered_s": sum(timings.get(k, 0.0) for k in SYNTHESIS_PHASES),
        "layer1_solve_s": timings.get("layer1_solve", 0.0),
        "verify_s": sum(timings.get(k, 0.0) for k in VERIFY_PHASES),
        "layered_passed": report.passed,
    }
    if monolithic:
        plant = compose(scenario.layers)
        t0 = time.perf_counter()
        sol = monolithic_design(plant, report.design.q_otimes, report.design.r_otimes)
        row["monolithic_s"] = time.perf_counter() - t0
        row["monolithic_iterations"] = sol.iterations
        row["speedup"] = row["monolithic_s"] / max(row["layered_s"], 1e-12)
    logger.info(
        "bench provinces=%d dim=%d layered %.3fs verify %.3fs",
        provinces, row["dimension"], row["layered_s"], row["verify_s"],
    )
    return row


def run_bench(max_provinces: int, count: int = 10, monolithic: bool = True) -> List[Dict[str, Any]]:
    if max_provinces < 1:
        raise ScenarioError(f"max_provinces must be >= 1, got {max_provinces}")
    if max_provinces > MAX_BUNDLED_PROVINCES:
        logger.warning("benchmarking beyond %d provinces; monolithic solves grow quickly", MAX_BUNDLED_PROVINCES)
    return [bench_size(n, count, monolithic) for n in range(1, max_provinces + 1)]

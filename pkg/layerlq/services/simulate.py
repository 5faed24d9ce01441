"""Taylor opinion-dynamics layers and closed-loop simulation of composed plants."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.integrate

from layerlq import config
from layerlq.errors import DimensionError, ScenarioError, SynthesisError
from layerlq.services.synthesis import (
    ComposedPlant,
    GuaranteedDesign,
    LayerSpec,
    compose,
    joint_weight_samples,
    nominal_design,
    synthesize,
)
from layerlq.utils.graphs import Graph, laplacian_of
from layerlq.utils.riccati import EMPTY_UNCERTAINTY, UncertaintyModel, spectral_abscissa

if TYPE_CHECKING:
    from layerlq.services.scenarios import Scenario

logger = logging.getLogger("layerlq")

CONTROLLERS = ("baseline", "guaranteed")


# ------------------------------------------------------------------------------
# Types
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class TaylorLayer:
    """y_p' = sum_q a_pq (y_q - y_p) + sum_k b_pk (u_k - y_p), written as x' = a x + b u."""

    graph: Graph
    input_nodes: Tuple[Tuple[int, float], ...]
    a: np.ndarray
    b: Optional[np.ndarray]

    def layer_spec(self, uncertainty: UncertaintyModel = EMPTY_UNCERTAINTY, name: str = "") -> LayerSpec:
        return LayerSpec(self.a, self.b, uncertainty, name)


@dataclass(frozen=True)
class SimulationConfig:
    x0: np.ndarray
    t_final: float = config.T_FINAL
    dt: float = config.DT
    weights: Optional[Tuple[Optional[Tuple[float, ...]], ...]] = None
    controller: str = "guaranteed"
    stride: int = config.TRACE_STRIDE

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        if not self.dt > 0:
            raise ScenarioError(f"dt must be positive, got {self.dt}")
        if self.t_final < self.dt:
            raise ScenarioError(f"t_final {self.t_final} is shorter than dt {self.dt}")
        if self.controller not in CONTROLLERS:
            raise ScenarioError(f"unknown controller {self.controller!r}; expected one of {CONTROLLERS}")
        if self.stride < 1:
            raise ScenarioError(f"stride must be >= 1, got {self.stride}")


@dataclass
class SimulationTrace:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    running_cost: np.ndarray
    divergent: bool = False
    tail_converged: bool = False

    @property
    def j(self) -> float:
        return float(self.running_cost[-1]) if len(self.running_cost) else 0.0


@dataclass
class CostReport:
    controller: str
    j_sim: float
    bound: float
    spectral_abscissa: float
    divergent: bool = False
    tail_converged: bool = True
    t_end: float = 0.0
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.bound - self.j_sim

    @property
    def satisfied(self) -> bool:
        return (not self.divergent) and self.margin >= -1e-3 * abs(self.bound)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": config.SCHEMA_VERSION,
            "controller": self.controller,
            "j_sim": self.j_sim,
            "bound": self.bound,
            "margin": self.margin,
            "satisfied": self.satisfied,
            "spectral_abscissa": self.spectral_abscissa,
            "divergent": self.divergent,
            "tail_converged": self.tail_converged,
            "t_end": self.t_end,
            **self.extra,
        }


# ------------------------------------------------------------------------------
# Model builder
# ------------------------------------------------------------------------------
def taylor_layer(graph: Graph, input_nodes: Sequence[Tuple[int, float]] = ()) -> TaylorLayer:
    """a = -L(graph) - diag(sum_k b_pk); input k drives node p with gain b_pk."""
    n = graph.node_count
    inputs = tuple((int(p), float(g)) for p, g in input_nodes)
    b = np.zeros((n, len(inputs))) if inputs else None
    for k, (p, gain) in enumerate(inputs):
        if not 0 <= p < n:
            raise DimensionError(f"input node {p} outside [0, {n})")
        b[p, k] = gain
    coupling = b.sum(axis=1) if b is not None else np.zeros(n)
    a = -laplacian_of(graph) - np.diag(coupling)
    return TaylorLayer(graph=graph, input_nodes=inputs, a=a, b=b)


# ------------------------------------------------------------------------------
# Integration
# ------------------------------------------------------------------------------
def rk4_step(fn: Callable[[float, np.ndarray], np.ndarray], t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = h * fn(t, x)
    k2 = h * fn(t + h / 2, x + k1 / 2)
    k3 = h * fn(t + h / 2, x + k2 / 2)
    k4 = h * fn(t + h, x + k3)
    return x + (k1 + 2 * k2 + 2 * k3 + k4) / 6


def _step_matrix(acl: np.ndarray, h: float) -> np.ndarray:
    # one RK4 step of a linear time-invariant system applied to every basis vector
    return rk4_step(lambda _t, x: acl @ x, 0.0, np.eye(acl.shape[0]), h)


def integrate(
    a_realized: np.ndarray,
    b: np.ndarray,
    k: np.ndarray,
    cfg: SimulationConfig,
    q: Optional[np.ndarray] = None,
    r: Optional[np.ndarray] = None,
) -> SimulationTrace:
    """RK4 on x' = (A + dA - B K) x with u = -K x.

    The running cost uses the trapezoid rule at full step resolution; states
    are kept every `cfg.stride` steps plus the final one. Integration stops
    early once |x| <= TAIL_RATIO |x0|, or when |x| exceeds DIVERGENCE_NORM.
    """
    a_realized = np.atleast_2d(np.asarray(a_realized, dtype=float))
    n = a_realized.shape[0]
    b = np.asarray(b, dtype=float).reshape(n, -1)
    k = np.asarray(k, dtype=float).reshape(b.shape[1], n)
    x = cfg.x0.copy()
    if x.shape[0] != n:
        raise DimensionError(f"x0 has length {x.shape[0]}, expected {n}")
    q = np.zeros((n, n)) if q is None else np.asarray(q, dtype=float)
    r = np.zeros((b.shape[1], b.shape[1])) if r is None else np.asarray(r, dtype=float)
    w = q + k.T @ r @ k

    acl = a_realized - b @ k
    phi = _step_matrix(acl, cfg.dt)
    steps = int(round(cfg.t_final / cfg.dt))
    x0_norm = float(np.linalg.norm(x))
    tail = config.TAIL_RATIO * x0_norm

    times, states, costs = [0.0], [x.copy()], [0.0]
    j, c_prev = 0.0, float(x @ w @ x)
    divergent = converged = False
    step = 0
    if x0_norm == 0.0:
        converged = True
    while step < steps and not converged:
        x = phi @ x
        step += 1
        c = float(x @ w @ x)
        j += 0.5 * cfg.dt * (c_prev + c)
        c_prev = c
        norm = float(np.linalg.norm(x))
        if not np.isfinite(norm) or norm > config.DIVERGENCE_NORM:
            divergent = True
        elif norm <= tail:
            converged = True
        if step % cfg.stride == 0 or step == steps or divergent or converged:
            times.append(step * cfg.dt)
            states.append(x.copy())
            costs.append(j)
        if divergent:
            logger.warning("simulation diverged at t=%.3f (|x| = %.3e)", step * cfg.dt, norm)
            break

    if not converged and not divergent:
        logger.warning("cost tail not converged at t_final=%.3f (|x|/|x0| = %.3e)", cfg.t_final, norm / x0_norm)
    states_arr = np.array(states)
    return SimulationTrace(
        times=np.array(times),
        states=states_arr,
        inputs=-(states_arr @ k.T),
        running_cost=np.array(costs),
        divergent=divergent,
        tail_converged=converged,
    )


def accumulate_cost(trace: SimulationTrace, q, r) -> float:
    """Trapezoid rule for x'Qx + u'Ru over the samples stored in the trace."""
    if len(trace.times) < 2:
        return 0.0
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    xs, us = trace.states, trace.inputs
    if xs.shape[1] != q.shape[0] or us.shape[1] != r.shape[0]:
        raise DimensionError(f"trace has {xs.shape[1]} states / {us.shape[1]} inputs, weights are {q.shape} / {r.shape}")
    integrand = np.einsum("ti,ij,tj->t", xs, q, xs) + np.einsum("ti,ij,tj->t", us, r, us)
    return float(scipy.integrate.trapezoid(integrand, trace.times))


# ------------------------------------------------------------------------------
# Scenario runs
# ------------------------------------------------------------------------------
def _design_for(scenario: "Scenario", controller: str) -> GuaranteedDesign:
    if controller == "baseline":
        return nominal_design(scenario.layers, scenario.q1, scenario.r1)
    report = synthesize(
        scenario.layers,
        scenario.q1,
        scenario.r1,
        strategy=scenario.strategy,
        m_list=scenario.m_list,
        strict=scenario.strict,
    )
    if report.design is None:
        failure = report.failure or {}
        raise SynthesisError(f"guaranteed design unavailable: {failure.get('error', 'synthesis failed')}", failure=failure)
    return report.design


def run_with_design(
    plant: ComposedPlant,
    design: GuaranteedDesign,
    cfg: SimulationConfig,
    controller: str,
    cost_design: Optional[GuaranteedDesign] = None,
) -> Tuple[CostReport, SimulationTrace]:
    """Simulate `design`'s gain on the plant realized at cfg.weights.

    The cost is measured with `cost_design`'s Q and R (default: the design's own)
    against the bound x0'P x0 of that same design.
    """
    cost_design = cost_design or design
    a_realized = plant.realized_a(cfg.weights)
    trace = integrate(a_realized, plant.b_otimes, design.k_otimes, cfg, cost_design.q_otimes, cost_design.r_otimes)
    abscissa = spectral_abscissa(a_realized - plant.b_otimes @ design.k_otimes)
    bound = float(cfg.x0 @ cost_design.p_otimes @ cfg.x0)
    report = CostReport(
        controller=controller,
        j_sim=trace.j,
        bound=bound,
        spectral_abscissa=abscissa,
        divergent=trace.divergent,
        tail_converged=trace.tail_converged,
        t_end=float(trace.times[-1]),
    )
    logger.info("%s controller: J=%.6g bound=%.6g abscissa=%.3e", controller, report.j_sim, bound, abscissa)
    return report, trace


def run_scenario(scenario: "Scenario", controller: Optional[str] = None) -> Tuple[CostReport, SimulationTrace]:
    cfg = scenario.simulation
    controller = controller or cfg.controller
    plant = compose(scenario.layers)
    design = _design_for(scenario, controller)
    return run_with_design(plant, design, cfg, controller)


def compare_controllers(scenario: "Scenario") -> Dict[str, Tuple[CostReport, SimulationTrace]]:
    """Baseline LQR and guaranteed design on the same realized plant, both costed with the guaranteed Q and R."""
    plant = compose(scenario.layers)
    guaranteed = _design_for(scenario, "guaranteed")
    baseline = nominal_design(scenario.layers, scenario.q1, scenario.r1)
    cfg = scenario.simulation
    return {
        "baseline": run_with_design(plant, baseline, cfg, "baseline", cost_design=guaranteed),
        "guaranteed": run_with_design(plant, guaranteed, cfg, "guaranteed"),
    }


def random_unit_vectors(n: int, count: int, seed: Optional[int] = None) -> np.ndarray:
    rng = np.random.default_rng(config.current_seed() if seed is None else seed)
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def cost_bound_sweep(
    scenario: "Scenario",
    weight_samples: int = 20,
    x0_count: int = 5,
    seed: Optional[int] = None,
    design: Optional[GuaranteedDesign] = None,
) -> Dict[str, Any]:
    """Guaranteed design simulated over a fixed-seed schedule of admissible weights and unit x0."""
    plant = compose(scenario.layers)
    design = design or _design_for(scenario, "guaranteed")
    base = config.current_seed() if seed is None else seed
    schedule = joint_weight_samples(plant, weight_samples, base)[:weight_samples]
    x0s = random_unit_vectors(plant.dim, x0_count, base + 1000)
    cfg = scenario.simulation

    rows: List[Dict[str, Any]] = []
    for i, weights in enumerate(schedule):
        layer_weights = tuple(tuple(float(v) for v in w) if len(w) else None for w in weights)
        for j, x0 in enumerate(x0s):
            run_cfg = SimulationConfig(x0=x0, t_final=cfg.t_final, dt=cfg.dt, weights=layer_weights, stride=cfg.stride)
            rep, _ = run_with_design(plant, design, run_cfg, "guaranteed")
            rows.append(
                {
                    "sample": i,
                    "x0_index": j,
                    "j_sim": rep.j_sim,
                    "bound": rep.bound,
                    "ratio": rep.j_sim / rep.bound if rep.bound > 0 else 0.0,
                    "spectral_abscissa": rep.spectral_abscissa,
                    "satisfied": rep.satisfied,
                }
            )
    worst = max((row["ratio"] for row in rows), default=0.0)
    logger.info("cost sweep: %d runs, worst J/bound %.6f", len(rows), worst)
    return {"runs": len(rows), "max_ratio": worst, "all_satisfied": all(r["satisfied"] for r in rows), "rows": rows}

"""Scenario files and the bundled Florentine case study.

A scenario is a JSON document::

    {
      "name": "two-layer",
      "layers": [
        {"graph": "family.txt", "input_nodes": [[3, 1.0]],
         "uncertainty": {"directions": [[[0, 1, 1.0], [1, 0, 1.0]]],
                         "weight_bounds": [2.0], "realized_weights": [2.0]}},
        {"nodes": 3, "edges": [[0, 1, 1.0], [1, 2, 1.0]], "undirected": true}
      ],
      "q1": {"diag": [1, 1, 1, 1]},
      "r1": {"scale": 1.0},
      "certificates": "identity",
      "strict_certificates": false,
      "simulation": {"x0": "random", "t_final": 50, "dt": 0.001, "stride": 100,
                     "controller": "guaranteed"}
    }

Graph paths are resolved relative to the scenario file. `florentine:<N>`
names the bundled case study with N provinces.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from layerlq import config
from layerlq.errors import DimensionError, ScenarioError
from layerlq.services.simulate import SimulationConfig, random_unit_vectors, taylor_layer
from layerlq.services.synthesis import LayerSpec
from layerlq.utils.graphs import Graph, read_edge_list
from layerlq.utils.riccati import EMPTY_UNCERTAINTY, UncertaintyModel

logger = logging.getLogger("layerlq")

FAMILY_GRAPH = config.DATA_DIR / "florentine_family.txt"
ELITE_GRAPH = config.DATA_DIR / "florentine_elite.txt"
FLORENTINE_PREFIX = "florentine:"
MAX_BUNDLED_PROVINCES = 4

# social-political tie: dA = w (e1 e2' + e2 e1'); w = 2 turns the -1 edge into +1
FLIP_PAIR = (0, 1)
FLIP_BOUND = 2.0
FINANCIAL_NODE = 3


@dataclass(frozen=True)
class Scenario:
    name: str
    layers: Tuple[LayerSpec, ...]
    q1: np.ndarray
    r1: np.ndarray
    simulation: SimulationConfig
    strategy: str = "identity"
    m_list: Optional[Tuple[np.ndarray, ...]] = None
    strict: bool = False

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(layer.n for layer in self.layers)

    def with_weights(self, weights) -> "Scenario":
        return replace(self, simulation=replace(self.simulation, weights=weights))


# ------------------------------------------------------------------------------
# Florentine case study
# ------------------------------------------------------------------------------
def province_graph(provinces: int) -> Graph:
    """Provinces joined in a chain, unit weights."""
    if provinces < 1:
        raise ScenarioError(f"provinces must be >= 1, got {provinces}")
    if provinces > MAX_BUNDLED_PROVINCES:
        logger.warning("%d provinces is beyond the bundled range 1..%d", provinces, MAX_BUNDLED_PROVINCES)
    return Graph.undirected_from_pairs(provinces, [(p, p + 1, 1.0) for p in range(provinces - 1)])


def flip_uncertainty(n: int, pair: Tuple[int, int] = FLIP_PAIR, bound: float = FLIP_BOUND,
                     weight: Optional[float] = FLIP_BOUND) -> UncertaintyModel:
    i, j = pair
    direction = np.zeros((n, n))
    direction[i, j] = direction[j, i] = 1.0
    return UncertaintyModel((direction,), (bound,), None if weight is None else (weight,))


def florentine_scenario(
    provinces: int = 1,
    weight: Optional[float] = FLIP_BOUND,
    x0: Optional[np.ndarray] = None,
    seed: Optional[int] = None,
    t_final: float = config.T_FINAL,
    dt: float = config.DT,
    family_graph: Path = FAMILY_GRAPH,
    elite_graph: Path = ELITE_GRAPH,
    pair: Tuple[int, int] = FLIP_PAIR,
) -> Scenario:
    family = taylor_layer(read_edge_list(family_graph), [(FINANCIAL_NODE, 1.0)])
    elite = taylor_layer(read_edge_list(elite_graph))
    italy = taylor_layer(province_graph(provinces))
    layers = (
        family.layer_spec(flip_uncertainty(family.graph.node_count, pair, FLIP_BOUND, weight), "family"),
        elite.layer_spec(name="elite"),
        italy.layer_spec(name="provinces"),
    )
    dim = int(np.prod([layer.n for layer in layers]))
    if x0 is None:
        x0 = random_unit_vectors(dim, 1, seed)[0]
    sim = SimulationConfig(x0=x0, t_final=t_final, dt=dt)
    return Scenario(
        name=f"florentine:{provinces}",
        layers=layers,
        q1=np.eye(family.graph.node_count),
        r1=np.eye(1),
        simulation=sim,
    )


# ------------------------------------------------------------------------------
# JSON scenario files
# ------------------------------------------------------------------------------
def _weight_matrix(spec: Any, n: int, what: str) -> np.ndarray:
    if spec is None:
        return np.eye(n)
    if isinstance(spec, (int, float)):
        return float(spec) * np.eye(n)
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ScenarioError(f"{what} must be one of {{'diag': ...}}, {{'full': ...}}, {{'scale': ...}}")
    (kind, value), = spec.items()
    if kind == "scale":
        return float(value) * np.eye(n)
    if kind == "diag":
        diag = np.asarray(value, dtype=float)
        if diag.shape != (n,):
            raise DimensionError(f"{what} diag has {diag.size} entries, expected {n}")
        return np.diag(diag)
    if kind == "full":
        full = np.asarray(value, dtype=float)
        if full.shape != (n, n):
            raise DimensionError(f"{what} has shape {full.shape}, expected {(n, n)}")
        return full
    raise ScenarioError(f"unknown {what} form {kind!r}")


def _triplets(n: int, entries: Sequence[Sequence[float]], what: str) -> np.ndarray:
    m = np.zeros((n, n))
    for entry in entries:
        if len(entry) != 3:
            raise ScenarioError(f"{what}: expected (i, j, value) triplets, got {entry!r}")
        i, j, v = int(entry[0]), int(entry[1]), float(entry[2])
        if not (0 <= i < n and 0 <= j < n):
            raise DimensionError(f"{what}: entry ({i}, {j}) outside a {n}x{n} layer")
        m[i, j] += v
    return m


def _layer_graph(raw: Dict[str, Any], base: Path, index: int) -> Graph:
    if "graph" in raw:
        return read_edge_list(base / raw["graph"])
    if "nodes" not in raw:
        raise ScenarioError(f"layer {index}: needs 'graph' or 'nodes' with inline 'edges'")
    edges = [tuple(e) for e in raw.get("edges", [])]
    undirected = bool(raw.get("undirected", True))
    if undirected:
        # inline undirected edges may be listed once
        pairs = {}
        for t, h, w in edges:
            pairs[(int(t), int(h))] = float(w)
            pairs[(int(h), int(t))] = float(w)
        edges = [(t, h, w) for (t, h), w in sorted(pairs.items())]
    return Graph(int(raw["nodes"]), tuple(edges), undirected=undirected)


def _layer_uncertainty(raw: Optional[Dict[str, Any]], n: int, index: int) -> UncertaintyModel:
    if not raw:
        return EMPTY_UNCERTAINTY
    what = f"layer {index} uncertainty"
    directions = [_triplets(n, d, what) for d in raw.get("directions", [])]
    if raw.get("on", "a") == "laplacian":
        directions = [-d for d in directions]
    realized = raw.get("realized_weights")
    return UncertaintyModel(tuple(directions), tuple(raw.get("weight_bounds", [])),
                            None if realized is None else tuple(realized))


def _simulation(raw: Dict[str, Any], dim: int, seed: Optional[int]) -> SimulationConfig:
    x0 = raw.get("x0", "random")
    if isinstance(x0, str):
        if x0 != "random":
            raise ScenarioError(f"simulation x0 must be a list or 'random', got {x0!r}")
        x0 = random_unit_vectors(dim, 1, seed)[0]
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (dim,):
        raise DimensionError(f"x0 has {x0.size} entries, expected {dim}")
    weights = raw.get("weights")
    if weights is not None:
        weights = tuple(None if w is None else tuple(float(v) for v in w) for w in weights)
    return SimulationConfig(
        x0=x0,
        t_final=float(raw.get("t_final", config.T_FINAL)),
        dt=float(raw.get("dt", config.DT)),
        weights=weights,
        controller=raw.get("controller", "guaranteed"),
        stride=int(raw.get("stride", config.TRACE_STRIDE)),
    )


def parse_scenario(doc: Dict[str, Any], base: Path = Path("."), seed: Optional[int] = None) -> Scenario:
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ScenarioError("scenario needs a non-empty 'layers' list")

    layers: List[LayerSpec] = []
    for index, raw in enumerate(raw_layers, start=1):
        graph = _layer_graph(raw, base, index)
        taylor = taylor_layer(graph, [tuple(p) for p in raw.get("input_nodes", [])])
        uncertainty = _layer_uncertainty(raw.get("uncertainty"), graph.node_count, index)
        layers.append(taylor.layer_spec(uncertainty, raw.get("name", f"layer{index}")))
    if layers[0].b is None:
        raise ScenarioError("layer 1 needs input_nodes")

    n1, p1 = layers[0].n, layers[0].b.shape[1]
    certs = doc.get("certificates", "identity")
    strategy, m_list = certs, None
    if isinstance(certs, dict):
        strategy = certs.get("strategy", "identity")
        if "m" in certs:
            strategy, m_list = "user", tuple(np.asarray(m, dtype=float) for m in certs["m"])

    dim = int(np.prod([layer.n for layer in layers]))
    return Scenario(
        name=doc.get("name", "scenario"),
        layers=tuple(layers),
        q1=_weight_matrix(doc.get("q1"), n1, "q1"),
        r1=_weight_matrix(doc.get("r1"), p1, "r1"),
        simulation=_simulation(doc.get("simulation", {}), dim, seed),
        strategy=strategy,
        m_list=m_list,
        strict=bool(doc.get("strict_certificates", False)),
    )


def load_scenario(source: str | Path, seed: Optional[int] = None) -> Scenario:
    """Load a JSON scenario file or a built-in `florentine:<N>` name."""
    text = str(source)
    if text.startswith(FLORENTINE_PREFIX):
        try:
            provinces = int(text[len(FLORENTINE_PREFIX):])
        except ValueError:
            raise ScenarioError(f"bad built-in scenario name {text!r}") from None
        return florentine_scenario(provinces, seed=seed)

    path = Path(source)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}", line=e.lineno) from e
    try:
        return parse_scenario(doc, base=path.parent, seed=seed)
    except (TypeError, ValueError, KeyError) as e:
        raise ScenarioError(f"{path}: {e}") from e

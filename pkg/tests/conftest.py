from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from layerlq.services.synthesis import LayerSpec
from layerlq.utils.riccati import UncertaintyModel


def random_spd(rng: np.random.Generator, n: int, floor: float = 0.5) -> np.ndarray:
    x = rng.standard_normal((n, n))
    return x @ x.T + floor * np.eye(n)


def random_controllable(rng: np.random.Generator, n: int, p: int = 2):
    """Gaussian (A, B); generic draws are controllable."""
    return rng.standard_normal((n, n)), rng.standard_normal((n, p))


def random_layers(rng: np.random.Generator, dims, bound: float = 0.2, skew_higher: bool = True):
    """Random valid layered instance: uncertain layer 1, dissipative higher layers.

    Higher layers have A_i = -(SPD) so F_i <= 0 under M_i = I, and skew
    uncertainty directions so G_i = 0.
    """
    n1 = dims[0]
    a1, b1 = random_controllable(rng, n1, 2)
    direction = rng.standard_normal((n1, n1))
    direction /= np.linalg.norm(direction, 2)
    layers = [LayerSpec(a1, b1, UncertaintyModel((direction,), (bound,), (bound,)), "layer1")]
    for i, n in enumerate(dims[1:], start=2):
        a = -random_spd(rng, n, 0.1)
        model = UncertaintyModel()
        if skew_higher and n > 1:
            s = rng.standard_normal((n, n))
            model = UncertaintyModel((s - s.T,), (0.5,), (0.5,))
        layers.append(LayerSpec(a, None, model, f"layer{i}"))
    return layers


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def path_graph_file(tmp_path: Path) -> Path:
    path = tmp_path / "path3.txt"
    path.write_text("# three nodes in a row\nnodes 3 undirected true\n0 1 1\n1 2 1\n", encoding="utf-8")
    return path


@pytest.fixture
def write_scenario(tmp_path: Path):
    def _write(doc: dict, name: str = "scenario.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(doc), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def two_layer_doc(path_graph_file: Path) -> dict:
    return {
        "name": "two-layer",
        "layers": [
            {
                "nodes": 2,
                "edges": [[0, 1, 1.0]],
                "input_nodes": [[1, 1.0]],
                "uncertainty": {"directions": [[[0, 1, 1.0], [1, 0, 1.0]]], "weight_bounds": [0.3], "realized_weights": [0.3], "on": "laplacian"},
            },
            {"graph": path_graph_file.name},
        ],
        "q1": {"diag": [1.0, 1.0]},
        "r1": {"scale": 1.0},
        "simulation": {"x0": "random", "t_final": 40, "dt": 0.01, "stride": 10},
    }

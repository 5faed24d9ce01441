from __future__ import annotations

from typing import Any, Optional


class LayerLQError(Exception):
    """Base error. `reason` is the machine-readable code the CLI reports."""

    exit_code = 1
    reason = "error"

    def __init__(self, message: str, **detail: Any):
        super().__init__(message)
        self.detail = detail

    def to_dict(self) -> dict:
        return {"error": str(self), "reason": self.reason, "detail": self.detail}


class GraphError(LayerLQError):
    exit_code = 2
    reason = "graph_invalid"

    def __init__(self, message: str, line: Optional[int] = None, **detail: Any):
        if line is not None:
            message = f"line {line}: {message}"
            detail["line"] = line
        super().__init__(message, **detail)
        self.line = line


class ScenarioError(LayerLQError):
    exit_code = 2
    reason = "scenario_invalid"


class DimensionError(LayerLQError):
    exit_code = 3
    reason = "dimension_mismatch"


class NotSymmetricError(LayerLQError):
    exit_code = 3
    reason = "not_symmetric"


class NotPositiveDefiniteError(LayerLQError):
    exit_code = 4
    reason = "not_positive_definite"


class RiccatiError(LayerLQError):
    exit_code = 4
    reason = "no_stabilizing_solution"


class UncontrollableError(RiccatiError):
    reason = "not_controllable"


class FixedPointDivergence(RiccatiError):
    reason = "fixed_point_diverged"

    def __init__(self, message: str, trace: list[float], **detail: Any):
        super().__init__(message, trace=list(trace), **detail)
        self.trace = list(trace)


class CertificateError(LayerLQError):
    exit_code = 4
    reason = "certificate_failed"

    def __init__(self, message: str, layer: int, **detail: Any):
        super().__init__(message, layer=layer, **detail)
        self.layer = layer


class SemidefiniteError(LayerLQError):
    exit_code = 4
    reason = "semidefinite_check_failed"

    def __init__(self, message: str, min_eig: float, **detail: Any):
        super().__init__(message, min_eig=float(min_eig), **detail)
        self.min_eig = float(min_eig)


class SynthesisError(LayerLQError):
    exit_code = 4
    reason = "synthesis_failed"

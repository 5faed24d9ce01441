"""Layered guaranteed-cost design.

The composed plant is never solved as a whole: layer 1 carries the
guaranteed-cost Riccati solve, every higher layer contributes a certificate
M_i with F_i = A_i'M_i + M_iA_i <= 0, and the composite matrices are built
from Kronecker products of those pieces.
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from layerlq import config
from layerlq.errors import (
    CertificateError,
    DimensionError,
    NotPositiveDefiniteError,
    RiccatiError,
    ScenarioError,
    SemidefiniteError,
)
from layerlq.utils.kron_algebra import identities, kron, kron_eigvalsh, kron_many, kron_sum_many, slot_product
from layerlq.utils.riccati import (
    EMPTY_UNCERTAINTY,
    AreProblem,
    GuaranteedSolution,
    UncertaintyModel,
    admissible_weight_samples,
    cholesky,
    closed_loop_abscissa,
    controllability_rank,
    is_pd,
    is_pd_spectrum,
    is_psd_spectrum,
    majorant_margin,
    min_eig,
    observability_rank,
    psd_sqrt,
    psd_sqrt_factor,
    psd_tolerance,
    solve_are,
    solve_guaranteed_are,
    solve_lyapunov,
    spectral_abscissa,
    spectral_norm,
    symmetrize,
)

logger = logging.getLogger("layerlq")

STRATEGIES = ("identity", "lyapunov", "user")
VERTEX_LIMIT = 10  # above this many directions G is checked on samples, not vertices


# ------------------------------------------------------------------------------
# Types
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class LayerSpec:
    a: np.ndarray
    b: Optional[np.ndarray] = None
    uncertainty: UncertaintyModel = EMPTY_UNCERTAINTY
    name: str = ""

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"layer {self.name or '?'}: a must be square, got {a.shape}")
        object.__setattr__(self, "a", a)
        if self.b is not None:
            b = np.asarray(self.b, dtype=float)
            b = b.reshape(a.shape[0], -1) if b.ndim < 2 else b
            if b.shape[0] != a.shape[0]:
                raise DimensionError(f"layer {self.name or '?'}: b has {b.shape[0]} rows, expected {a.shape[0]}")
            object.__setattr__(self, "b", b)
        if self.uncertainty is None:
            object.__setattr__(self, "uncertainty", EMPTY_UNCERTAINTY)
        if self.uncertainty.d and self.uncertainty.dim != a.shape[0]:
            raise DimensionError(
                f"layer {self.name or '?'}: uncertainty directions are {self.uncertainty.dim}x{self.uncertainty.dim}, "
                f"expected {a.shape[0]}"
            )

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def realized_delta(self, weights: Optional[Sequence[float]] = None) -> np.ndarray:
        return self.uncertainty.realize(self.n, weights)


@dataclass(frozen=True)
class ComposedPlant:
    a_oplus: np.ndarray
    b_otimes: np.ndarray
    delta_structure: Tuple[UncertaintyModel, ...]
    layer_dims: Tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.a_oplus.shape[0]

    def realized_delta(self, weights: Optional[Sequence[Optional[Sequence[float]]]] = None) -> np.ndarray:
        """dA (+) = kron sum of per-layer realizations; weights default to each model's realized weights."""
        if weights is None:
            weights = [None] * len(self.layer_dims)
        if len(weights) != len(self.layer_dims):
            raise DimensionError(f"expected weights for {len(self.layer_dims)} layers, got {len(weights)}")
        deltas = [m.realize(n, w) for m, n, w in zip(self.delta_structure, self.layer_dims, weights)]
        return kron_sum_many(deltas)

    def realized_a(self, weights=None) -> np.ndarray:
        return self.a_oplus + self.realized_delta(weights)

    def composed_uncertainty(self) -> UncertaintyModel:
        """The per-layer directions lifted into the composed state space."""
        eyes = identities(self.layer_dims)
        directions, bounds, realized = [], [], []
        any_realized = any(m.realized_weights is not None for m in self.delta_structure)
        for slot, model in enumerate(self.delta_structure, start=1):
            for j, (d, wb) in enumerate(zip(model.directions, model.weight_bounds)):
                directions.append(slot_product(eyes, slot, d))
                bounds.append(wb)
                realized.append(model.realized_weights[j] if model.realized_weights is not None else 0.0)
        return UncertaintyModel(tuple(directions), tuple(bounds), tuple(realized) if any_realized else None)


@dataclass(frozen=True)
class CertificateSet:
    """Certificates for layers 2..m; list position k holds layer k + 2."""

    m_list: Tuple[np.ndarray, ...]
    f_list: Tuple[np.ndarray, ...]
    g_list: Tuple[np.ndarray, ...]
    semidefinite_report: Tuple[Dict[str, Any], ...]
    strategy: str = "identity"
    strict: bool = False

    @property
    def non_strict_layers(self) -> List[int]:
        return [r["layer"] for r in self.semidefinite_report if not r["g_strict"]]


@dataclass(frozen=True)
class GuaranteedDesign:
    p1: np.ndarray
    k1: np.ndarray
    u1_of_p1: np.ndarray
    certificates: CertificateSet
    p_otimes: np.ndarray
    q_otimes: np.ndarray
    r_otimes: np.ndarray
    k_otimes: np.ndarray
    q1: np.ndarray
    r1: np.ndarray
    layer_dims: Tuple[int, ...]
    checks: Dict[str, Any] = field(default_factory=dict)


# ------------------------------------------------------------------------------
# Composition
# ------------------------------------------------------------------------------
def compose(layers: Sequence[LayerSpec]) -> ComposedPlant:
    """A(+) = A_1 (+) ... (+) A_m and B(x) = B_1 (x) I (x) ... (x) I."""
    layers = list(layers)
    if not layers:
        raise ScenarioError("compose needs at least one layer")
    if layers[0].b is None:
        raise ScenarioError("layer 1 has no input matrix b")
    dims = tuple(layer.n for layer in layers)
    a_oplus = kron_sum_many([layer.a for layer in layers])
    b_otimes = slot_product(identities(dims), 1, layers[0].b)
    logger.debug("compose: layer dims %s -> %d states, %d inputs", dims, a_oplus.shape[0], b_otimes.shape[1])
    return ComposedPlant(
        a_oplus=a_oplus,
        b_otimes=b_otimes,
        delta_structure=tuple(layer.uncertainty for layer in layers),
        layer_dims=dims,
    )


# ------------------------------------------------------------------------------
# Certificates
# ------------------------------------------------------------------------------
def _extreme_weights(model: UncertaintyModel, seed: Optional[int] = None) -> np.ndarray:
    """Vertices of the weight box; G is affine in w, so its largest eigenvalue peaks there."""
    if model.d == 0:
        return np.zeros((1, 0))
    bounds = np.asarray(model.weight_bounds)
    if model.d <= VERTEX_LIMIT:
        return np.array([np.array(s) * bounds for s in itertools.product((-1.0, 1.0), repeat=model.d)])
    return admissible_weight_samples(model, seed=seed)


def _max_eig(s: np.ndarray) -> float:
    return -min_eig(-s)


def _certificate_for(layer: LayerSpec, index: int, strategy: str, m_user) -> np.ndarray:
    n = layer.n
    if strategy == "identity":
        return np.eye(n)
    if strategy == "lyapunov":
        abscissa = spectral_abscissa(layer.a)
        if abscissa >= 0:
            raise CertificateError(
                f"layer {index}: lyapunov certificate needs a Hurwitz A (spectral abscissa {abscissa:.3e})",
                layer=index,
                abscissa=abscissa,
            )
        return solve_lyapunov(layer.a, np.eye(n))
    if strategy == "user":
        m = np.atleast_2d(np.asarray(m_user, dtype=float))
        if m.shape != (n, n):
            raise DimensionError(f"layer {index}: certificate has shape {m.shape}, expected {(n, n)}")
        return m
    raise ScenarioError(f"unknown certificate strategy {strategy!r}; expected one of {STRATEGIES}")


def default_certificates(
    layers: Sequence[LayerSpec],
    strategy: str = "identity",
    m_list: Optional[Sequence[np.ndarray]] = None,
    strict: bool = False,
    seed: Optional[int] = None,
) -> CertificateSet:
    """Choose M_i for layers 2..m and certify F_i <= 0 and G_i <= 0.

    Strategy `identity` takes M_i = I, `lyapunov` solves A_i'M_i + M_iA_i = -I,
    and `user` takes the matrices in `m_list`. With `strict`, G_i must be
    negative definite; otherwise a semidefinite G_i is accepted and flagged.
    """
    higher = list(layers)[1:]
    if m_list is not None:
        strategy = "user"
        if len(m_list) != len(higher):
            raise DimensionError(f"expected {len(higher)} certificate matrices, got {len(m_list)}")

    ms, fs, gs, report = [], [], [], []
    for offset, layer in enumerate(higher):
        index = offset + 2
        m = symmetrize(_certificate_for(layer, index, strategy, None if m_list is None else m_list[offset]))
        ok, m_min = is_pd(m)
        if not ok:
            raise CertificateError(f"layer {index}: M is not positive definite (min-eig {m_min:.3e})", layer=index, min_eig=m_min)

        f = symmetrize(layer.a.T @ m + m @ layer.a)
        f_max = _max_eig(f)
        if f_max > psd_tolerance(f):
            raise CertificateError(
                f"layer {index}: F = A'M + MA is not negative semidefinite (max-eig {f_max:.3e})",
                layer=index,
                max_eig=f_max,
            )

        g_worst, g_max = np.zeros_like(m), -np.inf
        for w in _extreme_weights(layer.uncertainty, seed):
            delta = layer.realized_delta(w) if layer.uncertainty.d else np.zeros_like(m)
            g = symmetrize(delta.T @ m + m @ delta)
            lam = _max_eig(g)
            if lam > g_max:
                g_worst, g_max = g, lam
        if g_max > psd_tolerance(g_worst):
            raise CertificateError(
                f"layer {index}: G = dA'M + M dA is not negative semidefinite (max-eig {g_max:.3e})",
                layer=index,
                max_eig=g_max,
            )
        g_strict = g_max < -config.TOL_PD_REL * max(1.0, spectral_norm(g_worst))
        if not g_strict:
            if strict:
                raise CertificateError(
                    f"layer {index}: G is only semidefinite (max-eig {g_max:.3e}) and strict certificates were requested",
                    layer=index,
                    max_eig=g_max,
                )
            logger.warning("layer %d: G is semidefinite, not definite (max-eig %.3e); accepted", index, g_max)

        ms.append(m)
        fs.append(f)
        gs.append(g_worst)
        report.append({"layer": index, "m_min_eig": m_min, "f_max_eig": f_max, "g_max_eig": g_max, "g_strict": bool(g_strict)})

    return CertificateSet(tuple(ms), tuple(fs), tuple(gs), tuple(report), strategy=strategy, strict=strict)


# ------------------------------------------------------------------------------
# Assembly
# ------------------------------------------------------------------------------
def assemble(
    layers: Sequence[LayerSpec],
    certificates: CertificateSet,
    q1,
    r1,
    solution: GuaranteedSolution,
) -> GuaranteedDesign:
    """P(x), Q(x), R(x), K(x) from the layer-1 solution and the certificates."""
    layers = list(layers)
    dims = tuple(layer.n for layer in layers)
    q1 = np.atleast_2d(np.asarray(q1, dtype=float))
    r1 = np.atleast_2d(np.asarray(r1, dtype=float))
    ms = list(certificates.m_list)
    if len(ms) != len(layers) - 1:
        raise DimensionError(f"{len(ms)} certificates for {len(layers) - 1} higher layers")
    p1, k1 = solution.p, solution.k

    p_otimes = kron_many([p1, *ms])
    r_otimes = kron_many([r1, *ms])
    q_otimes = kron_many([q1, *ms])
    if ms:
        f_sum = sum(slot_product(ms, i, f) for i, f in enumerate(certificates.f_list, start=1))
        q_otimes = q_otimes - kron(p1, f_sum)
    q_otimes = symmetrize(q_otimes)
    k_otimes = kron_many([k1, *identities(dims[1:])])

    ok_p, p_min = is_pd_spectrum(kron_eigvalsh([p1, *ms]))
    ok_r, r_min = is_pd_spectrum(kron_eigvalsh([r1, *ms]))
    ok_q, q_min = is_psd_spectrum(np.linalg.eigvalsh(q_otimes))
    if not ok_p:
        raise SemidefiniteError(f"P(x) is not positive definite (min-eig {p_min:.3e})", min_eig=p_min, matrix="p_otimes")
    if not ok_r:
        raise SemidefiniteError(f"R(x) is not positive definite (min-eig {r_min:.3e})", min_eig=r_min, matrix="r_otimes")
    if not ok_q:
        raise SemidefiniteError(f"Q(x) is not positive semidefinite (min-eig {q_min:.3e})", min_eig=q_min, matrix="q_otimes")

    checks = {
        "p_otimes_min_eig": p_min,
        "r_otimes_min_eig": r_min,
        "q_otimes_min_eig": q_min,
        "q_otimes_psd": bool(ok_q),
    }
    return GuaranteedDesign(
        p1=p1,
        k1=k1,
        u1_of_p1=solution.u_of_p,
        certificates=certificates,
        p_otimes=p_otimes,
        q_otimes=q_otimes,
        r_otimes=r_otimes,
        k_otimes=k_otimes,
        q1=q1,
        r1=r1,
        layer_dims=dims,
        checks=checks,
    )


def generalized_residual(design: GuaranteedDesign, plant: ComposedPlant) -> np.ndarray:
    a, b, p = plant.a_oplus, plant.b_otimes, design.p_otimes
    v = kron_many([design.u1_of_p1, *design.certificates.m_list])
    return a.T @ p + p @ a + design.q_otimes - p @ b @ np.linalg.solve(design.r_otimes, b.T @ p) + v


def joint_weight_samples(
    plant: ComposedPlant, count: int = config.WEIGHT_SAMPLES, seed: Optional[int] = None
) -> List[List[np.ndarray]]:
    """Fixed-order joint samples; layer i draws from its own stream seeded seed + i."""
    base = config.current_seed() if seed is None else seed
    per_layer = [admissible_weight_samples(m, count, base + i) for i, m in enumerate(plant.delta_structure)]
    rows = max(len(s) for s in per_layer)
    return [[s[k % len(s)] for s in per_layer] for k in range(rows)]


def verify_generalized_are(
    design: GuaranteedDesign,
    plant: ComposedPlant,
    count: int = config.WEIGHT_SAMPLES,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    """Residual of the composite modified ARE with V = U_1(P_1) (x) M_2 (x) ... (x) M_m,
    plus the domination V >= dA'P + P dA and closed-loop stability at sampled weights."""
    p = design.p_otimes
    residual = float(np.linalg.norm(generalized_residual(design, plant)))
    tol = config.GENERALIZED_RESIDUAL_REL * max(1.0, float(np.linalg.norm(p)))

    v = kron_many([design.u1_of_p1, *design.certificates.m_list])
    acl = plant.a_oplus - plant.b_otimes @ design.k_otimes
    dom_min, abscissa_max = np.inf, -np.inf
    samples = joint_weight_samples(plant, count, seed)
    for weights in samples:
        delta = plant.realized_delta([w if len(w) else None for w in weights])
        dom_min = min(dom_min, min_eig(v - delta.T @ p - p @ delta))
        abscissa_max = max(abscissa_max, spectral_abscissa(acl + delta))

    report = {
        "residual_norm": residual,
        "tolerance": tol,
        "passed": bool(residual <= tol),
        "domination_min_eig": float(dom_min),
        "domination_passed": bool(dom_min >= -config.DOMINATION_TOL),
        "perturbed_abscissa_max": float(abscissa_max),
        "samples": len(samples),
    }
    log = logger.info if report["passed"] and report["domination_passed"] else logger.warning
    log("generalized ARE residual %.3e (tol %.3e), domination margin %.3e", residual, tol, dom_min)
    return report


# ------------------------------------------------------------------------------
# Observability factor and structural checks
# ------------------------------------------------------------------------------
def build_L_factor(design: GuaranteedDesign) -> np.ndarray:
    """Stacked L with L'L = Q(x).

    Rows are D (x) M_2^1/2 (x) ... (x) M_m^1/2 followed, for each higher layer i,
    by H (x) M_2^1/2 (x) ... N_i ... (x) M_m^1/2, where Q_1 = D'D, P_1 = H'H and
    N_i'N_i = -F_i.
    """
    ms = list(design.certificates.m_list)
    d = psd_sqrt_factor(design.q1)
    roots = [psd_sqrt(m) for m in ms]
    blocks = [kron_many([d, *roots])]
    if ms:
        h = cholesky(design.p1).T
        for i, f in enumerate(design.certificates.f_list, start=1):
            n_i = psd_sqrt_factor(-f)
            blocks.append(kron(h, slot_product(roots, i, n_i)))
    return np.vstack(blocks)


def l_factor_residual(design: GuaranteedDesign, l_factor: np.ndarray) -> float:
    return float(np.linalg.norm(l_factor.T @ l_factor - design.q_otimes))


def check_stabilizability(design: GuaranteedDesign, plant: ComposedPlant, l_factor: np.ndarray) -> Dict[str, Any]:
    n = plant.dim
    # L'L and its compressed factor share a row space, so the rank is unchanged
    obs = observability_rank(plant.a_oplus, psd_sqrt_factor(l_factor.T @ l_factor))
    ctrb = controllability_rank(plant.a_oplus, plant.b_otimes)
    abscissa = closed_loop_abscissa(plant.a_oplus, plant.b_otimes, design.k_otimes)
    return {
        "dimension": n,
        "observability_rank": obs,
        "controllability_rank": ctrb,
        "observable": obs == n,
        "controllable": ctrb == n,
        "closed_loop_abscissa": abscissa,
        "stable": bool(abscissa < 0),
    }


# ------------------------------------------------------------------------------
# One-call pipeline
# ------------------------------------------------------------------------------
@dataclass
class SynthesisReport:
    plant: ComposedPlant
    design: Optional[GuaranteedDesign] = None
    solution: Optional[GuaranteedSolution] = None
    checks: Dict[str, Any] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    failure: Optional[Dict[str, Any]] = None

    @property
    def passed(self) -> bool:
        if self.failure is not None or self.design is None:
            return False
        c = self.checks
        return all(
            [
                c["layer1"]["majorant_dominates"],
                c["generalized_are"]["passed"],
                c["generalized_are"]["domination_passed"],
                c["q_otimes"]["psd"],
                c["l_factor"]["passed"],
                c["stabilizability"]["observable"],
                c["stabilizability"]["controllable"],
                c["stabilizability"]["stable"],
            ]
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": config.SCHEMA_VERSION,
            "layer_dims": list(self.plant.layer_dims),
            "dimension": self.plant.dim,
            "passed": self.passed,
            "failure": self.failure,
            "checks": self.checks,
            "diagnostics": self.diagnostics,
        }


def synthesize(
    layers: Sequence[LayerSpec],
    q1,
    r1,
    strategy: str = "identity",
    m_list: Optional[Sequence[np.ndarray]] = None,
    strict: bool = False,
    count: int = config.WEIGHT_SAMPLES,
    seed: Optional[int] = None,
) -> SynthesisReport:
    """Compose, solve layer 1, certify, assemble and verify.

    Dimension and parse errors propagate. Solver, certificate and
    semidefiniteness failures end in a report with `failure` set, so the
    checks gathered before the failure are still available.
    """
    layers = list(layers)
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    plant = compose(layers)
    timings["compose"] = time.perf_counter() - t0

    report = SynthesisReport(plant=plant, diagnostics={"timings_s": timings, "strategy": strategy})
    t0 = time.perf_counter()
    ctrb = controllability_rank(plant.a_oplus, plant.b_otimes)
    report.checks["ranks"] = {"dimension": plant.dim, "controllability_rank": ctrb, "controllable": ctrb == plant.dim}
    timings["ranks"] = time.perf_counter() - t0

    try:
        t0 = time.perf_counter()
        first = layers[0]
        solution = solve_guaranteed_are(AreProblem(first.a, first.b, q1, r1, first.uncertainty))
        report.solution = solution
        timings["layer1_solve"] = time.perf_counter() - t0
        report.checks["layer1"] = {
            "residual_norm": solution.residual_norm,
            "iterations": solution.iterations,
            "p1_min_eig": min_eig(solution.p),
            "u1_min_eig": min_eig(solution.u_of_p),
        }
        margin = min(
            majorant_margin(solution.p, first.uncertainty, w)
            for w in admissible_weight_samples(first.uncertainty, count, seed)
        )
        report.checks["layer1"]["majorant_margin_min"] = margin
        report.checks["layer1"]["majorant_dominates"] = bool(margin >= -config.MAJORANT_TOL)

        t0 = time.perf_counter()
        certs = default_certificates(layers, strategy, m_list, strict, seed)
        timings["certificates"] = time.perf_counter() - t0
        report.checks["certificates"] = {
            "strategy": certs.strategy,
            "strict": certs.strict,
            "layers": list(certs.semidefinite_report),
            "non_strict_layers": certs.non_strict_layers,
        }

        t0 = time.perf_counter()
        design = assemble(layers, certs, q1, r1, solution)
        report.design = design
        timings["assemble"] = time.perf_counter() - t0
        report.checks["q_otimes"] = {"min_eig": design.checks["q_otimes_min_eig"], "psd": design.checks["q_otimes_psd"]}
        report.diagnostics["p_otimes_min_eig"] = design.checks["p_otimes_min_eig"]
        report.diagnostics["r_otimes_min_eig"] = design.checks["r_otimes_min_eig"]

        t0 = time.perf_counter()
        report.checks["generalized_are"] = verify_generalized_are(design, plant, count, seed)
        timings["verify"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        l_factor = build_L_factor(design)
        l_res = l_factor_residual(design, l_factor)
        l_tol = config.L_FACTOR_REL * max(1.0, float(np.linalg.norm(design.q_otimes)))
        report.checks["l_factor"] = {"rows": l_factor.shape[0], "residual_norm": l_res, "tolerance": l_tol, "passed": bool(l_res <= l_tol)}
        report.checks["stabilizability"] = check_stabilizability(design, plant, l_factor)
        timings["stabilizability"] = time.perf_counter() - t0
    except (RiccatiError, CertificateError, SemidefiniteError, NotPositiveDefiniteError) as e:
        logger.exception("synthesis failed: %s", e)
        report.failure = {"reason": e.reason, "error": str(e), "detail": e.detail, "exit_code": e.exit_code}

    report.diagnostics["guaranteed_cost_trace"] = list(report.solution.step_trace) if report.solution else []
    logger.info("synthesis %s for layer dims %s", "passed" if report.passed else "failed", plant.layer_dims)
    return report


def nominal_design(layers: Sequence[LayerSpec], q1, r1) -> GuaranteedDesign:
    """Baseline LQR: the same composite structure built from the nominal layer-1 ARE (U = 0, M_i = I)."""
    layers = list(layers)
    first = layers[0]
    p1, k1 = solve_are(first.a, first.b, q1, r1)
    sol = GuaranteedSolution(p=p1, k=k1, u_of_p=np.zeros_like(p1), residual_norm=0.0, iterations=0)
    certs = CertificateSet(
        m_list=tuple(np.eye(layer.n) for layer in layers[1:]),
        f_list=tuple(symmetrize(layer.a.T + layer.a) for layer in layers[1:]),
        g_list=tuple(np.zeros((layer.n, layer.n)) for layer in layers[1:]),
        semidefinite_report=(),
    )
    return assemble(layers, certs, q1, r1, sol)


def monolithic_design(plant: ComposedPlant, q, r) -> GuaranteedSolution:
    """Modified ARE on the full composed system with the lifted uncertainty directions."""
    t0 = time.perf_counter()
    sol = solve_guaranteed_are(AreProblem(plant.a_oplus, plant.b_otimes, q, r, plant.composed_uncertainty()))
    logger.info("monolithic modified ARE: n=%d in %.3fs", plant.dim, time.perf_counter() - t0)
    return sol

"""Riccati and Lyapunov solvers for the nominal and guaranteed-cost LQ problems.

Conventions (continuous time):
    Lyapunov:        A'X + XA + Q = 0
    baseline ARE:    A'P + PA + Q - P B R^-1 B' P = 0
    modified ARE:    A'P + PA + Q - P B R^-1 B' P + U(P) = 0
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from layerlq import config
from layerlq.errors import (
    DimensionError,
    FixedPointDivergence,
    NotPositiveDefiniteError,
    NotSymmetricError,
    RiccatiError,
    UncontrollableError,
)

logger = logging.getLogger("layerlq")


# ------------------------------------------------------------------------------
# Small spectral helpers
# ------------------------------------------------------------------------------
def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def min_eig(s: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of s."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if s.size == 0:
        return 0.0
    return float(scipy.linalg.eigvalsh(symmetrize(s))[0])


def spectral_norm(s: np.ndarray) -> float:
    s = np.atleast_2d(np.asarray(s, dtype=float))
    return float(np.linalg.norm(s, 2)) if s.size else 0.0


def psd_tolerance(s: np.ndarray) -> float:
    return config.TOL_PSD_REL * max(1.0, spectral_norm(s))


def is_psd(s: np.ndarray) -> Tuple[bool, float]:
    """(verdict, min-eig); verdicts always travel with their margin."""
    lam = min_eig(s)
    return lam >= -psd_tolerance(s), lam


def is_pd(s: np.ndarray) -> Tuple[bool, float]:
    lam = min_eig(s)
    return lam > config.TOL_PD_REL * spectral_norm(s), lam


def is_pd_spectrum(lams: np.ndarray) -> Tuple[bool, float]:
    """is_pd from a symmetric matrix's eigenvalues."""
    lams = np.asarray(lams, dtype=float)
    lam = float(lams.min())
    return lam > config.TOL_PD_REL * float(np.abs(lams).max()), lam


def is_psd_spectrum(lams: np.ndarray) -> Tuple[bool, float]:
    lams = np.asarray(lams, dtype=float)
    lam = float(lams.min())
    return lam >= -config.TOL_PSD_REL * max(1.0, float(np.abs(lams).max())), lam


def spectral_abscissa(a: np.ndarray) -> float:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return float(np.max(np.linalg.eigvals(a).real))


def closed_loop_abscissa(a: np.ndarray, b: np.ndarray, k: np.ndarray) -> float:
    return spectral_abscissa(np.asarray(a) - np.asarray(b) @ np.asarray(k))


# ------------------------------------------------------------------------------
# Types
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class UncertaintyModel:
    """Structured uncertainty dA = sum_j w_j * directions[j], |w_j| <= weight_bounds[j]."""

    directions: Tuple[np.ndarray, ...] = ()
    weight_bounds: Tuple[float, ...] = ()
    realized_weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        dirs = tuple(np.atleast_2d(np.asarray(d, dtype=float)) for d in self.directions)
        bounds = tuple(float(w) for w in self.weight_bounds)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "weight_bounds", bounds)
        if len(dirs) != len(bounds):
            raise DimensionError(f"{len(dirs)} directions but {len(bounds)} weight bounds")
        for j, d in enumerate(dirs):
            if d.shape[0] != d.shape[1] or d.shape != dirs[0].shape:
                raise DimensionError(f"direction {j} has shape {d.shape}")
            if not np.all(np.isfinite(d)):
                raise DimensionError(f"direction {j} has non-finite entries")
        for j, w in enumerate(bounds):
            if not np.isfinite(w) or w < 0:
                raise DimensionError(f"weight bound {j} must be finite and nonnegative, got {w}")
        if self.realized_weights is not None:
            realized = tuple(float(w) for w in self.realized_weights)
            object.__setattr__(self, "realized_weights", realized)
            self.check_weights(realized)

    @property
    def d(self) -> int:
        return len(self.directions)

    @property
    def dim(self) -> Optional[int]:
        return self.directions[0].shape[0] if self.directions else None

    def check_weights(self, weights: Sequence[float]) -> None:
        if len(weights) != self.d:
            raise DimensionError(f"expected {self.d} weights, got {len(weights)}")
        for j, (w, wb) in enumerate(zip(weights, self.weight_bounds)):
            if abs(w) > wb * (1 + 1e-12):
                raise DimensionError(f"weight {j} = {w} outside admissible bound {wb}")

    def realize(self, n: int, weights: Optional[Sequence[float]] = None) -> np.ndarray:
        """dA for the given weights (default: realized_weights, else zero)."""
        if weights is None:
            weights = self.realized_weights
        out = np.zeros((n, n))
        if weights is None or self.d == 0:
            return out
        self.check_weights(weights)
        for w, d in zip(weights, self.directions):
            if d.shape != (n, n):
                raise DimensionError(f"direction shape {d.shape} does not match n={n}")
            out += w * d
        return out


EMPTY_UNCERTAINTY = UncertaintyModel()


@dataclass(frozen=True)
class AreProblem:
    a: np.ndarray
    b: np.ndarray
    q: np.ndarray
    r: np.ndarray
    uncertainty: Optional[UncertaintyModel] = None

    def __post_init__(self):
        for name in ("a", "b", "q", "r"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        self.validate()

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def validate(self) -> None:
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise DimensionError(f"a must be square, got {self.a.shape}")
        if self.b.shape[0] != n:
            raise DimensionError(f"b has {self.b.shape[0]} rows, expected {n}")
        p = self.b.shape[1]
        if self.q.shape != (n, n):
            raise DimensionError(f"q has shape {self.q.shape}, expected {(n, n)}")
        if self.r.shape != (p, p):
            raise DimensionError(f"r has shape {self.r.shape}, expected {(p, p)}")
        _require_symmetric(self.q, "q")
        _require_symmetric(self.r, "r")
        ok, lam = is_psd(self.q)
        if not ok:
            raise NotPositiveDefiniteError(f"q is not positive semidefinite (min-eig {lam:.3e})", min_eig=lam)
        ok, lam = is_pd(self.r)
        if not ok:
            raise NotPositiveDefiniteError(f"r is not positive definite (min-eig {lam:.3e})", min_eig=lam)
        if self.uncertainty is not None and self.uncertainty.d and self.uncertainty.dim != n:
            raise DimensionError(f"uncertainty directions are {self.uncertainty.dim}x{self.uncertainty.dim}, expected {n}")
        rank = controllability_rank(self.a, self.b)
        if rank < n:
            raise UncontrollableError(f"(a, b) is not controllable (rank {rank} of {n})", rank=rank, dimension=n)


@dataclass(frozen=True)
class GuaranteedSolution:
    p: np.ndarray
    k: np.ndarray
    u_of_p: np.ndarray
    residual_norm: float
    iterations: int
    step_trace: Tuple[float, ...] = field(default=())


# ------------------------------------------------------------------------------
# Decompositions and ranks
# ------------------------------------------------------------------------------
def _require_symmetric(s: np.ndarray, name: str = "matrix") -> None:
    scale = np.linalg.norm(s) if s.size else 0.0
    if scale and np.linalg.norm(s - s.T) > 1e-10 * scale:
        raise NotSymmetricError(f"{name} is not symmetric")


def eig_sym(s) -> Tuple[np.ndarray, np.ndarray]:
    """Return (q, lam) with s = q diag(lam) q', q orthogonal, lam ascending."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if s.shape[0] != s.shape[1]:
        raise DimensionError(f"eig_sym needs a square matrix, got {s.shape}")
    _require_symmetric(s, "eig_sym input")
    lam, q = scipy.linalg.eigh(symmetrize(s))
    return q, lam


def cholesky(f) -> np.ndarray:
    """Lower-triangular L with F = L L'."""
    f = np.atleast_2d(np.asarray(f, dtype=float))
    _require_symmetric(f, "cholesky input")
    ok, lam = is_pd(f)
    if not ok:
        raise NotPositiveDefiniteError(f"cholesky input is not positive definite (min-eig {lam:.3e})", min_eig=lam)
    try:
        return scipy.linalg.cholesky(symmetrize(f), lower=True)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"cholesky pivot failure: {e}", min_eig=lam) from e


def psd_sqrt_factor(f) -> np.ndarray:
    """Rank-revealing factor D (rank x n) with D'D = f for symmetric PSD f."""
    f = np.atleast_2d(np.asarray(f, dtype=float))
    q, lam = eig_sym(f)
    tol = psd_tolerance(f)
    if lam[0] < -tol:
        raise NotPositiveDefiniteError(f"factor input is not positive semidefinite (min-eig {lam[0]:.3e})", min_eig=lam[0])
    keep = lam > tol
    if not np.any(keep):
        return np.zeros((1, f.shape[0]))
    return np.sqrt(lam[keep])[:, None] * q[:, keep].T


def psd_sqrt(f) -> np.ndarray:
    """Symmetric square root f^(1/2)."""
    q, lam = eig_sym(f)
    return (q * np.sqrt(np.clip(lam, 0.0, None))) @ q.T


def _new_directions(w: np.ndarray, tol: float) -> np.ndarray:
    if w.size == 0:
        return w
    u, s, _ = scipy.linalg.svd(w, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return u[:, :0]
    return u[:, s > tol * max(1.0, s[0])]


def controllability_rank(a, b) -> int:
    """Rank of [B AB ... A^(n-1)B], grown one orthonormalized Krylov block at a time.

    Each block only keeps directions not already spanned, so the column count
    never exceeds n even for plants with many inputs or output rows.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[0]
    b = np.asarray(b, dtype=float).reshape(n, -1)
    if b.size == 0 or not np.any(b):
        return 0
    tol = max(n, 10) * np.finfo(float).eps
    a_scaled = a / max(1.0, spectral_norm(a))
    basis = _new_directions(b / spectral_norm(b), tol)
    block = basis
    while block.shape[1] and basis.shape[1] < n:
        w = a_scaled @ block
        scale = max(spectral_norm(w), np.finfo(float).tiny)
        for _ in range(2):
            w = w - basis @ (basis.T @ w)
        block = _new_directions(w / scale, 1e3 * tol)
        basis = np.hstack([basis, block])
    return int(min(basis.shape[1], n))


def observability_rank(a, c) -> int:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    c = np.asarray(c, dtype=float).reshape(-1, a.shape[0])
    return controllability_rank(a.T, c.T)


# ------------------------------------------------------------------------------
# Lyapunov and baseline Riccati
# ------------------------------------------------------------------------------
def solve_lyapunov(a, q) -> np.ndarray:
    """Solve A'X + XA + Q = 0 (Bartels-Stewart via scipy)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if q.shape != a.shape:
        raise DimensionError(f"lyapunov q has shape {q.shape}, expected {a.shape}")
    return symmetrize(scipy.linalg.solve_continuous_lyapunov(a.T, -q))


def are_residual(a, b, q, r, p, u: Optional[np.ndarray] = None) -> np.ndarray:
    res = a.T @ p + p @ a + q - p @ b @ np.linalg.solve(r, b.T @ p)
    if u is not None:
        res = res + u
    return res


def _residual_ok(res: np.ndarray, p: np.ndarray) -> bool:
    return np.linalg.norm(res) <= config.ARE_RESIDUAL_REL * max(1.0, np.linalg.norm(p))


def _hamiltonian_solution(a, b, q, r) -> np.ndarray:
    n = a.shape[0]
    g = b @ np.linalg.solve(r, b.T)
    h = np.block([[a, -g], [-q, -a.T]])

    scale = max(1.0, np.linalg.norm(h, 1))
    eigs = np.linalg.eigvals(h)
    if np.min(np.abs(eigs.real)) <= 1e2 * np.finfo(float).eps * scale * 2 * n:
        raise RiccatiError("Hamiltonian has eigenvalues on the imaginary axis; no stabilizing solution")

    t, z, sdim = scipy.linalg.schur(h, output="real", sort="lhp")
    if sdim != n:
        raise RiccatiError(f"stable invariant subspace has dimension {sdim}, expected {n}")
    u11, u21 = z[:n, :n], z[n:, :n]
    if np.linalg.cond(u11) > 1.0 / np.finfo(float).eps:
        raise RiccatiError("stable subspace basis is singular; (a, b) not stabilizable")
    return symmetrize(np.linalg.solve(u11.T, u21.T).T)


def _newton_kleinman(a, b, q, r, p) -> np.ndarray:
    """Refine a stabilizing P with Newton-Kleinman steps until the residual is met."""
    for it in range(config.NEWTON_MAX_ITER):
        res = are_residual(a, b, q, r, p)
        if _residual_ok(res, p):
            break
        k = np.linalg.solve(r, b.T @ p)
        acl = a - b @ k
        if spectral_abscissa(acl) >= 0:
            logger.debug("newton-kleinman: closed loop lost stability at step %d", it)
            break
        p_next = solve_lyapunov(acl, q + k.T @ r @ k)
        if np.linalg.norm(are_residual(a, b, q, r, p_next)) >= np.linalg.norm(res):
            break
        p = p_next
    return p


def solve_are(a, b=None, q=None, r=None) -> Tuple[np.ndarray, np.ndarray]:
    """Stabilizing solution of A'P + PA + Q - P B R^-1 B' P = 0, and K = R^-1 B' P.

    Accepts either an AreProblem or the four matrices.
    """
    prob = a if isinstance(a, AreProblem) else AreProblem(a, b, q, r)
    return _stabilizing_solution(prob.a, prob.b, prob.q, prob.r)


def _stabilizing_solution(a, b, q, r) -> Tuple[np.ndarray, np.ndarray]:
    p = _hamiltonian_solution(a, b, q, r)
    p = symmetrize(_newton_kleinman(a, b, q, r, p))
    k = np.linalg.solve(r, b.T @ p)

    res = np.linalg.norm(are_residual(a, b, q, r, p))
    abscissa = closed_loop_abscissa(a, b, k)
    logger.debug("solve_are: n=%d residual=%.3e abscissa=%.3e", a.shape[0], res, abscissa)
    if abscissa >= 0:
        raise RiccatiError(f"closed loop not Hurwitz (spectral abscissa {abscissa:.3e})", abscissa=abscissa)
    if not _residual_ok(are_residual(a, b, q, r, p), p):
        raise RiccatiError(f"ARE residual {res:.3e} above tolerance", residual=res)
    return p, k


# ------------------------------------------------------------------------------
# Majorant and guaranteed-cost Riccati
# ------------------------------------------------------------------------------
def build_majorant(p, u_model: UncertaintyModel) -> np.ndarray:
    """U(P) = sum_j wbar_j * Q_j |Lambda_j| Q_j' where Q_j Lambda_j Q_j' = Aj'P + PAj."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    n = p.shape[0]
    out = np.zeros((n, n))
    for j, (d, wb) in enumerate(zip(u_model.directions, u_model.weight_bounds)):
        if d.shape != (n, n):
            raise DimensionError(f"direction {j} has shape {d.shape}, P is {n}x{n}")
        s = symmetrize(d.T @ p + p @ d)
        q_j, lam = eig_sym(s)
        out += wb * (q_j * np.abs(lam)) @ q_j.T
    return symmetrize(out)


def majorant_margin(p, u_model: UncertaintyModel, weights: Sequence[float]) -> float:
    """min-eig(U(P) - dA'P - P dA) at the given weights."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    da = u_model.realize(p.shape[0], weights)
    return min_eig(build_majorant(p, u_model) - da.T @ p - p @ da)


def admissible_weight_samples(
    u_model: UncertaintyModel, count: int = config.WEIGHT_SAMPLES, seed: Optional[int] = None
) -> np.ndarray:
    """Vertex/midpoint grid of the weight box followed by seeded uniform draws."""
    d = u_model.d
    if d == 0:
        return np.zeros((1, 0))
    bounds = np.asarray(u_model.weight_bounds)
    levels = (-1.0, -0.5, 0.0, 0.5, 1.0) if d <= 2 else (-1.0, 0.0, 1.0)
    grid = [np.array(c) * bounds for c in itertools.product(levels, repeat=d)] if d <= 6 else []
    rng = np.random.default_rng(config.current_seed() if seed is None else seed)
    extra = max(0, count - len(grid))
    draws = rng.uniform(-1.0, 1.0, size=(extra, d)) * bounds
    return np.vstack([np.array(grid).reshape(-1, d), draws])


def _solution_from(a, b, q, r, p, u, iterations, trace) -> GuaranteedSolution:
    k = np.linalg.solve(r, b.T @ p)
    res = float(np.linalg.norm(are_residual(a, b, q, r, p, u)))
    return GuaranteedSolution(p=p, k=k, u_of_p=u, residual_norm=res, iterations=iterations, step_trace=tuple(trace))


def solve_guaranteed_are(prob: AreProblem) -> GuaranteedSolution:
    """Solve A'P + PA + Q - P B R^-1 B' P + U(P) = 0 by fixed-point iteration.

    P(0) is the nominal ARE solution; P(k+1) solves the nominal ARE with
    Q + U(P(k)). Once the step criterion holds, iteration continues while the
    steps keep shrinking so the final residual sits well under tolerance.
    """
    a, b, q, r = prob.a, prob.b, prob.q, prob.r
    model = prob.uncertainty or EMPTY_UNCERTAINTY

    p, _ = _stabilizing_solution(a, b, q, r)
    if model.d == 0:
        return _solution_from(a, b, q, r, p, np.zeros_like(p), 0, [])

    trace: list[float] = []
    converged_at: Optional[int] = None
    for it in range(1, config.FIXED_POINT_MAX_ITER + 1):
        u = build_majorant(p, model)
        try:
            p_next, _ = _stabilizing_solution(a, b, q + u, r)
        except RiccatiError as e:
            raise FixedPointDivergence(f"fixed point failed at iteration {it}: {e}", trace, iteration=it) from e

        ok, lam = is_pd(p_next)
        if not ok:
            raise NotPositiveDefiniteError(f"iterate {it} lost positive definiteness (min-eig {lam:.3e})", min_eig=lam, iteration=it)

        step = float(np.linalg.norm(p_next - p))
        scale = max(1.0, float(np.linalg.norm(p)))
        trace.append(step)
        p = p_next
        logger.debug("guaranteed ARE: iteration %d step %.3e", it, step)

        if not np.isfinite(step) or scale > config.DIVERGENCE_NORM:
            raise FixedPointDivergence(f"fixed point diverged at iteration {it}", trace, iteration=it)
        if converged_at is None and step <= config.FIXED_POINT_TOL * scale:
            converged_at = it
        if converged_at is not None and (step <= 1e-15 * scale or (len(trace) > 1 and step >= trace[-2])):
            break
    else:
        if converged_at is None:
            raise FixedPointDivergence(
                f"fixed point did not converge in {config.FIXED_POINT_MAX_ITER} iterations", trace
            )

    u = build_majorant(p, model)
    sol = _solution_from(a, b, q, r, p, u, len(trace), trace)
    logger.info("guaranteed ARE: n=%d converged in %d iterations, residual %.3e", a.shape[0], sol.iterations, sol.residual_norm)
    if not _residual_ok(are_residual(a, b, q, r, p, u), p):
        raise FixedPointDivergence(f"modified ARE residual {sol.residual_norm:.3e} above tolerance", trace)
    return sol


def guaranteed_cost_bound(sol: GuaranteedSolution, x0) -> float:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != sol.p.shape[0]:
        raise DimensionError(f"x0 has length {x0.shape[0]}, expected {sol.p.shape[0]}")
    return float(x0 @ sol.p @ x0)

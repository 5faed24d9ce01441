import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layerlq import config
from layerlq.errors import (
    DimensionError,
    NotPositiveDefiniteError,
    NotSymmetricError,
    RiccatiError,
    UncontrollableError,
)
from layerlq.utils.riccati import (
    AreProblem,
    UncertaintyModel,
    admissible_weight_samples,
    are_residual,
    build_majorant,
    cholesky,
    closed_loop_abscissa,
    controllability_rank,
    eig_sym,
    guaranteed_cost_bound,
    majorant_margin,
    min_eig,
    observability_rank,
    psd_sqrt_factor,
    solve_are,
    solve_guaranteed_are,
    solve_lyapunov,
    spectral_abscissa,
)
from tests.conftest import random_controllable, random_spd


def scalar_problem(bound: float) -> AreProblem:
    model = UncertaintyModel((np.array([[1.0]]),), (bound,))
    return AreProblem([[0.0]], [[1.0]], [[1.0]], [[1.0]], model)


# ------------------------------------------------------------------------------
# Decompositions and ranks
# ------------------------------------------------------------------------------
def test_eig_sym_diagonal():
    q, lam = eig_sym(np.diag([1.0, -2.0]))
    np.testing.assert_array_equal(lam, [-2.0, 1.0])
    np.testing.assert_allclose(np.abs(q), [[0.0, 1.0], [1.0, 0.0]])


def test_eig_sym_identity_and_reconstruction(rng):
    _, lam = eig_sym(np.eye(4))
    np.testing.assert_allclose(lam, 1.0)
    s = rng.standard_normal((5, 5))
    s = s + s.T
    q, lam = eig_sym(s)
    np.testing.assert_allclose(q @ np.diag(lam) @ q.T, s, atol=1e-9)
    np.testing.assert_allclose(q.T @ q, np.eye(5), atol=1e-9)
    assert np.all(np.diff(lam) >= 0)


def test_eig_sym_rejects_nonsymmetric():
    with pytest.raises(NotSymmetricError):
        eig_sym([[1.0, 2.0], [0.0, 1.0]])


def test_cholesky_examples():
    np.testing.assert_allclose(cholesky(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cholesky([[4.0, 2.0], [2.0, 5.0]]), [[2.0, 0.0], [1.0, 2.0]])


def test_cholesky_rejects_singular():
    v = np.array([[1.0], [1.0]])
    with pytest.raises(NotPositiveDefiniteError) as info:
        cholesky(v @ v.T)
    assert "min_eig" in info.value.detail


def test_psd_sqrt_factor_rank_revealing():
    v = np.array([[1.0], [2.0], [0.0]])
    f = v @ v.T
    d = psd_sqrt_factor(f)
    assert d.shape == (1, 3)
    np.testing.assert_allclose(d.T @ d, f, atol=1e-12)


def test_ranks():
    assert controllability_rank([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]]) == 2
    assert controllability_rank(np.eye(3), np.zeros((3, 1))) == 0
    assert controllability_rank(np.diag([1.0, 1.0]), [[1.0], [0.0]]) == 1
    assert observability_rank([[0.0, 1.0], [0.0, 0.0]], [[1.0, 0.0]]) == 2


def test_controllability_rank_matches_exact_rank(rng):
    # integer entries keep the Krylov matrix exact in floating point
    for _ in range(20):
        a = rng.integers(-3, 4, size=(4, 4)).astype(float)
        b = rng.integers(-2, 3, size=(4, 1)).astype(float)
        krylov = np.hstack([np.linalg.matrix_power(a, k) @ b for k in range(4)])
        assert controllability_rank(a, b) == np.linalg.matrix_rank(krylov)


# ------------------------------------------------------------------------------
# Baseline ARE
# ------------------------------------------------------------------------------
def test_scalar_are():
    p, k = solve_are([[0.0]], [[1.0]], [[1.0]], [[1.0]])
    assert abs(p[0, 0] - 1.0) <= 1e-12
    assert abs(k[0, 0] - 1.0) <= 1e-12


def test_stable_plant_zero_cost():
    p, _ = solve_are([[-1.0]], [[1.0]], [[0.0]], [[1.0]])
    assert abs(p[0, 0]) <= 1e-12


def test_are_accepts_problem_object():
    p, k = solve_are(AreProblem([[0.0]], [[1.0]], [[1.0]], [[1.0]]))
    np.testing.assert_allclose(p, [[1.0]])


def test_random_are_residual_and_stability(rng):
    for _ in range(100):
        n = int(rng.integers(1, 9))
        a, b = random_controllable(rng, n, int(rng.integers(1, 3)))
        q, r = np.eye(n), np.eye(b.shape[1])
        p, k = solve_are(a, b, q, r)
        np.testing.assert_allclose(p, p.T, atol=0)
        assert np.linalg.norm(are_residual(a, b, q, r, p)) <= 1e-8 * max(1.0, np.linalg.norm(p))
        assert closed_loop_abscissa(a, b, k) < 0
        np.testing.assert_allclose(k, np.linalg.solve(r, b.T @ p), rtol=1e-10)


def test_are_without_stabilizing_solution():
    # unstable mode the input cannot reach
    with pytest.raises(RiccatiError):
        solve_are(np.diag([1.0, -1.0]), [[0.0], [1.0]], np.eye(2), [[1.0]])


def test_are_problem_validation():
    with pytest.raises(DimensionError):
        AreProblem(np.eye(2), np.ones((3, 1)), np.eye(2), [[1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        AreProblem(np.eye(2), np.ones((2, 1)), -np.eye(2), [[1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        AreProblem(np.eye(2), np.ones((2, 1)), np.eye(2), [[0.0]])
    with pytest.raises(NotSymmetricError):
        AreProblem(np.eye(2), np.ones((2, 1)), [[1.0, 1.0], [0.0, 1.0]], [[1.0]])


def test_are_problem_requires_controllable_pair():
    # stable but unreachable second mode: stabilizable, still rejected
    with pytest.raises(UncontrollableError) as info:
        AreProblem(np.diag([-1.0, -2.0]), [[1.0], [0.0]], np.eye(2), [[1.0]])
    assert info.value.detail == {"rank": 1, "dimension": 2}
    assert info.value.exit_code == 4
    with pytest.raises(UncontrollableError):
        solve_are([[-1.0]], [[0.0]], [[1.0]], [[1.0]])
    AreProblem(np.diag([-1.0, -2.0]), [[1.0], [1.0]], np.eye(2), [[1.0]])


def test_lyapunov_solution(rng):
    a = -random_spd(rng, 4)
    x = solve_lyapunov(a, np.eye(4))
    np.testing.assert_allclose(a.T @ x + x @ a, -np.eye(4), atol=1e-10)


# ------------------------------------------------------------------------------
# Majorant
# ------------------------------------------------------------------------------
def test_majorant_of_psd_term_is_exact(rng):
    p = random_spd(rng, 3)
    model = UncertaintyModel((np.eye(3),), (1.0,))
    np.testing.assert_allclose(build_majorant(p, model), 2 * p, atol=1e-10)


def test_majorant_takes_absolute_eigenvalues():
    # with P = I and direction diag(1/2, -1), S = diag(1, -2)
    model = UncertaintyModel((np.diag([0.5, -1.0]),), (1.0,))
    np.testing.assert_allclose(build_majorant(np.eye(2), model), np.diag([1.0, 2.0]), atol=1e-12)


def test_majorant_dimension_mismatch():
    with pytest.raises(DimensionError):
        build_majorant(np.eye(3), UncertaintyModel((np.eye(2),), (1.0,)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_majorant_dominates_weight_grid(seed):
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal((3, 3))
    p = random_spd(rng, 3)
    model = UncertaintyModel((direction,), (2.0,))
    for w in (-2.0, -1.0, 0.0, 1.0, 2.0):
        assert majorant_margin(p, model, [w]) >= -1e-10


def test_weight_samples_are_admissible():
    model = UncertaintyModel((np.eye(2), np.ones((2, 2))), (1.0, 0.5))
    samples = admissible_weight_samples(model, 60, seed=3)
    assert samples.shape == (60, 2)
    assert np.all(np.abs(samples) <= np.array([1.0, 0.5]) + 1e-15)
    # grid corners come first
    assert [-1.0, -0.5] in samples.tolist()


def test_realized_weights_must_be_admissible():
    with pytest.raises(DimensionError):
        UncertaintyModel((np.eye(2),), (1.0,), (1.5,))


# ------------------------------------------------------------------------------
# Guaranteed-cost ARE
# ------------------------------------------------------------------------------
def test_no_directions_reduces_to_baseline(rng):
    a, b = random_controllable(rng, 4)
    sol = solve_guaranteed_are(AreProblem(a, b, np.eye(4), np.eye(2), UncertaintyModel()))
    p, k = solve_are(a, b, np.eye(4), np.eye(2))
    np.testing.assert_array_equal(sol.p, p)
    np.testing.assert_array_equal(sol.k, k)
    assert sol.iterations == 0


@pytest.mark.parametrize("bound, expected", [(1.0, 1.0 + math.sqrt(2.0)), (0.5, (1.0 + math.sqrt(5.0)) / 2)])
def test_scalar_guaranteed_are(bound, expected):
    # U(p) = 2 * bound * p, so p^2 - 2 bound p - 1 = 0
    sol = solve_guaranteed_are(scalar_problem(bound))
    assert abs(sol.p[0, 0] - expected) <= 1e-10
    assert abs(guaranteed_cost_bound(sol, [1.0]) - expected) <= 1e-10
    assert sol.residual_norm <= 1e-8 * max(1.0, expected)


def test_guaranteed_solution_invariants(rng):
    for _ in range(10):
        n = int(rng.integers(2, 6))
        a, b = random_controllable(rng, n)
        direction = rng.standard_normal((n, n))
        direction /= np.linalg.norm(direction, 2)
        model = UncertaintyModel((direction,), (0.3,))
        q, r = np.eye(n), np.eye(2)
        sol = solve_guaranteed_are(AreProblem(a, b, q, r, model))
        assert min_eig(sol.p) > 0
        assert min_eig(sol.u_of_p) >= -1e-10
        assert np.linalg.norm(are_residual(a, b, q, r, sol.p, sol.u_of_p)) <= 1e-8 * max(1.0, np.linalg.norm(sol.p))
        np.testing.assert_allclose(sol.k, np.linalg.solve(r, b.T @ sol.p), rtol=1e-10, atol=1e-12)

        p_nominal, _ = solve_are(a, b, q, r)
        assert min_eig(sol.p - p_nominal) >= -1e-9

        for w in admissible_weight_samples(model, 50, seed=7):
            assert majorant_margin(sol.p, model, w) >= -1e-10
            assert closed_loop_abscissa(a + model.realize(n, w), b, sol.k) < 0


def test_florentine_family_layer():
    from layerlq.services.scenarios import florentine_scenario

    family = florentine_scenario(1).layers[0]
    sol = solve_guaranteed_are(AreProblem(family.a, family.b, np.eye(4), np.eye(1), family.uncertainty))
    assert sol.iterations < config.FIXED_POINT_MAX_ITER
    assert min_eig(sol.p) > 0
    # the realized flip turns the -1 social-political tie into +1
    realized = family.a + family.realized_delta()
    assert realized[0, 1] == realized[1, 0] == 1.0
    assert spectral_abscissa(realized) > 0
    for w in np.linspace(-2.0, 2.0, 21):
        assert closed_loop_abscissa(family.a + family.realized_delta([w]), family.b, sol.k) < 0


def test_cost_bound_examples():
    sol = solve_guaranteed_are(scalar_problem(1.0))
    assert guaranteed_cost_bound(sol, [0.0]) == 0.0
    from layerlq.utils.riccati import GuaranteedSolution

    identity = GuaranteedSolution(np.eye(2), np.zeros((1, 2)), np.zeros((2, 2)), 0.0, 0)
    assert guaranteed_cost_bound(identity, [3.0, 4.0]) == pytest.approx(25.0)
    with pytest.raises(DimensionError):
        guaranteed_cost_bound(identity, [1.0])

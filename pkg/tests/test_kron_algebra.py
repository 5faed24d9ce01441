import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from layerlq.errors import DimensionError
from layerlq.utils.graphs import Graph, laplacian_of
from layerlq.utils.kron_algebra import identities, kron, kron_eigvalsh, kron_many, kron_sum, kron_sum_many, slot_product

TRIALS = 100


def rel_err(x, y) -> float:
    return np.linalg.norm(x - y) / max(1.0, np.linalg.norm(y))


def square(rng, n):
    return rng.standard_normal((n, n))


def invertible(rng, n):
    return rng.standard_normal((n, n)) + 3.0 * np.eye(n)


def spd(rng, n):
    x = rng.standard_normal((n, n))
    return x @ x.T + 0.1 * np.eye(n)


# ------------------------------------------------------------------------------
# Worked examples
# ------------------------------------------------------------------------------
def test_identity_kron_identity():
    np.testing.assert_array_equal(kron(np.eye(2), np.eye(3)), np.eye(6))


def test_row_kron_column_block_layout():
    np.testing.assert_array_equal(kron([[1, 2]], [[3], [4]]), [[3, 6], [4, 8]])


def test_scalar_kron_sum():
    assert kron_sum([[2.0]], [[-0.5]]).tolist() == [[1.5]]
    assert kron_sum_many([[[1.0]], [[2.0]], [[4.0]]]).tolist() == [[7.0]]


def test_kron_many_identities():
    np.testing.assert_array_equal(kron_many(identities([2, 2, 2])), np.eye(8))


def test_kron_sum_eigenvalues_add(rng):
    a = spd(rng, 3)
    b = spd(rng, 2)
    expected = np.sort(np.add.outer(np.linalg.eigvalsh(a), np.linalg.eigvalsh(b)).ravel())
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(kron_sum(a, b))), expected, atol=1e-8)


def test_kron_eigenvalues_multiply(rng):
    a, b = spd(rng, 3), rng.standard_normal((2, 2))
    b = b + b.T
    c = spd(rng, 2)
    np.testing.assert_allclose(kron_eigvalsh([a, b, c]), np.linalg.eigvalsh(kron_many([a, b, c])), atol=1e-8)
    with pytest.raises(DimensionError):
        kron_eigvalsh([])


def test_path_laplacian_kron_sum_is_cycle_laplacian():
    p2 = laplacian_of(Graph.undirected_from_pairs(2, [(0, 1, 1.0)]))
    c4 = laplacian_of(Graph.undirected_from_pairs(4, [(0, 1, 1.0), (1, 3, 1.0), (3, 2, 1.0), (2, 0, 1.0)]))
    np.testing.assert_array_equal(kron_sum(p2, p2), c4)


def test_slot_product_examples(rng):
    d = square(rng, 2)
    np.testing.assert_array_equal(slot_product([np.eye(5)], 1, d), d)
    m1, m2, p1 = spd(rng, 2), spd(rng, 3), spd(rng, 2)
    np.testing.assert_array_equal(slot_product([m1, m2], 1, p1), np.kron(p1, m2))


@pytest.mark.parametrize("k", [0, 3])
def test_slot_product_out_of_range(k):
    with pytest.raises(DimensionError):
        slot_product([np.eye(2), np.eye(2)], k, np.eye(2))


def test_errors():
    with pytest.raises(DimensionError):
        kron_many([])
    with pytest.raises(DimensionError):
        kron_sum_many([])
    with pytest.raises(DimensionError):
        kron_sum(np.ones((2, 3)), np.eye(2))
    with pytest.raises(DimensionError):
        kron([[np.inf]], [[1.0]])


# ------------------------------------------------------------------------------
# Identity suite
# ------------------------------------------------------------------------------
@settings(max_examples=TRIALS, deadline=None)
@given(
    a=arrays(np.float64, (2, 3), elements=st.floats(-5, 5)),
    b=arrays(np.float64, (3, 2), elements=st.floats(-5, 5)),
    c=arrays(np.float64, (3, 2), elements=st.floats(-5, 5)),
    d=arrays(np.float64, (2, 3), elements=st.floats(-5, 5)),
)
def test_mixed_product(a, b, c, d):
    assert rel_err(kron(a, b) @ kron(c, d), kron(a @ c, b @ d)) <= 1e-10


def test_distributivity_and_associativity(rng):
    for _ in range(TRIALS):
        a, b, c = square(rng, 2), square(rng, 3), square(rng, 3)
        assert rel_err(kron(a, b + c), kron(a, b) + kron(a, c)) <= 1e-10
        assert rel_err(kron(kron(a, b), c), kron(a, kron(b, c))) <= 1e-10


def test_transpose_and_inverse_distribute(rng):
    for _ in range(TRIALS):
        dims = rng.integers(1, 4, size=rng.integers(1, 4))
        rs = [rng.standard_normal((n, n + 1)) for n in dims]
        assert rel_err(kron_many(rs).T, kron_many([r.T for r in rs])) <= 1e-10
        ts = [invertible(rng, n) for n in dims]
        assert rel_err(np.linalg.inv(kron_many(ts)), kron_many([np.linalg.inv(t) for t in ts])) <= 1e-9


def _random_slots(rng):
    ell = int(rng.integers(1, 4))
    dims = rng.integers(1, 4, size=ell)
    k = int(rng.integers(1, ell + 1))
    return dims, k


def test_slot_product_sum(rng):
    for _ in range(TRIALS):
        dims, k = _random_slots(rng)
        x = [square(rng, n) for n in dims]
        y, z = square(rng, dims[k - 1]), square(rng, dims[k - 1])
        assert rel_err(slot_product(x, k, y) + slot_product(x, k, z), slot_product(x, k, y + z)) <= 1e-10


def test_slot_product_product(rng):
    for _ in range(TRIALS):
        dims, k = _random_slots(rng)
        x = [square(rng, n) for n in dims]
        y = [square(rng, n) for n in dims]
        xv, yv = square(rng, dims[k - 1]), square(rng, dims[k - 1])
        xy = [xi @ yi for xi, yi in zip(x, y)]
        assert rel_err(slot_product(x, k, xv) @ slot_product(y, k, yv), slot_product(xy, k, xv @ yv)) <= 1e-10


def test_slot_product_transpose_and_inverse(rng):
    for _ in range(TRIALS):
        dims, k = _random_slots(rng)
        x = [invertible(rng, n) for n in dims]
        y = invertible(rng, dims[k - 1])
        assert rel_err(slot_product(x, k, y).T, slot_product([xi.T for xi in x], k, y.T)) <= 1e-10
        inv = slot_product([np.linalg.inv(xi) for xi in x], k, np.linalg.inv(y))
        assert rel_err(np.linalg.inv(slot_product(x, k, y)), inv) <= 1e-9


def test_spd_preserved(rng):
    for _ in range(TRIALS):
        a, b = spd(rng, int(rng.integers(1, 4))), spd(rng, int(rng.integers(1, 4)))
        assert np.linalg.eigvalsh(kron(a, b)).min() > 0

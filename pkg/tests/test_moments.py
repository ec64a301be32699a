"""Enumeration and constant tests for the product-moment index sets."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from homent.moments import (
    MAX_EXPONENT,
    MomentSystem,
    MultiIndex,
    constant_c,
    enumerate_moment_indices,
    full_system,
)

# Independent oracle: filter the full exponent grid instead of composing.
def _brute_force(n: int, order: int) -> list[tuple[int, ...]]:
    cap = MAX_EXPONENT[order]
    return [
        t
        for t in itertools.product(range(cap + 1), repeat=n)
        if sum(t) == order
    ]


# (n, order) -> count, frozen from the brute-force oracle above.
EXPECTED_COUNTS = {
    (2, 2): 3, (2, 3): 2, (2, 4): 3,
    (3, 2): 6, (3, 3): 7, (3, 4): 12,
    (4, 2): 10, (4, 3): 16, (4, 4): 31,
    (5, 2): 15, (5, 3): 30, (5, 4): 65,
    (6, 2): 21, (6, 3): 50, (6, 4): 120,
}


@pytest.mark.parametrize("n,order", sorted(EXPECTED_COUNTS))
def test_enumeration_matches_brute_force(n, order):
    got = [ix.exponents for ix in enumerate_moment_indices(n, order)]
    oracle = _brute_force(n, order)
    assert sorted(got) == sorted(oracle)
    assert len(got) == EXPECTED_COUNTS[(n, order)]


@pytest.mark.parametrize("n,order", sorted(EXPECTED_COUNTS))
def test_enumeration_sorted_and_unique(n, order):
    got = [ix.exponents for ix in enumerate_moment_indices(n, order)]
    assert got == sorted(got)
    assert len(set(got)) == len(got)


def test_full_system_sizes():
    assert full_system(2).size == 8
    assert full_system(3).size == 25
    assert full_system(4).size == 57
    # Second-order counts follow n(n+1)/2 for all supported n.
    for n in range(1, 7):
        assert len(enumerate_moment_indices(n, 2)) == n * (n + 1) // 2


def test_constants():
    assert constant_c((2, 0)) == 1
    assert constant_c((1, 1)) == 0
    assert constant_c((2, 2)) == 1
    assert constant_c((2, 1, 1)) == 0
    assert constant_c((3, 1)) == 0
    assert constant_c((2,)) == 1
    # Within the admissible sets, c = 1 exactly for pure-variance rows and
    # paired second-moment rows (all exponents even).
    for n in (2, 3, 4):
        for ix in full_system(n):
            expected = 1 if all(e % 2 == 0 for e in ix.exponents) else 0
            assert ix.constant == expected


def test_order_grouping_and_layout():
    sys4 = full_system(4)
    orders = sys4.index_orders
    assert (np.diff(orders) >= 0).all()
    assert list(orders).count(2) == 10
    assert list(orders).count(3) == 16
    assert list(orders).count(4) == 31
    # Row lookup is the inverse of the layout.
    for k, ix in enumerate(sys4):
        assert sys4.row_of(ix.exponents) == k


def test_n1_degenerate_sets():
    assert [ix.exponents for ix in enumerate_moment_indices(1, 2)] == [(2,)]
    assert enumerate_moment_indices(1, 3) == ()
    assert enumerate_moment_indices(1, 4) == ()
    sys1 = MomentSystem(1, (2, 3, 4))
    assert sys1.size == 1
    assert sys1.indices[0].exponents == (2,)


def test_validation_errors():
    with pytest.raises(ValueError):
        MultiIndex((4, 0))  # exponent above cap for order 4
    with pytest.raises(ValueError):
        MultiIndex((3, 0))  # order-3 exponents are capped at 2
    with pytest.raises(ValueError):
        MultiIndex((1, 0))  # order 1 unsupported
    with pytest.raises(ValueError):
        MultiIndex((-1, 3))
    with pytest.raises(ValueError):
        enumerate_moment_indices(0, 2)
    with pytest.raises(ValueError):
        enumerate_moment_indices(13, 2)
    with pytest.raises(ValueError):
        enumerate_moment_indices(3, 5)
    with pytest.raises(KeyError):
        full_system(2).row_of((2, 2, 0))


def test_random_subsets_are_consistent(seeded_rng=np.random.default_rng(427)):
    # Property: every enumerated index validates, has the requested order,
    # and respects the exponent cap; spot-check random (n, order) pairs.
    for _ in range(25):
        n = int(seeded_rng.integers(1, 8))
        order = int(seeded_rng.choice([2, 3, 4]))
        for ix in enumerate_moment_indices(n, order):
            assert ix.order == order
            assert len(ix) == n
            assert max(ix.exponents) <= MAX_EXPONENT[order]

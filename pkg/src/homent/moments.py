"""Multi-index bookkeeping for second- to fourth-order product-moment conditions.

A moment condition on an n-dimensional innovation vector e is described by a
multi-index m = (m_1, ..., m_n): the condition states that the sample average
of prod_i e_i^{m_i} should equal a target constant.  The constant is zero
whenever some exponent equals one (the product then contains a lone factor
whose expectation vanishes for independent zero-mean shocks) and one otherwise
(products of unit second moments).

Index sets are capped so that only moments identified by mean-zero,
unit-variance, mutually independent shocks enter:

* order 2: exponents in {0, 1, 2}, summing to 2  (variances / covariances)
* order 3: exponents in {0, 1, 2}, summing to 3  (coskewness)
* order 4: exponents in {0, 1, 2, 3}, summing to 4  (cokurtosis)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

SUPPORTED_ORDERS = (2, 3, 4)

# Largest exponent allowed for a single coordinate, per total order.
MAX_EXPONENT = {2: 2, 3: 2, 4: 3}

MAX_DIMENSION = 12


def constant_c(exponents: Sequence[int]) -> int:
    """Target constant of the product-moment condition with the given exponents."""
    return 0 if 1 in tuple(exponents) else 1


@dataclass(frozen=True)
class MultiIndex:
    """Exponent vector of one product-moment condition."""

    exponents: tuple[int, ...]

    def __post_init__(self) -> None:
        exps = tuple(int(e) for e in self.exponents)
        object.__setattr__(self, "exponents", exps)
        if len(exps) < 1:
            raise ValueError("multi-index needs at least one coordinate")
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in multi-index {exps}")
        order = sum(exps)
        if order not in SUPPORTED_ORDERS:
            raise ValueError(
                f"multi-index {exps} has order {order}; supported orders are {SUPPORTED_ORDERS}"
            )
        if max(exps) > MAX_EXPONENT[order]:
            raise ValueError(
                f"multi-index {exps} exceeds the exponent cap "
                f"{MAX_EXPONENT[order]} for order {order}"
            )

    @property
    def order(self) -> int:
        return sum(self.exponents)

    @property
    def constant(self) -> int:
        return constant_c(self.exponents)

    def __len__(self) -> int:
        return len(self.exponents)


def _bounded_compositions(total: int, parts: int, cap: int) -> Iterator[tuple[int, ...]]:
    """Tuples of length `parts` with entries in [0, cap] summing to `total`, ascending."""
    if parts == 1:
        if 0 <= total <= cap:
            yield (total,)
        return
    for head in range(min(cap, total) + 1):
        for tail in _bounded_compositions(total - head, parts - 1, cap):
            yield (head,) + tail


def enumerate_moment_indices(n: int, order: int) -> tuple[MultiIndex, ...]:
    """All admissible multi-indices of the given order, in lexicographic order.

    The set can be empty (e.g. n = 1 admits no order-3 index because single
    exponents are capped at 2).
    """
    if not 1 <= n <= MAX_DIMENSION:
        raise ValueError(f"dimension n={n} outside supported range [1, {MAX_DIMENSION}]")
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"order {order} unsupported; choose from {SUPPORTED_ORDERS}")
    cap = MAX_EXPONENT[order]
    return tuple(MultiIndex(t) for t in _bounded_compositions(order, n, cap))


class MomentSystem:
    """Ordered collection of product-moment conditions for an n-dimensional system.

    Conditions are grouped by ascending order and sorted lexicographically
    within each order, giving a deterministic row layout shared by moment
    vectors, Jacobians and covariance matrices.
    """

    def __init__(self, n: int, orders: Iterable[int] = SUPPORTED_ORDERS):
        orders = tuple(sorted(set(int(o) for o in orders)))
        if not orders:
            raise ValueError("moment system needs at least one order")
        for o in orders:
            if o not in SUPPORTED_ORDERS:
                raise ValueError(f"order {o} unsupported; choose from {SUPPORTED_ORDERS}")
        indices: list[MultiIndex] = []
        for o in orders:
            indices.extend(enumerate_moment_indices(n, o))
        if not indices:
            raise ValueError(f"moment system for n={n}, orders={orders} is empty")
        self.n = int(n)
        self.orders = orders
        self.indices: tuple[MultiIndex, ...] = tuple(indices)
        # Dense views used by the numerical layer.
        self.exponent_matrix = np.array([ix.exponents for ix in indices], dtype=np.int64)
        self.constants = np.array([ix.constant for ix in indices], dtype=np.float64)
        self.index_orders = np.array([ix.order for ix in indices], dtype=np.int64)
        self._row_of = {ix.exponents: k for k, ix in enumerate(indices)}

    @property
    def size(self) -> int:
        """Number of moment conditions K."""
        return len(self.indices)

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.indices)

    def row_of(self, exponents: Sequence[int]) -> int:
        """Row position of the condition with the given exponents."""
        key = tuple(int(e) for e in exponents)
        try:
            return self._row_of[key]
        except KeyError:
            raise KeyError(f"multi-index {key} not part of this moment system") from None

    def __repr__(self) -> str:
        return f"MomentSystem(n={self.n}, orders={self.orders}, size={self.size})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MomentSystem):
            return NotImplemented
        return self.n == other.n and self.indices == other.indices

    def __hash__(self) -> int:
        return hash((self.n, self.indices))


def full_system(n: int) -> MomentSystem:
    """Moment system using every admissible condition of orders 2, 3 and 4."""
    return MomentSystem(n, SUPPORTED_ORDERS)

"""Bounded linear queries over the element domain.

A linear query is the per-element function; its value on a sample
tuple is the mean over positions, and its value on a distribution is
the expectation under the element marginal. Values are computed from
element counts so they are invariant under permutations of the tuple.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dists import FiniteDist
from .errors import DomainMismatchError, InvalidDistributionError


@dataclass(frozen=True, eq=False)
class LinearQuery:
    """A per-element function bounded by `delta_bound` in absolute value."""

    domain: tuple
    values: tuple
    delta_bound: float
    label: str = ""

    def __post_init__(self):
        domain = tuple(self.domain)
        values = tuple(float(v) for v in self.values)
        if len(domain) != len(values):
            raise InvalidDistributionError(
                f"{len(domain)} elements but {len(values)} query values"
            )
        if self.delta_bound <= 0:
            raise InvalidDistributionError(f"value bound must be positive, got {self.delta_bound}")
        worst = max(abs(v) for v in values)
        if worst > self.delta_bound + 1e-12:
            raise InvalidDistributionError(
                f"query value {worst} exceeds the bound {self.delta_bound}"
            )
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_index", {x: i for i, x in enumerate(domain)})

    @classmethod
    def from_mapping(cls, mapping: Mapping, delta_bound: float, label: str = "") -> "LinearQuery":
        domain = tuple(mapping)
        return cls(domain, tuple(mapping[x] for x in domain), delta_bound, label)

    @classmethod
    def indicator(cls, domain: Sequence, element, delta_bound: float, label: str = "") -> "LinearQuery":
        """`delta_bound` on one element, zero elsewhere."""
        domain = tuple(domain)
        values = tuple(delta_bound if x == element else 0.0 for x in domain)
        return cls(domain, values, delta_bound, label or f"ind:{element}")

    def value(self, element) -> float:
        idx = self._index.get(element)
        if idx is None:
            raise DomainMismatchError(f"element {element!r} not in query domain")
        return self.values[idx]

    def sample_value(self, sample: tuple) -> float:
        """Mean of the query over the positions of a sample tuple.

        Accumulates by element count in domain order, so permutations
        of the tuple produce the identical float.
        """
        counts = Counter(sample)
        total = 0.0
        for element, count in sorted(
            counts.items(), key=lambda kv: self._index.get(kv[0], -1)
        ):
            total += count * self.value(element)
        return total / len(sample)

    def population_value(self, element_marginal: FiniteDist) -> float:
        if element_marginal.outcomes != self.domain:
            raise DomainMismatchError("query domain does not match the element marginal")
        return float(np.dot(element_marginal.probs, self.values))

    def negate(self) -> "LinearQuery":
        return LinearQuery(
            self.domain,
            tuple(-v for v in self.values),
            self.delta_bound,
            f"-{self.label}" if self.label else "-q",
        )


def query_values(query: LinearQuery, target) -> float:
    """Value of a query on a sample tuple, element marginal, or world."""
    if isinstance(target, (tuple, list)):
        return query.sample_value(tuple(target))
    if isinstance(target, FiniteDist):
        return query.population_value(target)
    element_marginal = getattr(target, "element_marginal", None)
    if callable(element_marginal):
        return query.population_value(element_marginal())
    raise DomainMismatchError(f"cannot evaluate a query on {type(target).__name__}")

"""Exact arithmetic over finite probability distributions.

Distributions are dense weight vectors over a fixed, ordered outcome
tuple; all distances and divergences are computed as closed-form sums
over outcomes, never estimated. Outcomes are opaque hashable
identifiers whose order is frozen at construction so that iteration,
serialization, and witness reporting are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping

import numpy as np

from .errors import DomainMismatchError, InvalidDistributionError

#: Absolute tolerance for "weights sum to one" validation.
WEIGHT_TOL = 1e-9

Outcome = Hashable


def _validate_weights(probs: np.ndarray, what: str) -> None:
    if probs.ndim == 0 or probs.size == 0:
        raise InvalidDistributionError(f"{what} must have at least one outcome")
    if np.any(probs < 0):
        worst = float(probs.min())
        raise InvalidDistributionError(f"{what} has negative weight {worst}")
    total = float(probs.sum())
    if abs(total - 1.0) > WEIGHT_TOL:
        raise InvalidDistributionError(f"{what} weights sum to {total}, not 1")


@dataclass(frozen=True, eq=False)
class FiniteDist:
    """A probability distribution over a finite, ordered outcome set.

    `probs[i]` is the weight of `outcomes[i]`. The weight vector is
    copied and frozen; instances are safe to share across threads.
    """

    outcomes: tuple
    probs: np.ndarray

    def __post_init__(self):
        outcomes = tuple(self.outcomes)
        probs = np.array(self.probs, dtype=float)
        if len(outcomes) != probs.shape[-1] or probs.ndim != 1:
            raise InvalidDistributionError(
                f"{len(outcomes)} outcomes but weight vector of shape {probs.shape}"
            )
        if len(set(outcomes)) != len(outcomes):
            raise InvalidDistributionError("outcome identifiers are not unique")
        _validate_weights(probs, "distribution")
        probs.setflags(write=False)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_index", {o: i for i, o in enumerate(outcomes)})

    @classmethod
    def from_mapping(cls, weights: Mapping[Outcome, float]) -> "FiniteDist":
        outcomes = tuple(weights)
        return cls(outcomes, np.array([weights[o] for o in outcomes], dtype=float))

    @classmethod
    def point_mass(cls, outcome: Outcome, outcomes: Iterable[Outcome] | None = None) -> "FiniteDist":
        outs = tuple(outcomes) if outcomes is not None else (outcome,)
        probs = np.zeros(len(outs))
        try:
            probs[outs.index(outcome)] = 1.0
        except ValueError:
            raise DomainMismatchError(f"point-mass outcome {outcome!r} not in outcome set")
        return cls(outs, probs)

    @classmethod
    def uniform(cls, outcomes: Iterable[Outcome]) -> "FiniteDist":
        outs = tuple(outcomes)
        return cls(outs, np.full(len(outs), 1.0 / len(outs)))

    def prob(self, outcome: Outcome) -> float:
        idx = self._index.get(outcome)
        if idx is None:
            raise DomainMismatchError(f"outcome {outcome!r} not in outcome set")
        return float(self.probs[idx])

    def index_of(self, outcome: Outcome) -> int:
        idx = self._index.get(outcome)
        if idx is None:
            raise DomainMismatchError(f"outcome {outcome!r} not in outcome set")
        return idx

    def mass(self, subset: Iterable[Outcome]) -> float:
        """Total weight of a subset of outcomes."""
        return float(sum(self.prob(o) for o in subset))

    def support(self) -> tuple:
        """Outcomes with strictly positive weight, in canonical order."""
        return tuple(o for o, p in zip(self.outcomes, self.probs) if p > 0)

    def as_mapping(self) -> dict:
        return {o: float(p) for o, p in zip(self.outcomes, self.probs)}

    def sample(self, rng: np.random.Generator) -> Outcome:
        """Draw one outcome; used only by Monte Carlo harnesses."""
        return self.outcomes[int(rng.choice(len(self.outcomes), p=self.probs))]


@dataclass(frozen=True, eq=False)
class JointDist:
    """A distribution over the product of two finite outcome sets.

    `weights[i, j]` is the probability of `(left[i], right[j])`. Both
    marginals are themselves valid distributions by construction.
    """

    left: tuple
    right: tuple
    weights: np.ndarray

    def __post_init__(self):
        left = tuple(self.left)
        right = tuple(self.right)
        weights = np.array(self.weights, dtype=float)
        if weights.shape != (len(left), len(right)):
            raise InvalidDistributionError(
                f"joint weight matrix of shape {weights.shape} does not match "
                f"axes of sizes {len(left)} x {len(right)}"
            )
        if len(set(left)) != len(left) or len(set(right)) != len(right):
            raise InvalidDistributionError("joint axis identifiers are not unique")
        _validate_weights(weights.ravel(), "joint distribution")
        weights.setflags(write=False)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def outer(cls, p: FiniteDist, q: FiniteDist) -> "JointDist":
        """Product distribution with marginals `p` and `q`."""
        return cls(p.outcomes, q.outcomes, np.outer(p.probs, q.probs))

    def left_marginal(self) -> FiniteDist:
        return FiniteDist(self.left, self.weights.sum(axis=1))

    def right_marginal(self) -> FiniteDist:
        return FiniteDist(self.right, self.weights.sum(axis=0))

    def prob(self, left_outcome: Outcome, right_outcome: Outcome) -> float:
        i = self.left.index(left_outcome)
        j = self.right.index(right_outcome)
        return float(self.weights[i, j])

    def flatten(self) -> FiniteDist:
        """The same distribution over explicit `(left, right)` pairs."""
        pairs = tuple((a, b) for a in self.left for b in self.right)
        return FiniteDist(pairs, self.weights.ravel())


def _aligned(p, q) -> tuple[np.ndarray, np.ndarray]:
    """Weight arrays of two distributions over the same outcome space."""
    if isinstance(p, FiniteDist) and isinstance(q, FiniteDist):
        if p.outcomes != q.outcomes:
            raise DomainMismatchError("distributions are over different outcome sets")
        return p.probs, q.probs
    if isinstance(p, JointDist) and isinstance(q, JointDist):
        if p.left != q.left or p.right != q.right:
            raise DomainMismatchError("joint distributions are over different outcome sets")
        return p.weights.ravel(), q.weights.ravel()
    raise DomainMismatchError(
        f"cannot compare {type(p).__name__} with {type(q).__name__}"
    )


def statistical_distance(p, q) -> float:
    """Total variation distance: half the L1 gap between weight vectors.

    Equals the maximum over outcome subsets B of p(B) - q(B).
    """
    a, b = _aligned(p, q)
    return float(np.abs(a - b).sum()) / 2.0


def min_delta_for_eps(p, q, eps: float) -> float:
    """Smallest slack d such that p(B) <= e^eps * q(B) + d for every subset B.

    The worst subset is exactly the set of outcomes with positive excess
    p(r) - e^eps * q(r), so the minimum is that excess summed.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    a, b = _aligned(p, q)
    excess = a - math.exp(eps) * b
    return float(excess[excess > 0].sum())


def indistinguishability_delta(p, q, eps: float) -> float:
    """Symmetric slack: the larger of the two one-sided excesses."""
    return max(min_delta_for_eps(p, q, eps), min_delta_for_eps(q, p, eps))


def maximal_leakage(joint: JointDist) -> float:
    """Natural-log leakage of the channel defined by a joint distribution.

    Computed as log of the sum over right outcomes of the largest
    conditional probability across left outcomes with positive marginal
    mass.
    """
    left_marg = joint.weights.sum(axis=1)
    mask = left_marg > 0
    if not mask.any():
        raise InvalidDistributionError("joint distribution has no positive-mass left outcome")
    conditional = joint.weights[mask] / left_marg[mask, None]
    total = float(conditional.max(axis=0).sum())
    return max(0.0, math.log(total))


def pushforward(p: FiniteDist, kernel: Mapping[Outcome, FiniteDist]) -> FiniteDist:
    """Push `p` through a stochastic kernel, yielding the output mixture.

    The kernel must provide a row for every positive-mass outcome of
    `p`, and all rows must share one output outcome set.
    """
    out_outcomes = None
    acc = None
    for outcome, weight in zip(p.outcomes, p.probs):
        if weight == 0:
            continue
        row = kernel.get(outcome) if hasattr(kernel, "get") else None
        if row is None:
            raise DomainMismatchError(f"kernel has no row for positive-mass outcome {outcome!r}")
        if out_outcomes is None:
            out_outcomes = row.outcomes
            acc = np.zeros(len(out_outcomes))
        elif row.outcomes != out_outcomes:
            raise DomainMismatchError("kernel rows do not share one output outcome set")
        acc += weight * row.probs
    if acc is None:
        raise InvalidDistributionError("input distribution has no positive-mass outcome")
    return FiniteDist(out_outcomes, acc)

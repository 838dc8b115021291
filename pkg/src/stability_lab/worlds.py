"""Finite worlds and the full induced-distribution calculus.

A world bundles a finite element domain, a prior over ordered sample
tuples of size n, and a mechanism kernel mapping each tuple to a
distribution over responses. From these two base distributions the
`induce` operation derives, by exact enumeration, every distribution
the rest of the library consumes: the set-level joint/product/posterior
family and the element-level family obtained by drawing one position
of the sample tuple uniformly at random.

The element-level posterior given a response is deliberately computed
by averaging set-level posteriors (its defining formula) rather than by
renormalizing the element-level joint, so that `bayes_check` measures a
real consistency residual instead of an identity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .dists import FiniteDist, JointDist
from .errors import (
    BudgetExceededError,
    DomainMismatchError,
    InvalidDistributionError,
    UnsupportedWorldError,
)

#: Default cap on the number of sample tuples enumerated exactly.
DEFAULT_TUPLE_BUDGET = 1 << 20
#: Default cap on the number of (tuple, response) joint cells materialized.
DEFAULT_CELL_BUDGET = 1 << 24


@dataclass(frozen=True)
class Domain:
    """The finite set of sample elements, in canonical order."""

    elements: tuple

    def __post_init__(self):
        elements = tuple(self.elements)
        if not elements:
            raise InvalidDistributionError("domain must be non-empty")
        if len(set(elements)) != len(elements):
            raise InvalidDistributionError("domain elements are not unique")
        object.__setattr__(self, "elements", elements)

    def __len__(self) -> int:
        return len(self.elements)

    def index_of(self, element) -> int:
        try:
            return self.elements.index(element)
        except ValueError:
            raise DomainMismatchError(f"element {element!r} not in domain")


def tuple_space_size(domain: Domain, n: int) -> int:
    return len(domain) ** n


def all_tuples(domain: Domain, n: int, budget: int = DEFAULT_TUPLE_BUDGET) -> list[tuple]:
    """All ordered n-tuples over the domain, in product (row-major) order."""
    size = tuple_space_size(domain, n)
    if size > budget:
        raise BudgetExceededError(size, budget, what=f"tuple space |X|^{n}")
    return list(itertools.product(domain.elements, repeat=n))


@dataclass(frozen=True, eq=False)
class SamplePrior:
    """Prior over ordered sample tuples of a fixed size.

    Product priors keep only the generating element distribution and are
    expanded to the tuple space on demand; explicit priors carry their
    tuple distribution directly.
    """

    n: int
    product_flag: bool
    element_dist: FiniteDist | None = None
    explicit: FiniteDist | None = None

    def __post_init__(self):
        if self.n < 1:
            raise InvalidDistributionError(f"sample size must be positive, got {self.n}")
        if self.product_flag:
            if self.element_dist is None:
                raise InvalidDistributionError("product prior requires an element distribution")
        else:
            if self.explicit is None:
                raise InvalidDistributionError("explicit prior requires a tuple distribution")
            for outcome in self.explicit.outcomes:
                if not isinstance(outcome, tuple) or len(outcome) != self.n:
                    raise InvalidDistributionError(
                        f"prior outcome {outcome!r} is not an ordered {self.n}-tuple"
                    )

    def tuple_dist(self, domain: Domain, budget: int = DEFAULT_TUPLE_BUDGET) -> FiniteDist:
        """The prior as an explicit distribution over sample tuples."""
        if not self.product_flag:
            for outcome in self.explicit.outcomes:
                for element in outcome:
                    domain.index_of(element)
            return self.explicit
        if self.element_dist.outcomes != domain.elements:
            raise DomainMismatchError("element distribution is not aligned with the domain")
        tuples = all_tuples(domain, self.n, budget)
        weights = np.ones(1)
        for _ in range(self.n):
            weights = np.outer(weights, self.element_dist.probs).ravel()
        return FiniteDist(tuple(tuples), weights)


def product_prior(element_dist: FiniteDist, n: int) -> SamplePrior:
    return SamplePrior(n=n, product_flag=True, element_dist=element_dist)


def explicit_prior(tuple_dist: FiniteDist, n: int) -> SamplePrior:
    return SamplePrior(n=n, product_flag=False, explicit=tuple_dist)


class MechanismKernel:
    """A stochastic map from sample tuples to a shared response set.

    Rows may be given explicitly (mapping tuple -> weights) or as a
    function of the tuple; function rows are validated and cached on
    first use. `tag` and `meta` carry construction provenance used by
    analytic fast paths and certifier side conditions.
    """

    def __init__(
        self,
        responses: Sequence,
        rows: Mapping[tuple, Sequence[float]] | None = None,
        row_fn: Callable[[tuple], Sequence[float]] | None = None,
        tag: str = "custom",
        meta: dict | None = None,
    ):
        self.responses = tuple(responses)
        if len(set(self.responses)) != len(self.responses):
            raise InvalidDistributionError("response identifiers are not unique")
        if (rows is None) == (row_fn is None):
            raise InvalidDistributionError("provide exactly one of rows or row_fn")
        self._rows = dict(rows) if rows is not None else None
        self._row_fn = row_fn
        self._cache: dict[tuple, np.ndarray] = {}
        self.tag = tag
        self.meta = dict(meta or {})

    def row(self, sample: tuple) -> np.ndarray:
        """The response weight vector for one sample tuple."""
        cached = self._cache.get(sample)
        if cached is not None:
            return cached
        if self._rows is not None:
            raw = self._rows.get(sample)
            if raw is None:
                raise DomainMismatchError(f"kernel has no row for sample tuple {sample!r}")
        else:
            raw = self._row_fn(sample)
        probs = np.asarray(raw, dtype=float)
        if probs.shape != (len(self.responses),):
            raise InvalidDistributionError(
                f"kernel row for {sample!r} has shape {probs.shape}, "
                f"expected ({len(self.responses)},)"
            )
        if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > 1e-9:
            raise InvalidDistributionError(f"kernel row for {sample!r} is not a distribution")
        probs.setflags(write=False)
        self._cache[sample] = probs
        return probs

    def row_dist(self, sample: tuple) -> FiniteDist:
        return FiniteDist(self.responses, self.row(sample))


@dataclass(frozen=True, eq=False)
class World:
    """Everything needed to induce the full distribution family.

    `kernel` may temporarily be None while a mechanism constructor that
    only needs the domain and prior is being applied to the world.
    """

    domain: Domain
    n: int
    prior: SamplePrior
    kernel: MechanismKernel | None

    def tuple_dist(self, budget: int = DEFAULT_TUPLE_BUDGET) -> FiniteDist:
        return self.prior.tuple_dist(self.domain, budget)

    def element_marginal(self, budget: int = DEFAULT_TUPLE_BUDGET) -> FiniteDist:
        """Prior over elements: sample a tuple, then one position uniformly."""
        if self.prior.product_flag:
            return self.prior.element_dist
        dist = self.tuple_dist(budget)
        counts = _count_matrix(dist.outcomes, self.domain, self.n)
        return FiniteDist(self.domain.elements, counts.T @ dist.probs)


def build_world(domain: Domain, n: int, prior, kernel: MechanismKernel, *, product: bool | None = None) -> World:
    """Validate and assemble a world.

    `prior` may be a `SamplePrior`, or a `FiniteDist` which is treated
    as an explicit tuple distribution when its outcomes are n-tuples and
    as a product-generating element distribution otherwise (`product`
    forces the reading).
    """
    if isinstance(prior, FiniteDist):
        looks_explicit = all(isinstance(o, tuple) and len(o) == n for o in prior.outcomes)
        if product is True or (product is None and not looks_explicit):
            prior = product_prior(prior, n)
        else:
            prior = explicit_prior(prior, n)
    if prior.n != n:
        raise InvalidDistributionError(f"prior is over {prior.n}-tuples, world has n={n}")
    if prior.product_flag and prior.element_dist.outcomes != domain.elements:
        raise DomainMismatchError("element distribution is not aligned with the domain")
    return World(domain=domain, n=n, prior=prior, kernel=kernel)


@dataclass(frozen=True, eq=False)
class InducedDistributions:
    """The derived distribution family of one world.

    Set-level parts (`joint_sets`, `product_sets`, `posterior_sets`) are
    `None` when produced by an analytic fast path that never enumerates
    the tuple space. Posteriors exist only for positive-mass conditions.
    """

    marginal_r: FiniteDist
    element_marginal: FiniteDist
    joint_elems: JointDist
    product_elems: JointDist
    posterior_elems: dict
    response_given_element: dict
    joint_sets: JointDist | None = None
    product_sets: JointDist | None = None
    posterior_sets: dict | None = None

    @property
    def responses(self) -> tuple:
        return self.marginal_r.outcomes

    @property
    def elements(self) -> tuple:
        return self.element_marginal.outcomes


def _count_matrix(tuples: Sequence[tuple], domain: Domain, n: int) -> np.ndarray:
    """Row t gives the frequency of each domain element in tuple t."""
    index = {x: i for i, x in enumerate(domain.elements)}
    counts = np.zeros((len(tuples), len(domain)))
    for t, sample in enumerate(tuples):
        for element in sample:
            counts[t, index[element]] += 1.0
    return counts / n


def induce(
    world: World,
    budget: int = DEFAULT_TUPLE_BUDGET,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> InducedDistributions:
    """Derive the full distribution family by exact enumeration."""
    prior = world.tuple_dist(budget)
    tuples = prior.outcomes
    responses = world.kernel.responses
    cells = len(tuples) * len(responses)
    if cells > cell_budget:
        raise BudgetExceededError(cells, cell_budget, what="set-level joint cells")

    p = prior.probs
    # Zero-prior tuples need no kernel row; they carry no joint weight.
    zero_row = np.zeros(len(responses))
    kernel_matrix = np.vstack(
        [world.kernel.row(s) if weight > 0 else zero_row for s, weight in zip(tuples, p)]
    )
    counts = _count_matrix(tuples, world.domain, world.n)

    joint_sets = JointDist(tuples, responses, p[:, None] * kernel_matrix)
    marginal_r = joint_sets.right_marginal()
    product_sets = JointDist.outer(prior, marginal_r)

    posterior_sets = {}
    for j, r in enumerate(responses):
        mass = marginal_r.probs[j]
        if mass > 0:
            posterior_sets[r] = FiniteDist(tuples, joint_sets.weights[:, j] / mass)

    element_marginal = FiniteDist(world.domain.elements, counts.T @ p)
    joint_elems = JointDist(
        world.domain.elements, responses, (counts * p[:, None]).T @ kernel_matrix
    )
    product_elems = JointDist.outer(element_marginal, marginal_r)

    # Element posterior given r: average the set posteriors, per definition.
    posterior_elems = {
        r: FiniteDist(world.domain.elements, counts.T @ post.probs)
        for r, post in posterior_sets.items()
    }

    # Response distribution given a drawn element: average kernel rows
    # under the set posterior given that element.
    response_given_element = {}
    for i, x in enumerate(world.domain.elements):
        mass = element_marginal.probs[i]
        if mass > 0:
            sets_given_x = p * counts[:, i] / mass
            response_given_element[x] = FiniteDist(responses, sets_given_x @ kernel_matrix)

    return InducedDistributions(
        marginal_r=marginal_r,
        element_marginal=element_marginal,
        joint_elems=joint_elems,
        product_elems=product_elems,
        posterior_elems=posterior_elems,
        response_given_element=response_given_element,
        joint_sets=joint_sets,
        product_sets=product_sets,
        posterior_sets=posterior_sets,
    )


def element_release_analytic(domain: Domain, element_dist: FiniteDist, n: int) -> InducedDistributions:
    """Element-level distribution family of the uniform-element-release
    mechanism under an iid prior, in closed form.

    The joint weight of drawing element a and releasing element b is
    p_a * p_b * (1 - 1/n), plus p_a / n on the diagonal (the drawn and
    released positions coincide with probability 1/n). Never touches
    the tuple space, so it scales to priors far beyond the enumeration
    budget.
    """
    if element_dist.outcomes != domain.elements:
        raise DomainMismatchError("element distribution is not aligned with the domain")
    if n < 1:
        raise UnsupportedWorldError(f"sample size must be positive, got {n}")
    p = element_dist.probs
    same = 1.0 / n
    joint = (1.0 - same) * np.outer(p, p) + same * np.diag(p)
    joint_elems = JointDist(domain.elements, domain.elements, joint)
    marginal_r = FiniteDist(domain.elements, joint.sum(axis=0))
    product_elems = JointDist.outer(element_dist, marginal_r)

    posterior_elems = {}
    for j, r in enumerate(domain.elements):
        mass = marginal_r.probs[j]
        if mass > 0:
            posterior_elems[r] = FiniteDist(domain.elements, joint[:, j] / mass)

    response_given_element = {}
    for i, x in enumerate(domain.elements):
        if p[i] > 0:
            row = (1.0 - same) * p.copy()
            row[i] += same
            response_given_element[x] = FiniteDist(domain.elements, row)

    return InducedDistributions(
        marginal_r=marginal_r,
        element_marginal=element_dist,
        joint_elems=joint_elems,
        product_elems=product_elems,
        posterior_elems=posterior_elems,
        response_given_element=response_given_element,
    )


def bayes_check(ind: InducedDistributions) -> float:
    """Largest absolute residual of the two element-level factorizations.

    Checks joint(x, r) against marginal(r) * posterior(x | r) and
    against element_marginal(x) * conditional(r | x); zero-mass rows and
    columns must carry zero joint weight.
    """
    joint = ind.joint_elems.weights
    residual = 0.0
    for j, r in enumerate(ind.responses):
        mass = ind.marginal_r.probs[j]
        if mass > 0:
            gap = np.abs(joint[:, j] - mass * ind.posterior_elems[r].probs)
        else:
            gap = np.abs(joint[:, j])
        residual = max(residual, float(gap.max()))
    for i, x in enumerate(ind.elements):
        mass = ind.element_marginal.probs[i]
        if mass > 0:
            gap = np.abs(joint[i, :] - mass * ind.response_given_element[x].probs)
        else:
            gap = np.abs(joint[i, :])
        residual = max(residual, float(gap.max()))
    return residual


def world_to_json(world: World, budget: int = DEFAULT_TUPLE_BUDGET) -> dict:
    """JSON-serializable description with kernel rows in canonical order."""
    if world.prior.product_flag:
        prior_doc = {
            "type": "product",
            "weights": [[x, float(p)] for x, p in zip(
                world.prior.element_dist.outcomes, world.prior.element_dist.probs)],
        }
    else:
        prior_doc = {
            "type": "explicit",
            "weights": [[list(s), float(p)] for s, p in zip(
                world.prior.explicit.outcomes, world.prior.explicit.probs)],
        }
    tuples = all_tuples(world.domain, world.n, budget)
    rows = [[list(s), [float(v) for v in world.kernel.row(s)]] for s in tuples]
    return {
        "domain": list(world.domain.elements),
        "n": world.n,
        "prior": prior_doc,
        "kernel": {"responses": list(world.kernel.responses), "rows": rows,
                   "tag": world.kernel.tag},
    }


def _revive(value):
    """JSON arrays stand for tuples (outcomes must be hashable)."""
    if isinstance(value, list):
        return tuple(_revive(item) for item in value)
    return value


def world_from_json(doc: dict) -> World:
    """Inverse of `world_to_json` (kernel becomes explicit rows)."""
    domain = Domain(tuple(_revive(x) for x in doc["domain"]))
    n = int(doc["n"])
    prior_doc = doc["prior"]
    if prior_doc["type"] == "product":
        element_dist = FiniteDist(
            tuple(_revive(x) for x, _ in prior_doc["weights"]),
            np.array([p for _, p in prior_doc["weights"]]),
        )
        prior = product_prior(element_dist, n)
    elif prior_doc["type"] == "explicit":
        tuple_dist = FiniteDist(
            tuple(_revive(s) for s, _ in prior_doc["weights"]),
            np.array([p for _, p in prior_doc["weights"]]),
        )
        prior = explicit_prior(tuple_dist, n)
    else:
        raise InvalidDistributionError(f"unknown prior type {prior_doc['type']!r}")
    kernel_doc = doc["kernel"]
    responses = tuple(_revive(r) for r in kernel_doc["responses"])
    rows = {_revive(s): np.array(w, dtype=float) for s, w in kernel_doc["rows"]}
    kernel = MechanismKernel(responses, rows=rows, tag=kernel_doc.get("tag", "custom"))
    return build_world(domain, n, prior, kernel)

"""Adaptive interaction as one exactly-enumerated mechanism.

An analyst is a deterministic strategy fed with an explicit coin record
drawn up front, so the query asked after any view prefix is a function
of that prefix. The adaptive run enumerates the full view tree forward:
each node carries the unnormalized joint weight over sample tuples, the
tuple- and element-level posteriors it induces, its stability loss
against the original prior, and the incremental loss against its
parent. Treating complete views as responses turns the whole run back
into an ordinary induced family, which is how the composition bounds
are checked end to end.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .dists import FiniteDist, JointDist
from .errors import BudgetExceededError, DomainMismatchError, PreconditionError
from .stability import expected_loss, lss_certify
from .worlds import (
    DEFAULT_TUPLE_BUDGET,
    InducedDistributions,
    MechanismKernel,
    World,
    _count_matrix,
    explicit_prior,
    induce,
)


@dataclass(frozen=True, eq=False)
class Analyst:
    """Coin distribution plus a deterministic query strategy.

    `strategy(coins, responses)` must return a query identifier for
    every reachable prefix up to the configured depth.
    """

    coin_dist: FiniteDist
    strategy: Callable[[object, tuple], object]

    @classmethod
    def deterministic(cls, strategy: Callable[[tuple], object]) -> "Analyst":
        """Analyst without randomness: a single zero-weight coin record."""
        return cls(FiniteDist((0,), np.ones(1)), lambda _c, responses: strategy(responses))

    @classmethod
    def from_table(
        cls,
        table: Mapping,
        coin_dist: FiniteDist | None = None,
        default=None,
    ) -> "Analyst":
        """Decision-table analyst keyed by (coin record, response prefix)."""
        coins = coin_dist if coin_dist is not None else FiniteDist((0,), np.ones(1))
        frozen = dict(table)

        def strategy(coin, responses):
            key = (coin, tuple(responses))
            if key in frozen:
                return frozen[key]
            if default is not None:
                return default
            raise DomainMismatchError(f"analyst table has no entry for view {key!r}")

        return cls(coins, strategy)


@dataclass(eq=False)
class ViewNode:
    """One positive-probability view prefix of an adaptive run."""

    prefix: tuple
    depth: int
    prob: float
    posterior: FiniteDist
    elem_posterior: FiniteDist
    loss: float
    step_loss: float
    query: object | None = None


def _positive_excess(a: np.ndarray, b: np.ndarray) -> float:
    gap = a - b
    return float(gap[gap > 0].sum())


@dataclass(frozen=True, eq=False)
class AdaptiveRun:
    """Exact view distribution and posterior chain of one interaction."""

    world: World
    k: int
    nodes: dict
    view_dist: FiniteDist
    element_prior: FiniteDist
    response_sets: tuple
    rounds: tuple

    @property
    def posterior_chain(self) -> dict:
        return {prefix: node.posterior for prefix, node in self.nodes.items()}

    @property
    def per_step_loss(self) -> dict:
        return {
            prefix: node.step_loss
            for prefix, node in self.nodes.items()
            if node.depth >= 1
        }

    def complete_nodes(self) -> list[ViewNode]:
        return [node for node in self.nodes.values() if node.depth == self.k]

    def to_induced(self) -> InducedDistributions:
        """The run as a single mechanism whose responses are views."""
        views = self.view_dist.outcomes
        elements = self.element_prior.outcomes
        joint = np.zeros((len(elements), len(views)))
        posterior_elems = {}
        posterior_sets = {}
        for j, view in enumerate(views):
            node = self.nodes.get(view)
            if node is None or node.depth != self.k:
                continue
            joint[:, j] = node.prob * node.elem_posterior.probs
            posterior_elems[view] = node.elem_posterior
            posterior_sets[view] = node.posterior
        joint_elems = JointDist(elements, views, joint)
        response_given_element = {}
        for i, x in enumerate(elements):
            mass = self.element_prior.probs[i]
            if mass > 0:
                response_given_element[x] = FiniteDist(views, joint[i, :] / mass)
        return InducedDistributions(
            marginal_r=self.view_dist,
            element_marginal=self.element_prior,
            joint_elems=joint_elems,
            product_elems=JointDist.outer(self.element_prior, self.view_dist),
            posterior_elems=posterior_elems,
            response_given_element=response_given_element,
            posterior_sets=posterior_sets,
        )


def _round_response_set(round_kernels: Mapping) -> tuple:
    response_set = None
    for kernel in round_kernels.values():
        if response_set is None:
            response_set = kernel.responses
        elif kernel.responses != response_set:
            raise DomainMismatchError(
                "kernels within one round must share a response set"
            )
    if response_set is None:
        raise PreconditionError("each round needs at least one query kernel")
    return response_set


def run_adaptive(
    world: World,
    analyst: Analyst,
    rounds: Sequence[Mapping],
    k: int | None = None,
    budget: int = DEFAULT_TUPLE_BUDGET,
    view_budget: int = DEFAULT_TUPLE_BUDGET,
) -> AdaptiveRun:
    """Enumerate the exact distribution over depth-k views.

    `rounds[i]` maps each query identifier the analyst may emit in
    round i to that round's kernel; all kernels of a round must share a
    response set.
    """
    rounds = list(rounds)
    if k is None:
        k = len(rounds)
    if k != len(rounds):
        raise PreconditionError(f"k={k} but {len(rounds)} rounds of kernels supplied")

    prior = world.tuple_dist(budget)
    tuples = prior.outcomes
    counts = _count_matrix(tuples, world.domain, world.n)
    elem_prior_vec = counts.T @ prior.probs
    element_prior = FiniteDist(world.domain.elements, elem_prior_vec)

    response_sets = tuple(_round_response_set(r) for r in rounds)
    view_count = len(analyst.coin_dist.outcomes)
    for response_set in response_sets:
        view_count *= len(response_set)
        if view_count > view_budget:
            raise BudgetExceededError(view_count, view_budget, what="view space")

    kernel_matrices: dict = {}
    zero_row = {i: np.zeros(len(rs)) for i, rs in enumerate(response_sets)}

    def matrix_for(round_index: int, query) -> np.ndarray:
        key = (round_index, query)
        cached = kernel_matrices.get(key)
        if cached is None:
            try:
                kernel: MechanismKernel = rounds[round_index][query]
            except KeyError:
                raise DomainMismatchError(
                    f"round {round_index} has no kernel for query {query!r}"
                )
            cached = np.vstack(
                [
                    kernel.row(s) if weight > 0 else zero_row[round_index]
                    for s, weight in zip(tuples, prior.probs)
                ]
            )
            kernel_matrices[key] = cached
        return cached

    nodes: dict = {}
    frontier: list[tuple[tuple, np.ndarray]] = []
    for coin, coin_weight in zip(analyst.coin_dist.outcomes, analyst.coin_dist.probs):
        if coin_weight <= 0:
            continue
        prefix = (coin, ())
        joint = coin_weight * prior.probs
        node = ViewNode(
            prefix=prefix,
            depth=0,
            prob=float(joint.sum()),
            posterior=prior,
            elem_posterior=element_prior,
            loss=0.0,
            step_loss=0.0,
        )
        nodes[prefix] = node
        frontier.append((prefix, joint))

    for depth in range(k):
        next_frontier = []
        for prefix, joint in frontier:
            coin, responses = prefix
            query = analyst.strategy(coin, responses)
            nodes[prefix].query = query
            kernel_matrix = matrix_for(depth, query)
            child_joint = joint[:, None] * kernel_matrix
            child_probs = child_joint.sum(axis=0)
            parent = nodes[prefix]
            for j, response in enumerate(response_sets[depth]):
                mass = float(child_probs[j])
                if mass <= 0:
                    continue
                child_prefix = (coin, responses + (response,))
                posterior_vec = child_joint[:, j] / mass
                elem_vec = counts.T @ posterior_vec
                node = ViewNode(
                    prefix=child_prefix,
                    depth=depth + 1,
                    prob=mass,
                    posterior=FiniteDist(tuples, posterior_vec),
                    elem_posterior=FiniteDist(world.domain.elements, elem_vec),
                    loss=_positive_excess(elem_vec, elem_prior_vec),
                    step_loss=_positive_excess(elem_vec, parent.elem_posterior.probs),
                )
                nodes[child_prefix] = node
                next_frontier.append((child_prefix, child_joint[:, j]))
        frontier = next_frontier

    all_views = tuple(
        (coin, responses)
        for coin in analyst.coin_dist.outcomes
        for responses in itertools.product(*response_sets)
    )
    weights = np.array(
        [nodes[v].prob if v in nodes and nodes[v].depth == k else 0.0 for v in all_views]
    )
    view_dist = FiniteDist(all_views, weights)

    return AdaptiveRun(
        world=world,
        k=k,
        nodes=nodes,
        view_dist=view_dist,
        element_prior=element_prior,
        response_sets=response_sets,
        rounds=tuple(dict(r) for r in rounds),
    )


@dataclass(frozen=True)
class DecompositionReport:
    """Residuals of the chain identities of one adaptive run."""

    max_product_residual: float
    max_loss_violation: float
    view_mass_residual: float
    passed: bool


def view_loss_decomposition_check(run: AdaptiveRun, tol: float = 1e-9) -> DecompositionReport:
    """Check the two chain identities across every enumerated prefix.

    The mass of an extended view must factor into the parent view's
    mass times the parent posterior's predicted response probability,
    and each view's loss may exceed its parent's by at most the
    incremental step loss.
    """
    if run.k < 1:
        raise PreconditionError("decomposition check needs at least one round")
    max_product = 0.0
    max_loss = 0.0
    for prefix, node in run.nodes.items():
        if node.depth == 0:
            continue
        coin, responses = prefix
        parent = run.nodes[(coin, responses[:-1])]
        # Predicted transition: the parent posterior pushed through the
        # round's kernel, recomputed independently of the forward pass.
        kernel = run.rounds[node.depth - 1][parent.query]
        j = kernel.responses.index(responses[-1])
        column = np.array(
            [
                kernel.row(s)[j] if weight > 0 else 0.0
                for s, weight in zip(parent.posterior.outcomes, parent.posterior.probs)
            ]
        )
        predicted = parent.prob * float(np.dot(parent.posterior.probs, column))
        max_product = max(max_product, abs(node.prob - predicted))
        violation = node.loss - parent.loss - node.step_loss
        max_loss = max(max_loss, max(0.0, violation))
    mass_residual = abs(sum(n.prob for n in run.complete_nodes()) - 1.0)
    return DecompositionReport(
        max_product_residual=max_product,
        max_loss_violation=max_loss,
        view_mass_residual=mass_residual,
        passed=max_product <= tol and max_loss <= tol and mass_residual <= tol,
    )


def linear_composition_bound(per_round: Sequence[tuple]) -> tuple[float, float]:
    """Component-wise sums of per-round stability parameters."""
    per_round = list(per_round)
    if not per_round:
        raise PreconditionError("composition bound needs at least one round")
    for eps, delta in per_round:
        if not (0 <= eps <= 1 and 0 <= delta <= 1):
            raise PreconditionError(f"round parameters must lie in [0, 1], got ({eps}, {delta})")
    return (
        float(sum(eps for eps, _ in per_round)),
        float(sum(delta for _, delta in per_round)),
    )


def advanced_composition_bound(
    per_round: Sequence[tuple], delta_prime: float
) -> tuple[float, float]:
    """Sub-linear threshold: sqrt(8 ln(1/d') * sum eps_i^2) + sum alpha_i,
    paired with slack d' + sum delta_i / eps_i."""
    per_round = list(per_round)
    if not per_round:
        raise PreconditionError("composition bound needs at least one round")
    if not 0 < delta_prime <= 1:
        raise PreconditionError(f"delta_prime must lie in (0, 1], got {delta_prime}")
    for eps, delta, alpha in per_round:
        if eps <= 0:
            raise PreconditionError(f"per-round eps must be positive, got {eps}")
        if not (0 <= delta <= 1 and 0 <= alpha <= 1):
            raise PreconditionError(
                f"round parameters must lie in [0, 1], got delta={delta}, alpha={alpha}"
            )
    eps_term = math.sqrt(8.0 * math.log(1.0 / delta_prime) * sum(e * e for e, _, _ in per_round))
    alpha_term = sum(a for _, _, a in per_round)
    delta_total = delta_prime + sum(d / e for e, d, _ in per_round)
    return eps_term + alpha_term, delta_total


def reachable_posteriors(
    world: World,
    rounds: Sequence[Mapping],
    budget: int = DEFAULT_TUPLE_BUDGET,
) -> list[list[FiniteDist]]:
    """Analyst-free posterior families, level by level.

    Level i holds every tuple posterior reachable through some choice
    of queries and positive-probability responses in the first i
    rounds; level 0 is the prior alone. Duplicates are merged.
    """
    prior = world.tuple_dist(budget)
    tuples = prior.outcomes
    levels = [[prior]]
    for round_kernels in rounds:
        current = levels[-1]
        matrices = {
            query: np.vstack(
                [
                    kernel.row(s) if weight > 0 else np.zeros(len(kernel.responses))
                    for s, weight in zip(tuples, prior.probs)
                ]
            )
            for query, kernel in round_kernels.items()
        }
        seen = set()
        nxt = []
        for post in current:
            for query in round_kernels:
                kernel_matrix = matrices[query]
                transitions = post.probs @ kernel_matrix
                for j in np.flatnonzero(transitions > 0):
                    child = post.probs * kernel_matrix[:, j] / transitions[j]
                    key = np.round(child, 12).tobytes()
                    if key not in seen:
                        seen.add(key)
                        nxt.append(FiniteDist(tuples, child))
        levels.append(nxt)
    return levels


def _certify_round(
    world: World,
    round_kernels: Mapping,
    posteriors: Sequence[FiniteDist],
    eps: float,
) -> tuple[float, float]:
    """Worst stability slack and worst expected loss of one round's
    kernels across a family of priors."""
    worst_delta = 0.0
    worst_alpha = 0.0
    for post in posteriors:
        for query, kernel in round_kernels.items():
            sub_world = dataclasses.replace(
                world, prior=explicit_prior(post, world.n), kernel=kernel
            )
            ind = induce(sub_world)
            worst_delta = max(worst_delta, lss_certify(ind, eps).delta_star)
            worst_alpha = max(worst_alpha, expected_loss(ind))
    return worst_delta, worst_alpha


@dataclass(frozen=True)
class LinearCompositionReport:
    eps_list: tuple
    per_round_delta: tuple
    eps_total: float
    delta_total: float
    whole_run_delta_star: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "eps_list": list(self.eps_list),
            "per_round_delta": list(self.per_round_delta),
            "eps_total": self.eps_total,
            "delta_total": self.delta_total,
            "whole_run_delta_star": self.whole_run_delta_star,
            "passed": self.passed,
        }


def verify_linear_composition(
    world: World,
    analyst: Analyst,
    rounds: Sequence[Mapping],
    eps_list: Sequence[float],
    budget: int = DEFAULT_TUPLE_BUDGET,
    tol: float = 1e-9,
) -> LinearCompositionReport:
    """Certify each round against every reachable posterior, then check
    the whole run against the summed budget."""
    rounds = list(rounds)
    if len(eps_list) != len(rounds):
        raise PreconditionError("one eps per round is required")
    levels = reachable_posteriors(world, rounds, budget)
    per_round_delta = []
    for i, round_kernels in enumerate(rounds):
        delta_i, _ = _certify_round(world, round_kernels, levels[i], eps_list[i])
        per_round_delta.append(delta_i)
    eps_total, delta_total = linear_composition_bound(list(zip(eps_list, per_round_delta)))
    run = run_adaptive(world, analyst, rounds, budget=budget)
    whole = lss_certify(run.to_induced(), min(1.0, eps_total))
    return LinearCompositionReport(
        eps_list=tuple(eps_list),
        per_round_delta=tuple(per_round_delta),
        eps_total=eps_total,
        delta_total=delta_total,
        whole_run_delta_star=whole.delta_star,
        passed=whole.delta_star <= delta_total + tol,
    )


@dataclass(frozen=True)
class AdvancedCompositionReport:
    eps_list: tuple
    per_round_delta: tuple
    per_round_alpha: tuple
    alpha_ok: tuple
    eps_prime: float
    delta_total: float
    whole_run_delta_star: float | None
    vacuous: bool
    passed: bool

    def to_json(self) -> dict:
        return {
            "eps_list": list(self.eps_list),
            "per_round_delta": list(self.per_round_delta),
            "per_round_alpha": list(self.per_round_alpha),
            "alpha_ok": list(self.alpha_ok),
            "eps_prime": self.eps_prime,
            "delta_total": self.delta_total,
            "whole_run_delta_star": self.whole_run_delta_star,
            "vacuous": self.vacuous,
            "passed": self.passed,
        }


def verify_advanced_composition(
    world: World,
    analyst: Analyst,
    rounds: Sequence[Mapping],
    eps_list: Sequence[float],
    delta_prime: float,
    alphas: Sequence[float] | None = None,
    budget: int = DEFAULT_TUPLE_BUDGET,
    tol: float = 1e-9,
) -> AdvancedCompositionReport:
    """Measure per-round slacks and expected losses, evaluate the
    sub-linear bound, and check it end to end when the threshold is
    attainable (below 1)."""
    rounds = list(rounds)
    if len(eps_list) != len(rounds):
        raise PreconditionError("one eps per round is required")
    levels = reachable_posteriors(world, rounds, budget)
    per_round_delta = []
    measured_alpha = []
    for i, round_kernels in enumerate(rounds):
        delta_i, alpha_i = _certify_round(world, round_kernels, levels[i], eps_list[i])
        per_round_delta.append(delta_i)
        measured_alpha.append(alpha_i)
    if alphas is None:
        alphas = measured_alpha
        alpha_ok = tuple(True for _ in rounds)
    else:
        alpha_ok = tuple(
            measured <= stated + tol for measured, stated in zip(measured_alpha, alphas)
        )
    triples = list(zip(eps_list, per_round_delta, alphas))
    eps_prime, delta_total = advanced_composition_bound(triples, delta_prime)
    if eps_prime <= 1.0:
        run = run_adaptive(world, analyst, rounds, budget=budget)
        whole = lss_certify(run.to_induced(), eps_prime)
        whole_delta = whole.delta_star
        vacuous = False
        passed = all(alpha_ok) and whole_delta <= delta_total + tol
    else:
        whole_delta = None
        vacuous = True
        passed = all(alpha_ok)
    return AdvancedCompositionReport(
        eps_list=tuple(eps_list),
        per_round_delta=tuple(per_round_delta),
        per_round_alpha=tuple(measured_alpha),
        alpha_ok=alpha_ok,
        eps_prime=eps_prime,
        delta_total=delta_total,
        whole_run_delta_star=whole_delta,
        vacuous=vacuous,
        passed=passed,
    )

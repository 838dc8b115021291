"""Accuracy notions, generalization checks, and the monitor experiments.

Exact mode enumerates the failure mass of an accuracy statement or the
expectation gap of a query-valued mechanism outright. The monitor
harnesses are seeded Monte Carlo samplers: the defining quantities are
expectations over many independent adaptive interactions, which explode
combinatorially, so they are estimated with reported standard errors
and exactness is reserved for the tiny-world oracles in the test suite.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dists import FiniteDist
from .errors import PreconditionError
from .adaptivity import AdaptiveRun
from .mechanisms import QueryMechanism
from .queries import LinearQuery, query_values  # noqa: F401  (re-exported)
from .stability import loss_profile
from .util import thread_count
from .worlds import (
    DEFAULT_TUPLE_BUDGET,
    InducedDistributions,
    World,
    _count_matrix,
    induce,
)


@dataclass(frozen=True)
class AccuracyReport:
    """Failure probability of an accuracy statement at threshold eps."""

    eps: float
    delta_star: float
    mode: str
    k: int
    stderr: float | None = None
    reps: int | None = None

    def to_json(self) -> dict:
        doc = {"eps": self.eps, "delta_star": self.delta_star, "mode": self.mode, "k": self.k}
        if self.stderr is not None:
            doc["stderr"] = self.stderr
            doc["reps"] = self.reps
        return doc


def _require_mode(mode: str) -> None:
    if mode not in ("sample", "distribution"):
        raise PreconditionError(f"mode must be 'sample' or 'distribution', got {mode!r}")


def _numeric_responses(responses: tuple) -> np.ndarray:
    if not all(isinstance(r, (int, float)) for r in responses):
        raise PreconditionError("accuracy requires a real-valued response grid")
    return np.asarray(responses, dtype=float)


def accuracy_certify(
    subject, queries, eps: float, mode: str, budget: int = DEFAULT_TUPLE_BUDGET
) -> AccuracyReport:
    """Exact failure mass Pr[max_i |R_i - target_i| > eps].

    `subject` is a `World` answering one fixed query, or an
    `AdaptiveRun` together with a mapping from query identifiers to the
    linear queries they stand for. Sample mode measures against the
    per-tuple query value, distribution mode against the population
    value.
    """
    _require_mode(mode)
    if isinstance(subject, World):
        query = queries if isinstance(queries, LinearQuery) else tuple(queries)[0]
        grid = _numeric_responses(subject.kernel.responses)
        prior = subject.tuple_dist(budget)
        population = query.population_value(subject.element_marginal(budget))
        failure = 0.0
        for s, weight in zip(prior.outcomes, prior.probs):
            if weight <= 0:
                continue
            target = query.sample_value(s) if mode == "sample" else population
            row = subject.kernel.row(s)
            bad = np.abs(grid - target) > eps
            failure += weight * float(row[bad].sum())
        return AccuracyReport(eps=eps, delta_star=failure, mode=mode, k=1)

    if isinstance(subject, AdaptiveRun):
        return _accuracy_of_run(subject, queries, eps, mode)
    raise PreconditionError(f"cannot certify accuracy of {type(subject).__name__}")


def _accuracy_of_run(run: AdaptiveRun, query_map: Mapping, eps: float, mode: str) -> AccuracyReport:
    element_prior = run.element_prior
    failure = 0.0
    for node in run.complete_nodes():
        coin, responses = node.prefix
        rounds_queries = []
        for i in range(run.k):
            prefix_node = run.nodes[(coin, responses[:i])]
            rounds_queries.append(query_map[prefix_node.query])
        numeric = _numeric_responses(responses)
        if mode == "distribution":
            errors = [
                abs(numeric[i] - q.population_value(element_prior))
                for i, q in enumerate(rounds_queries)
            ]
            if max(errors) > eps:
                failure += node.prob
        else:
            for s, weight in zip(node.posterior.outcomes, node.posterior.probs):
                if weight <= 0:
                    continue
                worst = max(
                    abs(numeric[i] - q.sample_value(s)) for i, q in enumerate(rounds_queries)
                )
                if worst > eps:
                    failure += node.prob * weight
    return AccuracyReport(eps=eps, delta_star=failure, mode=mode, k=run.k)


@dataclass(frozen=True)
class ExpectationGapReport:
    """Both sides of the expectation-generalization inequality."""

    applicable: bool
    unstable_mass: float
    lhs: float
    bound: float
    delta_bound: float
    passed: bool | None

    def to_json(self) -> dict:
        return {
            "applicable": self.applicable,
            "unstable_mass": self.unstable_mass,
            "lhs": self.lhs,
            "bound": self.bound,
            "delta_bound": self.delta_bound,
            "passed": self.passed,
        }


def _shared_bound(queries) -> float:
    bounds = {q.delta_bound for q in queries}
    if len(bounds) != 1:
        raise PreconditionError("all response queries must share one value bound")
    return bounds.pop()


def expectation_generalization_check(
    world: World,
    queries_by_response: Mapping,
    eps: float,
    delta: float,
    budget: int = DEFAULT_TUPLE_BUDGET,
) -> ExpectationGapReport:
    """Exact |E[Q'(D) - Q'(S)]| against the 2*bound*(eps+delta) budget.

    Applicable only when the mass of responses with stability loss
    above eps stays strictly below delta; otherwise the report carries
    the measured mass and no verdict.
    """
    ind = induce(world, budget)
    profile = loss_profile(ind)
    unstable_mass = float(
        sum(profile.response_mass[r] for r in profile.responses if profile.losses[r] > eps)
    )
    queries = {r: queries_by_response[r] for r in ind.responses}
    value_bound = _shared_bound(queries.values())
    bound = 2.0 * value_bound * (eps + delta)
    applicable = unstable_mass < delta

    prior = world.tuple_dist(budget)
    counts = _count_matrix(prior.outcomes, world.domain, world.n)
    joint = ind.joint_sets.weights
    gap = 0.0
    for j, r in enumerate(ind.responses):
        q = queries[r]
        population = q.population_value(ind.element_marginal)
        sample_values = counts @ np.asarray(q.values)
        gap += float(np.dot(joint[:, j], population - sample_values))
    lhs = abs(gap)
    return ExpectationGapReport(
        applicable=applicable,
        unstable_mass=unstable_mass,
        lhs=lhs,
        bound=bound,
        delta_bound=value_bound,
        passed=(lhs < bound) if applicable else None,
    )


def loss_assessment_query(
    ind: InducedDistributions, response, delta_bound: float
) -> LinearQuery:
    """The +/- bound query separating prior from the posterior of one response.

    Takes the positive value exactly where the prior strictly exceeds
    the posterior, so its population-minus-sample gap equals twice the
    response's stability loss times the bound.
    """
    if ind.marginal_r.prob(response) <= 0:
        raise PreconditionError(f"response {response!r} has zero probability")
    prior = ind.element_marginal.probs
    post = ind.posterior_elems[response].probs
    values = tuple(
        delta_bound if prior[i] > post[i] else -delta_bound for i in range(len(prior))
    )
    return LinearQuery(ind.elements, values, delta_bound, label=f"loss-assess:{response}")


def _posterior_prior_gap(ind: InducedDistributions, response, query: LinearQuery) -> float:
    """Population value minus posterior-expected value of one query."""
    prior = ind.element_marginal.probs
    post = ind.posterior_elems[response].probs
    return float(np.dot(prior - post, np.asarray(query.values)))


@dataclass(frozen=True)
class OverfitReport:
    """Measured expectation gap of the loss-assessment post-processing."""

    applicable: bool
    unstable_mass: float
    lhs: float
    bound: float
    passed: bool | None

    def to_json(self) -> dict:
        return {
            "applicable": self.applicable,
            "unstable_mass": self.unstable_mass,
            "lhs": self.lhs,
            "bound": self.bound,
            "passed": self.passed,
        }


def overfit_lower_bound_check(
    world: World,
    eps: float,
    delta: float,
    delta_bound: float,
    budget: int = DEFAULT_TUPLE_BUDGET,
) -> OverfitReport:
    """Check that loss-assessment queries overfit in expectation.

    When responses with loss above eps carry mass above delta, the
    expected population-minus-sample gap of the per-response
    loss-assessment queries must exceed 2 * eps * bound * delta.
    """
    ind = induce(world, budget)
    profile = loss_profile(ind)
    unstable_mass = float(
        sum(profile.response_mass[r] for r in profile.responses if profile.losses[r] > eps)
    )
    applicable = unstable_mass > delta
    gap = 0.0
    for r in profile.responses:
        query = loss_assessment_query(ind, r, delta_bound)
        gap += profile.response_mass[r] * _posterior_prior_gap(ind, r, query)
    lhs = abs(gap)
    bound = 2.0 * eps * delta_bound * delta
    return OverfitReport(
        applicable=applicable,
        unstable_mass=unstable_mass,
        lhs=lhs,
        bound=bound,
        passed=(lhs > bound) if applicable else None,
    )


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with its standard error and a 95% interval."""

    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    n: int

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "Estimate":
        xs = np.asarray(samples, dtype=float)
        n = len(xs)
        mean = float(xs.mean())
        stderr = float(xs.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(
            mean=mean,
            stderr=stderr,
            ci_low=mean - 1.96 * stderr,
            ci_high=mean + 1.96 * stderr,
            n=n,
        )

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n": self.n,
        }


class SamplingAnalyst:
    """Interface of analysts driven by the Monte Carlo harnesses."""

    def sample_coins(self, rng: np.random.Generator):
        return None

    def next_query(self, coins, responses: tuple) -> LinearQuery:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ReconstructThenOverfitAnalyst(SamplingAnalyst):
    """Probe membership element by element, then bet on the inferred set.

    The first rounds issue one indicator query per probed element; the
    final round returns the query that takes the positive bound on every
    probed element whose response cleared the threshold and the negative
    bound elsewhere. Against a mechanism answering exactly, this query
    scores near its bound on the sample while scoring far lower on the
    population.
    """

    domain: tuple
    probes: tuple
    delta_bound: float
    threshold: float

    def sample_coins(self, rng):
        return None

    def next_query(self, coins, responses: tuple) -> LinearQuery:
        i = len(responses)
        if i < len(self.probes):
            return LinearQuery.indicator(
                self.domain, self.probes[i], self.delta_bound, label=f"probe:{self.probes[i]}"
            )
        inferred = {
            probe
            for probe, response in zip(self.probes, responses)
            if response > self.threshold
        }
        values = tuple(
            self.delta_bound if x in inferred else -self.delta_bound for x in self.domain
        )
        return LinearQuery(self.domain, values, self.delta_bound, label="overfit")


def _sample_tuple(world: World, rng: np.random.Generator, budget: int) -> tuple:
    if world.prior.product_flag:
        dist = world.prior.element_dist
        picks = rng.choice(len(dist.outcomes), size=world.n, p=dist.probs)
        return tuple(dist.outcomes[int(i)] for i in picks)
    dist = world.tuple_dist(budget)
    return dist.outcomes[int(rng.choice(len(dist.outcomes), p=dist.probs))]


@dataclass(frozen=True)
class _CopyResult:
    query: LinearQuery
    response: float
    q_dist: float
    q_sample: float
    max_round_error: float
    selected_round: int


def _run_monitor_copy(
    world: World,
    analyst: SamplingAnalyst,
    mechanisms: Sequence[QueryMechanism],
    k: int,
    rng: np.random.Generator,
    element_marginal: FiniteDist,
    budget: int,
) -> _CopyResult:
    sample = _sample_tuple(world, rng, budget)
    coins = analyst.sample_coins(rng)
    responses: list[float] = []
    rounds: list[tuple[float, LinearQuery, float, float]] = []
    for i in range(k):
        query = analyst.next_query(coins, tuple(responses))
        response = mechanisms[i].respond(rng, sample, query)
        responses.append(response)
        population = query.population_value(element_marginal)
        rounds.append((abs(population - response), query, response, population))
    errors = np.array([entry[0] for entry in rounds])
    j = int(np.argmax(errors))
    _, query, response, population = rounds[j]
    if population < response:
        query = query.negate()
        response = -response
        population = -population
    return _CopyResult(
        query=query,
        response=response,
        q_dist=population,
        q_sample=query.sample_value(sample),
        max_round_error=float(errors[j]),
        selected_round=j,
    )


def accuracy_estimate(
    world: World,
    analyst: SamplingAnalyst,
    mechanisms,
    k: int,
    eps: float,
    mode: str,
    reps: int,
    seed: int,
    budget: int = DEFAULT_TUPLE_BUDGET,
) -> AccuracyReport:
    """Seeded Monte Carlo estimate of the k-round failure probability.

    For worlds beyond the enumeration budget: samples `reps` adaptive
    interactions and reports the failure fraction with its standard
    error.
    """
    _require_mode(mode)
    mechs = _as_mechanism_list(mechanisms, k)
    element_marginal = world.element_marginal(budget)
    root = np.random.SeedSequence(seed)
    failures = []
    for rep_seq in root.spawn(reps):
        rng = np.random.default_rng(rep_seq)
        sample = _sample_tuple(world, rng, budget)
        coins = analyst.sample_coins(rng)
        responses: list[float] = []
        worst = 0.0
        for i in range(k):
            query = analyst.next_query(coins, tuple(responses))
            response = mechs[i].respond(rng, sample, query)
            responses.append(response)
            target = (
                query.sample_value(sample)
                if mode == "sample"
                else query.population_value(element_marginal)
            )
            worst = max(worst, abs(response - target))
        failures.append(1.0 if worst > eps else 0.0)
    estimate = Estimate.from_samples(failures)
    return AccuracyReport(
        eps=eps,
        delta_star=estimate.mean,
        mode=mode,
        k=k,
        stderr=estimate.stderr,
        reps=reps,
    )


@dataclass(frozen=True)
class MonitorReport:
    """Estimates of the three monitored expectations plus one sample output."""

    t: int
    k: int
    reps: int
    seed: int
    selected: tuple
    lss_gap: Estimate
    sample_err: Estimate
    dist_err: Estimate
    overfit_gap: Estimate
    copy_rows: tuple

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "k": self.k,
            "reps": self.reps,
            "seed": self.seed,
            "selected": {
                "query": self.selected[0],
                "response": self.selected[1],
                "copy": self.selected[2],
            },
            "lss_gap": self.lss_gap.to_json(),
            "sample_err": self.sample_err.to_json(),
            "dist_err": self.dist_err.to_json(),
            "overfit_gap": self.overfit_gap.to_json(),
        }


def _as_mechanism_list(mechanisms, k: int) -> list[QueryMechanism]:
    if isinstance(mechanisms, QueryMechanism):
        return [mechanisms] * k
    mechanisms = list(mechanisms)
    if len(mechanisms) != k:
        raise PreconditionError(f"{len(mechanisms)} mechanisms supplied for k={k} rounds")
    return mechanisms


def monitor_run(
    world: World,
    analyst: SamplingAnalyst,
    mechanisms,
    t: int,
    k: int,
    seed: int,
    reps: int = 50,
    budget: int = DEFAULT_TUPLE_BUDGET,
) -> MonitorReport:
    """Run t independent adaptive copies, expose the least accurate one.

    Each repetition draws t fresh sample sets, runs the analyst against
    the mechanisms on each, picks per copy the round with the worst
    population error (ties to the lowest index, sign-flipped so the
    population value dominates the response), and then the copy with
    the worst gap. Statistics aggregate one output triple per
    repetition.
    """
    if t < 1:
        raise PreconditionError(f"t must be at least 1, got {t}")
    mechs = _as_mechanism_list(mechanisms, k)
    element_marginal = world.element_marginal(budget)
    root = np.random.SeedSequence(seed)
    lss_gaps, sample_errs, dist_errs = [], [], []
    selected = None
    copy_rows: tuple = ()
    workers = thread_count()
    for rep_index, rep_seq in enumerate(root.spawn(reps)):
        rngs = [np.random.default_rng(s) for s in rep_seq.spawn(t)]

        def one_copy(rng):
            return _run_monitor_copy(world, analyst, mechs, k, rng, element_marginal, budget)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                copies = list(pool.map(one_copy, rngs))
        else:
            copies = [one_copy(rng) for rng in rngs]
        gaps = np.array([c.q_dist - c.response for c in copies])
        i_star = int(np.argmax(gaps))
        chosen = copies[i_star]
        lss_gaps.append(chosen.q_dist - chosen.q_sample)
        sample_errs.append(chosen.q_sample - chosen.response)
        dist_errs.append(chosen.q_dist - chosen.response)
        if rep_index == 0:
            selected = (chosen.query.label, chosen.response, i_star)
            copy_rows = tuple(
                (i, c.max_round_error, c.query.label, c.response)
                for i, c in enumerate(copies)
            )
    overfit = [d - s for d, s in zip(dist_errs, sample_errs)]
    return MonitorReport(
        t=t,
        k=k,
        reps=reps,
        seed=seed,
        selected=selected,
        lss_gap=Estimate.from_samples(lss_gaps),
        sample_err=Estimate.from_samples(sample_errs),
        dist_err=Estimate.from_samples(dist_errs),
        overfit_gap=Estimate.from_samples(overfit),
        copy_rows=copy_rows,
    )


@dataclass(frozen=True)
class SecondMonitorReport:
    """Estimates from the maximal-loss copy and its loss-assessment round."""

    t: int
    k: int
    reps: int
    seed: int
    queries_per_copy: int
    selected: tuple
    lss_gap: Estimate
    sample_err: Estimate
    dist_err: Estimate
    max_view_loss: Estimate
    copy_rows: tuple = ()

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "k": self.k,
            "reps": self.reps,
            "seed": self.seed,
            "queries_per_copy": self.queries_per_copy,
            "selected": {
                "query": self.selected[0],
                "response": self.selected[1],
                "copy": self.selected[2],
            },
            "lss_gap": self.lss_gap.to_json(),
            "sample_err": self.sample_err.to_json(),
            "dist_err": self.dist_err.to_json(),
            "max_view_loss": self.max_view_loss.to_json(),
        }


def second_monitor_run(
    world: World,
    analyst: SamplingAnalyst,
    mechanisms,
    t: int,
    seed: int,
    k: int,
    delta_bound: float,
    reps: int = 50,
    final_mechanism: QueryMechanism | None = None,
    budget: int = DEFAULT_TUPLE_BUDGET,
) -> SecondMonitorReport:
    """Select the maximal-loss copy and issue its loss-assessment query.

    Tracks the exact tuple posterior along each realized view (so the
    world must be enumeration-scale), builds the query separating prior
    from that posterior, asks it as an extra round k+1, and reports the
    expectation gap of the selected copy.
    """
    if t < 1:
        raise PreconditionError(f"t must be at least 1, got {t}")
    mechs = _as_mechanism_list(mechanisms, k)
    final_mech = final_mechanism if final_mechanism is not None else mechs[-1]
    prior = world.tuple_dist(budget)
    tuples = prior.outcomes
    counts = _count_matrix(tuples, world.domain, world.n)
    elem_prior_vec = counts.T @ prior.probs
    element_marginal = FiniteDist(world.domain.elements, elem_prior_vec)

    root = np.random.SeedSequence(seed)
    lss_gaps, sample_errs, dist_errs, max_losses = [], [], [], []
    selected = None
    copy_rows: tuple = ()
    for rep_index, rep_seq in enumerate(root.spawn(reps)):
        copies = []
        for copy_seq in rep_seq.spawn(t):
            rng = np.random.default_rng(copy_seq)
            sample = _sample_tuple(world, rng, budget)
            coins = analyst.sample_coins(rng)
            responses: list[float] = []
            posterior = prior.probs.copy()
            for i in range(k):
                query = analyst.next_query(coins, tuple(responses))
                response = mechs[i].respond(rng, sample, query)
                responses.append(response)
                likelihood = np.array(
                    [mechs[i].prob_of(s, query, response) for s in tuples]
                )
                posterior = posterior * likelihood
            posterior = posterior / posterior.sum()
            elem_post = counts.T @ posterior
            loss = float(np.maximum(elem_post - elem_prior_vec, 0.0).sum())
            values = tuple(
                delta_bound if elem_prior_vec[i] > elem_post[i] else -delta_bound
                for i in range(len(elem_prior_vec))
            )
            query = LinearQuery(world.domain.elements, values, delta_bound, label="loss-assess")
            response = final_mech.respond(rng, sample, query)
            copies.append(
                (
                    loss,
                    query,
                    response,
                    query.population_value(element_marginal),
                    query.sample_value(sample),
                )
            )
        i_star = int(np.argmax([c[0] for c in copies]))
        loss, query, response, population, sample_value = copies[i_star]
        max_losses.append(loss)
        lss_gaps.append(population - sample_value)
        sample_errs.append(sample_value - response)
        dist_errs.append(population - response)
        if rep_index == 0:
            selected = (query.label, response, i_star)
            copy_rows = tuple(
                (i, c[0], c[1].label, c[2]) for i, c in enumerate(copies)
            )
    return SecondMonitorReport(
        t=t,
        k=k,
        reps=reps,
        seed=seed,
        queries_per_copy=k + 1,
        selected=selected,
        lss_gap=Estimate.from_samples(lss_gaps),
        sample_err=Estimate.from_samples(sample_errs),
        dist_err=Estimate.from_samples(dist_errs),
        max_view_loss=Estimate.from_samples(max_losses),
        copy_rows=copy_rows,
    )

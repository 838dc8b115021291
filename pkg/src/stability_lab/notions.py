"""Certifiers for the stability notions and their relationships.

Every certifier returns the minimal slack parameter achievable at the
requested threshold, computed exactly:

- dp: worst-case one-sided slack over ordered neighboring tuple pairs,
  with no reference to the prior;
- mi / lmi: symmetric slack between the joint and product distributions
  at the sample-set / sample-element level;
- ts: prior mass of ordered tuple pairs whose rows are not within the
  requested slack;
- ml / lml: log-sum of channel column maxima at the set / element level.

Implication verifiers are instance checkers, not proof checkers: they
certify the premise on the given world, apply the parameter transfer,
and certify the conclusion at the transferred budget.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dists import FiniteDist, maximal_leakage, min_delta_for_eps
from .errors import BudgetExceededError, PreconditionError
from .mechanisms import build_element_release, build_parity_mechanism
from .stability import LSSCertificate, lss_certify
from .worlds import (
    DEFAULT_TUPLE_BUDGET,
    Domain,
    InducedDistributions,
    World,
    all_tuples,
    element_release_analytic,
    induce,
    product_prior,
    tuple_space_size,
)

CMP_TOL = 1e-9


@dataclass(frozen=True)
class NotionCertificate:
    """Minimal certified parameters of one notion on one world."""

    notion: str
    eps: float | None = None
    delta_star: float | None = None
    eta_star: float | None = None
    leakage: float | None = None
    witness: tuple = ()

    #: Witnesses beyond this many entries are elided from JSON reports.
    WITNESS_JSON_CAP = 200

    def to_json(self) -> dict:
        doc = {"notion": self.notion}
        if self.eps is not None:
            doc["eps"] = self.eps
        if self.delta_star is not None:
            doc["delta_star"] = self.delta_star
        if self.eta_star is not None:
            doc["eta_star"] = self.eta_star
        if self.leakage is not None:
            doc["leakage"] = self.leakage
        doc["witness_size"] = len(self.witness)
        if 0 < len(self.witness) <= self.WITNESS_JSON_CAP:
            doc["witness"] = [repr(entry) for entry in self.witness]
        return doc


def element_family(world: World, budget: int = DEFAULT_TUPLE_BUDGET) -> InducedDistributions:
    """Element-level induced family, via enumeration or the analytic path.

    Enumeration is exact whenever the tuple space fits the budget.
    Beyond it, only the uniform-element-release mechanism under a
    product prior has a closed form; anything else raises.
    """
    size = tuple_space_size(world.domain, world.n)
    if size <= budget:
        return induce(world, budget)
    if world.prior.product_flag and world.kernel.tag == "element_release":
        return element_release_analytic(world.domain, world.prior.element_dist, world.n)
    raise BudgetExceededError(size, budget, what=f"tuple space |X|^{world.n}")


def _neighbor_pairs(tuples: list[tuple], domain: Domain):
    """Ordered pairs of tuples differing in exactly one position."""
    for s in tuples:
        for i in range(len(s)):
            for alternative in domain.elements:
                if alternative == s[i]:
                    continue
                yield s, s[:i] + (alternative,) + s[i + 1 :]


def dp_certify(world: World, eps: float, budget: int = DEFAULT_TUPLE_BUDGET) -> NotionCertificate:
    """Minimal delta over *all* ordered neighboring pairs; prior-free."""
    tuples = all_tuples(world.domain, world.n, budget)
    responses = np.asarray(
        [world.kernel.row(s) for s in tuples]
    )
    index = {s: i for i, s in enumerate(tuples)}
    factor = math.exp(eps)
    worst = 0.0
    witness: tuple = ()
    for s1, s2 in _neighbor_pairs(tuples, world.domain):
        excess = responses[index[s1]] - factor * responses[index[s2]]
        delta = float(excess[excess > 0].sum())
        if delta > worst:
            worst = delta
            bad = tuple(
                r for r, e in zip(world.kernel.responses, excess) if e > 0
            )
            witness = (s1, s2, bad)
    return NotionCertificate(notion="dp", eps=eps, delta_star=worst, witness=witness)


def _joint_excess_witness(a, b, eps: float) -> tuple:
    """Positive-excess cells of a(B) - e^eps * b(B), canonical order."""
    factor = math.exp(eps)
    excess = a.weights - factor * b.weights
    cells = []
    for i, x in enumerate(a.left):
        for j, r in enumerate(a.right):
            if excess[i, j] > 0:
                cells.append((x, r))
    return tuple(cells)


def mi_certify(
    world: World,
    eps: float,
    ind: InducedDistributions | None = None,
    budget: int = DEFAULT_TUPLE_BUDGET,
) -> NotionCertificate:
    """Symmetric joint-versus-product slack at the sample-set level."""
    if ind is None:
        ind = induce(world, budget)
    forward = min_delta_for_eps(ind.joint_sets, ind.product_sets, eps)
    backward = min_delta_for_eps(ind.product_sets, ind.joint_sets, eps)
    if forward >= backward:
        witness = _joint_excess_witness(ind.joint_sets, ind.product_sets, eps)
    else:
        witness = _joint_excess_witness(ind.product_sets, ind.joint_sets, eps)
    return NotionCertificate(
        notion="mi", eps=eps, delta_star=max(forward, backward), witness=witness
    )


def lmi_certify(
    world: World,
    eps: float,
    ind: InducedDistributions | None = None,
    budget: int = DEFAULT_TUPLE_BUDGET,
) -> NotionCertificate:
    """Symmetric joint-versus-product slack at the sample-element level."""
    if ind is None:
        ind = element_family(world, budget)
    forward = min_delta_for_eps(ind.joint_elems, ind.product_elems, eps)
    backward = min_delta_for_eps(ind.product_elems, ind.joint_elems, eps)
    if forward >= backward:
        witness = _joint_excess_witness(ind.joint_elems, ind.product_elems, eps)
    else:
        witness = _joint_excess_witness(ind.product_elems, ind.joint_elems, eps)
    return NotionCertificate(
        notion="lmi", eps=eps, delta_star=max(forward, backward), witness=witness
    )


def ts_certify(
    world: World, eps: float, delta: float, budget: int = DEFAULT_TUPLE_BUDGET
) -> NotionCertificate:
    """Prior mass of ordered pairs whose rows exceed the one-sided slack."""
    prior = world.tuple_dist(budget)
    support = [(s, p) for s, p in zip(prior.outcomes, prior.probs) if p > 0]
    factor = math.exp(eps)
    eta = 0.0
    worst_excess = 0.0
    witness: tuple = ()
    for s1, p1 in support:
        row1 = world.kernel.row(s1)
        for s2, p2 in support:
            excess = row1 - factor * world.kernel.row(s2)
            pair_delta = float(excess[excess > 0].sum())
            if pair_delta > delta + 1e-12:
                eta += p1 * p2
                if pair_delta - delta > worst_excess:
                    worst_excess = pair_delta - delta
                    witness = (s1, s2)
    return NotionCertificate(notion="ts", eps=eps, delta_star=delta, eta_star=eta, witness=witness)


def ml_certify(world: World, budget: int = DEFAULT_TUPLE_BUDGET) -> NotionCertificate:
    """Maximal leakage of the set-level channel."""
    ind = induce(world, budget)
    return NotionCertificate(notion="ml", leakage=maximal_leakage(ind.joint_sets))


def lml_certify(world: World, budget: int = DEFAULT_TUPLE_BUDGET) -> NotionCertificate:
    """Maximal leakage of the element-level channel."""
    ind = element_family(world, budget)
    return NotionCertificate(notion="lml", leakage=maximal_leakage(ind.joint_elems))


def min_eps_at_delta(
    delta_of_eps: Callable[[float], float],
    delta_target: float,
    hi: float,
    lo: float = 0.0,
    tol: float = 1e-4,
) -> float:
    """Bisect a non-increasing delta curve for the smallest adequate eps."""
    if delta_of_eps(hi) > delta_target:
        raise ValueError(f"delta target {delta_target} unreachable below eps={hi}")
    if delta_of_eps(lo) <= delta_target:
        return lo
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if delta_of_eps(mid) <= delta_target:
            hi = mid
        else:
            lo = mid
    return hi


IMPLICATIONS = (
    "dp_implies_lmi",
    "mi_implies_lmi",
    "ts_implies_lmi",
    "lml_implies_lmi",
    "lmi_implies_lss",
    "cs_implies_lss",
)


@dataclass(frozen=True)
class ImplicationReport:
    """One parameter-transfer check on one world."""

    theorem: str
    premise_params: dict
    premise: NotionCertificate | None
    premise_holds: bool
    transferred: dict
    conclusion: NotionCertificate | LSSCertificate
    conclusion_budget: float
    passed: bool
    note: str = ""

    def to_json(self) -> dict:
        return {
            "theorem": self.theorem,
            "premise_params": self.premise_params,
            "premise": None if self.premise is None else self.premise.to_json(),
            "premise_holds": self.premise_holds,
            "transferred": self.transferred,
            "conclusion": self.conclusion.to_json(),
            "conclusion_budget": self.conclusion_budget,
            "passed": self.passed,
            "note": self.note,
        }


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise PreconditionError(message)


def verify_implication(
    theorem: str, world: World, params: dict, budget: int = DEFAULT_TUPLE_BUDGET
) -> ImplicationReport:
    """Certify premise, transfer parameters, certify conclusion.

    Raises `PreconditionError` when the theorem's side conditions are
    not met by the world or the parameters.
    """
    if theorem == "dp_implies_lmi":
        eps, delta = params["eps"], params["delta"]
        _require(world.prior.product_flag, "transfer from worst-case privacy requires a product prior")
        premise = dp_certify(world, eps, budget)
        transferred = {"eps": eps, "delta": delta}
        conclusion = lmi_certify(world, eps, budget=budget)
        budget_value = delta
    elif theorem == "mi_implies_lmi":
        eps, delta = params["eps"], params["delta"]
        ind = induce(world, budget)
        premise = mi_certify(world, eps, ind)
        transferred = {"eps": eps, "delta": delta}
        conclusion = lmi_certify(world, eps, ind)
        budget_value = delta
    elif theorem == "ts_implies_lmi":
        eps, delta, eta = params["eps"], params["delta"], params["eta"]
        premise = ts_certify(world, eps, delta, budget)
        transferred = {"eps": eps, "delta": delta + 2.0 * eta}
        conclusion = lmi_certify(world, eps, budget=budget)
        budget_value = delta + 2.0 * eta
    elif theorem == "lml_implies_lmi":
        eps, delta = params["eps"], params["delta"]
        _require(delta > 0, "the leakage transfer requires a positive delta")
        premise = lml_certify(world, budget)
        eps_prime = eps + math.log(1.0 / delta)
        transferred = {"eps": eps_prime, "delta": delta}
        conclusion = lmi_certify(world, eps_prime, budget=budget)
        budget_value = delta
    elif theorem == "lmi_implies_lss":
        eps, delta = params["eps"], params["delta"]
        _require(0 < eps <= 1.0 / 3.0, f"requires 0 < eps <= 1/3, got eps={eps}")
        _require(delta <= eps, f"requires delta <= eps, got delta={delta}, eps={eps}")
        ind = element_family(world, budget)
        premise = lmi_certify(world, eps, ind)
        eps_prime = math.exp(eps) - 1.0 + eps
        transferred = {"eps": eps_prime, "delta": delta / eps}
        conclusion = lss_certify(ind, eps_prime)
        budget_value = delta / eps
    elif theorem == "cs_implies_lss":
        m, delta = params["m"], params["delta"]
        n = world.n
        _require(world.prior.product_flag, "the compression transfer requires a product prior")
        _require(
            world.kernel.tag in ("compression", "element_release")
            and world.kernel.meta.get("m") == m,
            f"world's kernel is not a compression scheme of size {m}",
        )
        _require(0 < delta <= 1, f"requires 0 < delta <= 1, got {delta}")
        _require(
            m <= n / (9.0 * math.log(2.0 * n / delta)),
            f"requires m <= n / (9 ln(2n/delta)) = {n / (9.0 * math.log(2.0 * n / delta)):.6g}, got m={m}",
        )
        premise = None
        eps_threshold = 11.0 * math.sqrt(m * math.log(2.0 * n / delta) / n)
        transferred = {"eps": eps_threshold, "delta": delta}
        ind = element_family(world, budget)
        conclusion = lss_certify(ind, min(1.0, eps_threshold))
        budget_value = delta
        vacuous = eps_threshold >= 1.0
    else:
        raise ValueError(f"unknown implication theorem {theorem!r}")

    if premise is None:
        premise_holds = True
        note = "structural premise: compression scheme"
        if theorem == "cs_implies_lss" and vacuous:
            note += "; threshold exceeds 1, conclusion vacuous"
    else:
        note = ""
        if premise.notion == "ts":
            premise_holds = premise.eta_star <= params["eta"] + CMP_TOL
        elif premise.notion in ("ml", "lml"):
            premise_holds = premise.leakage <= params["eps"] + CMP_TOL
        else:
            premise_holds = premise.delta_star <= params["delta"] + CMP_TOL

    passed = conclusion.delta_star <= budget_value + CMP_TOL

    return ImplicationReport(
        theorem=theorem,
        premise_params=dict(params),
        premise=premise,
        premise_holds=premise_holds,
        transferred=transferred,
        conclusion=conclusion,
        conclusion_budget=budget_value,
        passed=passed,
        note=note,
    )


@dataclass(frozen=True)
class SeparationReport:
    """Measured prongs of one strictness counterexample."""

    which: str
    params: dict
    metrics: dict
    prongs: dict
    passed: bool

    def to_json(self) -> dict:
        return {
            "which": self.which,
            "params": self.params,
            "metrics": self.metrics,
            "prongs": self.prongs,
            "passed": self.passed,
        }


def _parity_world(p: float, n: int) -> World:
    domain = Domain((0, 1))
    element_dist = FiniteDist((0, 1), np.array([1.0 - p, p]))
    shell = World(domain, n, product_prior(element_dist, n), kernel=None)
    return dataclasses.replace(shell, kernel=build_parity_mechanism(shell))


def run_separation(which: str, params: dict, budget: int = DEFAULT_TUPLE_BUDGET) -> SeparationReport:
    """Reproduce one of the two strictness counterexamples.

    `parity`: the label-parity release keeps the element-level joint
    within ratio e^eps of the product (zero slack), while at the
    set-level the response pins down the parity class, forcing slack
    above 1/5 at eps = 1.

    `element_release`: releasing one uniformly chosen sample element is
    stable (via its size-1 compression scheme) but concentrates 1/n
    joint mass on the diagonal, far above anything the product allows.
    """
    if which == "parity":
        eps = params["eps"]
        alpha = params["alpha"]
        n = params["n"]
        _require(0 < eps <= 0.7, f"requires 0 < eps <= 0.7, got {eps}")
        _require(0 <= alpha <= eps / 7.0 + 1e-12, f"requires alpha <= eps/7, got alpha={alpha}")
        _require(n >= 3, f"requires n >= 3, got {n}")
        p = 0.5 + alpha
        world = _parity_world(p, n)
        ind = induce(world, budget)
        lmi = lmi_certify(world, eps, ind)
        mi = mi_certify(world, 1.0, ind)

        # Witness block: parity-one tuples paired with the parity-zero
        # response, where the joint carries no mass at all.
        parity_one = [
            i for i, s in enumerate(ind.joint_sets.left)
            if world.kernel.row(s)[1] == 1.0
        ]
        j0 = world.kernel.responses.index(0)
        joint_mass = float(ind.joint_sets.weights[parity_one, j0].sum())
        product_mass = float(ind.product_sets.weights[parity_one, j0].sum())
        witness_value = product_mass - math.e * joint_mass
        closed_form = (1.0 - (1.0 - 2.0 * p) ** (2 * n)) / 4.0

        prongs = {
            "lmi_zero_slack": lmi.delta_star <= 1e-9,
            "mi_above_one_fifth": mi.delta_star > 0.2,
            "witness_above_one_fifth": witness_value > 0.2,
        }
        metrics = {
            "lmi_delta_star": lmi.delta_star,
            "mi_delta_star": mi.delta_star,
            "witness_value": witness_value,
            "closed_form": closed_form,
            "response_one_mass": float(ind.marginal_r.prob(1)),
        }
        return SeparationReport(
            which=which, params=dict(params), metrics=metrics,
            prongs=prongs, passed=all(prongs.values()),
        )

    if which == "element_release":
        big_n = params["N"]
        n = params["n"]
        delta = params["delta"]
        _require(n > max(2.0 * math.log(2.0 / delta), 6.0),
                 f"requires n > max(2 ln(2/delta), 6), got n={n}")
        _require(big_n > n * n, f"requires N > n^2, got N={big_n}, n={n}")
        domain = Domain(tuple(range(big_n)))
        element_dist = FiniteDist.uniform(domain.elements)
        _require(float(element_dist.probs.max()) <= 1.0 / n**2 + 1e-12,
                 "requires element masses <= 1/n^2")
        shell = World(domain, n, product_prior(element_dist, n), kernel=None)
        world = dataclasses.replace(shell, kernel=build_element_release(shell))

        ind = element_family(world, budget)
        lmi = lmi_certify(world, 1.0, ind)
        diag = np.diag(ind.joint_elems.weights)
        diag_joint = float(diag.sum())
        diag_product = float(np.diag(ind.product_elems.weights).sum())
        threshold = math.e * diag_product + 1.0 / (2.0 * n)
        margin = diag_joint - threshold

        eps_threshold = 11.0 * math.sqrt(math.log(2.0 * n / delta) / n)
        lss = lss_certify(ind, min(1.0, eps_threshold))
        lss_vacuous = eps_threshold >= 1.0

        prongs = {
            "lmi_above_half_n": lmi.delta_star > 1.0 / (2.0 * n),
            "diagonal_margin_positive": margin > 0,
            "lss_within_delta": lss.delta_star <= delta + CMP_TOL,
        }
        metrics = {
            "lmi_delta_star": lmi.delta_star,
            "diag_joint_mass": diag_joint,
            "diag_product_mass": diag_product,
            "lmi_threshold": threshold,
            "margin": margin,
            "lss_eps_threshold": eps_threshold,
            "lss_delta_star": lss.delta_star,
            "lss_vacuous": lss_vacuous,
        }
        return SeparationReport(
            which=which, params=dict(params), metrics=metrics,
            prongs=prongs, passed=all(prongs.values()),
        )

    raise ValueError(f"unknown separation {which!r}")

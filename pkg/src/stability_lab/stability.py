"""Per-response stability loss and stability certification.

The loss of a response is the total variation distance between the
prior over sample elements and the element posterior that response
induces, computed as the summed positive excess of posterior over
prior. A mechanism is stable at slack (eps, delta) when no response
subset carries both large mass and large average loss; the certifier
reports the minimal delta directly, using the fact that the worst
subset is exactly the set of responses whose loss exceeds eps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .dists import FiniteDist
from .errors import PreconditionError
from .worlds import InducedDistributions


@dataclass(frozen=True)
class LossProfile:
    """Stability loss and positive-excess element set per response.

    Covers positive-mass responses only; zero-probability responses
    induce no posterior and are skipped throughout.
    """

    responses: tuple
    losses: dict
    positive_sets: dict
    response_mass: dict

    def loss(self, response) -> float:
        return self.losses[response]


def loss_profile(ind: InducedDistributions) -> LossProfile:
    """Loss of every positive-mass response of an induced family."""
    prior = ind.element_marginal.probs
    responses = []
    losses = {}
    positive_sets = {}
    mass = {}
    for j, r in enumerate(ind.responses):
        weight = float(ind.marginal_r.probs[j])
        if weight <= 0:
            continue
        post = ind.posterior_elems[r].probs
        excess = post - prior
        gaining = excess > 0
        responses.append(r)
        losses[r] = float(excess[gaining].sum())
        positive_sets[r] = tuple(
            x for x, g in zip(ind.elements, gaining) if g
        )
        mass[r] = weight
    return LossProfile(
        responses=tuple(responses),
        losses=losses,
        positive_sets=positive_sets,
        response_mass=mass,
    )


def set_loss(profile: LossProfile, marginal_r: FiniteDist, subset: Iterable) -> float:
    """Probability-weighted average loss over a response subset."""
    subset = tuple(subset)
    total_mass = sum(marginal_r.prob(r) for r in subset)
    if total_mass <= 0:
        raise PreconditionError("set loss is undefined on a zero-mass response subset")
    weighted = sum(marginal_r.prob(r) * profile.loss(r) for r in subset if r in profile.losses)
    return weighted / total_mass


@dataclass(frozen=True)
class LSSCertificate:
    """Minimal stability slack at a given loss threshold.

    `witness` lists the responses whose loss strictly exceeds `eps`, in
    canonical response order; `delta_star` equals
    max(0, witness_mass * (witness_loss - eps)) and is the least delta
    for which every response subset satisfies the stability inequality.
    """

    eps: float
    delta_star: float
    witness: tuple
    witness_mass: float
    witness_loss: float

    def to_json(self) -> dict:
        return {
            "eps": self.eps,
            "delta_star": self.delta_star,
            "witness": list(self.witness),
            "witness_mass": self.witness_mass,
            "witness_loss": self.witness_loss,
        }


def lss_certify(
    ind: InducedDistributions, eps: float, profile: LossProfile | None = None
) -> LSSCertificate:
    """Minimal delta such that the world is stable at threshold `eps`.

    The subset maximization collapses to the witness set of responses
    with loss strictly above `eps`: any other response contributes a
    non-positive term.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if profile is None:
        profile = loss_profile(ind)
    witness = tuple(r for r in profile.responses if profile.losses[r] > eps)
    witness_mass = float(sum(profile.response_mass[r] for r in witness))
    if witness_mass > 0:
        witness_loss = (
            sum(profile.response_mass[r] * profile.losses[r] for r in witness) / witness_mass
        )
        delta_star = max(0.0, witness_mass * (witness_loss - eps))
    else:
        witness_loss = 0.0
        delta_star = 0.0
    return LSSCertificate(
        eps=eps,
        delta_star=delta_star,
        witness=witness,
        witness_mass=witness_mass,
        witness_loss=witness_loss,
    )


def delta_star_curve(
    ind: InducedDistributions, eps_grid: Sequence[float]
) -> list[LSSCertificate]:
    """Certificates across a grid of thresholds, sharing one profile."""
    profile = loss_profile(ind)
    return [lss_certify(ind, eps, profile) for eps in eps_grid]


def unstable_set(profile: LossProfile, eps: float) -> tuple:
    """Responses whose loss strictly exceeds `eps`."""
    return tuple(r for r in profile.responses if profile.losses[r] > eps)


@dataclass(frozen=True)
class UnstableMassReport:
    eps: float
    delta: float
    measured_mass: float
    bound: float
    passed: bool


def unstable_mass_bound_check(
    ind: InducedDistributions, eps: float, delta: float, tol: float = 1e-9
) -> UnstableMassReport:
    """Check that responses with loss above 2*eps carry mass below delta/eps.

    Requires 0 < eps, delta <= eps, and that the world actually attains
    stability slack delta at threshold eps.
    """
    if eps <= 0:
        raise PreconditionError(f"eps must be positive, got {eps}")
    if delta > eps:
        raise PreconditionError(f"requires delta <= eps, got delta={delta}, eps={eps}")
    profile = loss_profile(ind)
    certificate = lss_certify(ind, eps, profile)
    if certificate.delta_star > delta + tol:
        raise PreconditionError(
            f"world is not ({eps}, {delta})-stable: minimal delta is {certificate.delta_star}"
        )
    measured = float(sum(profile.response_mass[r] for r in unstable_set(profile, 2.0 * eps)))
    bound = delta / eps
    return UnstableMassReport(
        eps=eps,
        delta=delta,
        measured_mass=measured,
        bound=bound,
        passed=measured < bound + tol,
    )


def expected_loss(ind: InducedDistributions, profile: LossProfile | None = None) -> float:
    """Mean stability loss of a response drawn from the marginal."""
    if profile is None:
        profile = loss_profile(ind)
    return float(sum(profile.response_mass[r] * profile.losses[r] for r in profile.responses))

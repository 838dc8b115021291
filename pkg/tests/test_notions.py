"""Notion certifiers, the implication transfers, and the separations."""

import dataclasses
import math

import numpy as np
import pytest

import stability_lab as sl
from conftest import (
    constant_world,
    element_release_world,
    identity_world,
    make_random_world,
    parity_world,
    randomized_response_world,
    suite_worlds,
    xor_world,
)


def max_pairwise_delta(world: sl.World, eps: float) -> float:
    """Worst one-sided slack over all ordered support pairs (oracle)."""
    prior = world.tuple_dist()
    support = [s for s, p in zip(prior.outcomes, prior.probs) if p > 0]
    worst = 0.0
    for s1 in support:
        for s2 in support:
            worst = max(
                worst,
                sl.min_delta_for_eps(
                    world.kernel.row_dist(s1), world.kernel.row_dist(s2), eps
                ),
            )
    return worst


class TestDPCertify:
    def test_constant_mechanism(self):
        assert sl.dp_certify(constant_world(), 0.0).delta_star == 0.0

    def test_identity_disjoint_rows(self):
        for eps in (0.0, 1.0, 3.0):
            assert sl.dp_certify(identity_world(), eps).delta_star == 1.0

    def test_randomized_response_threshold(self):
        world = randomized_response_world(n=1, flip=0.25)
        assert sl.dp_certify(world, math.log(3.0)).delta_star == 0.0
        assert sl.dp_certify(world, math.log(3.0) - 1e-6).delta_star > 0.0

    def test_witness_is_a_neighbor_pair(self):
        cert = sl.dp_certify(identity_world(), 0.5)
        s1, s2, bad = cert.witness
        assert s1 != s2 and len(s1) == len(s2) == 1
        assert len(bad) >= 1

    def test_ignores_the_prior(self):
        # Same kernel under two very different priors: identical slack.
        world = identity_world()
        skewed = dataclasses.replace(
            world,
            prior=sl.product_prior(sl.FiniteDist((0, 1), np.array([0.99, 0.01])), 1),
        )
        for eps in (0.0, 0.4):
            assert (
                sl.dp_certify(world, eps).delta_star
                == sl.dp_certify(skewed, eps).delta_star
            )


class TestMICertify:
    def test_constant_mechanism(self):
        assert sl.mi_certify(constant_world(), 0.0).delta_star == pytest.approx(0.0, abs=1e-12)

    def test_identity_one_sided_threshold_is_log2(self):
        # The joint puts ratio 2 on the diagonal; the symmetric slack is
        # dominated by zero-joint cells, so the log-2 threshold shows in
        # the one-sided direction.
        ind = sl.induce(identity_world())
        forward = lambda e: sl.min_delta_for_eps(ind.joint_sets, ind.product_sets, e)
        assert forward(math.log(2.0)) == pytest.approx(0.0, abs=1e-12)
        assert forward(math.log(2.0) - 1e-3) > 0.0
        assert sl.mi_certify(identity_world(), math.log(2.0)).delta_star == pytest.approx(0.5)

    def test_parity_diagonal_witness(self):
        cert = sl.mi_certify(parity_world(p=0.6, n=3), 1.0)
        assert cert.delta_star > 0.2


class TestLMICertify:
    def test_constant_mechanism(self):
        assert sl.lmi_certify(constant_world(), 0.0).delta_star == pytest.approx(0.0, abs=1e-12)

    def test_parity_zero_slack(self):
        assert sl.lmi_certify(parity_world(p=0.6, n=3), 0.7).delta_star <= 1e-9

    def test_element_release_fast_path_beyond_budget(self):
        world = element_release_world(tuple(range(50)), np.full(50, 0.02), 7)
        # 50^7 tuples is far beyond any budget: must hit the closed form.
        cert = sl.lmi_certify(world, 1.0, budget=10_000)
        assert cert.delta_star > 1.0 / 14.0

    def test_budget_exceeded_without_fast_path(self):
        world = randomized_response_world(n=10)
        with pytest.raises(sl.BudgetExceededError):
            sl.lmi_certify(world, 0.5, budget=100)


class TestTSCertify:
    def test_constant_mechanism(self):
        assert sl.ts_certify(constant_world(), 0.0, 0.0).eta_star == 0.0

    def test_identity_pair_probability(self):
        assert sl.ts_certify(identity_world(), 0.0, 0.0).eta_star == pytest.approx(0.5)

    def test_delta_one_never_violated(self):
        assert sl.ts_certify(identity_world(), 0.0, 1.0).eta_star == 0.0

    def test_all_pairs_dominate_neighbor_pairs(self):
        # With full-support priors the pair family includes every
        # neighbor pair, so the worst pairwise slack dominates the
        # neighbor-only slack.
        for _, world in suite_worlds()[:10]:
            prior = world.tuple_dist()
            if np.any(prior.probs <= 0):
                continue
            for eps in (0.0, 0.3):
                assert (
                    max_pairwise_delta(world, eps)
                    >= sl.dp_certify(world, eps).delta_star - 1e-12
                )


class TestLeakageCertifiers:
    def test_constant_mechanism(self):
        assert sl.ml_certify(constant_world()).leakage == pytest.approx(0.0, abs=1e-12)
        assert sl.lml_certify(constant_world()).leakage == pytest.approx(0.0, abs=1e-12)

    def test_identity_is_log_m(self):
        world = element_release_world(("a", "b", "c"), (1 / 3, 1 / 3, 1 / 3), 1)
        assert sl.ml_certify(world).leakage == pytest.approx(math.log(3), abs=1e-12)

    def test_xor_local_leakage_vanishes(self):
        assert sl.lml_certify(xor_world()).leakage == pytest.approx(0.0, abs=1e-12)


class TestMonotonicityAndLattice:
    EPS_GRID = (0.0, 0.1, 0.3, 0.7, 1.2)

    def test_certifiers_monotone_in_eps(self):
        for _, world in suite_worlds()[:10]:
            for certify in (sl.dp_certify, sl.mi_certify, sl.lmi_certify):
                values = [certify(world, eps).delta_star for eps in self.EPS_GRID]
                assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))
            etas = [sl.ts_certify(world, eps, 0.05).eta_star for eps in self.EPS_GRID]
            assert all(a >= b - 1e-12 for a, b in zip(etas, etas[1:]))

    def test_dp_dominates_lmi_on_product_priors(self):
        rng = np.random.default_rng(33)
        for _ in range(10):
            world = make_random_world(rng, force_product=True)
            for eps in (0.0, 0.2, 0.5):
                assert (
                    sl.dp_certify(world, eps).delta_star
                    >= sl.lmi_certify(world, eps).delta_star - 1e-9
                )

    def test_mi_dominates_lmi(self):
        rng = np.random.default_rng(34)
        for _ in range(10):
            world = make_random_world(rng)
            ind = sl.induce(world)
            for eps in (0.0, 0.2, 0.5):
                assert (
                    sl.mi_certify(world, eps, ind).delta_star
                    >= sl.lmi_certify(world, eps, ind).delta_star - 1e-9
                )


class TestVerifyImplication:
    def test_dp_to_lmi_on_randomized_response(self):
        world = randomized_response_world(n=2, flip=0.25)
        report = sl.verify_implication(
            "dp_implies_lmi", world, {"eps": math.log(3.0), "delta": 0.0}
        )
        assert report.premise_holds and report.passed

    def test_dp_to_lmi_requires_product_prior(self):
        tuples = ((0, 0), (1, 1))
        prior = sl.explicit_prior(sl.FiniteDist(tuples, np.array([0.5, 0.5])), 2)
        world = dataclasses.replace(randomized_response_world(n=2), prior=prior)
        with pytest.raises(sl.PreconditionError):
            sl.verify_implication("dp_implies_lmi", world, {"eps": 1.0, "delta": 0.0})

    def test_mi_to_lmi(self):
        world = parity_world(p=0.6, n=3)
        premise = sl.mi_certify(world, 0.5)
        report = sl.verify_implication(
            "mi_implies_lmi", world, {"eps": 0.5, "delta": premise.delta_star}
        )
        assert report.premise_holds and report.passed

    def test_ts_to_lmi(self):
        world = randomized_response_world(n=1, flip=0.3)
        eta = sl.ts_certify(world, 0.5, 0.1).eta_star
        report = sl.verify_implication(
            "ts_implies_lmi", world, {"eps": 0.5, "delta": 0.1, "eta": eta}
        )
        assert report.premise_holds and report.passed
        assert report.transferred["delta"] == pytest.approx(0.1 + 2 * eta)

    def test_lml_to_lmi(self):
        world = randomized_response_world(n=1, flip=0.25)
        leakage = sl.lml_certify(world).leakage
        report = sl.verify_implication(
            "lml_implies_lmi", world, {"eps": leakage, "delta": 0.05}
        )
        assert report.premise_holds and report.passed
        assert report.transferred["eps"] == pytest.approx(leakage + math.log(1 / 0.05))

    def test_lml_to_lmi_needs_positive_delta(self):
        with pytest.raises(sl.PreconditionError):
            sl.verify_implication(
                "lml_implies_lmi", randomized_response_world(), {"eps": 1.0, "delta": 0.0}
            )

    def test_lmi_to_lss_transfer_formula(self):
        world = randomized_response_world(n=1, flip=0.4)
        eps = 1.0 / 3.0
        delta = sl.lmi_certify(world, eps).delta_star
        report = sl.verify_implication(
            "lmi_implies_lss", world, {"eps": eps, "delta": max(delta, 1e-6)}
        )
        assert report.transferred["eps"] == pytest.approx(math.exp(eps) - 1.0 + eps)
        assert report.passed

    def test_lmi_to_lss_side_conditions(self):
        world = randomized_response_world()
        with pytest.raises(sl.PreconditionError):
            sl.verify_implication("lmi_implies_lss", world, {"eps": 0.5, "delta": 0.1})
        with pytest.raises(sl.PreconditionError):
            sl.verify_implication("lmi_implies_lss", world, {"eps": 0.2, "delta": 0.3})

    def test_cs_to_lss_vacuous_threshold(self):
        # n = 70 satisfies m <= n / (9 ln(2n/delta)) for m = 1 but keeps
        # the transferred threshold above 1, so the conclusion is vacuous.
        world = element_release_world(tuple(range(50)), np.full(50, 0.02), 70)
        report = sl.verify_implication("cs_implies_lss", world, {"m": 1, "delta": 0.1})
        assert report.passed
        assert report.transferred["eps"] == pytest.approx(
            11.0 * math.sqrt(math.log(2 * 70 / 0.1) / 70)
        )
        assert "vacuous" in report.note

    def test_cs_to_lss_non_vacuous_via_fast_path(self):
        # Large enough n pushes the threshold below 1; only the analytic
        # element-release family can certify at this scale.
        world = element_release_world(tuple(range(50)), np.full(50, 0.02), 1200)
        report = sl.verify_implication("cs_implies_lss", world, {"m": 1, "delta": 0.5})
        assert report.transferred["eps"] < 1.0
        assert "vacuous" not in report.note
        assert report.passed

    def test_cs_to_lss_rejects_oversized_m(self):
        world = element_release_world(tuple(range(50)), np.full(50, 0.02), 70)
        with pytest.raises(sl.PreconditionError):
            sl.verify_implication("cs_implies_lss", world, {"m": 3, "delta": 0.1})

    def test_cs_to_lss_rejects_non_compression_kernel(self):
        with pytest.raises(sl.PreconditionError):
            sl.verify_implication("cs_implies_lss", parity_world(), {"m": 1, "delta": 0.5})

    def test_constant_world_passes_everything_applicable(self):
        world = constant_world()
        report = sl.verify_implication("dp_implies_lmi", world, {"eps": 0.0, "delta": 0.0})
        assert report.premise_holds and report.passed
        report = sl.verify_implication("mi_implies_lmi", world, {"eps": 0.0, "delta": 0.0})
        assert report.premise_holds and report.passed
        report = sl.verify_implication("ts_implies_lmi", world, {"eps": 0.0, "delta": 0.0, "eta": 0.0})
        assert report.premise_holds and report.passed

    def test_unknown_theorem(self):
        with pytest.raises(ValueError):
            sl.verify_implication("nonsense", constant_world(), {})


class TestRunSeparation:
    def test_parity_prongs(self):
        report = sl.run_separation("parity", {"eps": 0.7, "alpha": 0.1, "n": 3})
        assert report.passed
        assert report.metrics["lmi_delta_star"] <= 1e-9
        assert report.metrics["witness_value"] == pytest.approx(0.249984, abs=1e-6)
        assert report.metrics["witness_value"] == pytest.approx(
            report.metrics["closed_form"], abs=1e-9
        )

    def test_parity_zero_alpha_is_fully_stable(self):
        report = sl.run_separation("parity", {"eps": 0.5, "alpha": 0.0, "n": 3})
        assert report.metrics["lmi_delta_star"] == 0.0

    def test_parity_preconditions(self):
        with pytest.raises(sl.PreconditionError):
            sl.run_separation("parity", {"eps": 0.8, "alpha": 0.1, "n": 3})
        with pytest.raises(sl.PreconditionError):
            sl.run_separation("parity", {"eps": 0.7, "alpha": 0.2, "n": 3})
        with pytest.raises(sl.PreconditionError):
            sl.run_separation("parity", {"eps": 0.7, "alpha": 0.1, "n": 2})

    def test_element_release_prongs(self):
        report = sl.run_separation("element_release", {"N": 50, "n": 7, "delta": 0.1})
        assert report.passed
        assert report.metrics["diag_joint_mass"] == pytest.approx(0.16, abs=1e-12)
        assert report.metrics["margin"] >= 0.034 - 1e-6

    def test_element_release_preconditions(self):
        with pytest.raises(sl.PreconditionError):
            sl.run_separation("element_release", {"N": 50, "n": 5, "delta": 0.1})
        with pytest.raises(sl.PreconditionError):
            sl.run_separation("element_release", {"N": 40, "n": 7, "delta": 0.1})

    def test_unknown_separation(self):
        with pytest.raises(ValueError):
            sl.run_separation("nonsense", {})


class TestMinEpsAtDelta:
    def test_bisection_on_step_curve(self):
        curve = lambda eps: 0.0 if eps >= 0.6 else 0.5
        assert sl.min_eps_at_delta(curve, 0.1, hi=1.0, tol=1e-6) == pytest.approx(0.6, abs=1e-5)

    def test_unreachable_target(self):
        with pytest.raises(ValueError):
            sl.min_eps_at_delta(lambda eps: 1.0, 0.5, hi=1.0)

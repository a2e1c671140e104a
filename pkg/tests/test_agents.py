"""Tests for the simulated agents and the plan machinery."""

import json
import math

import numpy as np
import pytest

from seqmeta.agents import (
    CovariateModel,
    DiscreteJoint,
    GaussianLatentJoint,
    InvasiveClassicalAgent,
    NicAgent,
    RotationAgent,
    SimulationPlan,
    agent_from_dict,
    power_curve,
    simulate,
)
from seqmeta.core import StateVector
from seqmeta.nic import analyze_trials, estimate_stats
from seqmeta.nic import test_equalities as run_equalities
from seqmeta.rotation import RotationModelConfig, exact_c_matrix
from seqmeta.trials import to_json_line

GAUSS = GaussianLatentJoint(
    (0.3, -0.2, 0.0),
    ((1.0, 0.5, 0.3), (0.5, 1.0, 0.4), (0.3, 0.4, 1.0)),
)


def condition_values(trials, attr="r2"):
    grouped = {}
    for t in trials:
        grouped.setdefault(t.condition, []).append(getattr(t, attr))
    return grouped


class TestDeterminism:
    def test_same_seed_same_trials(self):
        agent = RotationAgent(noise_sigma=0.05, drift_sigma=0.02)
        plan = SimulationPlan(n_trials_per_condition=100, seed=7)
        assert simulate(agent, plan) == simulate(agent, plan)

    def test_worker_count_does_not_change_output(self):
        agent = NicAgent(joint=GAUSS, noise_sigma=0.03)
        plan = SimulationPlan(n_trials_per_condition=120, seed=9)
        serial = simulate(agent, plan)
        threaded = simulate(agent, plan, workers=4)
        assert [to_json_line(t) for t in serial] == [to_json_line(t) for t in threaded]

    def test_different_seeds_differ(self):
        agent = NicAgent(joint=GAUSS, noise_sigma=0.03)
        a = simulate(agent, SimulationPlan(n_trials_per_condition=20, seed=1))
        b = simulate(agent, SimulationPlan(n_trials_per_condition=20, seed=2))
        assert a != b

    def test_blocked_counterbalancing_orders_by_condition(self):
        agent = NicAgent(joint=GAUSS)
        plan = SimulationPlan(n_trials_per_condition=3, seed=0, counterbalancing="blocked")
        trials = simulate(agent, plan)
        conditions = [t.condition for t in trials]
        assert conditions == sorted(conditions, key=conditions.index)
        assert conditions[0] == conditions[1] == conditions[2]

    def test_randomized_covers_all_conditions(self):
        agent = NicAgent(joint=GAUSS)
        trials = simulate(agent, SimulationPlan(n_trials_per_condition=2, seed=0))
        assert len(condition_values(trials)) == 6
        assert sorted(t.trial_index for t in trials) == list(range(12))


class TestRotationAgent:
    def test_noiseless_trials_reproduce_deterministic_table(self):
        trials = simulate(
            RotationAgent(noise_sigma=0.0),
            SimulationPlan(n_trials_per_condition=10, seed=3),
        )
        exact = exact_c_matrix(RotationModelConfig())
        for (first, second), values in condition_values(trials).items():
            assert np.allclose(values, exact.entry(first, second), atol=1e-12)

    def test_first_readout_matches_initial_state(self):
        trials = simulate(
            RotationAgent(noise_sigma=0.0),
            SimulationPlan(n_trials_per_condition=5, seed=3),
        )
        for t in trials:
            assert t.r1 == pytest.approx(0.788675, abs=1e-6)

    def test_equality_gaps_half_at_moderate_noise(self):
        # Population gap is 0.5; with sigma = 0.05 and N = 1000 the estimate
        # lands within 3 standard errors.
        trials = simulate(
            RotationAgent(noise_sigma=0.05),
            SimulationPlan(n_trials_per_condition=1000, seed=13),
        )
        stats = estimate_stats(trials)
        se = 0.05 * math.sqrt(2.0 / 1000.0)
        for (i, j, k) in (("E1", "E2", "E3"), ("E1", "E3", "E2"), ("E2", "E1", "E3")):
            gap = abs(stats.c_hat.entry(i, j) - stats.c_hat.entry(k, j))
            assert gap == pytest.approx(0.5, abs=3 * se)

    def test_drift_jitters_initial_state(self):
        trials = simulate(
            RotationAgent(noise_sigma=0.0, drift_sigma=0.1),
            SimulationPlan(n_trials_per_condition=50, seed=5),
        )
        r1_values = {t.r1 for t in trials}
        assert len(r1_values) > 10  # genuinely varies across repetitions


class TestNicAgent:
    def test_noiseless_multisets_identical_across_predecessors(self):
        trials = simulate(
            NicAgent(joint=GAUSS, noise_sigma=0.0),
            SimulationPlan(n_trials_per_condition=200, seed=17),
        )
        grouped = condition_values(trials)
        ids = ("EC", "EL", "EK")
        for second in ids:
            samples = [
                sorted(grouped[(first, second)]) for first in ids if first != second
            ]
            assert samples[0] == samples[1]

    def test_discrete_joint_distribution(self):
        joint = DiscreteJoint(((0.5, (0.2, 0.4, 0.6)), (0.5, (0.8, 0.6, 0.4))))
        trials = simulate(
            NicAgent(joint=joint, noise_sigma=0.0),
            SimulationPlan(n_trials_per_condition=400, seed=23),
        )
        values = condition_values(trials)[("EC", "EL")]
        assert set(np.round(values, 6)) <= {0.4, 0.6}
        assert np.mean(values) == pytest.approx(0.5, abs=0.08)

    def test_equality_holds_within_sampling_error(self):
        # Cor-1-style empirical check at N = 10^4 per condition.
        trials = simulate(
            NicAgent(joint=GAUSS, noise_sigma=0.05),
            SimulationPlan(n_trials_per_condition=10_000, seed=29),
        )
        stats = estimate_stats(trials)
        labels = stats.labels
        for j, second in enumerate(labels):
            others = [f for f in labels if f != second]
            means = [stats.c_hat.entry(f, second) for f in others]
            ses = []
            for f in others:
                i = labels.index(f)
                ses.append(stats.c_hat.ses[i, j])
            pooled_se = math.sqrt(sum(s * s for s in ses))
            assert abs(means[0] - means[1]) < 4 * pooled_se + 1e-9

    def test_binarized_data_respects_triangle(self):
        trials = simulate(
            NicAgent(joint=GAUSS, noise_sigma=0.05),
            SimulationPlan(n_trials_per_condition=2000, seed=31),
        )
        report = analyze_trials(trials, n_permutations=1000, n_bootstrap=1000, seed=31)
        for t in report.triangle_tests:
            assert t.slack >= -0.05
            assert t.bootstrap_violation_fraction < 0.95

    def test_monotonicity_adding_null_trials_keeps_consistency(self):
        agent = NicAgent(joint=GAUSS, noise_sigma=0.05)
        small = simulate(agent, SimulationPlan(n_trials_per_condition=300, seed=41))
        large = simulate(agent, SimulationPlan(n_trials_per_condition=600, seed=41))
        r_small = analyze_trials(small, n_permutations=1000, seed=41)
        r_large = analyze_trials(large, n_permutations=1000, seed=41)
        assert r_small.verdict == "consistent_with_nic"
        assert r_large.verdict == "consistent_with_nic"


class TestInvasiveAgent:
    def test_shift_propagates_to_condition_mean(self):
        # delta added only when EC runs first: C(EC->EL) - C(EK->EL) = delta
        # in expectation (latent values bounded so clipping never bites).
        joint = DiscreteJoint((
            (0.25, (0.2, 0.3, 0.4)),
            (0.25, (0.3, 0.5, 0.2)),
            (0.25, (0.4, 0.2, 0.5)),
            (0.25, (0.5, 0.4, 0.3)),
        ))
        agent = InvasiveClassicalAgent(joint=joint, delta=0.2, after="EC", noise_sigma=0.0)
        trials = simulate(agent, SimulationPlan(n_trials_per_condition=30_000, seed=37))
        stats = estimate_stats(trials)
        observed = stats.c_hat.entry("EC", "EL") - stats.c_hat.entry("EK", "EL")
        se = math.sqrt(
            stats.c_hat.ses[stats.labels.index("EC"), stats.labels.index("EL")] ** 2
            + stats.c_hat.ses[stats.labels.index("EK"), stats.labels.index("EL")] ** 2
        )
        assert observed == pytest.approx(0.2, abs=4 * se + 1e-6)

    def test_zero_delta_behaves_as_nic(self):
        joint = DiscreteJoint(((1.0, (0.3, 0.5, 0.7)),))
        agent = InvasiveClassicalAgent(joint=joint, delta=0.0, after="EC", noise_sigma=0.0)
        trials = simulate(agent, SimulationPlan(n_trials_per_condition=50, seed=43))
        for t in trials:
            expected = {"EC": 0.3, "EL": 0.5, "EK": 0.7}[t.second_eval]
            assert t.r2 == pytest.approx(expected, abs=1e-12)

    def test_after_must_name_an_evaluation(self):
        with pytest.raises(ValueError, match="after"):
            InvasiveClassicalAgent(joint=GAUSS, after="EX")


class TestCovariates:
    def test_covariates_present_and_valid(self):
        trials = simulate(
            NicAgent(joint=GAUSS, noise_sigma=0.02),
            SimulationPlan(n_trials_per_condition=50, seed=47),
        )
        for t in trials:
            assert t.covariates is not None
            assert t.covariates["accuracy"] in (0.0, 1.0)
            assert t.covariates["response_time_ms"] > 0
            assert t.covariates["difficulty"] in (0.25, 0.5, 0.75)

    def test_covariates_can_be_disabled(self):
        agent = NicAgent(joint=GAUSS, covariates=CovariateModel(enabled=False))
        trials = simulate(agent, SimulationPlan(n_trials_per_condition=5, seed=1))
        assert all(t.covariates is None for t in trials)


class TestPowerCurve:
    def test_rotation_agent_power_grows_and_saturates(self):
        agent = RotationAgent(noise_sigma=0.05)
        points = power_curve(
            agent,
            SimulationPlan(n_trials_per_condition=1, seed=0),
            n_grid=[10, 200],
            replications=100,
            alpha=0.01,
            n_permutations=1000,
            seed=0,
        )
        assert points[0].rejection_rate <= points[1].rejection_rate + 0.1
        assert points[1].rejection_rate >= 0.99

    def test_nic_agent_stays_at_alpha(self):
        agent = NicAgent(joint=GAUSS, noise_sigma=0.05)
        points = power_curve(
            agent,
            SimulationPlan(n_trials_per_condition=1, seed=0),
            n_grid=[60],
            replications=100,
            alpha=0.01,
            n_permutations=1000,
            seed=1,
        )
        se = math.sqrt(0.01 * 0.99 / 100)
        assert points[0].rejection_rate <= 0.01 + 2 * se

    def test_replications_floor(self):
        with pytest.raises(ValueError, match="100"):
            power_curve(
                NicAgent(joint=GAUSS),
                SimulationPlan(n_trials_per_condition=1, seed=0),
                n_grid=[10],
                replications=10,
            )


class TestAgentSpecs:
    def test_rotation_spec_roundtrip(self):
        payload = {
            "kind": "rotation",
            "noise_sigma": 0.05,
            "drift_sigma": 0.01,
            "params": {"alpha": math.pi / 3, "v0": [1, 1, 1]},
        }
        agent = agent_from_dict(payload)
        assert isinstance(agent, RotationAgent)
        assert agent.config.v0.distance_to(StateVector(1, 1, 1)) <= 1e-15

    def test_nic_spec_with_gaussian_joint(self):
        payload = {
            "kind": "nic",
            "noise_sigma": 0.02,
            "params": {
                "joint": {
                    "type": "gaussian",
                    "mean": [0.0, 0.0, 0.0],
                    "cov": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
                }
            },
        }
        assert isinstance(agent_from_dict(payload), NicAgent)

    def test_invasive_spec(self):
        payload = {
            "kind": "invasive_classical",
            "params": {
                "joint": {"type": "discrete", "atoms": [[1.0, [0.2, 0.3, 0.4]]]},
                "delta": 0.1,
                "after": "EL",
            },
        }
        agent = agent_from_dict(payload)
        assert isinstance(agent, InvasiveClassicalAgent)
        assert agent.after == "EL"

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            agent_from_dict({"kind": "wizard"})

    def test_drift_on_latent_agent_rejected(self):
        payload = {
            "kind": "nic",
            "drift_sigma": 0.1,
            "params": {"joint": {"type": "discrete", "atoms": [[1.0, [0.2, 0.3, 0.4]]]}},
        }
        with pytest.raises(ValueError, match="drift"):
            agent_from_dict(payload)

    def test_spec_json_roundtrip(self):
        payload = {
            "kind": "rotation",
            "noise_sigma": 0.05,
            "params": {},
        }
        again = json.loads(json.dumps(payload))
        assert isinstance(agent_from_dict(again), RotationAgent)

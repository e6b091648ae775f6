import math

import numpy as np
import pytest
from oracles import ExhaustiveMbm
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

import mbmtrack.mbm as mbm
from mbmtrack.gaussian import GaussianDensity, kalman_predict, kalman_update
from mbmtrack.mbm import (
    BirthComponent,
    BirthModel,
    FilterParams,
    GlobalHypothesis,
    HypothesisMeta,
    MbmState,
    SingleTargetHypothesis,
    BernoulliComponent,
)
from mbmtrack.sim import constant_velocity_model

NO_PRUNE = FilterParams(max_globals=10**9, gate_threshold=float("inf"))


def birth_at(x, y, existence=0.01, pos_std=3.0, vel_std=1.0):
    return BirthComponent(
        existence,
        GaussianDensity(
            [x, 0.0, y, 0.0], np.diag([pos_std**2, vel_std**2, pos_std**2, vel_std**2])
        ),
    )


def scenario1_birth():
    return BirthModel(
        (
            birth_at(140.0, 170.0),
            birth_at(165.0, 155.0),
            birth_at(150.0, 160.0),
            birth_at(160.0, 150.0),
        )
    )


def single_hypothesis_state(log_weight, existence, density, time=1):
    comp = BernoulliComponent(
        (SingleTargetHypothesis(log_weight, existence, density, HypothesisMeta(time, 1)),)
    )
    return MbmState((comp,), (GlobalHypothesis(0.0, (0,)),), time)


def check_invariants(state):
    assert abs(logsumexp([g.log_weight for g in state.global_hypotheses])) < 1e-9
    for comp in state.components:
        for h in comp.hypotheses:
            assert 0.0 <= h.existence <= 1.0
            np.testing.assert_allclose(h.density.covariance, h.density.covariance.T)
            assert np.linalg.eigvalsh(h.density.covariance).min() >= -1e-9
    for g in state.global_hypotheses:
        assert len(g.assignment_vector) == len(state.components)
        for comp, idx in zip(state.components, g.assignment_vector):
            assert 0 <= idx < len(comp.hypotheses)
        # measurements used at most once per global at the current step
        latest = [
            comp.hypotheses[idx].meta.association_history[-1]
            for comp, idx in zip(state.components, g.assignment_vector)
            if comp.hypotheses[idx].meta.association_history
        ]
        detections = [a for a in latest if a > 0]
        assert len(detections) == len(set(detections))


class TestInitAndPredict:
    def test_init_empty(self):
        state = mbm.init_empty()
        assert len(state.components) == 0
        assert len(state.global_hypotheses) == 1
        assert state.global_hypotheses[0].log_weight == 0.0
        assert state.global_hypotheses[0].assignment_vector == ()

    def test_birth_appends_components(self):
        model = constant_velocity_model(clutter_intensity=1e-4)
        state = mbm.predict(mbm.init_empty(), model, scenario1_birth())
        assert len(state.components) == 4
        assert len(state.global_hypotheses) == 1
        for comp in state.components:
            assert len(comp.hypotheses) == 1
            assert comp.hypotheses[0].existence == 0.01
            assert comp.hypotheses[0].log_weight == 0.0
        labels = [c.hypotheses[0].meta.label for c in state.components]
        assert labels == [(1, 1), (1, 2), (1, 3), (1, 4)]

    def test_survival_scales_existence(self):
        model = constant_velocity_model(survival_prob=0.99, clutter_intensity=1e-4)
        state = single_hypothesis_state(math.log(0.7), 0.5, GaussianDensity(np.zeros(4), np.eye(4)))
        out = mbm.predict(state, model, BirthModel())
        assert out.components[0].hypotheses[0].existence == pytest.approx(0.495)
        # per-hypothesis weights pass through prediction untouched
        assert out.components[0].hypotheses[0].log_weight == math.log(0.7)
        predicted = kalman_predict(GaussianDensity(np.zeros(4), np.eye(4)), model)
        np.testing.assert_allclose(
            out.components[0].hypotheses[0].density.covariance, predicted.covariance
        )
        assert len(out.global_hypotheses) == len(state.global_hypotheses)

    def test_globals_extended_and_weights_kept(self):
        model = constant_velocity_model(clutter_intensity=1e-4)
        base = mbm.predict(mbm.init_empty(), model, scenario1_birth())
        two = MbmState(
            base.components,
            (
                GlobalHypothesis(math.log(0.75), base.global_hypotheses[0].assignment_vector),
                GlobalHypothesis(math.log(0.25), base.global_hypotheses[0].assignment_vector),
            ),
            base.time,
        )
        out = mbm.predict(two, model, BirthModel((birth_at(0.0, 0.0), birth_at(5.0, 5.0))))
        assert len(out.global_hypotheses) == 2
        for g_in, g_out in zip(two.global_hypotheses, out.global_hypotheses):
            assert g_out.log_weight == g_in.log_weight
            assert g_out.assignment_vector == g_in.assignment_vector + (0, 0)


class TestMisdetectionUpdate:
    def test_certain_target_keeps_existence(self):
        model = constant_velocity_model(detection_prob=0.9, clutter_intensity=1e-4)
        state = single_hypothesis_state(0.0, 1.0, GaussianDensity(np.zeros(4), np.eye(4)))
        out = mbm.update(state, [], model, NO_PRUNE)
        h = out.components[0].hypotheses[0]
        assert math.exp(h.log_weight) == pytest.approx(0.1)
        assert h.existence == pytest.approx(1.0)
        assert h.meta.association_history == (0,)

    def test_half_existence_update(self):
        model = constant_velocity_model(detection_prob=0.9, clutter_intensity=1e-4)
        state = single_hypothesis_state(math.log(0.5), 0.5, GaussianDensity(np.zeros(4), np.eye(4)))
        out = mbm.update(state, [], model, NO_PRUNE)
        h = out.components[0].hypotheses[0]
        assert math.exp(h.log_weight) == pytest.approx(0.275)
        assert h.existence == pytest.approx(0.05 / 0.55)

    def test_empty_measurements_single_child_per_prior(self):
        model = constant_velocity_model(clutter_intensity=1e-4)
        state = mbm.predict(mbm.init_empty(), model, scenario1_birth())
        out = mbm.update(state, [], model, NO_PRUNE)
        assert len(out.global_hypotheses) == 1
        assert len(out.components) == len(state.components)
        for comp in out.components:
            assert len(comp.hypotheses) == 1
        check_invariants(out)


class TestDetectionUpdate:
    def test_single_measurement_two_globals_hand_weights(self):
        # One measurement close to the first birth site gates only that site,
        # so the posterior holds exactly a clutter global and a detection
        # global.
        model = constant_velocity_model(detection_prob=0.9, clutter_intensity=10.0 / 90000.0)
        params = FilterParams(max_globals=200, gate_threshold=20.0)
        state = mbm.predict(mbm.init_empty(), model, scenario1_birth())
        z = np.array([139.0, 171.0])
        out = mbm.update(state, [z], model, params)
        assert len(out.components) == 4
        assert len(out.global_hypotheses) == 2

        r, pd = 0.01, 0.9
        mis = 1.0 - r * pd
        s_mat = np.diag([10.0, 10.0])
        lik = multivariate_normal.pdf(z, mean=[140.0, 170.0], cov=s_mat)
        w_clutter = mis**4
        w_detect = mis**3 * r * pd * lik / model.clutter_intensity
        expected = np.array([w_clutter, w_detect]) / (w_clutter + w_detect)
        got = np.sort([math.exp(g.log_weight) for g in out.global_hypotheses])
        np.testing.assert_allclose(got, np.sort(expected), rtol=1e-9)
        check_invariants(out)

    def test_component_count_unchanged_by_update(self):
        rng = np.random.default_rng(4)
        model = constant_velocity_model(detection_prob=0.8, clutter_intensity=1e-4)
        state = mbm.predict(mbm.init_empty(), model, scenario1_birth())
        for _ in range(3):
            zs = rng.uniform(130, 180, size=(3, 2))
            out = mbm.update(state, zs, model, NO_PRUNE)
            assert len(out.components) == len(state.components)
            check_invariants(out)
            state = mbm.predict(out, model, BirthModel())

    def test_gate_threshold_excludes_hypotheses(self):
        model = constant_velocity_model(detection_prob=0.9, clutter_intensity=1e-4)
        birth = BirthModel((birth_at(0.0, 0.0, existence=0.5),))
        state = mbm.predict(mbm.init_empty(), model, birth)
        # statistic for this z is (14^2 + 14^2) / 10 = 39.2 > 20
        far = np.array([14.0, 14.0])
        out = mbm.update(state, [far], model, FilterParams(gate_threshold=20.0))
        assert len(out.global_hypotheses) == 1
        assert len(out.components[0].hypotheses) == 1
        # raising the gate admits the detection child
        wide = mbm.update(state, [far], model, FilterParams(gate_threshold=40.0))
        assert len(wide.global_hypotheses) == 2
        assert len(wide.components[0].hypotheses) == 2


class TestExhaustiveEquivalence:
    def test_update_matches_brute_force_over_three_steps(self):
        model = constant_velocity_model(detection_prob=0.8, clutter_intensity=5.0 / 1e4)
        birth1 = BirthModel(
            (birth_at(10.0, 10.0, existence=0.3, pos_std=2.0), birth_at(30.0, 30.0, existence=0.2, pos_std=2.0))
        )
        birth2 = BirthModel((birth_at(20.0, 20.0, existence=0.25, pos_std=3.0),))
        steps = [
            (birth1, [np.array([11.0, 9.5]), np.array([29.0, 31.0])]),
            (birth2, [np.array([12.0, 10.5]), np.array([50.0, 50.0]), np.array([21.0, 19.0])]),
            (BirthModel(), [np.array([13.0, 11.0])]),
        ]
        state = mbm.init_empty()
        oracle = ExhaustiveMbm(model)
        for birth, zs in steps:
            state = mbm.predict(state, model, birth)
            state = mbm.update(state, zs, model, NO_PRUNE)
            oracle.predict(birth.components)
            oracle.update(zs)
            check_invariants(state)

        table = oracle.global_table()
        seen_mass = 0.0
        for g in state.global_hypotheses:
            key = tuple(
                state.components[i].hypotheses[g.assignment_vector[i]].meta.association_history
                for i in range(len(state.components))
            )
            assert key in table
            weight = math.exp(g.log_weight)
            assert weight == pytest.approx(table[key], abs=1e-9)
            seen_mass += table[key]
            for i in range(len(state.components)):
                h = state.components[i].hypotheses[g.assignment_vector[i]]
                ref = oracle.component_params(i, h.meta.association_history)
                assert h.existence == pytest.approx(ref["r"], abs=1e-9)
                np.testing.assert_allclose(h.density.mean, ref["mean"], atol=1e-9)
                np.testing.assert_allclose(h.density.covariance, ref["cov"], atol=1e-9)
        # hypotheses not produced carry negligible exhaustive mass
        assert 1.0 - seen_mass < 1e-9

    def test_ranked_selection_is_restriction_of_exhaustive(self):
        # With a small hypothesis budget, every produced global must appear
        # in the exhaustive set with the same relative weight.
        model = constant_velocity_model(detection_prob=0.8, clutter_intensity=5.0 / 1e4)
        birth = BirthModel(
            (birth_at(10.0, 10.0, existence=0.3, pos_std=2.0), birth_at(30.0, 30.0, existence=0.2, pos_std=2.0))
        )
        zs = [np.array([11.0, 9.5]), np.array([29.0, 31.0]), np.array([10.5, 10.5])]
        state = mbm.predict(mbm.init_empty(), model, birth)
        pruned = mbm.update(state, zs, model, FilterParams(max_globals=3, gate_threshold=float("inf")))
        oracle = ExhaustiveMbm(model)
        oracle.predict(birth.components)
        oracle.update(zs)
        table = oracle.global_table()

        def key_of(st, g):
            return tuple(
                st.components[i].hypotheses[g.assignment_vector[i]].meta.association_history
                for i in range(len(st.components))
            )

        best = max(pruned.global_hypotheses, key=lambda g: g.log_weight)
        best_ref = table[key_of(pruned, best)]
        for g in pruned.global_hypotheses:
            ref = table[key_of(pruned, g)]
            assert g.log_weight - best.log_weight == pytest.approx(
                math.log(ref) - math.log(best_ref), abs=1e-9
            )


class TestPrune:
    def build_state(self, weights, vectors, hyp_counts=None):
        n = len(vectors[0])
        hyp_counts = hyp_counts or [max(v[i] for v in vectors) + 1 for i in range(n)]
        comps = []
        for i in range(n):
            hyps = tuple(
                SingleTargetHypothesis(
                    0.0,
                    0.9,
                    GaussianDensity(np.zeros(2) + j, np.eye(2)),
                    HypothesisMeta(1, i + 1, (j,)),
                )
                for j in range(hyp_counts[i])
            )
            comps.append(BernoulliComponent(hyps))
        total = logsumexp([math.log(w) for w in weights])
        globals_ = tuple(
            GlobalHypothesis(math.log(w) - total, tuple(v)) for w, v in zip(weights, vectors)
        )
        return MbmState(tuple(comps), globals_, 1)

    def test_within_limits_is_fixpoint(self):
        state = self.build_state([0.6, 0.4], [(0, 1), (1, 0)])
        out = mbm.prune(state, FilterParams(max_globals=10, prune_global_weight=1e-5))
        assert len(out.global_hypotheses) == 2
        got = sorted(math.exp(g.log_weight) for g in out.global_hypotheses)
        assert got == pytest.approx([0.4, 0.6])

    def test_duplicate_globals_merged(self):
        state = self.build_state([0.3, 0.2, 0.5], [(0, 0), (0, 0), (1, 1)])
        out = mbm.prune(state, FilterParams(max_globals=10, prune_global_weight=1e-5))
        assert len(out.global_hypotheses) == 2
        got = sorted(math.exp(g.log_weight) for g in out.global_hypotheses)
        assert got == pytest.approx([0.5, 0.5])

    def test_low_weight_globals_dropped(self):
        state = self.build_state([1.0 - 1e-6, 1e-6], [(0, 0), (1, 1)])
        out = mbm.prune(state, FilterParams(max_globals=10, prune_global_weight=1e-5))
        assert len(out.global_hypotheses) == 1
        assert out.global_hypotheses[0].log_weight == pytest.approx(0.0, abs=1e-12)

    def test_cap_keeps_highest_weights(self):
        weights = [0.4, 0.3, 0.2, 0.1]
        vectors = [(0, 0), (1, 1), (0, 1), (1, 0)]
        out = mbm.prune(
            self.build_state(weights, vectors),
            FilterParams(max_globals=2, prune_global_weight=1e-9),
        )
        assert len(out.global_hypotheses) == 2
        got = sorted(math.exp(g.log_weight) for g in out.global_hypotheses)
        np.testing.assert_allclose(got, [0.3 / 0.7, 0.4 / 0.7])

    def test_unreferenced_hypotheses_removed(self):
        state = self.build_state([0.9, 0.1], [(2, 0), (2, 1)], hyp_counts=[3, 2])
        out = mbm.prune(state, FilterParams(max_globals=10, prune_global_weight=1e-5))
        assert len(out.components[0].hypotheses) == 1
        assert len(out.components[1].hypotheses) == 2
        for g in out.global_hypotheses:
            assert g.assignment_vector[0] == 0

    def test_low_existence_component_removed(self):
        comp_low = BernoulliComponent(
            (
                SingleTargetHypothesis(
                    0.0, 1e-4, GaussianDensity(np.zeros(2), np.eye(2)), HypothesisMeta(1, 1)
                ),
            )
        )
        comp_high = BernoulliComponent(
            (
                SingleTargetHypothesis(
                    0.0, 0.9, GaussianDensity(np.zeros(2), np.eye(2)), HypothesisMeta(1, 2)
                ),
            )
        )
        state = MbmState(
            (comp_low, comp_high), (GlobalHypothesis(0.0, (0, 0)),), 1
        )
        out = mbm.prune(state, FilterParams(prune_existence=1e-3))
        assert len(out.components) == 1
        assert out.components[0].hypotheses[0].meta.label == (1, 2)
        assert out.global_hypotheses[0].assignment_vector == (0,)

    def test_all_below_threshold_keeps_best(self):
        state = self.build_state([0.5, 0.5], [(0, 0), (1, 1)])
        out = mbm.prune(state, FilterParams(prune_global_weight=0.9))
        assert len(out.global_hypotheses) == 1
        assert out.global_hypotheses[0].log_weight == pytest.approx(0.0)

    def test_merge_after_component_removal(self):
        # two globals that differ only in the hypothesis of a component that
        # gets removed must merge
        comp_doomed = BernoulliComponent(
            tuple(
                SingleTargetHypothesis(
                    0.0, 5e-4, GaussianDensity(np.zeros(2) + j, np.eye(2)), HypothesisMeta(1, 1, (j,))
                )
                for j in range(2)
            )
        )
        comp_kept = BernoulliComponent(
            (
                SingleTargetHypothesis(
                    0.0, 0.9, GaussianDensity(np.zeros(2), np.eye(2)), HypothesisMeta(1, 2)
                ),
            )
        )
        state = MbmState(
            (comp_doomed, comp_kept),
            (
                GlobalHypothesis(math.log(0.6), (0, 0)),
                GlobalHypothesis(math.log(0.4), (1, 0)),
            ),
            1,
        )
        out = mbm.prune(state, FilterParams(prune_existence=1e-3))
        assert len(out.components) == 1
        assert len(out.global_hypotheses) == 1
        assert out.global_hypotheses[0].log_weight == pytest.approx(0.0)

    def test_pattern_weight_ratios_preserved(self):
        weights = [0.35, 0.3, 0.2, 0.15]
        vectors = [(0, 0), (1, 1), (0, 1), (0, 0)]
        state = self.build_state(weights, vectors)
        out = mbm.prune(state, FilterParams(max_globals=10, prune_global_weight=1e-5))
        pre = {}
        for w, v in zip(weights, vectors):
            pre[v] = pre.get(v, 0.0) + w
        post = {g.assignment_vector: math.exp(g.log_weight) for g in out.global_hypotheses}
        ratio = None
        for vec, w_post in post.items():
            r = w_post / pre[vec]
            ratio = r if ratio is None else ratio
            assert r == pytest.approx(ratio, rel=1e-9)
            assert w_post >= pre[vec] - 1e-12


class TestEstimate:
    def make_state(self, existences, weights=None):
        comps = tuple(
            BernoulliComponent(
                (
                    SingleTargetHypothesis(
                        0.0,
                        r,
                        GaussianDensity([float(i), 0.0, 2.0 * i, 0.0], np.eye(4)),
                        HypothesisMeta(1, i + 1),
                    ),
                )
            )
            for i, r in enumerate(existences)
        )
        weights = weights or [1.0]
        total = logsumexp([math.log(w) for w in weights])
        globals_ = tuple(
            GlobalHypothesis(math.log(w) - total, tuple(0 for _ in comps)) for w in weights
        )
        return MbmState(comps, globals_, 1)

    def test_all_below_threshold_empty(self):
        state = self.make_state([0.1, 0.39, 0.2])
        assert mbm.estimate(state, FilterParams()) == []

    def test_exact_threshold_excluded(self):
        state = self.make_state([0.4])
        assert mbm.estimate(state, FilterParams(estimate_existence=0.4)) == []

    def test_detected_target_reported_with_label(self):
        model = constant_velocity_model(detection_prob=0.9, clutter_intensity=1e-4)
        birth = BirthModel((birth_at(0.0, 0.0, existence=0.5),))
        state = mbm.predict(mbm.init_empty(), model, birth)
        z = np.array([0.5, -0.5])
        out = mbm.update(state, [z], model, FilterParams())
        estimates = mbm.estimate(out, FilterParams())
        assert len(estimates) == 1
        assert estimates[0].label == (1, 1)
        expected, _ = kalman_update(
            GaussianDensity([0.0, 0.0, 0.0, 0.0], np.diag([9.0, 1.0, 9.0, 1.0])), z, model
        )
        np.testing.assert_allclose(estimates[0].state, expected.mean)

    def test_tie_breaks_to_lowest_index(self):
        comps = tuple(
            BernoulliComponent(
                (
                    SingleTargetHypothesis(
                        0.0,
                        r,
                        GaussianDensity(np.zeros(4), np.eye(4)),
                        HypothesisMeta(1, i + 1),
                    ),
                )
            )
            for i, r in enumerate([0.9, 0.2])
        )
        globals_ = (
            GlobalHypothesis(math.log(0.5), (0, 0)),
            GlobalHypothesis(math.log(0.5), (0, 0)),
        )
        state = MbmState(comps, globals_, 1)
        estimates = mbm.estimate(state, FilterParams())
        assert len(estimates) == 1


class TestStepAndLabels:
    def test_decay_to_empty_without_measurements(self):
        model = constant_velocity_model(clutter_intensity=1e-4)
        params = FilterParams()
        state, _ = mbm.step(mbm.init_empty(), [], model, scenario1_birth(), params)
        existences = []
        for _ in range(4):
            state, estimates = mbm.step(state, [], model, BirthModel(), params)
            assert estimates == []
            if state.components:
                existences.append(max(h.existence for c in state.components for h in c.hypotheses))
        assert len(state.components) == 0
        assert all(b < a for a, b in zip(existences, existences[1:], strict=False))

    def test_kalman_reduction_with_certain_birth(self):
        # p_D = 1, no clutter, one certain birth at the true prior: the MBM
        # recursion must coincide with a plain Kalman filter.
        rng = np.random.default_rng(6)
        model = constant_velocity_model(detection_prob=1.0, clutter_intensity=0.0)
        prior = GaussianDensity([0.0, 1.0, 0.0, -1.0], np.diag([4.0, 1.0, 4.0, 1.0]))
        birth = BirthModel((BirthComponent(1.0, prior),))
        params = FilterParams(max_globals=50, gate_threshold=float("inf"))

        truth = np.array([0.0, 1.0, 0.0, -1.0])
        state = mbm.init_empty()
        reference = prior
        for k in range(50):
            truth = model.transition @ truth + np.linalg.cholesky(
                model.process_noise
            ) @ rng.standard_normal(4)
            z = model.observation @ truth + rng.standard_normal(2)
            this_birth = birth if k == 0 else BirthModel()
            if k > 0:
                reference = kalman_predict(reference, model)
            state, estimates = mbm.step(state, [z], model, this_birth, params)
            reference, _ = kalman_update(reference, z, model)
            assert len(estimates) == 1
            np.testing.assert_allclose(estimates[0].state, reference.mean, atol=1e-8)
        check_invariants(state)

    def test_label_metadata_never_touches_numerics(self):
        rng = np.random.default_rng(12)
        model = constant_velocity_model(detection_prob=0.85, clutter_intensity=2e-4)
        birth = BirthModel((birth_at(140.0, 170.0), birth_at(160.0, 150.0)))
        params = FilterParams(max_globals=30)

        def run(label_births):
            state = mbm.init_empty()
            states = []
            rng_local = np.random.default_rng(12)
            for _ in range(8):
                zs = rng_local.uniform(130, 180, size=(rng_local.integers(0, 4), 2))
                state, _ = mbm.step(state, zs, model, birth, params, label_births=label_births)
                states.append(state)
            return states

        labeled = run(True)
        blank = run(False)
        for s_lab, s_blank in zip(labeled, blank):
            assert len(s_lab.components) == len(s_blank.components)
            assert len(s_lab.global_hypotheses) == len(s_blank.global_hypotheses)
            for g1, g2 in zip(s_lab.global_hypotheses, s_blank.global_hypotheses):
                assert g1.log_weight == g2.log_weight
                assert g1.assignment_vector == g2.assignment_vector
            for c1, c2 in zip(s_lab.components, s_blank.components):
                for h1, h2 in zip(c1.hypotheses, c2.hypotheses):
                    assert h1.log_weight == h2.log_weight
                    assert h1.existence == h2.existence
                    assert np.array_equal(h1.density.mean, h2.density.mean)
                    assert np.array_equal(h1.density.covariance, h2.density.covariance)
                    assert h1.meta.association_history == h2.meta.association_history

    def test_labels_unique_and_preserved(self):
        model = constant_velocity_model(detection_prob=0.9, clutter_intensity=1e-4)
        birth = BirthModel((birth_at(140.0, 170.0), birth_at(160.0, 150.0)))
        params = FilterParams(max_globals=20)
        rng = np.random.default_rng(3)
        state = mbm.init_empty()
        for _ in range(6):
            zs = rng.uniform(130, 180, size=(2, 2))
            state, _ = mbm.step(state, zs, model, birth, params)
            labels = [
                (h.meta.birth_time, h.meta.birth_index)
                for c in state.components
                for h in c.hypotheses
            ]
            # all hypotheses of one component share the component's label
            for comp in state.components:
                assert len({h.meta.label for h in comp.hypotheses}) == 1
            comp_labels = [c.hypotheses[0].meta.label for c in state.components]
            assert len(comp_labels) == len(set(comp_labels))

    def test_history_limit_bounds_metadata(self):
        model = constant_velocity_model(detection_prob=0.9, clutter_intensity=1e-4)
        birth = BirthModel((birth_at(0.0, 0.0, existence=0.9),))
        params = FilterParams(max_globals=5, history_limit=3)
        rng = np.random.default_rng(1)
        state = mbm.init_empty()
        for k in range(6):
            z = np.array([rng.normal(scale=0.5), rng.normal(scale=0.5)])
            state, _ = mbm.step(state, [z], model, birth if k == 0 else BirthModel(), params)
        for comp in state.components:
            for h in comp.hypotheses:
                assert len(h.meta.association_history) <= 3

    def test_normalization_error_when_everything_vanishes(self):
        state = mbm.init_empty()
        bad = MbmState((), (), 0)
        with pytest.raises(Exception):
            mbm.estimate(bad, FilterParams())
        # estimate on a healthy empty state returns no targets
        assert mbm.estimate(state, FilterParams()) == []

    def test_malformed_measurements_rejected(self):
        from mbmtrack.errors import InputError

        model = constant_velocity_model(clutter_intensity=1e-4)
        state = mbm.predict(mbm.init_empty(), model, scenario1_birth())
        with pytest.raises(InputError):
            mbm.update(state, [[1.0, 2.0], [3.0]], model, FilterParams())
        with pytest.raises(InputError):
            mbm.update(state, [[1.0, 2.0, 3.0]], model, FilterParams())

    def test_step_estimates_before_pruning(self, monkeypatch):
        calls = []
        orig_prune, orig_estimate = mbm.prune, mbm.estimate

        def spying_prune(state, params):
            calls.append("prune")
            return orig_prune(state, params)

        def spying_estimate(state, params):
            calls.append("estimate")
            return orig_estimate(state, params)

        monkeypatch.setattr(mbm, "prune", spying_prune)
        monkeypatch.setattr(mbm, "estimate", spying_estimate)
        model = constant_velocity_model(clutter_intensity=1e-4)
        mbm.step(mbm.init_empty(), [], model, scenario1_birth(), FilterParams())
        assert calls == ["estimate", "prune"]

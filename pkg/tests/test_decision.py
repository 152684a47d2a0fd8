"""Tests for the maintenance decision layer."""

import numpy as np
import pytest

from shmrisk.decision import (
    ACTIONS,
    NEVER,
    DecisionError,
    DecisionModel,
    DecisionScore,
    Strategy,
    UtilityTables,
    decision_accuracy,
    failure_probability,
    myopic_decide,
    optimal_strategy,
    transitions_until_maintenance,
)
from shmrisk.faulttree import (
    FaultTree,
    FTNode,
    failure_marginals,
    four_bay_fault_tree,
)
from shmrisk.transition import (
    DO_NOTHING,
    PERFORM_MAINTENANCE,
    LoadGrid,
    TransitionMatrix,
    build_transition,
    calibrate_wmax,
    maintenance_matrix,
)
from shmrisk.truss import build_four_bay_truss

TRUSS = build_four_bay_truss()
W_MAX = calibrate_wmax(TRUSS)
T_DN = build_transition(TRUSS, LoadGrid(W_MAX))
T_M = maintenance_matrix()
TREE = four_bay_fault_tree()
MODEL = DecisionModel.from_fault_tree(TREE, T_DN, T_M)

SINGLES = (1, 2, 4, 8, 16, 32, 64, 128)


def oracle_fails(decimal):
    """Hand-coded bay logic: bay i needs both its rising and falling
    diagonals failed, bits i-1 and i+3."""
    return any(
        (decimal >> (i - 1)) & 1 and (decimal >> (i + 3)) & 1 for i in range(1, 5)
    )


def oracle_strategy_utility(model, belief, strategy, utilities):
    """Expected utility by explicit support enumeration in python dicts."""
    dist = {s: float(p) for s, p in enumerate(belief) if p}

    def failure_term(d):
        return sum(
            p * (utilities.failed if model.failure_map[s] else utilities.operational)
            for s, p in d.items()
        )

    total = failure_term(dist)
    for action in strategy.actions:
        total += utilities.u_action(action)
        matrix = model.matrix_for(action).entries
        successor = {}
        for state, mass in dist.items():
            for nxt in np.nonzero(matrix[state])[0]:
                successor[int(nxt)] = successor.get(int(nxt), 0.0) + mass * float(
                    matrix[state, nxt]
                )
        dist = successor
        total += failure_term(dist)
    return total


def delta(decimal):
    belief = np.zeros(256)
    belief[decimal] = 1.0
    return belief


def classifier_belief(rng):
    p0 = float(rng.uniform(0.0, 1.0))
    loc = rng.dirichlet(np.ones(8))
    belief = np.zeros(256)
    belief[0] = p0
    belief[list(SINGLES)] = (1.0 - p0) * loc
    return belief


# ------------------------------------------------------------------- tables


class TestUtilityTables:
    def test_defaults(self):
        u = UtilityTables()
        assert (u.operational, u.failed, u.do_nothing, u.maintain) == (
            15.0, -285.0, 0.0, -100.0,
        )
        assert u.maintenance_cost == 100.0
        assert u.failure_cost == 285.0

    def test_myopic_threshold_is_one_third_at_default_costs(self):
        assert UtilityTables().myopic_threshold == 1.0 / 3.0

    def test_u_fail_and_u_action_lookup(self):
        u = UtilityTables()
        assert u.u_fail(0) == 15.0
        assert u.u_fail(1) == -285.0
        assert u.u_action(DO_NOTHING) == 0.0
        assert u.u_action(PERFORM_MAINTENANCE) == -100.0
        with pytest.raises(DecisionError, match="unknown action"):
            u.u_action("repair")

    def test_threshold_reaches_one_when_maintenance_cannot_pay(self):
        # C_m equal to u0 + C_f puts the threshold exactly at 1
        assert UtilityTables(failed=-85.0).myopic_threshold == 1.0
        assert UtilityTables(failed=-50.0).myopic_threshold > 1.0

    def test_threshold_infinite_when_failure_not_worse(self):
        assert UtilityTables(operational=15.0, failed=15.0).myopic_threshold == np.inf


class TestStrategy:
    def test_actions_property(self):
        s = Strategy(DO_NOTHING, PERFORM_MAINTENANCE)
        assert s.actions == (DO_NOTHING, PERFORM_MAINTENANCE)

    def test_invalid_action_rejected(self):
        with pytest.raises(DecisionError, match="unknown action"):
            Strategy("paint", DO_NOTHING)


# -------------------------------------------------------------------- model


class TestDecisionModel:
    def test_failure_map_matches_hand_coded_bay_logic(self):
        expected = np.array([float(oracle_fails(h)) for h in range(256)])
        assert np.array_equal(MODEL.failure_map, expected)

    def test_failing_state_count(self):
        assert int(MODEL.failure_map.sum()) == 175
        assert MODEL.failure_map[0] == 0.0

    def test_monotone_validation_rejects_healing_map(self):
        bad = np.array([float(oracle_fails(h)) for h in range(256)])
        bad[19] = 0.0  # 19 contains 17, which fails
        with pytest.raises(DecisionError, match="stay failed"):
            DecisionModel(T_DN, T_M, bad)

    def test_undamaged_state_must_be_operational(self):
        bad = np.ones(256)
        with pytest.raises(DecisionError, match="operational"):
            DecisionModel(T_DN, T_M, bad)

    def test_non_binary_entries_rejected(self):
        bad = np.zeros(256)
        bad[17] = 0.5
        with pytest.raises(DecisionError, match="0 or 1"):
            DecisionModel(T_DN, T_M, bad)

    def test_action_labels_enforced(self):
        with pytest.raises(DecisionError, match="do-nothing"):
            DecisionModel(T_M, T_M, MODEL.failure_map)
        with pytest.raises(DecisionError, match="perform-maintenance"):
            DecisionModel(T_DN, T_DN, MODEL.failure_map)

    def test_size_mismatch_rejected(self):
        small_dn = TransitionMatrix(np.eye(4), DO_NOTHING)
        small_m = TransitionMatrix(np.eye(4), PERFORM_MAINTENANCE)
        with pytest.raises(DecisionError, match="covers"):
            DecisionModel(small_dn, small_m, MODEL.failure_map)

    def test_from_fault_tree_requires_monitored_basics(self):
        other = FaultTree(
            [FTNode("x1", "basic"), FTNode("x2", "basic"),
             FTNode("top", "or", ("x1", "x2"))],
            "top",
        )
        with pytest.raises(DecisionError, match="monitored members"):
            DecisionModel.from_fault_tree(other, T_DN, T_M)

    def test_matrix_for(self):
        assert MODEL.matrix_for(DO_NOTHING) is T_DN
        assert MODEL.matrix_for(PERFORM_MAINTENANCE) is T_M
        with pytest.raises(DecisionError, match="unknown action"):
            MODEL.matrix_for("inspect")


# ------------------------------------------------------- failure probability


class TestFailureProbability:
    def test_point_beliefs(self):
        assert failure_probability(MODEL, delta(0)) == 0.0
        # m9 and m12 sit in different bays: no bay completes
        assert failure_probability(MODEL, delta(9)) == 0.0
        # m9 and m13 complete bay 1
        assert failure_probability(MODEL, delta(17)) == 1.0

    def test_uniform_belief_exact_share(self):
        uniform = np.full(256, 1.0 / 256.0)
        assert failure_probability(MODEL, uniform) == 175.0 / 256.0
        assert failure_probability(MODEL, uniform) == 0.68359375

    def test_dot_product_agrees_with_network_inference(self):
        rng = np.random.default_rng(20240819)
        for _ in range(100):
            belief = rng.dirichlet(np.ones(256))
            dot = failure_probability(MODEL, belief)
            inferred = failure_marginals(TREE, belief)["truss"]
            assert abs(dot - inferred) <= 1e-12

    def test_belief_validation(self):
        with pytest.raises(DecisionError, match="sum to 1"):
            failure_probability(MODEL, np.full(256, 1.0 / 128.0))
        with pytest.raises(DecisionError, match="nonnegative"):
            bad = np.zeros(256)
            bad[0], bad[1] = 1.5, -0.5
            failure_probability(MODEL, bad)
        with pytest.raises(DecisionError, match="256"):
            failure_probability(MODEL, np.ones(8) / 8.0)


# ------------------------------------------------------------------- solver


class TestOptimalStrategy:
    def test_undamaged_belief_does_nothing(self):
        strategy, utility = optimal_strategy(MODEL, delta(0))
        assert strategy.actions == (DO_NOTHING, DO_NOTHING)
        # two-step failure mass from undamaged: four reachable singles,
        # partner-cascade shares 0.45 + 0.1125 + 0.45 + 0.1125, each /800
        p2 = (0.45 + 0.1125 + 0.45 + 0.1125) / 800.0
        assert utility == pytest.approx(45.0 - 300.0 * p2, abs=1e-9)
        assert utility == pytest.approx(44.578125, abs=1e-9)

    def test_failed_bay_belief_maintains_immediately(self):
        strategy, utility = optimal_strategy(MODEL, delta(17))
        assert strategy.actions == (PERFORM_MAINTENANCE, DO_NOTHING)
        # 15 - 300 at slice 0, maintenance -100, then 15 + 15 intact
        assert utility == pytest.approx(-355.0, abs=1e-9)

    def test_enumeration_matches_support_oracle(self):
        rng = np.random.default_rng(77)
        strategies = [
            Strategy(a, b) for a in ACTIONS for b in ACTIONS
        ]
        for _ in range(50):
            belief = classifier_belief(rng)
            utilities = UtilityTables(failed=float(rng.uniform(-600, -50)))
            evaluated = {
                s.actions: oracle_strategy_utility(MODEL, belief, s, utilities)
                for s in strategies
            }
            chosen, utility = optimal_strategy(MODEL, belief, utilities)
            assert utility == pytest.approx(evaluated[chosen.actions], abs=1e-9)
            assert utility >= max(evaluated.values()) - 1e-9

    def test_second_decision_is_do_nothing_for_reachable_beliefs(self):
        rng = np.random.default_rng(13)
        beliefs = [delta(0), *[delta(s) for s in SINGLES]]
        uniform9 = np.zeros(256)
        uniform9[[0, *SINGLES]] = 1.0 / 9.0
        beliefs.append(uniform9)
        beliefs.extend(classifier_belief(rng) for _ in range(300))
        for belief in beliefs:
            strategy, _ = optimal_strategy(MODEL, belief)
            assert strategy.d1 == DO_NOTHING

    def test_exact_tie_breaks_toward_do_nothing(self):
        flat = UtilityTables(operational=0.0, failed=0.0, do_nothing=0.0, maintain=0.0)
        strategy, utility = optimal_strategy(MODEL, delta(17), flat)
        assert strategy.actions == (DO_NOTHING, DO_NOTHING)
        assert utility == 0.0

    def test_free_maintenance_weakly_dominates(self):
        free = UtilityTables(maintain=0.0)
        strategy, utility = optimal_strategy(MODEL, delta(17), free)
        assert strategy.d0 == PERFORM_MAINTENANCE
        assert utility == pytest.approx(-300.0 + 15.0 + 15.0 + 15.0, abs=1e-9)

    def test_argmax_invariant_to_constant_utility_shift(self):
        rng = np.random.default_rng(5)
        base = UtilityTables()
        for shift in (137.25, -42.0):
            shifted = UtilityTables(
                operational=base.operational + shift,
                failed=base.failed + shift,
                do_nothing=base.do_nothing + shift,
                maintain=base.maintain + shift,
            )
            for _ in range(40):
                belief = classifier_belief(rng)
                s0, u0 = optimal_strategy(MODEL, belief, base)
                s1, u1 = optimal_strategy(MODEL, belief, shifted)
                assert s0.actions == s1.actions
                # three failure nodes and two action nodes all shift
                assert u1 - u0 == pytest.approx(5.0 * shift, abs=1e-8)

    def test_belief_validation(self):
        with pytest.raises(DecisionError, match="sum to 1"):
            optimal_strategy(MODEL, np.zeros(256))


class TestEqualCostPoint:
    """Failure and maintenance both at 100: decisions stop depending on
    which belief the classifier produced."""

    def family(self):
        rng = np.random.default_rng(31415)
        beliefs = [delta(0), *[delta(s) for s in SINGLES]]
        uniform9 = np.zeros(256)
        uniform9[[0, *SINGLES]] = 1.0 / 9.0
        beliefs.append(uniform9)
        beliefs.extend(classifier_belief(rng) for _ in range(500))
        return beliefs

    def myopic_sequence(self, belief, utilities):
        sequence = []
        current = np.asarray(belief, dtype=float)
        for _ in range(2):
            action = myopic_decide(MODEL, current, utilities)
            sequence.append(action)
            current = current @ MODEL.matrix_for(action).entries
        return tuple(sequence)

    def test_myopic_sequences_identical_for_every_belief(self):
        utilities = UtilityTables(failed=-100.0)
        assert utilities.myopic_threshold == pytest.approx(100.0 / 115.0)
        sequences = {self.myopic_sequence(b, utilities) for b in self.family()}
        assert sequences == {(DO_NOTHING, DO_NOTHING)}

    def test_worst_single_stays_under_threshold(self):
        # the strongest one-step cascade is the bay 1 partner pair
        utilities = UtilityTables(failed=-100.0)
        worst = max(
            failure_probability(MODEL, delta(s) @ MODEL.do_nothing_matrix.entries)
            for s in SINGLES
        )
        assert worst == pytest.approx(0.45, abs=1e-12)
        assert worst < utilities.myopic_threshold

    def test_enumerated_solver_maintains_for_concentrated_singles(self):
        # a belief pinned to one bay-1 diagonal makes the three-slice
        # solver maintain immediately, while the one-step rule stays
        # under its 100/115 threshold; sweeps therefore fix the rule
        # choice rather than mixing solvers
        utilities = UtilityTables(failed=-100.0)
        strategy, utility = optimal_strategy(MODEL, delta(1), utilities)
        assert strategy.actions == (PERFORM_MAINTENANCE, DO_NOTHING)
        assert utility == pytest.approx(-55.0, abs=1e-9)
        assert self.myopic_sequence(delta(1), utilities) == (DO_NOTHING, DO_NOTHING)


# ------------------------------------------------------------------- myopic


class TestMyopicDecide:
    def test_undamaged_belief_does_nothing(self):
        assert myopic_decide(MODEL, delta(0)) == DO_NOTHING

    def test_threshold_behavior_around_one_third(self):
        # mixing certainty-of-failure into the undamaged belief gives a
        # one-step failure probability equal to the mixing weight
        for x, expected in [
            (1.0 / 3.0 - 1e-6, DO_NOTHING),
            (1.0 / 3.0 + 1e-6, PERFORM_MAINTENANCE),
            (0.25, DO_NOTHING),
            (0.5, PERFORM_MAINTENANCE),
        ]:
            belief = np.zeros(256)
            belief[0], belief[17] = 1.0 - x, x
            assert myopic_decide(MODEL, belief) == expected

    def test_enumeration_agrees_with_threshold_across_grid(self):
        utilities = UtilityTables()
        for x in np.linspace(0.2, 0.5, 61):
            belief = np.zeros(256)
            belief[0], belief[17] = 1.0 - x, x
            ahead = belief @ MODEL.do_nothing_matrix.entries
            p = failure_probability(MODEL, ahead)
            eu_dn = (1 - p) * utilities.operational + p * utilities.failed
            eu_m = utilities.operational + utilities.maintain
            by_enumeration = (
                PERFORM_MAINTENANCE if eu_m > eu_dn else DO_NOTHING
            )
            assert myopic_decide(MODEL, belief) == by_enumeration

    def test_strict_inequality_at_zero_threshold(self):
        free = UtilityTables(maintain=0.0)
        assert free.myopic_threshold == 0.0
        # next-step failure probability from undamaged is exactly zero,
        # and zero does not exceed a zero threshold
        assert myopic_decide(MODEL, delta(0), free) == DO_NOTHING
        assert myopic_decide(MODEL, delta(17), free) == PERFORM_MAINTENANCE

    def test_never_maintains_when_cost_dominates(self):
        cheap_failure = UtilityTables(failed=-50.0)
        assert cheap_failure.myopic_threshold > 1.0
        for decimal in (0, 1, 17, 255):
            assert myopic_decide(MODEL, delta(decimal), cheap_failure) == DO_NOTHING

    def test_agrees_with_two_slice_enumeration_on_random_beliefs(self):
        rng = np.random.default_rng(90125)
        utilities = UtilityTables()
        for _ in range(1000):
            belief = rng.dirichlet(np.ones(256) * rng.uniform(0.02, 2.0))
            eus = []
            for action in ACTIONS:
                ahead = belief @ MODEL.matrix_for(action).entries
                p0 = failure_probability(MODEL, belief)
                p1 = failure_probability(MODEL, ahead)
                eus.append(
                    (1 - p0) * utilities.operational + p0 * utilities.failed
                    + utilities.u_action(action)
                    + (1 - p1) * utilities.operational + p1 * utilities.failed
                )
            two_slice = DO_NOTHING if eus[0] >= eus[1] else PERFORM_MAINTENANCE
            assert myopic_decide(MODEL, belief, utilities) == two_slice


# -------------------------------------------------------------------- sweep


class TestTransitionsUntilMaintenance:
    def test_default_costs_first_maintenance_step(self):
        rows = transitions_until_maintenance(MODEL, [285.0], [100.0])
        assert rows == [(285.0, 100.0, 86)]

    def test_full_horizon_policy_maintains_earlier(self):
        rows = transitions_until_maintenance(MODEL, [285.0], [100.0], policy="limid")
        assert rows == [(285.0, 100.0, 41)]

    def test_never_when_maintenance_exceeds_failure_plus_reward(self):
        rows = transitions_until_maintenance(MODEL, [50.0, 85.0], [100.0])
        assert [r[2] for r in rows] == [NEVER, NEVER]

    def test_non_increasing_in_failure_cost(self):
        c_fail = [100.0, 150.0, 285.0, 500.0, 1000.0, 5000.0]
        rows = transitions_until_maintenance(MODEL, c_fail, [50.0])
        steps = [r[2] for r in rows]
        assert NEVER not in steps
        assert all(b <= a for a, b in zip(steps, steps[1:]))

    def test_non_decreasing_in_maintenance_cost(self):
        rows = transitions_until_maintenance(MODEL, [500.0], [50.0, 100.0, 200.0, 500.0, 600.0])
        steps = [r[2] for r in rows]
        numeric = [s for s in steps if s != NEVER]
        assert all(b >= a for a, b in zip(numeric, numeric[1:]))
        # once "never" appears it persists for larger maintenance costs
        first_never = steps.index(NEVER) if NEVER in steps else len(steps)
        assert all(s == NEVER for s in steps[first_never:])

    def test_cap_returns_sentinel(self):
        rows = transitions_until_maintenance(MODEL, [500.0], [500.0], cap=10)
        assert rows == [(500.0, 500.0, NEVER)]

    def test_grid_ordering_and_shape(self):
        rows = transitions_until_maintenance(MODEL, [285.0, 500.0], [50.0, 100.0])
        assert [(r[0], r[1]) for r in rows] == [
            (285.0, 50.0), (285.0, 100.0), (500.0, 50.0), (500.0, 100.0),
        ]

    def test_unknown_policy_rejected(self):
        with pytest.raises(DecisionError, match="policy"):
            transitions_until_maintenance(MODEL, [285.0], [100.0], policy="greedy")


# ----------------------------------------------------------------- accuracy


class TestDecisionAccuracy:
    def test_perfect_agreement(self):
        decided = [(DO_NOTHING, DO_NOTHING), (PERFORM_MAINTENANCE, DO_NOTHING)]
        score = decision_accuracy(decided, list(decided))
        assert score.accuracy == 1.0
        assert score.n_decisions == 4
        assert score.confusion[0, 1] == 0 and score.confusion[1, 0] == 0

    def test_total_disagreement_fills_one_cell(self):
        decided = [PERFORM_MAINTENANCE] * 5
        oracle = [DO_NOTHING] * 5
        score = decision_accuracy(decided, oracle)
        assert score.accuracy == 0.0
        assert score.confusion[1, 0] == 5
        assert score.confusion.sum() == 5

    def test_partition_identity_over_slices(self):
        rng = np.random.default_rng(8)
        pairs_decided = [
            (ACTIONS[rng.integers(2)], ACTIONS[rng.integers(2)]) for _ in range(60)
        ]
        pairs_oracle = [
            (ACTIONS[rng.integers(2)], ACTIONS[rng.integers(2)]) for _ in range(60)
        ]
        overall = decision_accuracy(pairs_decided, pairs_oracle)
        first = decision_accuracy(
            [d[0] for d in pairs_decided], [o[0] for o in pairs_oracle]
        )
        second = decision_accuracy(
            [d[1] for d in pairs_decided], [o[1] for o in pairs_oracle]
        )
        assert np.array_equal(overall.confusion, first.confusion + second.confusion)
        assert overall.n_decisions == first.n_decisions + second.n_decisions

    def test_strategy_objects_accepted(self):
        decided = [Strategy(DO_NOTHING, DO_NOTHING)]
        oracle = [(DO_NOTHING, PERFORM_MAINTENANCE)]
        score = decision_accuracy(decided, oracle)
        assert score.accuracy == 0.5
        assert score.confusion[0, 0] == 1 and score.confusion[0, 1] == 1

    def test_hand_checked_confusion(self):
        decided = [DO_NOTHING, DO_NOTHING, PERFORM_MAINTENANCE, PERFORM_MAINTENANCE]
        oracle = [DO_NOTHING, PERFORM_MAINTENANCE, DO_NOTHING, PERFORM_MAINTENANCE]
        score = decision_accuracy(decided, oracle)
        assert score.confusion.tolist() == [[1, 1], [1, 1]]
        assert score.accuracy == 0.5

    def test_length_mismatch_rejected(self):
        with pytest.raises(DecisionError, match="length mismatch"):
            decision_accuracy([DO_NOTHING], [DO_NOTHING, DO_NOTHING])
        with pytest.raises(DecisionError, match="length mismatch"):
            decision_accuracy([(DO_NOTHING, DO_NOTHING)], [(DO_NOTHING,)])

    def test_unknown_action_rejected(self):
        with pytest.raises(DecisionError, match="unknown action"):
            decision_accuracy(["inspect"], [DO_NOTHING])

    def test_empty_lists(self):
        score = decision_accuracy([], [])
        assert score.n_decisions == 0
        assert score.accuracy == 1.0

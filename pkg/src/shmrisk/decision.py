"""Maintenance decisions from health-state beliefs.

The planning model unrolls three failure slices separated by two
maintenance decisions.  A decision either leaves the structure alone,
letting the load-driven transition matrix act, or performs maintenance,
which restores the undamaged state with certainty.  Failure at each slice
is read off the health state through a fault-tree failure map, and each
strategy is scored by total expected utility.

Two solvers are provided: exhaustive enumeration of the four strategies
(the influence diagram is small enough to solve exactly) and a one-step
lookahead rule with a closed-form threshold, used by the cost sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .faulttree import CROSS_MEMBERS, FaultTree, HealthState
from .transition import DO_NOTHING, PERFORM_MAINTENANCE, TransitionMatrix

__all__ = [
    "ACTIONS",
    "NEVER",
    "DecisionError",
    "UtilityTables",
    "Strategy",
    "DecisionModel",
    "DecisionScore",
    "failure_probability",
    "optimal_strategy",
    "myopic_decide",
    "transitions_until_maintenance",
    "decision_accuracy",
]

ACTIONS = (DO_NOTHING, PERFORM_MAINTENANCE)
NEVER = "never"

_BELIEF_SUM_TOL = 1e-9


class DecisionError(ValueError):
    """Raised for invalid beliefs, utilities, or model structure."""


@dataclass(frozen=True)
class UtilityTables:
    """Utility of each failure outcome and each action.

    Defaults: operating intact is worth 15, failing costs 285, doing
    nothing is free, maintenance costs 100.
    """

    operational: float = 15.0
    failed: float = -285.0
    do_nothing: float = 0.0
    maintain: float = -100.0

    def u_fail(self, failed) -> float:
        return self.failed if failed else self.operational

    def u_action(self, action: str) -> float:
        if action == DO_NOTHING:
            return self.do_nothing
        if action == PERFORM_MAINTENANCE:
            return self.maintain
        raise DecisionError(f"unknown action {action!r}")

    @property
    def maintenance_cost(self) -> float:
        """Cost of maintaining relative to doing nothing."""
        return self.do_nothing - self.maintain

    @property
    def failure_cost(self) -> float:
        return -self.failed

    @property
    def myopic_threshold(self) -> float:
        """One-step failure probability above which maintenance pays.

        Comparing one-step expected utilities gives: maintain wins iff
        p(u0 + C_f) > C_m, so the threshold is C_m / (u0 + C_f).  A
        non-positive denominator means failure is no worse than
        operating, so no finite probability justifies the cost.
        """
        denominator = self.operational + self.failure_cost
        if denominator <= 0:
            return float("inf")
        return self.maintenance_cost / denominator


@dataclass(frozen=True)
class Strategy:
    """A pair of decisions; d1 is taken knowing only which d0 was chosen.

    Because d0 is fixed by the strategy itself, the d1 policy collapses
    to the single action on the realized branch, so four (d0, d1) pairs
    enumerate every distinct behavior of the diagram.
    """

    d0: str
    d1: str

    def __post_init__(self):
        for action in (self.d0, self.d1):
            if action not in ACTIONS:
                raise DecisionError(f"unknown action {action!r}")

    @property
    def actions(self) -> tuple:
        return (self.d0, self.d1)


# enumeration order doubles as the tie-break: cheaper action first
_STRATEGIES = (
    Strategy(DO_NOTHING, DO_NOTHING),
    Strategy(DO_NOTHING, PERFORM_MAINTENANCE),
    Strategy(PERFORM_MAINTENANCE, DO_NOTHING),
    Strategy(PERFORM_MAINTENANCE, PERFORM_MAINTENANCE),
)


class DecisionModel:
    """Transition matrices for both actions plus the failure map.

    ``failure_map[h]`` is 1 when health state ``h`` fails the structure.
    The map must mark the undamaged state operational and be monotone:
    failing states cannot heal by losing no members, so adding a failed
    member never clears the flag.
    """

    def __init__(
        self,
        do_nothing_matrix: TransitionMatrix,
        maintenance_matrix: TransitionMatrix,
        failure_map,
    ):
        failure_map = np.asarray(failure_map, dtype=float)
        if failure_map.ndim != 1:
            raise DecisionError("failure map must be a vector")
        n = failure_map.shape[0]
        if not np.all(np.isin(failure_map, (0.0, 1.0))):
            raise DecisionError("failure map entries must be 0 or 1")
        if failure_map[0] != 0.0:
            raise DecisionError("undamaged state must be operational")
        if n & (n - 1):
            raise DecisionError(f"state count must be a power of two, got {n}")
        n_bits = n.bit_length() - 1
        states = np.arange(n)
        for bit in range(n_bits):
            with_bit = states | (1 << bit)
            if np.any(failure_map[states] > failure_map[with_bit]):
                raise DecisionError(
                    "failure map must stay failed when more members fail"
                )
        for matrix, action in (
            (do_nothing_matrix, DO_NOTHING),
            (maintenance_matrix, PERFORM_MAINTENANCE),
        ):
            if matrix.action != action:
                raise DecisionError(
                    f"expected a {action!r} matrix, got {matrix.action!r}"
                )
            if matrix.n_states != n:
                raise DecisionError(
                    f"matrix for {action!r} covers {matrix.n_states} states, "
                    f"failure map covers {n}"
                )
        self.do_nothing_matrix = do_nothing_matrix
        self.maintenance_matrix = maintenance_matrix
        self.failure_map = failure_map
        self.n_states = n

    @classmethod
    def from_fault_tree(
        cls,
        tree: FaultTree,
        do_nothing_matrix: TransitionMatrix,
        maintenance_matrix: TransitionMatrix,
    ) -> "DecisionModel":
        """Evaluate the tree over all health states to build the map."""
        if sorted(tree.basic_ids) != sorted(CROSS_MEMBERS):
            raise DecisionError(
                "fault tree basic events must be exactly the monitored members"
            )
        failure_map = np.empty(2 ** len(CROSS_MEMBERS))
        for decimal in range(failure_map.shape[0]):
            failed = set(HealthState(decimal).failed_members)
            assignment = {name: name in failed for name in CROSS_MEMBERS}
            failure_map[decimal] = float(tree.evaluate(assignment))
        return cls(do_nothing_matrix, maintenance_matrix, failure_map)

    def matrix_for(self, action: str) -> TransitionMatrix:
        if action == DO_NOTHING:
            return self.do_nothing_matrix
        if action == PERFORM_MAINTENANCE:
            return self.maintenance_matrix
        raise DecisionError(f"unknown action {action!r}")


def _checked_belief(model: DecisionModel, belief) -> np.ndarray:
    belief = np.asarray(belief, dtype=float)
    if belief.shape != (model.n_states,):
        raise DecisionError(
            f"belief must have {model.n_states} entries, got shape {belief.shape}"
        )
    if not np.all(np.isfinite(belief)) or np.any(belief < 0):
        raise DecisionError("belief entries must be finite and nonnegative")
    if abs(float(belief.sum()) - 1.0) > _BELIEF_SUM_TOL:
        raise DecisionError(f"belief must sum to 1, got {belief.sum()!r}")
    return belief


def failure_probability(model: DecisionModel, belief) -> float:
    """Probability that the structure is failed under the given belief.

    The dot product against the failure map agrees with inference on the
    fault tree compiled to a network with the belief attached; the test
    suite checks the two routes against each other.
    """
    belief = _checked_belief(model, belief)
    return float(belief @ model.failure_map)


def _expected_failure_utility(belief, model, utilities):
    p = float(belief @ model.failure_map)
    return utilities.operational * (1.0 - p) + utilities.failed * p


def _strategy_utility(model, belief, strategy, utilities):
    total = _expected_failure_utility(belief, model, utilities)
    current = belief
    for action in strategy.actions:
        total += utilities.u_action(action)
        current = current @ model.matrix_for(action).entries
        total += _expected_failure_utility(current, model, utilities)
    return total


def optimal_strategy(
    model: DecisionModel,
    belief,
    utilities: UtilityTables = UtilityTables(),
) -> tuple:
    """Exhaustively score the four strategies and return the best.

    Expected utility sums the failure utility of all three slices (the
    first is decision independent, a constant offset that cannot move
    the argmax) and the cost of both actions.  Exact ties go to the
    earlier strategy in enumeration order, which lists the cheaper
    do-nothing branches first.
    """
    belief = _checked_belief(model, belief)
    best_strategy, best_utility = None, -np.inf
    for strategy in _STRATEGIES:
        utility = _strategy_utility(model, belief, strategy, utilities)
        if utility > best_utility:
            best_strategy, best_utility = strategy, utility
    return best_strategy, best_utility


def myopic_decide(
    model: DecisionModel,
    belief,
    utilities: UtilityTables = UtilityTables(),
) -> str:
    """One-step lookahead: maintain only when the failure risk after a
    further load application exceeds the closed-form cost threshold."""
    belief = _checked_belief(model, belief)
    ahead = belief @ model.do_nothing_matrix.entries
    p_next = float(ahead @ model.failure_map)
    if p_next > utilities.myopic_threshold:
        return PERFORM_MAINTENANCE
    return DO_NOTHING


def _steps_until_maintenance(model, utilities, cap, policy):
    if policy == "myopic":
        if utilities.myopic_threshold >= 1.0:
            return NEVER
        decide = lambda b: myopic_decide(model, b, utilities)
    elif policy == "limid":
        decide = lambda b: optimal_strategy(model, b, utilities)[0].d0
    else:
        raise DecisionError(f"unknown policy {policy!r}")
    belief = np.zeros(model.n_states)
    belief[0] = 1.0
    for step in range(cap):
        if decide(belief) == PERFORM_MAINTENANCE:
            return step
        belief = belief @ model.do_nothing_matrix.entries
    return NEVER


def transitions_until_maintenance(
    model: DecisionModel,
    c_fail: Iterable[float],
    c_maint: Iterable[float],
    base: UtilityTables = UtilityTables(),
    cap: int = 10_000,
    policy: str = "myopic",
) -> list:
    """Steps an initially undamaged structure runs before maintenance.

    For each cost pair the utilities keep the base operating reward and
    do-nothing cost but charge ``-c_fail`` for failure and ``-c_maint``
    for maintenance.  Starting from certainty in the undamaged state,
    the belief is propagated by the do-nothing matrix until the policy
    first says maintain; that step index is reported, or ``NEVER`` when
    the threshold is unreachable or the cap runs out.  ``policy`` picks
    the myopic rule (default) or the full-horizon strategy's first
    action.
    """
    rows = []
    for cf in c_fail:
        for cm in c_maint:
            utilities = UtilityTables(
                operational=base.operational,
                failed=-float(cf),
                do_nothing=base.do_nothing,
                maintain=-float(cm),
            )
            rows.append((float(cf), float(cm),
                         _steps_until_maintenance(model, utilities, cap, policy)))
    return rows


@dataclass(frozen=True)
class DecisionScore:
    """2x2 action confusion (rows decided, columns oracle) and accuracy."""

    confusion: np.ndarray
    accuracy: float
    n_decisions: int


def _as_action_tuple(item) -> tuple:
    if isinstance(item, Strategy):
        return item.actions
    if isinstance(item, str):
        actions = (item,)
    else:
        actions = tuple(item)
    for action in actions:
        if action not in ACTIONS:
            raise DecisionError(f"unknown action {action!r}")
    return actions


def decision_accuracy(decided: Sequence, oracle: Sequence) -> DecisionScore:
    """Compare decided action sequences against oracle sequences.

    Elements may be single actions, (d0, d1) tuples, or Strategy
    objects; paired elements must have the same number of actions.
    Confusion rows index the decided action, columns the oracle action,
    in the order (do-nothing, maintain).
    """
    if len(decided) != len(oracle):
        raise DecisionError(
            f"length mismatch: {len(decided)} decided vs {len(oracle)} oracle"
        )
    confusion = np.zeros((2, 2), dtype=int)
    index = {DO_NOTHING: 0, PERFORM_MAINTENANCE: 1}
    for decided_item, oracle_item in zip(decided, oracle):
        decided_actions = _as_action_tuple(decided_item)
        oracle_actions = _as_action_tuple(oracle_item)
        if len(decided_actions) != len(oracle_actions):
            raise DecisionError(
                f"length mismatch within a pair: {len(decided_actions)} vs "
                f"{len(oracle_actions)} actions"
            )
        for d, o in zip(decided_actions, oracle_actions):
            confusion[index[d], index[o]] += 1
    total = int(confusion.sum())
    accuracy = float(np.trace(confusion) / total) if total else 1.0
    return DecisionScore(confusion, accuracy, total)

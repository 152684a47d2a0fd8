"""Fault trees over basic events with AND/OR gates.

A tree is a DAG of nodes reachable from a designated top event; shared
subtrees are allowed and handled exactly by compiling the tree to a
Bayesian network (one binary variable per node, deterministic gate CPDs)
rather than by independence formulas.  The module also owns the health
codec for the monitored truss: an integer whose bits flag failed
cross-members, and a bridge that attaches a belief over that integer to
the compiled network so any node's failure marginal can be queried.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .pgm import DiscreteNetwork, Factor, Variable, infer

__all__ = [
    "FTNode",
    "FaultTree",
    "HealthState",
    "CROSS_MEMBERS",
    "SINGLE_FAILURE_STATES",
    "NUM_CROSS_MEMBERS",
    "four_bay_fault_tree",
    "to_network",
    "top_event_probability",
    "failure_marginals",
    "FaultTreeError",
    "FaultTreeFormatError",
]

GATE_KINDS = ("and", "or")
NODE_KINDS = ("basic",) + GATE_KINDS

#: Removable cross-members of the four-bay truss, in health-bit order
#: (bit 0 of the decimal health state flags m9, bit 7 flags m16).
CROSS_MEMBERS = ("m9", "m10", "m11", "m12", "m13", "m14", "m15", "m16")
NUM_CROSS_MEMBERS = len(CROSS_MEMBERS)

#: Decimal health states with exactly one failed cross-member.
SINGLE_FAILURE_STATES = tuple(1 << i for i in range(NUM_CROSS_MEMBERS))

BELIEF_SUM_TOL = 1e-9
HEALTH_VARIABLE = "health_state"


class FaultTreeError(ValueError):
    """The tree structure violates a requirement."""


class FaultTreeFormatError(FaultTreeError):
    """A fault-tree document could not be parsed."""


@dataclass(frozen=True)
class HealthState:
    """Bit-coded condition of the eight removable cross-members.

    Bit i (least significant first) flags failure of ``CROSS_MEMBERS[i]``,
    so m9 failed alone is decimal 1 and m16 failed alone is decimal 128.
    """

    decimal: int

    def __post_init__(self) -> None:
        if not 0 <= self.decimal < 2**NUM_CROSS_MEMBERS:
            raise ValueError(f"health state {self.decimal} outside 0..255")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "HealthState":
        bits = tuple(int(b) for b in bits)
        if len(bits) != NUM_CROSS_MEMBERS or any(b not in (0, 1) for b in bits):
            raise ValueError("need exactly 8 bits of 0/1")
        return cls(sum(b << i for i, b in enumerate(bits)))

    @classmethod
    def from_members(cls, names: Iterable[str]) -> "HealthState":
        value = 0
        for name in names:
            try:
                value |= 1 << CROSS_MEMBERS.index(name)
            except ValueError:
                raise ValueError(f"{name!r} is not a removable cross-member") from None
        return cls(value)

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.decimal >> i) & 1 for i in range(NUM_CROSS_MEMBERS))

    @property
    def failed_members(self) -> tuple[str, ...]:
        return tuple(m for i, m in enumerate(CROSS_MEMBERS) if (self.decimal >> i) & 1)

    def __int__(self) -> int:
        return self.decimal


@dataclass(frozen=True)
class FTNode:
    """One node: a basic event or an AND/OR gate over child node ids."""

    id: str
    kind: str
    children: tuple[str, ...] = ()
    prior: float | None = None


class FaultTree:
    """Validated fault tree with a designated top event.

    Nodes keep their document order, which also fixes the default bit
    order used when a decimal health belief is attached: the i-th basic
    event in document order carries bit i (least significant first).
    """

    def __init__(self, nodes: Iterable[FTNode], top: str) -> None:
        self.nodes: dict[str, FTNode] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise FaultTreeError(f"duplicate node id {node.id!r}")
            self.nodes[node.id] = node
        if top not in self.nodes:
            raise FaultTreeError(f"top event {top!r} is not a node")
        self.top = top
        self._validate()

    def _validate(self) -> None:
        for node in self.nodes.values():
            if node.kind not in NODE_KINDS:
                raise FaultTreeError(f"node {node.id!r} has unknown kind {node.kind!r}")
            if node.kind == "basic":
                if node.children:
                    raise FaultTreeError(f"basic event {node.id!r} cannot have children")
                if node.prior is not None and not 0.0 <= node.prior <= 1.0:
                    raise FaultTreeError(f"prior of {node.id!r} outside [0, 1]")
            else:
                if node.prior is not None:
                    raise FaultTreeError(f"gate {node.id!r} cannot carry a prior")
                if len(node.children) < 2:
                    raise FaultTreeError(f"gate {node.id!r} needs at least 2 children")
                if len(set(node.children)) != len(node.children):
                    raise FaultTreeError(f"gate {node.id!r} lists a child twice")
                for child in node.children:
                    if child not in self.nodes:
                        raise FaultTreeError(
                            f"gate {node.id!r} references missing node {child!r}"
                        )
        # DAG check plus reachability from the top event
        state: dict[str, int] = {}

        def visit(name: str, stack: list[str]) -> None:
            mark = state.get(name)
            if mark == 1:
                return
            if mark == 0:
                raise FaultTreeError("cycle: " + " -> ".join(stack + [name]))
            state[name] = 0
            for child in self.nodes[name].children:
                visit(child, stack + [name])
            state[name] = 1

        visit(self.top, [])
        unreachable = sorted(set(self.nodes) - set(state))
        if unreachable:
            raise FaultTreeError(f"nodes unreachable from top: {unreachable}")

    @property
    def basic_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes.values() if n.kind == "basic")

    @property
    def gate_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes.values() if n.kind != "basic")

    def evaluate(self, assignment: Mapping[str, int | bool]) -> bool:
        """Boolean top-event value for a full basic-event assignment."""
        basics = set(self.basic_ids)
        unknown = sorted(set(assignment) - basics)
        if unknown:
            raise FaultTreeError(f"assignment names non-basic ids: {unknown}")
        missing = sorted(basics - set(assignment))
        if missing:
            raise FaultTreeError(f"assignment misses basic events: {missing}")
        cache: dict[str, bool] = {k: bool(v) for k, v in assignment.items()}

        def value(name: str) -> bool:
            if name in cache:
                return cache[name]
            node = self.nodes[name]
            child_values = [value(c) for c in node.children]
            result = all(child_values) if node.kind == "and" else any(child_values)
            cache[name] = result
            return result

        return value(self.top)

    def with_priors(self, priors: Mapping[str, float]) -> "FaultTree":
        """Copy with basic-event priors replaced where given."""
        basics = set(self.basic_ids)
        unknown = sorted(set(priors) - basics)
        if unknown:
            raise FaultTreeError(f"priors name non-basic ids: {unknown}")
        for name, p in priors.items():
            if not 0.0 <= float(p) <= 1.0:
                raise FaultTreeError(f"prior of {name!r} outside [0, 1]")
        nodes = [
            FTNode(n.id, n.kind, n.children, float(priors[n.id]))
            if n.id in priors
            else n
            for n in self.nodes.values()
        ]
        return FaultTree(nodes, self.top)

    # ------------------------------------------------------------------
    # document format: {"top": id, "nodes": [{"id", "kind", "children",
    # "prob"}]} with unknown fields rejected
    # ------------------------------------------------------------------

    def to_document(self) -> dict:
        nodes = []
        for n in self.nodes.values():
            entry: dict = {"id": n.id, "kind": n.kind}
            if n.kind != "basic":
                entry["children"] = list(n.children)
            if n.prior is not None:
                entry["prob"] = n.prior
            nodes.append(entry)
        return {"top": self.top, "nodes": nodes}

    @classmethod
    def from_document(cls, doc) -> "FaultTree":
        if not isinstance(doc, dict):
            raise FaultTreeFormatError("document root must be an object")
        unknown = sorted(set(doc) - {"top", "nodes"})
        if unknown:
            raise FaultTreeFormatError(f"unknown top-level fields: {unknown}")
        if "top" not in doc or not isinstance(doc["top"], str):
            raise FaultTreeFormatError("field 'top' (string) is required")
        if "nodes" not in doc or not isinstance(doc["nodes"], list):
            raise FaultTreeFormatError("field 'nodes' (array) is required")
        nodes = []
        for i, raw in enumerate(doc["nodes"]):
            if not isinstance(raw, dict):
                raise FaultTreeFormatError(f"nodes[{i}] must be an object")
            label = raw.get("id", f"#{i}")
            unknown = sorted(set(raw) - {"id", "kind", "children", "prob"})
            if unknown:
                raise FaultTreeFormatError(
                    f"node {label!r}: unknown fields {unknown}"
                )
            if "id" not in raw or not isinstance(raw["id"], str):
                raise FaultTreeFormatError(f"nodes[{i}]: field 'id' (string) is required")
            if "kind" not in raw or raw["kind"] not in NODE_KINDS:
                raise FaultTreeFormatError(
                    f"node {label!r}: field 'kind' must be one of {list(NODE_KINDS)}"
                )
            children = raw.get("children", [])
            if not isinstance(children, list) or not all(isinstance(c, str) for c in children):
                raise FaultTreeFormatError(f"node {label!r}: 'children' must be a string array")
            prior = raw.get("prob")
            if prior is not None and not isinstance(prior, (int, float)):
                raise FaultTreeFormatError(f"node {label!r}: 'prob' must be a number")
            nodes.append(
                FTNode(raw["id"], raw["kind"], tuple(children), None if prior is None else float(prior))
            )
        try:
            return cls(nodes, doc["top"])
        except FaultTreeError as exc:
            raise FaultTreeFormatError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "FaultTree":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FaultTreeFormatError(
                f"line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
        return cls.from_document(doc)

    @classmethod
    def load(cls, path) -> "FaultTree":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_document(), fh, indent=2)
            fh.write("\n")


def four_bay_fault_tree() -> FaultTree:
    """Failure logic of the four-bay truss.

    Each bay fails when both of its crossed diagonals fail; the truss
    fails when any bay does.  Bay i pairs m{8+i} with m{12+i}.
    """
    nodes = [FTNode(m, "basic") for m in CROSS_MEMBERS]
    for i in range(4):
        nodes.append(FTNode(f"b{i + 1}", "and", (CROSS_MEMBERS[i], CROSS_MEMBERS[i + 4])))
    nodes.append(FTNode("truss", "or", tuple(f"b{i + 1}" for i in range(4))))
    return FaultTree(nodes, "truss")


def _gate_cpd(variables: dict[str, Variable], node: FTNode) -> Factor:
    scope = [variables[c] for c in node.children] + [variables[node.id]]
    combos = np.array(list(itertools.product((0, 1), repeat=len(node.children))))
    fires = combos.all(axis=1) if node.kind == "and" else combos.any(axis=1)
    table = np.zeros((len(combos), 2))
    table[np.arange(len(combos)), fires.astype(int)] = 1.0
    return Factor(scope, table)


def to_network(tree: FaultTree, priors: Mapping[str, float] | None = None) -> DiscreteNetwork:
    """Compile the tree to a Bayesian network.

    Every node becomes a binary variable; gates get deterministic 0/1
    CPDs over their children, basic events get their priors (0.5 stands
    in where none was given).  Shared subtrees become shared variables,
    so correlations are exact.
    """
    if priors:
        tree = tree.with_priors(priors)
    variables = {name: Variable(name, 2) for name in tree.nodes}
    cpds: list[Factor] = []
    for node in tree.nodes.values():
        if node.kind == "basic":
            p = 0.5 if node.prior is None else node.prior
            cpds.append(Factor([variables[node.id]], [1.0 - p, p]))
        else:
            cpds.append(_gate_cpd(variables, node))
    return DiscreteNetwork(cpds)


def top_event_probability(tree: FaultTree, priors: Mapping[str, float] | None = None) -> float:
    """P(top event) under independent basic-event priors."""
    net = to_network(tree, priors)
    return float(infer(net, tree.top).values[1])


def failure_marginals(
    tree: FaultTree,
    belief: np.ndarray,
    bit_order: Iterable[str] | None = None,
) -> dict[str, float]:
    """Per-node failure probabilities under a joint basic-event belief.

    The belief is a distribution over the 2**n bit-coded states of the n
    basic events (bit i belongs to ``bit_order[i]``, least significant
    first; defaults to document order, which is m9..m16 for the four-bay
    tree).  It is attached to the compiled network as the CPD of a single
    n-bit state variable with deterministic bit-extraction CPDs feeding
    the basic events, then every node is queried.  The belief must sum to
    one within 1e-9 and is renormalised exactly before attachment.
    """
    basics = tree.basic_ids
    order = tuple(bit_order) if bit_order is not None else basics
    if sorted(order) != sorted(basics):
        raise FaultTreeError("bit_order must list every basic event exactly once")
    n = len(order)
    belief = np.asarray(belief, dtype=float)
    if belief.shape != (2**n,):
        raise FaultTreeError(f"belief must have length {2 ** n}, got {belief.shape}")
    if belief.min() < 0:
        raise FaultTreeError("belief entries must be non-negative")
    total = belief.sum()
    if abs(total - 1.0) > BELIEF_SUM_TOL:
        raise FaultTreeError(f"belief sums to {total!r}, not 1 within {BELIEF_SUM_TOL}")
    if HEALTH_VARIABLE in tree.nodes:
        raise FaultTreeError(f"node id {HEALTH_VARIABLE!r} collides with the state variable")

    variables = {name: Variable(name, 2) for name in tree.nodes}
    state_var = Variable(HEALTH_VARIABLE, 2**n)
    cpds: list[Factor] = [Factor([state_var], belief / total)]
    states = np.arange(2**n)
    for i, name in enumerate(order):
        bit = (states >> i) & 1
        table = np.zeros((2**n, 2))
        table[np.arange(2**n), bit] = 1.0
        cpds.append(Factor([state_var, variables[name]], table))
    for node in tree.nodes.values():
        if node.kind != "basic":
            cpds.append(_gate_cpd(variables, node))
    net = DiscreteNetwork(cpds)
    return {name: float(infer(net, name).values[1]) for name in tree.nodes}

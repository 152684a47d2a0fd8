"""Independent oracle implementations shared across test modules.

Everything here recomputes results with nested loops and explicit index
arithmetic, deliberately avoiding the vectorised code paths in the package,
so agreement is meaningful.
"""

from __future__ import annotations

import itertools

import numpy as np

from shmrisk.pgm import DiscreteNetwork, Factor, Variable


def flat_index(cards: list[int], states: list[int]) -> int:
    """Row-major flat index, first variable slowest."""
    idx = 0
    for card, state in zip(cards, states):
        idx = idx * card + state
    return idx


def factor_value(factor: Factor, assignment: dict[str, int]) -> float:
    """Look up one table entry by independent index arithmetic."""
    cards = [v.cardinality for v in factor.scope]
    states = [assignment[v.name] for v in factor.scope]
    return float(factor.values[flat_index(cards, states)])


def all_assignments(scope) -> list[dict[str, int]]:
    names = [v.name for v in scope]
    ranges = [range(v.cardinality) for v in scope]
    return [dict(zip(names, combo)) for combo in itertools.product(*ranges)]


def oracle_product(f: Factor, g: Factor) -> dict[tuple, float]:
    """Pointwise product over the union scope, keyed by assignment tuples."""
    union = list(f.scope) + [v for v in g.scope if all(v.name != s.name for s in f.scope)]
    out = {}
    for assignment in all_assignments(union):
        key = tuple(sorted(assignment.items()))
        out[key] = factor_value(f, assignment) * factor_value(g, assignment)
    return out


def factor_as_dict(f: Factor) -> dict[tuple, float]:
    return {
        tuple(sorted(a.items())): factor_value(f, a) for a in all_assignments(f.scope)
    }


def oracle_joint(net: DiscreteNetwork) -> dict[tuple, float]:
    """Full joint by multiplying CPD entries assignment by assignment."""
    scope = [net.variables[name] for name in sorted(net.variables)]
    joint = {}
    for assignment in all_assignments(scope):
        p = 1.0
        for name, cpd in net.cpds.items():
            p *= factor_value(cpd, assignment)
        joint[tuple(sorted(assignment.items()))] = p
    return joint


def oracle_marginal(net: DiscreteNetwork, name: str) -> np.ndarray:
    """P(name) column from the enumerated joint."""
    card = net.variables[name].cardinality
    out = np.zeros(card)
    for key, p in oracle_joint(net).items():
        states = dict(key)
        out[states[name]] += p
    total = out.sum()
    return out / total


def oracle_conditional(net: DiscreteNetwork, name: str, evidence: dict[str, int]) -> np.ndarray:
    """P(name | evidence) from the enumerated joint."""
    card = net.variables[name].cardinality
    out = np.zeros(card)
    for key, p in oracle_joint(net).items():
        states = dict(key)
        if all(states[k] == v for k, v in evidence.items()):
            out[states[name]] += p
    total = out.sum()
    if total == 0.0:
        raise ZeroDivisionError("evidence has zero probability")
    return out / total


def random_network(
    rng: np.random.Generator,
    max_vars: int = 8,
    max_parents: int = 3,
    cards: tuple[int, ...] = (2,),
) -> DiscreteNetwork:
    """Random CPD-complete acyclic network for equivalence sweeps."""
    n = int(rng.integers(2, max_vars + 1))
    names = [f"x{i}" for i in range(n)]
    order = [names[i] for i in rng.permutation(n)]
    variables = {name: Variable(name, int(rng.choice(cards))) for name in names}
    cpds = []
    for pos, name in enumerate(order):
        upstream = order[:pos]
        k = int(rng.integers(0, min(max_parents, len(upstream)) + 1))
        parents = [upstream[i] for i in sorted(rng.choice(len(upstream), size=k, replace=False))] if k else []
        scope = [variables[p] for p in parents] + [variables[name]]
        rows = int(np.prod([variables[p].cardinality for p in parents])) if parents else 1
        card = variables[name].cardinality
        table = rng.random((rows, card)) + 0.05
        table /= table.sum(axis=1, keepdims=True)
        cpds.append(Factor(scope, table))
    return DiscreteNetwork(cpds)


# ---------------------------------------------------------------------------
# fault trees
# ---------------------------------------------------------------------------

from shmrisk.faulttree import FaultTree, FTNode  # noqa: E402


def random_fault_tree(rng: np.random.Generator, max_basics: int = 10) -> FaultTree:
    """Random AND/OR tree with occasional shared subtrees."""
    n_basics = int(rng.integers(2, max_basics + 1))
    nodes = [FTNode(f"e{i}", "basic", prior=float(rng.random())) for i in range(n_basics)]
    frontier = [n.id for n in nodes]
    consumed: list[str] = []
    gate = 0
    while len(frontier) > 1:
        k = int(rng.integers(2, min(4, len(frontier)) + 1))
        picks = sorted(rng.choice(len(frontier), size=k, replace=False).tolist(), reverse=True)
        children = [frontier.pop(i) for i in picks][::-1]
        if consumed and rng.random() < 0.3:
            extra = consumed[int(rng.integers(len(consumed)))]
            if extra not in children:
                children.append(extra)
        kind = "and" if rng.random() < 0.5 else "or"
        name = f"g{gate}"
        gate += 1
        nodes.append(FTNode(name, kind, tuple(children)))
        consumed.extend(children)
        frontier.append(name)
    return FaultTree(nodes, frontier[0])


def eval_tree_node(tree: FaultTree, name: str, assignment: dict[str, int]) -> bool:
    """Recursive node evaluation, independent of FaultTree.evaluate."""
    node = tree.nodes[name]
    if node.kind == "basic":
        return bool(assignment[name])
    values = [eval_tree_node(tree, c, assignment) for c in node.children]
    return all(values) if node.kind == "and" else any(values)


def oracle_top_probability(tree: FaultTree) -> float:
    """Exhaustive enumeration over all basic-event assignments."""
    basics = tree.basic_ids
    total = 0.0
    for combo in itertools.product((0, 1), repeat=len(basics)):
        assignment = dict(zip(basics, combo))
        p = 1.0
        for name, val in assignment.items():
            prior = tree.nodes[name].prior
            prior = 0.5 if prior is None else prior
            p *= prior if val else (1.0 - prior)
        if eval_tree_node(tree, tree.top, assignment):
            total += p
    return total


def oracle_belief_marginals(tree: FaultTree, belief, order=None) -> dict[str, float]:
    """Direct sum over belief states, independent of the network path."""
    order = tuple(order) if order is not None else tree.basic_ids
    out = {name: 0.0 for name in tree.nodes}
    for h, mass in enumerate(belief):
        if mass == 0.0:
            continue
        assignment = {name: (h >> i) & 1 for i, name in enumerate(order)}
        for name in tree.nodes:
            if eval_tree_node(tree, name, assignment):
                out[name] += mass
    return out

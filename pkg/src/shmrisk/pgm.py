"""Discrete factor algebra and exact Bayesian-network inference.

Factors are dense non-negative tables over ordered scopes of discrete
variables, stored row-major so the first scope variable varies slowest.
Queries are answered by variable elimination under a min-degree ordering
with lexicographic tie-breaking, which makes every call deterministic.
``enumerate_joint`` multiplies out the full joint table and exists as an
independent oracle for the elimination path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "Variable",
    "Factor",
    "DiscreteNetwork",
    "infer",
    "enumerate_joint",
    "NetworkStructureError",
    "InconsistentEvidenceError",
]

CPD_ROW_TOL = 1e-12
JOINT_SIZE_LIMIT = 2**20


class NetworkStructureError(ValueError):
    """A factor or network violates a structural requirement."""


class InconsistentEvidenceError(ValueError):
    """The supplied evidence has probability zero under the network."""


@dataclass(frozen=True, order=True)
class Variable:
    """A named discrete variable with a fixed number of states."""

    name: str
    cardinality: int

    def __post_init__(self) -> None:
        if not self.name:
            raise NetworkStructureError("variable name must be non-empty")
        if self.cardinality < 2:
            raise NetworkStructureError(
                f"variable {self.name!r} needs cardinality >= 2, got {self.cardinality}"
            )


class Factor:
    """Dense table over an ordered tuple of variables.

    The table is indexed in C order: for scope (A, B) the flat layout is
    A=0 rows first, B varying fastest within each row.  Values must be
    finite and non-negative; normalisation is not required.
    """

    def __init__(self, scope: Iterable[Variable], values) -> None:
        scope = tuple(scope)
        names = [v.name for v in scope]
        if len(set(names)) != len(names):
            raise NetworkStructureError(f"duplicate variables in scope {names}")
        shape = tuple(v.cardinality for v in scope)
        table = np.asarray(values, dtype=float)
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if table.size != size:
            raise NetworkStructureError(
                f"table has {table.size} entries, scope {names} needs {size}"
            )
        # ascontiguousarray first: it promotes 0-d inputs to 1-d, which would
        # break scalar factors if applied after the reshape
        table = np.ascontiguousarray(table).reshape(shape)
        if not np.all(np.isfinite(table)):
            raise NetworkStructureError("factor values must be finite")
        if table.size and table.min() < 0:
            raise NetworkStructureError("factor values must be non-negative")
        self.scope = scope
        self.table = table

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the table (first scope variable slowest)."""
        return self.table.reshape(-1)

    def __repr__(self) -> str:
        names = ",".join(v.name for v in self.scope)
        return f"Factor({names})"

    def _axis(self, variable: Variable | str) -> int:
        name = variable.name if isinstance(variable, Variable) else variable
        for i, v in enumerate(self.scope):
            if v.name == name:
                return i
        raise NetworkStructureError(f"variable {name!r} not in scope of {self!r}")

    def multiply(self, other: "Factor") -> "Factor":
        """Pointwise product over the union scope (self's variables first)."""
        mine = {v.name: v for v in self.scope}
        for v in other.scope:
            if v.name in mine and mine[v.name].cardinality != v.cardinality:
                raise NetworkStructureError(
                    f"variable {v.name!r} has conflicting cardinalities "
                    f"{mine[v.name].cardinality} and {v.cardinality}"
                )
        out_scope = self.scope + tuple(v for v in other.scope if v.name not in mine)
        pos = {v.name: i for i, v in enumerate(out_scope)}
        a = self.table.reshape(self.table.shape + (1,) * (len(out_scope) - len(self.scope)))
        order = sorted(range(len(other.scope)), key=lambda i: pos[other.scope[i].name])
        b_shape = tuple(
            v.cardinality if any(s.name == v.name for s in other.scope) else 1
            for v in out_scope
        )
        b = np.transpose(other.table, order).reshape(b_shape)
        return Factor(out_scope, a * b)

    __mul__ = multiply

    def marginalize(self, variable: Variable | str) -> "Factor":
        """Sum the named variable out of the table."""
        axis = self._axis(variable)
        new_scope = self.scope[:axis] + self.scope[axis + 1 :]
        return Factor(new_scope, self.table.sum(axis=axis))

    def reduce(self, evidence: Mapping[Variable | str, int]) -> "Factor":
        """Slice the table at observed states, dropping those variables.

        The result is unnormalised.  Variables absent from the scope are
        ignored so one evidence dict can be applied across a factor list.
        """
        index: list = []
        keep: list[Variable] = []
        by_name = {}
        for var, state in evidence.items():
            name = var.name if isinstance(var, Variable) else var
            by_name[name] = int(state)
        for v in self.scope:
            if v.name in by_name:
                state = by_name[v.name]
                if not 0 <= state < v.cardinality:
                    raise NetworkStructureError(
                        f"state {state} out of range for {v.name!r} (cardinality {v.cardinality})"
                    )
                index.append(state)
            else:
                index.append(slice(None))
                keep.append(v)
        return Factor(keep, self.table[tuple(index)])

    def transpose_to(self, scope_order: Iterable[Variable | str]) -> "Factor":
        """Reorder the scope (same variables) for comparison purposes."""
        names = [v.name if isinstance(v, Variable) else v for v in scope_order]
        if sorted(names) != sorted(v.name for v in self.scope):
            raise NetworkStructureError("scope reorder must use the same variables")
        axes = [self._axis(n) for n in names]
        return Factor([self.scope[a] for a in axes], np.transpose(self.table, axes))


class DiscreteNetwork:
    """Bayesian network assembled from CPD factors.

    Each CPD's scope is (parents..., child) with the child last; for every
    parent configuration the table must sum to one over the child states.
    The parent graph must be acyclic and every variable gets exactly one CPD.
    """

    def __init__(self, cpds: Iterable[Factor]) -> None:
        cpds = list(cpds)
        self.cpds: dict[str, Factor] = {}
        self.parents: dict[str, tuple[str, ...]] = {}
        self.variables: dict[str, Variable] = {}
        seen: dict[str, Variable] = {}
        for f in cpds:
            if not f.scope:
                raise NetworkStructureError("a CPD needs at least the child variable")
            child = f.scope[-1]
            if child.name in self.cpds:
                raise NetworkStructureError(f"variable {child.name!r} has two CPDs")
            for v in f.scope:
                if v.name in seen and seen[v.name].cardinality != v.cardinality:
                    raise NetworkStructureError(
                        f"variable {v.name!r} has conflicting cardinalities"
                    )
                seen[v.name] = v
            rows = f.table.reshape(-1, child.cardinality)
            sums = rows.sum(axis=1)
            if np.max(np.abs(sums - 1.0)) > CPD_ROW_TOL:
                raise NetworkStructureError(
                    f"CPD for {child.name!r} does not sum to one over child states"
                )
            self.cpds[child.name] = f
            self.parents[child.name] = tuple(v.name for v in f.scope[:-1])
        for name, parents in self.parents.items():
            for p in parents:
                if p not in self.cpds:
                    raise NetworkStructureError(
                        f"parent {p!r} of {name!r} has no CPD in the network"
                    )
        self.variables = {name: self.cpds[name].scope[-1] for name in sorted(self.cpds)}
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        state: dict[str, int] = {}  # 0 visiting, 1 done

        def visit(name: str, stack: list[str]) -> None:
            mark = state.get(name)
            if mark == 1:
                return
            if mark == 0:
                cycle = " -> ".join(stack + [name])
                raise NetworkStructureError(f"cycle in network: {cycle}")
            state[name] = 0
            for p in self.parents[name]:
                visit(p, stack + [name])
            state[name] = 1

        for name in sorted(self.cpds):
            visit(name, [])

    def __contains__(self, name: str) -> bool:
        return name in self.cpds


def _edges_from_scopes(factors: list[Factor]) -> dict[str, set[str]]:
    adjacency: dict[str, set[str]] = {}
    for f in factors:
        names = [v.name for v in f.scope]
        for n in names:
            adjacency.setdefault(n, set())
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                adjacency[a].add(b)
                adjacency[b].add(a)
    return adjacency


def infer(
    net: DiscreteNetwork,
    query: str | Iterable[str],
    evidence: Mapping[str, int] | None = None,
) -> Factor:
    """Exact conditional P(query | evidence) by variable elimination.

    The elimination order is chosen greedily by minimum degree on the
    interaction graph, ties broken lexicographically, so identical inputs
    produce bit-identical outputs.  The returned factor is normalised and
    its scope is sorted by variable name.
    """
    if isinstance(query, str):
        query_names = [query]
    else:
        query_names = list(query)
    if not query_names:
        raise NetworkStructureError("query must name at least one variable")
    evidence = dict(evidence or {})
    for name in query_names:
        if name not in net.cpds:
            raise NetworkStructureError(f"query variable {name!r} not in network")
    for name, state in evidence.items():
        if name not in net.cpds:
            raise NetworkStructureError(f"evidence variable {name!r} not in network")
        card = net.variables[name].cardinality
        if not 0 <= int(state) < card:
            raise NetworkStructureError(
                f"evidence state {state} out of range for {name!r}"
            )
    overlap = set(query_names) & set(evidence)
    if overlap:
        raise NetworkStructureError(f"variables both queried and observed: {sorted(overlap)}")

    factors = [net.cpds[name].reduce(evidence) for name in sorted(net.cpds)]
    keep = set(query_names)
    to_eliminate = sorted(set(net.cpds) - keep - set(evidence))

    adjacency = _edges_from_scopes(factors)
    for name in list(keep) + list(to_eliminate):
        adjacency.setdefault(name, set())

    remaining = set(to_eliminate)
    while remaining:
        name = min(remaining, key=lambda n: (len(adjacency[n]), n))
        remaining.discard(name)
        touched = [f for f in factors if any(v.name == name for v in f.scope)]
        if touched:
            product = touched[0]
            for f in touched[1:]:
                product = product.multiply(f)
            factors = [f for f in factors if f not in touched]
            factors.append(product.marginalize(name))
        neighbours = adjacency.pop(name)
        for a in neighbours:
            adjacency[a].discard(name)
            for b in neighbours:
                if a != b:
                    adjacency[a].add(b)

    result = factors[0]
    for f in factors[1:]:
        result = result.multiply(f)
    result = result.transpose_to(sorted(v.name for v in result.scope))
    total = result.table.sum()
    if not total > 0.0:
        raise InconsistentEvidenceError(
            f"evidence {evidence} has zero probability under the network"
        )
    return Factor(result.scope, result.table / total)


def enumerate_joint(net: DiscreteNetwork, size_limit: int = JOINT_SIZE_LIMIT) -> Factor:
    """Full joint distribution by brute-force CPD multiplication.

    Refuses joints larger than ``size_limit`` entries.  Serves as the
    independent oracle for ``infer``; the scope comes back sorted by name.
    """
    cards = [v.cardinality for v in net.variables.values()]
    size = 1
    for c in cards:
        size *= c
        if size > size_limit:
            raise NetworkStructureError(
                f"joint would exceed {size_limit} entries; refusing brute force"
            )
    names = sorted(net.cpds)
    joint = net.cpds[names[0]]
    for name in names[1:]:
        joint = joint.multiply(net.cpds[name])
    joint = joint.transpose_to(sorted(v.name for v in joint.scope))
    total = joint.table.sum()
    if not total > 0.0:
        raise NetworkStructureError("joint sums to zero")
    return Factor(joint.scope, joint.table / total)

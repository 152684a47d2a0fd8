"""Pin-jointed planar truss statics by the direct stiffness method.

The canonical structure is a four-bay cantilever truss, 1 m by 0.25 m,
with 20 members: chords and verticals are instrumented, the eight crossed
diagonals (m9..m16) are removable.  Member failure is modelled by cutting
the elastic modulus to a soft value rather than deleting the member, so
the stiffness matrix never becomes singular and failed members report
near-zero stress.  Health states use the bit codec from ``faulttree``:
bit i of the decimal state flags member m{9+i}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .faulttree import CROSS_MEMBERS, NUM_CROSS_MEMBERS

__all__ = [
    "GRAVITY",
    "LoadCase",
    "StaticsSolution",
    "TrussModel",
    "TrussError",
    "build_four_bay_truss",
    "four_bay_truss_from_config",
    "solve_statics",
    "measured_strains",
    "equilibrium_residual",
    "MEASURED_MEMBERS",
]

GRAVITY = 9.81  # m/s^2

DEFAULT_ELASTIC_MODULUS = 70e9  # Pa, aluminium
SOFT_ELASTIC_MODULUS = 1e6  # Pa, stands in for a removed member
DEFAULT_AREA = 177e-6  # m^2
DEFAULT_YIELD_STRESS = 300e6  # Pa
CONDITION_LIMIT = 1e13

#: Instrumented members, in measurement-vector order.
MEASURED_MEMBERS = (
    "m1",
    "m2",
    "m3",
    "m4",
    "m5",
    "m6",
    "m7",
    "m8",
    "m17",
    "m18",
    "m19",
    "m20",
)


class TrussError(ValueError):
    """Invalid model, load case or unsolvable system."""


@dataclass(frozen=True)
class LoadCase:
    """A point mass at one of the numbered load positions plus the preload."""

    location: int
    magnitude_kg: float
    preload_kg: float = 5.0

    def __post_init__(self) -> None:
        if self.magnitude_kg < 0 or self.preload_kg < 0:
            raise TrussError("load masses must be non-negative")
        if not np.isfinite(self.magnitude_kg) or not np.isfinite(self.preload_kg):
            raise TrussError("load masses must be finite")


@dataclass(frozen=True)
class StaticsSolution:
    """Solved state: displacements are the full DOF vector (supports zero)."""

    displacements: np.ndarray
    strains: np.ndarray
    stresses: np.ndarray
    reactions: np.ndarray


class TrussModel:
    """Geometry, member properties and load positions; immutable once built.

    ``members`` is a sequence of (name, node_a, node_b).  ``supports`` are
    node indices pinned in both directions.  ``load_points`` maps the
    numbered load locations (1-based) onto node indices; ``preload_node``
    carries the permanently installed mass.
    """

    def __init__(
        self,
        nodes: Sequence[Sequence[float]],
        members: Sequence[tuple[str, int, int]],
        supports: Sequence[int],
        load_points: Sequence[int],
        preload_node: int,
        elastic_modulus: float = DEFAULT_ELASTIC_MODULUS,
        area: float = DEFAULT_AREA,
        yield_stress: float = DEFAULT_YIELD_STRESS,
        cross_members: Sequence[str] = (),
        measured_members: Sequence[str] = (),
    ) -> None:
        self.nodes = np.asarray(nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise TrussError("nodes must be an (n, 2) coordinate array")
        n = len(self.nodes)
        names = [m[0] for m in members]
        if len(set(names)) != len(names):
            raise TrussError("member names must be unique")
        self.member_names = tuple(names)
        self.member_nodes = np.array([[m[1], m[2]] for m in members], dtype=int)
        if self.member_nodes.size and (
            self.member_nodes.min() < 0 or self.member_nodes.max() >= n
        ):
            raise TrussError("member references a node outside the model")
        if np.any(self.member_nodes[:, 0] == self.member_nodes[:, 1]):
            raise TrussError("member connects a node to itself")
        self.supports = tuple(sorted(int(s) for s in supports))
        if any(not 0 <= s < n for s in self.supports):
            raise TrussError("support index outside the model")
        self.load_points = tuple(int(p) for p in load_points)
        if any(not 0 <= p < n for p in self.load_points):
            raise TrussError("load point outside the model")
        if not 0 <= int(preload_node) < n:
            raise TrussError("preload node outside the model")
        self.preload_node = int(preload_node)
        if elastic_modulus <= 0 or area <= 0 or yield_stress <= 0:
            raise TrussError("material properties must be positive")
        self.elastic_modulus = float(elastic_modulus)
        self.area = float(area)
        self.yield_stress = float(yield_stress)
        for name in tuple(cross_members) + tuple(measured_members):
            if name not in names:
                raise TrussError(f"{name!r} is not a member of the model")
        self.cross_members = tuple(cross_members)
        self.measured_members = tuple(measured_members)
        index = {name: i for i, name in enumerate(names)}
        self.cross_indices = np.array([index[m] for m in self.cross_members], dtype=int)
        self.measured_indices = np.array([index[m] for m in self.measured_members], dtype=int)

        # derived geometry, fixed for the model's lifetime
        vec = self.nodes[self.member_nodes[:, 1]] - self.nodes[self.member_nodes[:, 0]]
        self.lengths = np.hypot(vec[:, 0], vec[:, 1])
        if np.any(self.lengths <= 0):
            raise TrussError("zero-length member")
        cos = vec[:, 0] / self.lengths
        sin = vec[:, 1] / self.lengths
        # axial direction row (-c, -s, c, s): dotted with the element's four
        # displacements it yields the elongation
        self.direction = np.stack([-cos, -sin, cos, sin], axis=1)
        a, b = self.member_nodes[:, 0], self.member_nodes[:, 1]
        self.dofs = np.stack([2 * a, 2 * a + 1, 2 * b, 2 * b + 1], axis=1)
        self.n_dofs = 2 * n
        support_dofs = []
        for s in self.supports:
            support_dofs.extend((2 * s, 2 * s + 1))
        self.support_dofs = np.array(sorted(support_dofs), dtype=int)
        free = sorted(set(range(self.n_dofs)) - set(self.support_dofs.tolist()))
        self.free_dofs = np.array(free, dtype=int)
        if len(self.free_dofs) == 0:
            raise TrussError("model has no free degrees of freedom")
        # scatter indices for vectorised assembly
        rows = np.repeat(self.dofs, 4, axis=1)
        cols = np.tile(self.dofs, (1, 4))
        self._flat_scatter = (rows * self.n_dofs + cols).reshape(-1)
        self._direction_outer = self.direction[:, :, None] * self.direction[:, None, :]

    @property
    def n_members(self) -> int:
        return len(self.member_names)

    def member_moduli(self, health: int) -> np.ndarray:
        """Per-member elastic modulus with failed cross-members softened."""
        health = int(health)
        if health and not self.cross_members:
            raise TrussError("model has no removable members, health must be 0")
        if not 0 <= health < 2 ** max(len(self.cross_members), 1):
            raise TrussError(f"health state {health} out of range")
        moduli = np.full(self.n_members, self.elastic_modulus)
        for i, member_index in enumerate(self.cross_indices):
            if (health >> i) & 1:
                moduli[member_index] = SOFT_ELASTIC_MODULUS
        return moduli

    def stiffness(self, health: int) -> np.ndarray:
        """Assembled global stiffness matrix for the given health state."""
        k_axial = self.member_moduli(health) * self.area / self.lengths
        blocks = k_axial[:, None, None] * self._direction_outer
        flat = np.bincount(
            self._flat_scatter, weights=blocks.reshape(-1), minlength=self.n_dofs**2
        )
        return flat.reshape(self.n_dofs, self.n_dofs)

    def load_vector(self, load: LoadCase) -> np.ndarray:
        if not 1 <= load.location <= len(self.load_points):
            raise TrussError(
                f"load location {load.location} outside 1..{len(self.load_points)}"
            )
        f = np.zeros(self.n_dofs)
        node = self.load_points[load.location - 1]
        f[2 * node + 1] -= load.magnitude_kg * GRAVITY
        f[2 * self.preload_node + 1] -= load.preload_kg * GRAVITY
        return f


def build_four_bay_truss(
    nodes: Sequence[Sequence[float]] | None = None,
    supports: Sequence[int] | None = None,
    load_points: Sequence[int] | None = None,
    preload_node: int | None = None,
    elastic_modulus: float = DEFAULT_ELASTIC_MODULUS,
    area: float = DEFAULT_AREA,
    yield_stress: float = DEFAULT_YIELD_STRESS,
) -> TrussModel:
    """Canonical four-bay cantilever: 1 m span, 0.25 m deep, wall at x=0.

    Nodes 0..4 run along the bottom chord, 5..9 along the top.  m1..m4
    bottom chords, m5..m8 top chords, m9..m12 rising diagonals, m13..m16
    falling diagonals (bay i pairs m{8+i} with m{12+i}), m17..m20
    verticals.  Load locations 1..8 are the free bottom then free top
    nodes, left to right; the preload hangs at the tip of the top chord.
    """
    if nodes is None:
        xs = [0.0, 0.25, 0.5, 0.75, 1.0]
        nodes = [(x, 0.0) for x in xs] + [(x, 0.25) for x in xs]
    members = []
    for i in range(4):
        members.append((f"m{i + 1}", i, i + 1))  # bottom chord
    for i in range(4):
        members.append((f"m{i + 5}", 5 + i, 6 + i))  # top chord
    for i in range(4):
        members.append((f"m{i + 9}", i, 6 + i))  # rising diagonal
    for i in range(4):
        members.append((f"m{i + 13}", 5 + i, i + 1))  # falling diagonal
    for i in range(4):
        members.append((f"m{i + 17}", i + 1, 6 + i))  # vertical
    return TrussModel(
        nodes=nodes,
        members=members,
        supports=supports if supports is not None else (0, 5),
        load_points=load_points if load_points is not None else (1, 2, 3, 4, 6, 7, 8, 9),
        preload_node=preload_node if preload_node is not None else 9,
        elastic_modulus=elastic_modulus,
        area=area,
        yield_stress=yield_stress,
        cross_members=CROSS_MEMBERS,
        measured_members=MEASURED_MEMBERS,
    )


TRUSS_CONFIG_KEYS = {
    "nodes",
    "supports",
    "load_points",
    "preload_node",
    "elastic_modulus",
    "area",
    "yield_stress",
}


def four_bay_truss_from_config(config: Mapping | None) -> TrussModel:
    """Build the canonical truss with overrides from a config mapping.

    Recognised keys: nodes, supports, load_points, preload_node,
    elastic_modulus, area, yield_stress.  Unknown keys are rejected.
    """
    config = dict(config or {})
    unknown = sorted(set(config) - TRUSS_CONFIG_KEYS)
    if unknown:
        raise TrussError(f"unknown truss config keys: {unknown}")
    return build_four_bay_truss(**config)


def solve_statics(model: TrussModel, health, load: LoadCase) -> StaticsSolution:
    """Displacements, member strains/stresses and support reactions.

    ``health`` is the decimal health state (or anything int() accepts);
    failed cross-members keep their geometry but use the soft modulus.
    """
    health = int(health)
    stiffness = model.stiffness(health)
    f = model.load_vector(load)
    free = model.free_dofs
    k_ff = stiffness[np.ix_(free, free)]
    try:
        u_free = np.linalg.solve(k_ff, f[free])
    except np.linalg.LinAlgError as exc:
        raise TrussError(f"singular stiffness matrix: {exc}") from exc
    condition = np.linalg.cond(k_ff)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise TrussError(
            f"stiffness matrix ill-conditioned (condition estimate {condition:.3e})"
        )
    u = np.zeros(model.n_dofs)
    u[free] = u_free
    elongation = (model.direction * u[model.dofs]).sum(axis=1)
    strains = elongation / model.lengths
    stresses = model.member_moduli(health) * strains
    reactions = stiffness[model.support_dofs] @ u - f[model.support_dofs]
    return StaticsSolution(u, strains, stresses, reactions)


def measured_strains(model: TrussModel, solution: StaticsSolution) -> np.ndarray:
    """Instrumented-member strains in microstrain, measurement order."""
    if not model.measured_members:
        raise TrussError("model declares no measured members")
    return solution.strains[model.measured_indices] * 1e6


def equilibrium_residual(
    model: TrussModel, health, load: LoadCase, solution: StaticsSolution
) -> float:
    """Worst equilibrium violation relative to the applied load scale.

    Checks both the free-DOF residual of the solved system and the global
    balance of applied forces against support reactions.
    """
    stiffness = model.stiffness(int(health))
    f = model.load_vector(load)
    free = model.free_dofs
    residual = stiffness[free] @ solution.displacements - f[free]
    applied = f.reshape(-1, 2).sum(axis=0)
    reacted = np.zeros(2)
    for dof, r in zip(model.support_dofs, solution.reactions):
        reacted[dof % 2] += r
    balance = applied + reacted
    scale = max(np.abs(f).max(), 1.0)
    return float(max(np.abs(residual).max(), np.abs(balance).max()) / scale)

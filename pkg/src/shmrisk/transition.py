"""Health-state transition model built by sweeping load cases over the truss.

One time slice applies a single random load: the magnitude comes from an
evenly spaced grid and the position from the numbered load locations, every
combination equally likely.  A cross-member fails when its stress magnitude
reaches yield, failures are permanent under do-nothing, and maintenance
returns the structure to the undamaged state.  Transition probabilities are
pure case counts, so the same model and grid always reproduce the same
matrix bit for bit.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .faulttree import NUM_CROSS_MEMBERS, HealthState
from .truss import LoadCase, TrussError, TrussModel, solve_statics

__all__ = [
    "DO_NOTHING",
    "PERFORM_MAINTENANCE",
    "N_HEALTH_STATES",
    "LoadGrid",
    "TransitionMatrix",
    "delta_health",
    "build_transition",
    "maintenance_matrix",
    "new_damage_probability",
    "calibrate_wmax",
]

N_HEALTH_STATES = 2**NUM_CROSS_MEMBERS

DO_NOTHING = "do-nothing"
PERFORM_MAINTENANCE = "perform-maintenance"

ROW_SUM_TOL = 1e-12
CALIBRATION_BRACKET = (1.0, 1e6)  # kg
CALIBRATION_TOL = 1e-6  # kg, bisection bracket width


@dataclass(frozen=True)
class LoadGrid:
    """Load magnitudes w_max·k/n crossed with the numbered locations.

    k runs 1..n_increments; zero load is left out because an unloaded
    slice can never cause yield.
    """

    w_max: float
    n_increments: int = 100
    locations: tuple[int, ...] = tuple(range(1, 9))

    def __post_init__(self) -> None:
        if not math.isfinite(self.w_max) or self.w_max <= 0:
            raise TrussError("w_max must be a positive, finite mass")
        if int(self.n_increments) < 1:
            raise TrussError("need at least one load increment")
        object.__setattr__(self, "n_increments", int(self.n_increments))
        object.__setattr__(self, "locations", tuple(int(p) for p in self.locations))
        if not self.locations:
            raise TrussError("need at least one load location")

    @property
    def n_cases(self) -> int:
        return self.n_increments * len(self.locations)

    def magnitudes(self) -> np.ndarray:
        k = np.arange(1, self.n_increments + 1, dtype=float)
        return self.w_max * k / self.n_increments


@dataclass
class TransitionMatrix:
    """Row-stochastic P(H_next | H, action) over the decimal health codec."""

    entries: np.ndarray
    action: str

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise TrussError("transition entries must form a square matrix")
        if not np.all(np.isfinite(entries)) or np.any(entries < 0):
            raise TrussError("transition entries must be finite and non-negative")
        sums = entries.sum(axis=1)
        worst = np.max(np.abs(sums - 1.0))
        if worst > ROW_SUM_TOL:
            raise TrussError(f"transition rows must sum to 1 (off by {worst:.3e})")
        self.entries = entries

    @property
    def n_states(self) -> int:
        return self.entries.shape[0]

    def to_csv(self, path) -> None:
        """Dense CSV: header row, then one labelled probability row per state.

        Values are written with repr, which round-trips doubles exactly.
        """
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["H_t"] + [str(j) for j in range(self.n_states)])
            for h in range(self.n_states):
                writer.writerow([str(h)] + [repr(float(v)) for v in self.entries[h]])

    @classmethod
    def from_csv(cls, path, action: str) -> "TransitionMatrix":
        """Read a matrix written by :meth:`to_csv`; the action is not stored
        in the file and must be supplied by the caller."""
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if not header or header[0] != "H_t":
                raise TrussError("transition CSV must start with an H_t header")
            n = len(header) - 1
            if header[1:] != [str(j) for j in range(n)]:
                raise TrussError("transition CSV header must list states 0..n-1")
            rows = []
            for label, row in enumerate(reader):
                if len(row) != n + 1 or row[0] != str(label):
                    raise TrussError(f"malformed transition CSV row {label}")
                try:
                    rows.append([float(x) for x in row[1:]])
                except ValueError as exc:
                    raise TrussError(f"non-numeric entry in row {label}: {exc}") from exc
        if len(rows) != n:
            raise TrussError(f"expected {n} transition rows, found {len(rows)}")
        return cls(np.array(rows, dtype=float), action)


def _require_full_codec(model: TrussModel) -> None:
    if len(model.cross_members) != NUM_CROSS_MEMBERS:
        raise TrussError(
            "transition model needs the eight-member health codec; "
            f"this model declares {len(model.cross_members)} removable members"
        )


def _cross_stress_parts(model: TrussModel, health: int, location: int):
    """Preload-only and per-kilogram live-load cross-member stresses."""
    pre = solve_statics(model, health, LoadCase(location, 0.0))
    unit = solve_statics(model, health, LoadCase(location, 1.0, preload_kg=0.0))
    return (
        pre.stresses[model.cross_indices],
        unit.stresses[model.cross_indices],
    )


def _row_deltas(model: TrussModel, health: int, grid: LoadGrid) -> np.ndarray:
    """Masked damage increments for every grid case at one health state.

    Shape (len(locations), n_increments); superposition keeps this at two
    solves per location regardless of the number of increments.
    """
    mags = grid.magnitudes()
    mask = ~health & (N_HEALTH_STATES - 1)
    weights = (1 << np.arange(NUM_CROSS_MEMBERS, dtype=np.int64))[:, None]
    out = np.empty((len(grid.locations), grid.n_increments), dtype=np.int64)
    for r, location in enumerate(grid.locations):
        pre, unit = _cross_stress_parts(model, health, location)
        stress = pre[:, None] + unit[:, None] * mags[None, :]
        fired = np.abs(stress) >= model.yield_stress
        out[r] = (fired * weights).sum(axis=0) & mask
    return out


def delta_health(model: TrussModel, health, load: LoadCase) -> HealthState:
    """New failures triggered by one load case at the given health state.

    Bit i fires when cross-member m{9+i} reaches yield stress magnitude in
    the solved state.  Members already failed are excluded from the test:
    within the calibrated load range they stay far below yield anyway, but
    when both diagonals of a bay are soft the pair is forced to carry the
    full panel shear and can cross the nominal threshold again at loads
    beyond the grid, so the exclusion is explicit rather than assumed.
    """
    _require_full_codec(model)
    health = int(health)
    stress = solve_statics(model, health, load).stresses[model.cross_indices]
    raw = 0
    for i in range(NUM_CROSS_MEMBERS):
        if abs(stress[i]) >= model.yield_stress:
            raw |= 1 << i
    return HealthState(raw & ~health & (N_HEALTH_STATES - 1))


def build_transition(model: TrussModel, grid: LoadGrid) -> TransitionMatrix:
    """Do-nothing transition matrix counted over the whole load grid.

    Entry (H, H') is the fraction of grid cases whose new failures move H
    to H' = H | delta, so each row is an exact case count divided by the
    grid size.
    """
    _require_full_codec(model)
    entries = np.zeros((N_HEALTH_STATES, N_HEALTH_STATES))
    for health in range(N_HEALTH_STATES):
        deltas = _row_deltas(model, health, grid).ravel()
        counts = np.bincount(health | deltas, minlength=N_HEALTH_STATES)
        entries[health] = counts / grid.n_cases
    return TransitionMatrix(entries, DO_NOTHING)


def maintenance_matrix(n_states: int = N_HEALTH_STATES) -> TransitionMatrix:
    """Maintenance returns the structure to the undamaged state, always."""
    entries = np.zeros((n_states, n_states))
    entries[:, 0] = 1.0
    return TransitionMatrix(entries, PERFORM_MAINTENANCE)


def new_damage_probability(model: TrussModel, grid: LoadGrid) -> float:
    """P(at least one new failure | undamaged) for one slice of the grid."""
    _require_full_codec(model)
    deltas = _row_deltas(model, 0, grid)
    return int(np.count_nonzero(deltas)) / grid.n_cases


def calibrate_wmax(
    model: TrussModel,
    target: float = 0.005,
    n_increments: int = 100,
    locations: tuple[int, ...] = tuple(range(1, 9)),
) -> float:
    """Smallest w_max whose new-damage probability best matches the target.

    The probability is a step function of w_max with steps of 1/n_cases,
    so the closest achievable case count is selected first and bisection
    over [1, 10^6] kg then finds the smallest w_max attaining it.  When the
    target itself is not achievable on the grid the nearest achievable
    probability is used and a warning is issued.
    """
    _require_full_codec(model)
    if not 0.0 <= target < 1.0:
        raise TrussError("target probability must lie in [0, 1)")
    parts = [_cross_stress_parts(model, 0, location) for location in locations]
    n_cases = n_increments * len(locations)

    def count(w: float) -> int:
        # same arithmetic as the grid used by build_transition, so the
        # calibrated value reproduces its count exactly when re-swept
        mags = LoadGrid(w, n_increments, locations).magnitudes()
        fired = 0
        for pre, unit in parts:
            stress = pre[:, None] + unit[:, None] * mags[None, :]
            hit = np.any(np.abs(stress) >= model.yield_stress, axis=0)
            fired += int(np.count_nonzero(hit))
        return fired

    def smallest_with(count_floor: float, lo: float, hi: float) -> float:
        # precondition: count(lo) < count_floor <= count(hi)
        while hi - lo > CALIBRATION_TOL:
            mid = 0.5 * (lo + hi)
            if count(mid) >= count_floor:
                hi = mid
            else:
                lo = mid
        return hi

    desired = target * n_cases
    lo, hi = CALIBRATION_BRACKET
    count_lo, count_hi = count(lo), count(hi)
    if desired <= count_lo:
        best, result = count_lo, lo
    elif desired > count_hi:
        best, result = count_hi, hi
    else:
        boundary = smallest_with(desired, lo, hi)
        above = count(boundary)
        below = count(max(lo, boundary - CALIBRATION_TOL))
        if abs(below - desired) <= abs(above - desired):
            best = below
            result = lo if count_lo >= below else smallest_with(below, lo, boundary)
        else:
            best, result = above, boundary
    if abs(best - desired) > 1e-9:
        warnings.warn(
            f"target probability {target} is not achievable on the "
            f"{n_cases}-case grid; calibrated to the nearest achievable "
            f"{best}/{n_cases}",
            stacklevel=2,
        )
    return float(result)

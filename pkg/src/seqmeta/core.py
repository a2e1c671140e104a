"""States, evaluations, and sequential composition.

An evaluation pairs a state-changing back-action (a proper rotation acting on
a unit vector in R^3) with a scalar readout in [0, 1] obtained by projecting
the state onto a readout axis. Applying two evaluations in sequence generally
does not commute; :func:`classify_order_dependence` distinguishes strong order
dependence (the final states differ) from weak (only the second-position
readouts differ).

All objects are immutable after construction and all operations are pure, so
values can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "StateVector",
    "MixedState",
    "Evaluation",
    "OrderDependenceVerdict",
    "SequenceOutcome",
    "apply_back_action",
    "readout",
    "run_sequence",
    "classify_order_dependence",
    "DEFAULT_ORDER_TOL",
]

# |v| must be within this of 1 for inputs to state-consuming operations.
UNIT_TOL = 1e-9
# Entrywise bound on B Bᵀ - I for a valid back-action.
ORTHOGONALITY_TOL = 1e-10
DEFAULT_ORDER_TOL = 1e-9

_AXIS_VECTORS = {
    "x": np.array([1.0, 0.0, 0.0]),
    "y": np.array([0.0, 1.0, 0.0]),
    "z": np.array([0.0, 0.0, 1.0]),
}


def _as_unit(values: Sequence[float], what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"{what} must have exactly 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} has non-finite components: {arr.tolist()}")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ValueError(f"{what} is the zero vector and cannot be normalized")
    return arr / norm


@dataclass(frozen=True)
class StateVector:
    """A pure internal state: a point on the unit sphere in R^3.

    Components are renormalized on construction, so ``x**2 + y**2 + z**2 == 1``
    holds to within 1e-12 for every instance. Construction rejects zero and
    non-finite input.
    """

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        unit = _as_unit((self.x, self.y, self.z), "state vector")
        object.__setattr__(self, "x", float(unit[0]))
        object.__setattr__(self, "y", float(unit[1]))
        object.__setattr__(self, "z", float(unit[2]))

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "StateVector":
        arr = np.asarray(values, dtype=float)
        if arr.shape != (3,):
            raise ValueError(f"expected 3 components, got shape {arr.shape}")
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def distance_to(self, other: "StateVector") -> float:
        """Euclidean distance between two states."""
        return float(np.linalg.norm(self.as_array() - other.as_array()))


@dataclass(frozen=True)
class MixedState:
    """A finite mixture of pure states with weights summing to one.

    Back-actions act component-wise (each pure component is rotated, weights
    untouched); readouts extend linearly, i.e. they are weight-averaged over
    components.
    """

    components: tuple[tuple[float, StateVector], ...]

    def __post_init__(self) -> None:
        if not self.components:
            raise ValueError("mixed state needs at least one component")
        comps = []
        total = 0.0
        for weight, state in self.components:
            w = float(weight)
            if not (0.0 <= w <= 1.0):
                raise ValueError(f"component weight {w} outside [0, 1]")
            if not isinstance(state, StateVector):
                state = StateVector.from_array(state)
            comps.append((w, state))
            total += w
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"component weights sum to {total}, expected 1")
        object.__setattr__(self, "components", tuple(comps))

    def mean_vector(self) -> np.ndarray:
        """Weighted mean of the component vectors (generally not unit length)."""
        out = np.zeros(3)
        for weight, state in self.components:
            out += weight * state.as_array()
        return out


State = Union[StateVector, MixedState]


class Evaluation:
    """A named evaluation: a back-action rotation plus a readout axis.

    ``back_action`` must be orthogonal with determinant +1 (checked to within
    1e-10 entrywise on B Bᵀ - I). ``readout_axis`` is one of ``"x"``, ``"y"``,
    ``"z"`` or an explicit unit 3-vector; the readout of a state ``v`` is
    ``(1 + a·v) / 2`` which lies in [0, 1] for every unit ``v``.
    """

    __slots__ = ("id", "back_action", "readout_axis")

    def __init__(
        self,
        id: str,  # noqa: A002 - short evaluation name such as "E1" or "EC"
        back_action: Sequence[Sequence[float]],
        readout_axis: Union[str, Sequence[float]],
    ):
        matrix = np.array(back_action, dtype=float)
        if matrix.shape != (3, 3):
            raise ValueError(f"back-action must be 3x3, got {matrix.shape}")
        gram_error = np.max(np.abs(matrix @ matrix.T - np.eye(3)))
        if gram_error > ORTHOGONALITY_TOL:
            raise ValueError(
                f"back-action of {id!r} is not orthogonal (max |B Bᵀ - I| = {gram_error:.3e})"
            )
        det = float(np.linalg.det(matrix))
        if abs(det - 1.0) > 1e-9:
            raise ValueError(f"back-action of {id!r} has determinant {det}, expected +1")
        if isinstance(readout_axis, str):
            try:
                axis = _AXIS_VECTORS[readout_axis].copy()
            except KeyError:
                raise ValueError(f"unknown readout axis name {readout_axis!r}") from None
        else:
            axis = np.asarray(readout_axis, dtype=float)
            if axis.shape != (3,):
                raise ValueError(f"readout axis must have 3 components, got {axis.shape}")
            norm = float(np.linalg.norm(axis))
            if abs(norm - 1.0) > UNIT_TOL:
                raise ValueError(f"readout axis must be a unit vector, |a| = {norm}")
        matrix.setflags(write=False)
        axis.setflags(write=False)
        self.id = str(id)
        self.back_action = matrix
        self.readout_axis = axis

    def __repr__(self) -> str:
        return f"Evaluation(id={self.id!r})"


@dataclass(frozen=True)
class SequenceOutcome:
    """Readout pair and final state of a two-evaluation sequence."""

    r1: float
    r2: float
    final: State


@dataclass(frozen=True)
class OrderDependenceVerdict:
    """Classification of a pair of evaluations at a given state.

    ``kind`` is ``"strong"`` when the two composite final states differ by more
    than the tolerance, ``"weak"`` when the states agree but the
    second-position readouts differ, and ``"none"`` otherwise. Any non-``none``
    kind rules out a faithful commutative Boolean event representation of the
    pair, which the ``no_boolean_commutative_representation`` flag records.
    """

    kind: str
    state_gap: float
    readout_gap: float
    no_boolean_commutative_representation: bool

    def __post_init__(self) -> None:
        if self.kind not in ("none", "weak", "strong"):
            raise ValueError(f"unknown order-dependence kind {self.kind!r}")


def _require_unit_state(state: StateVector) -> np.ndarray:
    vec = state.as_array()
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > UNIT_TOL:
        raise ValueError(f"state is not unit length (|v| = {norm})")
    return vec


def apply_back_action(evaluation: Evaluation, state: State) -> State:
    """Apply the evaluation's back-action to a state, without producing a readout.

    The result is renormalized so unit length is preserved across arbitrarily
    long composition chains. Mixed states are transformed component-wise.
    """
    if isinstance(state, MixedState):
        return MixedState(
            tuple(
                (weight, apply_back_action(evaluation, comp))
                for weight, comp in state.components
            )
        )
    vec = _require_unit_state(state)
    moved = evaluation.back_action @ vec
    return StateVector.from_array(moved)


def readout(evaluation: Evaluation, state: State) -> float:
    """Scalar readout ``(1 + a·v) / 2`` of a state, in [0, 1].

    For a mixed state the readout is the weight-averaged readout of the
    components, which equals the readout of the mixture's mean vector.
    """
    if isinstance(state, MixedState):
        return float(sum(w * readout(evaluation, comp) for w, comp in state.components))
    vec = _require_unit_state(state)
    value = 0.5 * (1.0 + float(np.dot(evaluation.readout_axis, vec)))
    # Clamp pure floating-point spill at the poles.
    return min(1.0, max(0.0, value))


def run_sequence(first: Evaluation, second: Evaluation, state: State) -> SequenceOutcome:
    """Run ``first`` then ``second`` on a state.

    ``r1`` is the first evaluation's readout of the initial state, ``r2`` is
    the second evaluation's readout of the once-transformed state, and
    ``final`` is the state after both back-actions.
    """
    r1 = readout(first, state)
    intermediate = apply_back_action(first, state)
    r2 = readout(second, intermediate)
    final = apply_back_action(second, intermediate)
    return SequenceOutcome(r1=r1, r2=r2, final=final)


def _state_gap(a: State, b: State) -> float:
    if isinstance(a, MixedState) != isinstance(b, MixedState):
        raise TypeError("cannot compare a mixed state with a pure state")
    if isinstance(a, MixedState):
        # Components stay aligned because back-actions preserve order/weights.
        return max(
            ca.distance_to(cb) for (_, ca), (_, cb) in zip(a.components, b.components)
        )
    return a.distance_to(b)


def classify_order_dependence(
    e1: Evaluation,
    e2: Evaluation,
    state: State,
    tol: float = DEFAULT_ORDER_TOL,
) -> OrderDependenceVerdict:
    """Classify the order dependence of two evaluations at a state.

    ``state_gap`` is the distance between the two composite final states
    (e1-then-e2 vs e2-then-e1); ``readout_gap`` is the absolute difference of
    the two second-position readouts. Both are symmetric in the argument
    order, so swapping ``e1`` and ``e2`` yields an identical verdict.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    forward = run_sequence(e1, e2, state)
    backward = run_sequence(e2, e1, state)
    state_gap = _state_gap(forward.final, backward.final)
    readout_gap = abs(forward.r2 - backward.r2)
    if state_gap > tol:
        kind = "strong"
    elif readout_gap > tol:
        kind = "weak"
    else:
        kind = "none"
    return OrderDependenceVerdict(
        kind=kind,
        state_gap=state_gap,
        readout_gap=readout_gap,
        no_boolean_commutative_representation=kind != "none",
    )

"""Three-axis rotation model and its exact sequential-readout table.

The model fixes three evaluations whose back-actions are rotations about the
x, y, and z axes and whose readouts project onto the matching axis. With the
default angles (pi/3 each) and the diagonal initial state (1,1,1)/sqrt(3),
the six ordered two-evaluation sequences produce a sharply order-dependent
readout table: the three second-position means split into 0.394338 and
0.894338 depending on which evaluation ran first, while the binarized
readouts are all identical so the pairwise-disagreement check is blind to it.

Table entries are computed numerically; when the configuration is recognized
as exact (angles that are multiples of pi/6 and state components of the form
p + q*sqrt(3) with small rational p, q), a closed-form rendering of each entry
in the field Q[sqrt(3)] is attached as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .core import Evaluation, StateVector, apply_back_action, readout

__all__ = [
    "RotationModelConfig",
    "CMatrix",
    "DisagreementTriple",
    "build_rotation",
    "exact_c_matrix",
    "binary_check",
    "equality_gaps",
    "table_rows",
    "format_rotation_table",
]

_AXES = ("x", "y", "z")
DEFAULT_ANGLE = math.pi / 3.0


def build_rotation(axis: str, angle: float) -> np.ndarray:
    """Rotation matrix about a coordinate axis (right-handed, determinant +1)."""
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {_AXES}, got {axis!r}")
    if not math.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle}")
    c = math.cos(angle)
    s = math.sin(angle)
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == "y":
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _default_v0() -> StateVector:
    return StateVector(1.0, 1.0, 1.0)  # normalized to (1,1,1)/sqrt(3)


@dataclass(frozen=True)
class RotationModelConfig:
    """Angles and initial state of the three-axis rotation model."""

    alpha: float = DEFAULT_ANGLE
    beta: float = DEFAULT_ANGLE
    gamma: float = DEFAULT_ANGLE
    v0: StateVector = field(default_factory=_default_v0)

    @property
    def angles(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)

    def evaluations(self, ids: Sequence[str] = ("E1", "E2", "E3")) -> tuple[Evaluation, ...]:
        """The three evaluations: rotate about axis k, read out along axis k."""
        if len(ids) != 3:
            raise ValueError("exactly three evaluation ids are required")
        return tuple(
            Evaluation(eval_id, build_rotation(axis, angle), axis)
            for eval_id, axis, angle in zip(ids, _AXES, self.angles)
        )


@dataclass(frozen=True)
class CMatrix:
    """Grid of second-position readout means C[i][j] = readout of j after i ran first.

    ``values[i, j]`` is NaN where undefined/missing. For the exact model the
    diagonal (same evaluation twice) is computed and stored but is not part of
    the order-dependence battery, which only compares entries sharing a second
    evaluation across different predecessors.
    """

    labels: tuple[str, ...]
    values: np.ndarray
    counts: Optional[np.ndarray] = None
    ses: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        n = len(self.labels)
        if values.shape != (n, n):
            raise ValueError(f"values shape {values.shape} does not match {n} labels")
        defined = values[np.isfinite(values)]
        if defined.size and (defined.min() < -1e-12 or defined.max() > 1.0 + 1e-12):
            raise ValueError("C-matrix entries must lie in [0, 1]")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))

    def entry(self, first: str, second: str) -> float:
        i = self.labels.index(first)
        j = self.labels.index(second)
        return float(self.values[i, j])


class DisagreementTriple(NamedTuple):
    """Pairwise disagreement of the binarized first-position readouts."""

    d12: float
    d13: float
    d23: float


def exact_c_matrix(cfg: RotationModelConfig) -> CMatrix:
    """All nine deterministic sequential readouts C[i][j] of the model.

    No sampling is involved: C[i][j] is the readout of evaluation j applied to
    the initial state after evaluation i's back-action.
    """
    evals = cfg.evaluations()
    n = len(evals)
    values = np.empty((n, n))
    for i, first in enumerate(evals):
        moved = apply_back_action(first, cfg.v0)
        for j, second in enumerate(evals):
            values[i, j] = readout(second, moved)
    return CMatrix(labels=tuple(e.id for e in evals), values=values)


def binary_check(cfg: RotationModelConfig) -> DisagreementTriple:
    """Disagreements of the binarized first-position readouts.

    Each readout is thresholded at 1/2 with ties counted as 1 (the ``>= 1/2``
    convention), and the three pairwise disagreement indicators are returned.
    For this deterministic single-state model each disagreement is 0 or 1.
    """
    evals = cfg.evaluations()
    bits = [1 if readout(e, cfg.v0) >= 0.5 else 0 for e in evals]
    return DisagreementTriple(
        d12=float(abs(bits[0] - bits[1])),
        d13=float(abs(bits[0] - bits[2])),
        d23=float(abs(bits[1] - bits[2])),
    )


def equality_gaps(matrix: CMatrix) -> dict[str, float]:
    """Absolute differences |C[i][j] - C[k][j]| over predecessor pairs.

    Keys look like ``"C(E1->E2) vs C(E3->E2)"``; a non-invasive classical
    account requires each gap to be zero.
    """
    labels = matrix.labels
    gaps: dict[str, float] = {}
    for j, second in enumerate(labels):
        others = [i for i in range(len(labels)) if i != j]
        for a_pos in range(len(others)):
            for b_pos in range(a_pos + 1, len(others)):
                i, k = others[a_pos], others[b_pos]
                key = f"C({labels[i]}->{second}) vs C({labels[k]}->{second})"
                gaps[key] = abs(float(matrix.values[i, j]) - float(matrix.values[k, j]))
    return gaps


# ---------------------------------------------------------------------------
# Exact arithmetic in Q[sqrt(3)] for the human-readable table.

_SQRT3 = math.sqrt(3.0)


class _Surd:
    """A number a + b*sqrt(3) with rational a, b; closed under + and *."""

    __slots__ = ("a", "b")

    def __init__(self, a: Fraction, b: Fraction = Fraction(0)):
        self.a = Fraction(a)
        self.b = Fraction(b)

    def __add__(self, other: "_Surd") -> "_Surd":
        return _Surd(self.a + other.a, self.b + other.b)

    def __mul__(self, other: "_Surd") -> "_Surd":
        return _Surd(
            self.a * other.a + 3 * self.b * other.b,
            self.a * other.b + self.b * other.a,
        )

    def __float__(self) -> float:
        return float(self.a) + float(self.b) * _SQRT3

    def __str__(self) -> str:
        if self.b == 0:
            return str(self.a)
        root = "sqrt(3)"
        if abs(self.b.numerator) != 1:
            root = f"{abs(self.b.numerator)}*{root}"
        if self.b.denominator != 1:
            root = f"{root}/{self.b.denominator}"
        if self.a == 0:
            return root if self.b > 0 else f"-{root}"
        sign = "+" if self.b > 0 else "-"
        return f"{self.a} {sign} {root}"


# cos(k*pi/6) for k = 0..11, as elements of Q[sqrt(3)].
_COS_TABLE = {
    0: _Surd(Fraction(1)),
    1: _Surd(Fraction(0), Fraction(1, 2)),
    2: _Surd(Fraction(1, 2)),
    3: _Surd(Fraction(0)),
    4: _Surd(Fraction(-1, 2)),
    5: _Surd(Fraction(0), Fraction(-1, 2)),
    6: _Surd(Fraction(-1)),
    7: _Surd(Fraction(0), Fraction(-1, 2)),
    8: _Surd(Fraction(-1, 2)),
    9: _Surd(Fraction(0)),
    10: _Surd(Fraction(1, 2)),
    11: _Surd(Fraction(0), Fraction(1, 2)),
}


def _exact_angle(angle: float) -> Optional[tuple[_Surd, _Surd]]:
    """(cos, sin) in Q[sqrt(3)] when the angle is a multiple of pi/6."""
    ratio = angle / (math.pi / 6.0)
    k = round(ratio)
    if abs(ratio - k) > 1e-9 / (math.pi / 6.0):
        return None
    cos = _COS_TABLE[k % 12]
    sin = _COS_TABLE[(k - 3) % 12]  # sin(t) = cos(t - pi/2)
    return cos, sin


def _exact_component(x: float, max_denominator: int = 1000) -> Optional[_Surd]:
    """Recognize x as a + b*sqrt(3) with small rational a, b, or return None."""
    for b in (Fraction(0), Fraction(x / _SQRT3).limit_denominator(max_denominator)):
        a = Fraction(x - float(b) * _SQRT3).limit_denominator(max_denominator)
        candidate = _Surd(a, b)
        if abs(float(candidate) - x) <= 1e-12:
            return candidate
    return None


def _exact_rotation(axis: str, angle: float) -> Optional[list[list[_Surd]]]:
    exact = _exact_angle(angle)
    if exact is None:
        return None
    c, s = exact
    zero, one = _Surd(Fraction(0)), _Surd(Fraction(1))
    neg_s = _Surd(-s.a, -s.b)
    if axis == "x":
        return [[one, zero, zero], [zero, c, neg_s], [zero, s, c]]
    if axis == "y":
        return [[c, zero, s], [zero, one, zero], [neg_s, zero, c]]
    return [[c, neg_s, zero], [s, c, zero], [zero, zero, one]]


def _exact_table(cfg: RotationModelConfig) -> Optional[list[list[_Surd]]]:
    """Exact C matrix in Q[sqrt(3)], or None if the config is not recognized."""
    matrices = [_exact_rotation(axis, angle) for axis, angle in zip(_AXES, cfg.angles)]
    v0 = [_exact_component(c) for c in (cfg.v0.x, cfg.v0.y, cfg.v0.z)]
    if any(m is None for m in matrices) or any(c is None for c in v0):
        return None
    half = _Surd(Fraction(1, 2))
    one = _Surd(Fraction(1))
    table: list[list[_Surd]] = []
    for matrix in matrices:
        moved = [
            matrix[r][0] * v0[0] + matrix[r][1] * v0[1] + matrix[r][2] * v0[2]
            for r in range(3)
        ]
        table.append([half * (one + moved[j]) for j in range(3)])
    return table


def table_rows(cfg: RotationModelConfig, include_diagonal: bool = False) -> list[dict]:
    """Rows of the sequential-readout table, one per ordered evaluation pair.

    Each row carries the pair, a human-readable sequence label, the numeric
    value, and (when the configuration is exactly representable) a closed-form
    string in Q[sqrt(3)] whose value matches the numeric entry.
    """
    matrix = exact_c_matrix(cfg)
    exact = _exact_table(cfg)
    rows = []
    for i, first in enumerate(matrix.labels):
        for j, second in enumerate(matrix.labels):
            if i == j and not include_diagonal:
                continue
            exact_str = None
            if exact is not None:
                value = exact[i][j]
                exact_str = str(value)
                if abs(float(value) - matrix.values[i, j]) > 1e-9:
                    # Never show an exact form that disagrees with the numeric path.
                    exact_str = None
            rows.append(
                {
                    "first": first,
                    "second": second,
                    "sequence": f"{first} then {second}",
                    "exact": exact_str,
                    "value": float(matrix.values[i, j]),
                }
            )
    return rows


def format_rotation_table(cfg: RotationModelConfig, include_diagonal: bool = False) -> str:
    """Aligned text table of the sequential readouts plus the equality gaps."""
    rows = table_rows(cfg, include_diagonal=include_diagonal)
    headers = ("Sequence", "C_ij (exact)", "C_ij (numeric)")
    body = [
        (row["sequence"], row["exact"] or "-", f"{row['value']:.6f}")
        for row in rows
    ]
    widths = [max(len(h), *(len(line[k]) for line in body)) for k, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[k]) for k, h in enumerate(headers)),
        "  ".join("-" * widths[k] for k in range(3)),
    ]
    lines.extend("  ".join(cell.ljust(widths[k]) for k, cell in enumerate(line)) for line in body)
    gaps = equality_gaps(exact_c_matrix(cfg))
    lines.append("")
    lines.append("Second-position mean gaps (zero under any non-invasive classical account):")
    for key, gap in gaps.items():
        lines.append(f"  {key}: {gap:.6f}")
    return "\n".join(lines)

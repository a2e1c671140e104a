"""Exact joint-distribution feasibility for binary marginal systems.

Given thresholded readouts of two or three evaluations, described by their
singleton probabilities and full pairwise 2x2 tables, this module decides
whether a single joint distribution over all variables reproduces every
supplied marginal. The decision runs in exact rational arithmetic: a
phase-one simplex over the 2^n joint atoms either returns a witness joint or
an affine certificate (a separating functional that is nonnegative on every
deterministic atom but negative on the supplied marginals).

Feasibility is boundary-sensitive, which is why nothing here touches floats:
inputs arriving as floats are rationalized up front at a declared denominator
bound and all subsequent arithmetic is exact. A deliberately independent
grid-search oracle (`brute_force_oracle`) exists for cross-checking the
simplex in tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

__all__ = [
    "DEFAULT_MAX_DENOMINATOR",
    "MarginalSystem",
    "PairTable",
    "Certificate",
    "FeasibilityResult",
    "check_feasibility",
    "brute_force_oracle",
    "triangle_necessary_check",
    "triangle_slacks",
    "random_marginal_system",
]

DEFAULT_MAX_DENOMINATOR = 10**6

RationalLike = Union[Fraction, int, float, str]


def as_fraction(value: RationalLike, max_denominator: int = DEFAULT_MAX_DENOMINATOR) -> Fraction:
    """Convert a probability-like value to an exact Fraction.

    Strings ("3/7", "0.25") and integers convert exactly; floats are rounded
    to the nearest rational with denominator at most ``max_denominator``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"probability must be finite, got {value!r}")
        return Fraction(value).limit_denominator(max_denominator)
    raise TypeError(f"cannot interpret {value!r} as a probability")


@dataclass(frozen=True)
class PairTable:
    """Full 2x2 joint of one variable pair: entries p[ab] = P(A_i=a, A_j=b)."""

    p11: Fraction
    p10: Fraction
    p01: Fraction
    p00: Fraction

    def __post_init__(self) -> None:
        for name in ("p11", "p10", "p01", "p00"):
            cell = getattr(self, name)
            if not isinstance(cell, Fraction):
                raise TypeError(f"{name} must be a Fraction, got {type(cell).__name__}")
            if cell < 0 or cell > 1:
                raise ValueError(f"{name} = {cell} outside [0, 1]")
        if self.p11 + self.p10 + self.p01 + self.p00 != 1:
            raise ValueError("pair table cells must sum to exactly 1")

    @property
    def first_marginal(self) -> Fraction:
        return self.p11 + self.p10

    @property
    def second_marginal(self) -> Fraction:
        return self.p11 + self.p01

    @property
    def disagreement(self) -> Fraction:
        return self.p10 + self.p01

    def cell(self, a: int, b: int) -> Fraction:
        return getattr(self, f"p{a}{b}")


@dataclass(frozen=True)
class MarginalSystem:
    """Singleton and pairwise marginals of 2 or 3 binary variables.

    Every pair table must agree exactly with both of its singleton marginals;
    construction enforces this in rational arithmetic, naming the offending
    pair otherwise. ``rounding`` records the largest adjustment made while
    rationalizing float input (zero when input was exact).
    """

    variables: tuple[str, ...]
    singles: tuple[Fraction, ...]
    pairs: dict[tuple[int, int], PairTable]
    rounding: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        n = len(self.variables)
        if n not in (2, 3):
            raise ValueError(f"marginal systems support 2 or 3 variables, got {n}")
        if len(set(self.variables)) != n:
            raise ValueError("variable names must be distinct")
        if len(self.singles) != n:
            raise ValueError("one singleton probability per variable is required")
        for name, s in zip(self.variables, self.singles):
            if not isinstance(s, Fraction):
                raise TypeError(f"singleton for {name} must be a Fraction")
            if s < 0 or s > 1:
                raise ValueError(f"singleton P({name}=1) = {s} outside [0, 1]")
        expected_keys = set(itertools.combinations(range(n), 2))
        if set(self.pairs) != expected_keys:
            raise ValueError(f"pair tables must cover exactly {sorted(expected_keys)}")
        for (i, j), table in self.pairs.items():
            if table.first_marginal != self.singles[i]:
                raise ValueError(
                    f"pair ({self.variables[i]},{self.variables[j]}) is inconsistent: "
                    f"its marginal for {self.variables[i]} is {table.first_marginal}, "
                    f"singleton says {self.singles[i]}"
                )
            if table.second_marginal != self.singles[j]:
                raise ValueError(
                    f"pair ({self.variables[i]},{self.variables[j]}) is inconsistent: "
                    f"its marginal for {self.variables[j]} is {table.second_marginal}, "
                    f"singleton says {self.singles[j]}"
                )
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "singles", tuple(self.singles))
        object.__setattr__(self, "pairs", dict(self.pairs))

    @property
    def n(self) -> int:
        return len(self.variables)

    def disagreement(self, i: int, j: int) -> Fraction:
        if i > j:
            i, j = j, i
        return self.pairs[(i, j)].disagreement

    @classmethod
    def from_singles_and_p11(
        cls,
        variables: Sequence[str],
        singles: Sequence[RationalLike],
        p11: dict[tuple[int, int], RationalLike],
        max_denominator: int = DEFAULT_MAX_DENOMINATOR,
    ) -> "MarginalSystem":
        """Build a system from singletons and the per-pair P(both = 1) cells.

        The remaining pair cells are derived exactly from the singletons, so
        the consistency invariant holds by construction even for float input
        (which is rationalized first, with the largest rounding recorded).
        """
        singles_fr = tuple(as_fraction(s, max_denominator) for s in singles)
        rounding = max(
            (abs(s_fr - Fraction(s)) if isinstance(s, float) else Fraction(0))
            for s, s_fr in zip(singles, singles_fr)
        )
        pairs: dict[tuple[int, int], PairTable] = {}
        for (i, j), raw in p11.items():
            if i > j:
                i, j = j, i
            both = as_fraction(raw, max_denominator)
            if isinstance(raw, float):
                rounding = max(rounding, abs(both - Fraction(raw)))
            si, sj = singles_fr[i], singles_fr[j]
            try:
                table = PairTable(
                    p11=both,
                    p10=si - both,
                    p01=sj - both,
                    p00=1 - si - sj + both,
                )
            except ValueError as exc:
                raise ValueError(
                    f"pair ({variables[i]},{variables[j]}) admits no 2x2 table with "
                    f"P(both)={both} and singletons {si}, {sj}: {exc}"
                ) from exc
            pairs[(i, j)] = table
        return cls(tuple(variables), singles_fr, pairs, rounding=rounding)

    @classmethod
    def from_disagreements(
        cls,
        variables: Sequence[str],
        singles: Sequence[RationalLike],
        disagreements: dict[tuple[int, int], RationalLike],
        max_denominator: int = DEFAULT_MAX_DENOMINATOR,
    ) -> "MarginalSystem":
        """Build a system from singletons and pairwise disagreement probabilities.

        Uses P(A_i=1, A_j=1) = (P(A_i) + P(A_j) - d_ij) / 2, the unique cell
        value compatible with the requested disagreement.
        """
        singles_fr = [as_fraction(s, max_denominator) for s in singles]
        p11 = {}
        for (i, j), raw in disagreements.items():
            if i > j:
                i, j = j, i
            d = as_fraction(raw, max_denominator)
            p11[(i, j)] = (singles_fr[i] + singles_fr[j] - d) / 2
        return cls.from_singles_and_p11(variables, singles_fr, p11, max_denominator)

    @classmethod
    def from_joint(
        cls, variables: Sequence[str], joint: dict[tuple[int, ...], RationalLike]
    ) -> "MarginalSystem":
        """Marginalize an explicit joint distribution (feasible by construction)."""
        n = len(variables)
        atoms = list(itertools.product((0, 1), repeat=n))
        q = {atom: as_fraction(joint.get(atom, 0)) for atom in atoms}
        if sum(q.values()) != 1:
            raise ValueError("joint probabilities must sum to exactly 1")
        if any(v < 0 for v in q.values()):
            raise ValueError("joint probabilities must be nonnegative")
        singles = tuple(
            sum(p for atom, p in q.items() if atom[i] == 1) for i in range(n)
        )
        pairs = {}
        for i, j in itertools.combinations(range(n), 2):
            cells = {
                (a, b): sum(p for atom, p in q.items() if atom[i] == a and atom[j] == b)
                for a in (0, 1)
                for b in (0, 1)
            }
            pairs[(i, j)] = PairTable(
                p11=cells[(1, 1)], p10=cells[(1, 0)], p01=cells[(0, 1)], p00=cells[(0, 0)]
            )
        return cls(tuple(variables), singles, pairs)


def triangle_slacks(d12, d13, d23):
    """Slacks of the three disagreement triangle inequalities.

    Returns (d12 + d23 - d13, d12 + d13 - d23, d13 + d23 - d12); a negative
    entry means the corresponding inequality is violated, which already rules
    out any single joint distribution over the three variables.
    """
    return (d12 + d23 - d13, d12 + d13 - d23, d13 + d23 - d12)


def triangle_necessary_check(m: MarginalSystem):
    """Triangle-inequality slacks of a 3-variable system's disagreements.

    A negative slack is a necessary-condition failure: `check_feasibility`
    must report infeasible for such a system.
    """
    if m.n != 3:
        raise ValueError("triangle check requires exactly 3 variables")
    return triangle_slacks(m.disagreement(0, 1), m.disagreement(0, 2), m.disagreement(1, 2))


# ---------------------------------------------------------------------------
# Exact LP feasibility.


@dataclass(frozen=True)
class Certificate:
    """Affine functional separating the supplied marginals from feasibility.

    The functional acts on reduced marginal coordinates
    (1, P(A_1), ..., P(A_n), P(A_i=1, A_j=1) per pair): it is nonnegative at
    the coordinates of every deterministic atom but strictly negative at the
    supplied system's coordinates, so no mixture of atoms (= no joint
    distribution) can reproduce the system.
    """

    constant: Fraction
    single_coefficients: tuple[Fraction, ...]
    pair_coefficients: dict[tuple[int, int], Fraction]
    variables: tuple[str, ...]

    def value_at_atom(self, atom: tuple[int, ...]) -> Fraction:
        total = self.constant
        for i, coef in enumerate(self.single_coefficients):
            if atom[i] == 1:
                total += coef
        for (i, j), coef in self.pair_coefficients.items():
            if atom[i] == 1 and atom[j] == 1:
                total += coef
        return total

    def value_at_system(self, m: MarginalSystem) -> Fraction:
        total = self.constant
        for coef, s in zip(self.single_coefficients, m.singles):
            total += coef * s
        for (i, j), coef in self.pair_coefficients.items():
            total += coef * m.pairs[(i, j)].p11
        return total

    def __str__(self) -> str:
        terms = [str(self.constant)]
        for name, coef in zip(self.variables, self.single_coefficients):
            if coef != 0:
                terms.append(f"{coef}*P({name})")
        for (i, j), coef in self.pair_coefficients.items():
            if coef != 0:
                terms.append(f"{coef}*P({self.variables[i]}&{self.variables[j]})")
        return " + ".join(terms) + " >= 0"


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    witness: Optional[dict[tuple[int, ...], Fraction]] = None
    certificate: Optional[Certificate] = None
    method: str = "exact-lp"
    discrepancy: Optional[Fraction] = None  # grid oracle only

    def __post_init__(self) -> None:
        if self.feasible and self.witness is None:
            raise ValueError("feasible result must carry a witness")


def _reduced_rows(m: MarginalSystem):
    """Equality system over the 2^n atoms: mass, singletons, pairwise p11 cells.

    Under the consistency invariant these rows are equivalent to constraining
    every cell of every pair table, but without the redundant rows.
    """
    n = m.n
    atoms = list(itertools.product((0, 1), repeat=n))
    pair_keys = sorted(m.pairs)
    rows = [[Fraction(1)] * len(atoms)]
    rhs = [Fraction(1)]
    for i in range(n):
        rows.append([Fraction(1 if atom[i] == 1 else 0) for atom in atoms])
        rhs.append(m.singles[i])
    for i, j in pair_keys:
        rows.append(
            [Fraction(1 if atom[i] == 1 and atom[j] == 1 else 0) for atom in atoms]
        )
        rhs.append(m.pairs[(i, j)].p11)
    return atoms, pair_keys, rows, rhs


def _phase_one_simplex(rows, rhs):
    """Exact phase-one simplex for A q = b, q >= 0, with b >= 0.

    Minimizes the sum of one artificial variable per row using Bland's rule
    (no cycling). Returns ``(True, basic_solution, None)`` when a feasible
    point exists, else ``(False, None, y)`` where the dual vector ``y``
    satisfies yᵀ A <= 0 componentwise and yᵀ b > 0 (a Farkas certificate).
    """
    m = len(rows)
    n = len(rows[0])
    # Tableau columns: n structural + m artificial + rhs.
    tableau = [list(rows[i]) + [Fraction(0)] * m + [rhs[i]] for i in range(m)]
    for i in range(m):
        tableau[i][n + i] = Fraction(1)
    basis = [n + i for i in range(m)]
    # Reduced-cost row for minimizing the artificial sum: cost[j] = c_j - y·A_j
    # starts as -sum of constraint rows over structural columns.
    cost = [Fraction(0)] * (n + m + 1)
    for j in range(n + m + 1):
        col_sum = sum(tableau[i][j] for i in range(m))
        base_cost = Fraction(1) if n <= j < n + m else Fraction(0)
        cost[j] = base_cost - col_sum

    while True:
        entering = next((j for j in range(n + m) if cost[j] < 0), None)
        if entering is None:
            break
        pivot_row = None
        best_ratio = None
        for i in range(m):
            coef = tableau[i][entering]
            if coef > 0:
                ratio = tableau[i][-1] / coef
                if (
                    best_ratio is None
                    or ratio < best_ratio
                    or (ratio == best_ratio and basis[i] < basis[pivot_row])
                ):
                    best_ratio = ratio
                    pivot_row = i
        if pivot_row is None:
            raise RuntimeError("phase-one objective unbounded; constraint setup is broken")
        pivot = tableau[pivot_row][entering]
        tableau[pivot_row] = [v / pivot for v in tableau[pivot_row]]
        for i in range(m):
            if i != pivot_row and tableau[i][entering] != 0:
                factor = tableau[i][entering]
                tableau[i] = [
                    v - factor * p for v, p in zip(tableau[i], tableau[pivot_row])
                ]
        if cost[entering] != 0:
            factor = cost[entering]
            cost = [v - factor * p for v, p in zip(cost, tableau[pivot_row])]
        basis[pivot_row] = entering

    objective = sum(tableau[i][-1] for i in range(m) if basis[i] >= n)
    if objective == 0:
        solution = [Fraction(0)] * n
        for i, var in enumerate(basis):
            if var < n:
                solution[var] = tableau[i][-1]
        return True, solution, None
    # Dual from the artificial columns: cost[n+i] = 1 - y_i at optimality.
    y = [Fraction(1) - cost[n + i] for i in range(m)]
    return False, None, y


def check_feasibility(m: MarginalSystem) -> FeasibilityResult:
    """Decide exactly whether any joint distribution reproduces the system.

    Feasible: returns a witness joint whose re-marginalization reproduces
    every supplied table exactly. Infeasible: returns a verified separating
    certificate (nonnegative on all atoms, negative on the system).
    """
    atoms, pair_keys, rows, rhs = _reduced_rows(m)
    feasible, solution, dual = _phase_one_simplex(rows, rhs)
    if feasible:
        witness = {atom: solution[k] for k, atom in enumerate(atoms)}
        _assert_witness(m, witness)
        return FeasibilityResult(feasible=True, witness=witness)
    # f(x) = -y·x is nonnegative on atom columns, negative on the rhs.
    n = m.n
    certificate = Certificate(
        constant=-dual[0],
        single_coefficients=tuple(-dual[1 + i] for i in range(n)),
        pair_coefficients={
            key: -dual[1 + n + k] for k, key in enumerate(pair_keys)
        },
        variables=m.variables,
    )
    for atom in atoms:
        if certificate.value_at_atom(atom) < 0:
            raise RuntimeError(f"invalid certificate: negative at atom {atom}")
    if certificate.value_at_system(m) >= 0:
        raise RuntimeError("invalid certificate: nonnegative at the input system")
    return FeasibilityResult(feasible=False, certificate=certificate)


def _assert_witness(m: MarginalSystem, witness: dict) -> None:
    recovered = MarginalSystem.from_joint(m.variables, witness)
    if recovered.singles != m.singles or any(
        recovered.pairs[key] != m.pairs[key] for key in m.pairs
    ):
        raise RuntimeError("simplex returned a witness that fails re-marginalization")


# ---------------------------------------------------------------------------
# Independent grid oracle (test cross-check; shares no code with the simplex).


def brute_force_oracle(m: MarginalSystem, grid: int) -> FeasibilityResult:
    """Grid search for a joint matching a 3-variable system's marginals.

    Joints that reproduce all pairwise marginals form a one-parameter family:
    fixing t = P(A_1=1, A_2=1, A_3=1) determines every atom by
    inclusion-exclusion over the supplied cells. The oracle sweeps t over the
    grid {0, 1/grid, ..., 1}; any t with all eight atoms nonnegative is an
    explicit witness (discrepancy 0). Otherwise each grid candidate is clipped
    to a genuine joint and the best max-marginal-discrepancy is reported; the
    verdict is feasible only when that discrepancy stays below 1/(2*grid).

    Inputs must sit on the grid (every cell a multiple of 1/grid) so that the
    sweep is exhaustive and the threshold rule is exact.
    """
    if m.n != 3:
        raise ValueError("the grid oracle supports exactly 3 variables")
    if grid < 50:
        raise ValueError(f"grid must be at least 50, got {grid}")
    cells = list(m.singles)
    for table in m.pairs.values():
        cells.extend((table.p11, table.p10, table.p01, table.p00))
    for cell in cells:
        if (cell * grid).denominator != 1:
            raise ValueError(
                "marginal cells must be multiples of 1/grid for the grid oracle; "
                f"{cell} is not (choose a grid divisible by the input denominators)"
            )
    s1, s2, s3 = m.singles
    p12 = m.pairs[(0, 1)].p11
    p13 = m.pairs[(0, 2)].p11
    p23 = m.pairs[(1, 2)].p11

    def atoms_at(t: Fraction) -> dict[tuple[int, int, int], Fraction]:
        return {
            (1, 1, 1): t,
            (1, 1, 0): p12 - t,
            (1, 0, 1): p13 - t,
            (0, 1, 1): p23 - t,
            (1, 0, 0): s1 - p12 - p13 + t,
            (0, 1, 0): s2 - p12 - p23 + t,
            (0, 0, 1): s3 - p13 - p23 + t,
            (0, 0, 0): 1 - s1 - s2 - s3 + p12 + p13 + p23 - t,
        }

    best_discrepancy: Optional[Fraction] = None
    for k in range(grid + 1):
        t = Fraction(k, grid)
        candidate = atoms_at(t)
        if all(v >= 0 for v in candidate.values()):
            return FeasibilityResult(
                feasible=True,
                witness=candidate,
                method="grid-oracle",
                discrepancy=Fraction(0),
            )
        # Clip negatives back to a genuine joint and measure how far its
        # marginals land from the requested ones.
        clipped = {atom: max(v, Fraction(0)) for atom, v in candidate.items()}
        total = sum(clipped.values())
        normalized = {atom: v / total for atom, v in clipped.items()}
        discrepancy = Fraction(0)
        for (i, j), table in m.pairs.items():
            for a in (0, 1):
                for b in (0, 1):
                    got = sum(
                        p
                        for atom, p in normalized.items()
                        if atom[i] == a and atom[j] == b
                    )
                    discrepancy = max(discrepancy, abs(got - table.cell(a, b)))
        if best_discrepancy is None or discrepancy < best_discrepancy:
            best_discrepancy = discrepancy
    assert best_discrepancy is not None
    if best_discrepancy < Fraction(1, 2 * grid):
        raise RuntimeError(
            "grid oracle found no exact candidate yet a sub-threshold discrepancy; "
            "inputs were not grid-aligned"
        )
    return FeasibilityResult(
        feasible=False,
        witness=None,
        certificate=None,
        method="grid-oracle",
        discrepancy=best_discrepancy,
    )


def random_marginal_system(rng, denominator: int = 20, variables=("A1", "A2", "A3")) -> MarginalSystem:
    """Random consistent 3-variable marginal system on a rational lattice.

    Singletons are uniform on {0, 1/D, ..., 1}; each pairwise P(both=1) cell
    is uniform over the lattice points of its Frechet interval, so the system
    is always internally consistent but need not admit any joint distribution.
    ``rng`` is a numpy Generator.
    """
    d = denominator
    singles = [Fraction(int(rng.integers(0, d + 1)), d) for _ in range(3)]
    p11 = {}
    for i, j in itertools.combinations(range(3), 2):
        low = max(Fraction(0), singles[i] + singles[j] - 1)
        high = min(singles[i], singles[j])
        lo_k = int(math.ceil(low * d))
        hi_k = int(math.floor(high * d))
        p11[(i, j)] = Fraction(int(rng.integers(lo_k, hi_k + 1)), d)
    return MarginalSystem.from_singles_and_p11(variables, singles, p11)

"""Estimation and hypothesis tests for non-invasive-classical (NIC) constraints.

A NIC account of sequential judgments (pre-determined readout values that are
not altered by performing other evaluations) implies two families of testable
constraints on two-evaluation trial data:

* equality of the second-position mean readout across different predecessors,
  tested here with permutation tests (optionally stratified by covariates)
  and Holm-corrected across the battery;
* triangle inequalities on the pairwise disagreement probabilities of
  binarized readouts, checked with a bootstrap over trials.

A rejection in either family means no NIC model reproduces the data, which is
what the combined verdict reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .rotation import CMatrix
from .feasibility import triangle_slacks
from .trials import TrialRecord

__all__ = [
    "SequentialStats",
    "DisagreementEstimate",
    "EqualityTest",
    "TriangleTest",
    "NicTestReport",
    "estimate_stats",
    "test_equalities",
    "test_triangles",
    "verdict",
    "analyze_trials",
    "analyze_by_session",
    "holm_correction",
    "VERDICT_CONSISTENT",
    "VERDICT_GENUINE",
    "VERDICT_INSUFFICIENT",
]

VERDICT_CONSISTENT = "consistent_with_nic"
VERDICT_GENUINE = "genuine_noncommutativity"
VERDICT_INSUFFICIENT = "insufficient_data"

# Shown verbatim in reports when the NIC account is rejected. The constraints
# test the conjunction of counterfactual definiteness and evaluation
# non-invasiveness; the data cannot say which of the two fails.
INTERPRETATION_ON_REJECTION = (
    "The data are incompatible with any non-invasive classical account. This "
    "rejects the conjunction of counterfactual definiteness and evaluation "
    "non-invasiveness; it does not identify which of the two assumptions fails."
)

_CHUNK = 256  # resampling replicates processed per vectorized block


@dataclass(frozen=True)
class DisagreementEstimate:
    """Estimated disagreement probability of one binarized evaluation pair."""

    d: float
    count: int


@dataclass(frozen=True)
class SequentialStats:
    """Per-condition second-position means and pairwise disagreement estimates.

    ``c_hat`` stores the mean of r2 for each ordered (first, second) condition
    with per-cell trial counts and standard errors (NaN where a condition has
    no data or too few trials for a standard error). ``d_hat`` pools each
    unordered pair's two conditions, binarizing the readout observed for each
    variable in its respective position.
    """

    c_hat: CMatrix
    d_hat: dict[tuple[str, str], DisagreementEstimate]
    binarize_threshold: float

    @property
    def labels(self) -> tuple[str, ...]:
        return self.c_hat.labels

    def condition_count(self, first: str, second: str) -> int:
        i = self.labels.index(first)
        j = self.labels.index(second)
        assert self.c_hat.counts is not None
        return int(self.c_hat.counts[i, j])


@dataclass(frozen=True)
class EqualityTest:
    """One second-position mean comparison across two predecessors."""

    second: str
    first_a: str
    first_b: str
    diff: float
    p_value: float
    p_holm: Optional[float]
    n_a: int
    n_b: int
    eligible: bool


@dataclass(frozen=True)
class TriangleTest:
    """One disagreement triangle inequality with its bootstrap support."""

    label: str
    slack: float
    bootstrap_violation_fraction: float
    d_estimates: dict[str, float]
    min_condition_count: int
    eligible: bool


@dataclass(frozen=True)
class NicTestReport:
    """Combined outcome of the equality and triangle batteries."""

    verdict: str
    equality_tests: tuple[EqualityTest, ...]
    triangle_tests: tuple[TriangleTest, ...]
    alpha: float
    min_n: int
    notes: tuple[str, ...] = ()
    interpretation: Optional[str] = None
    session_id: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "verdict": self.verdict,
            "alpha": self.alpha,
            "min_n": self.min_n,
            "equality_tests": [
                {
                    "second": t.second,
                    "first_a": t.first_a,
                    "first_b": t.first_b,
                    "diff": t.diff,
                    "p_value": t.p_value,
                    "p_holm": t.p_holm,
                    "n_a": t.n_a,
                    "n_b": t.n_b,
                    "eligible": t.eligible,
                }
                for t in self.equality_tests
            ],
            "triangle_tests": [
                {
                    "label": t.label,
                    "slack": t.slack,
                    "bootstrap_violation_fraction": t.bootstrap_violation_fraction,
                    "d_estimates": t.d_estimates,
                    "min_condition_count": t.min_condition_count,
                    "eligible": t.eligible,
                }
                for t in self.triangle_tests
            ],
            "notes": list(self.notes),
            "interpretation": self.interpretation,
        }


def _labels_from_trials(trials: Sequence[TrialRecord]) -> tuple[str, ...]:
    labels = sorted({t.first_eval for t in trials} | {t.second_eval for t in trials})
    if len(labels) < 2:
        raise ValueError("trials must mention at least two distinct evaluations")
    return tuple(labels)


def _by_condition(trials: Sequence[TrialRecord]) -> dict[tuple[str, str], list[TrialRecord]]:
    grouped: dict[tuple[str, str], list[TrialRecord]] = {}
    for t in trials:
        grouped.setdefault(t.condition, []).append(t)
    return grouped


def estimate_stats(
    trials: Sequence[TrialRecord], binarize_threshold: float = 0.5
) -> SequentialStats:
    """Estimate the sequential statistics of a trial set.

    Condition means use the second-position readout r2; empty conditions are
    marked missing (NaN), never zero. Disagreement estimates binarize the
    readout each variable produced in its own position (r1 when first, r2
    when second) and pool the two orders of each pair.
    """
    if not trials:
        raise ValueError("no trials supplied")
    if not (0.0 < binarize_threshold < 1.0):
        raise ValueError(f"binarize threshold must lie in (0, 1), got {binarize_threshold}")
    labels = _labels_from_trials(trials)
    index = {label: k for k, label in enumerate(labels)}
    n = len(labels)
    grouped = _by_condition(trials)

    means = np.full((n, n), np.nan)
    counts = np.zeros((n, n), dtype=int)
    ses = np.full((n, n), np.nan)
    for (first, second), group in grouped.items():
        i, j = index[first], index[second]
        values = np.array([t.r2 for t in group])
        counts[i, j] = len(values)
        means[i, j] = float(values.mean())
        if len(values) > 1:
            ses[i, j] = float(values.std(ddof=1) / math.sqrt(len(values)))
    c_hat = CMatrix(labels=labels, values=means, counts=counts, ses=ses)

    d_hat: dict[tuple[str, str], DisagreementEstimate] = {}
    thr = binarize_threshold
    for a_pos in range(n):
        for b_pos in range(a_pos + 1, n):
            a, b = labels[a_pos], labels[b_pos]
            disagreements = []
            for t in grouped.get((a, b), []):
                disagreements.append(int((t.r1 >= thr) != (t.r2 >= thr)))
            for t in grouped.get((b, a), []):
                disagreements.append(int((t.r2 >= thr) != (t.r1 >= thr)))
            if disagreements:
                d_hat[(a, b)] = DisagreementEstimate(
                    d=float(np.mean(disagreements)), count=len(disagreements)
                )
    return SequentialStats(c_hat=c_hat, d_hat=d_hat, binarize_threshold=binarize_threshold)


# ---------------------------------------------------------------------------
# Permutation machinery.


def _stratum_ids(
    trials: Sequence[TrialRecord], strata: Optional[Sequence[str]]
) -> np.ndarray:
    """Map each trial to an integer stratum id based on covariate keys.

    Binary/discrete covariates (at most 8 distinct values) are used as-is;
    continuous ones are split at the pooled quartiles. Trials missing a
    covariate form their own stratum.
    """
    if not strata:
        return np.zeros(len(trials), dtype=int)
    keys: list[tuple] = []
    for key in strata:
        values = [
            None if t.covariates is None else t.covariates.get(key) for t in trials
        ]
        present = sorted({v for v in values if v is not None})
        if len(present) > 8:
            edges = np.quantile([v for v in values if v is not None], [0.25, 0.5, 0.75])
            coded = [
                None if v is None else int(np.searchsorted(edges, v, side="right"))
                for v in values
            ]
        else:
            coded = values
        keys.append(tuple(coded))
    combined = list(zip(*keys))
    mapping: dict = {}
    ids = np.empty(len(trials), dtype=int)
    for idx, key in enumerate(combined):
        ids[idx] = mapping.setdefault(key, len(mapping))
    return ids


def _permutation_pvalue(
    values: np.ndarray,
    in_group_a: np.ndarray,
    stratum_ids: np.ndarray,
    n_permutations: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Two-sided permutation p-value for a difference of group means.

    Labels are shuffled within strata; the p-value uses the add-one estimator
    (observed statistic counted among the permutations), which is exact-level
    conservative under exchangeability.
    """
    n_a = int(in_group_a.sum())
    n_b = len(values) - n_a
    if n_a == 0 or n_b == 0:
        raise ValueError("both conditions need at least one trial")
    total = float(values.sum())
    observed = abs(values[in_group_a].sum() / n_a - (total - values[in_group_a].sum()) / n_b)

    strata_groups = []
    for sid in np.unique(stratum_ids):
        members = np.flatnonzero(stratum_ids == sid)
        strata_groups.append((values[members], int(in_group_a[members].sum())))

    exceed = 0
    done = 0
    while done < n_permutations:
        block = min(_CHUNK, n_permutations - done)
        sum_a = np.zeros(block)
        for stratum_values, k in strata_groups:
            if k == 0:
                continue
            if k == len(stratum_values):
                sum_a += stratum_values.sum()
                continue
            keys = rng.random((block, len(stratum_values)))
            picked = np.argpartition(keys, k - 1, axis=1)[:, :k]
            sum_a += np.take(stratum_values, picked).sum(axis=1)
        stats = np.abs(sum_a / n_a - (total - sum_a) / n_b)
        exceed += int((stats >= observed - 1e-12).sum())
        done += block
    p = (1 + exceed) / (1 + n_permutations)
    return observed, p


def holm_correction(p_values: Sequence[float]) -> list[float]:
    """Holm step-down adjusted p-values (family-wise error control)."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, (m - rank) * p_values[idx])
        adjusted[idx] = min(1.0, running)
    return adjusted


def test_equalities(
    stats: SequentialStats,
    trials: Sequence[TrialRecord],
    n_permutations: int = 10000,
    strata: Optional[Sequence[str]] = None,
    seed: int = 0,
    min_n: int = 50,
) -> tuple[list[EqualityTest], list[str]]:
    """Test every second-position mean equality across predecessor pairs.

    For each second evaluation j and each unordered predecessor pair {i, k},
    the observed |mean r2(i->j) - mean r2(k->j)| is compared against its
    permutation distribution under shuffled predecessor labels (within strata
    when given). Holm correction is applied across the whole battery. Returns
    the tests plus notes about skipped comparisons.
    """
    if n_permutations < 1000:
        raise ValueError(f"n_permutations must be at least 1000, got {n_permutations}")
    labels = stats.labels
    grouped = _by_condition(trials)
    root = np.random.SeedSequence(seed)
    tests: list[EqualityTest] = []
    notes: list[str] = []
    test_index = 0
    for j, second in enumerate(labels):
        predecessors = [
            first
            for first in labels
            if first != second and grouped.get((first, second))
        ]
        if len(predecessors) < 2:
            notes.append(
                f"equality tests for second evaluation {second!r} skipped: "
                f"fewer than two predecessor conditions have data"
            )
            continue
        for a_pos in range(len(predecessors)):
            for b_pos in range(a_pos + 1, len(predecessors)):
                first_a, first_b = predecessors[a_pos], predecessors[b_pos]
                group_a = grouped[(first_a, second)]
                group_b = grouped[(first_b, second)]
                pooled = group_a + group_b
                values = np.array([t.r2 for t in pooled])
                in_a = np.zeros(len(pooled), dtype=bool)
                in_a[: len(group_a)] = True
                stratum_ids = _stratum_ids(pooled, strata)
                rng = np.random.default_rng(
                    np.random.SeedSequence(seed, spawn_key=(test_index,))
                )
                observed, p = _permutation_pvalue(
                    values, in_a, stratum_ids, n_permutations, rng
                )
                tests.append(
                    EqualityTest(
                        second=second,
                        first_a=first_a,
                        first_b=first_b,
                        diff=observed,
                        p_value=p,
                        p_holm=None,
                        n_a=len(group_a),
                        n_b=len(group_b),
                        eligible=len(group_a) >= min_n and len(group_b) >= min_n,
                    )
                )
                test_index += 1
    eligible_idx = [k for k, t in enumerate(tests) if t.eligible]
    if eligible_idx:
        adjusted = holm_correction([tests[k].p_value for k in eligible_idx])
        for k, adj in zip(eligible_idx, adjusted):
            t = tests[k]
            tests[k] = EqualityTest(
                second=t.second,
                first_a=t.first_a,
                first_b=t.first_b,
                diff=t.diff,
                p_value=t.p_value,
                p_holm=adj,
                n_a=t.n_a,
                n_b=t.n_b,
                eligible=t.eligible,
            )
    return tests, notes


# ---------------------------------------------------------------------------
# Triangle inequality bootstrap.


def test_triangles(
    trials: Sequence[TrialRecord],
    threshold: float = 0.5,
    n_bootstrap: int = 1000,
    seed: int = 0,
    min_n: int = 50,
) -> list[TriangleTest]:
    """Bootstrap the three disagreement triangle inequalities.

    Disagreements are estimated per unordered pair by pooling its two ordered
    conditions; each bootstrap replicate resamples trials within every ordered
    condition independently and recomputes the slacks. The reported fraction
    is the share of replicates with a negative slack.
    """
    if n_bootstrap < 1000:
        raise ValueError(f"n_bootstrap must be at least 1000, got {n_bootstrap}")
    labels = _labels_from_trials(trials)
    if len(labels) != 3:
        raise ValueError(f"triangle tests need exactly 3 evaluations, got {labels}")
    grouped = _by_condition(trials)
    pairs = [(labels[0], labels[1]), (labels[0], labels[2]), (labels[1], labels[2])]
    for a, b in pairs:
        if not grouped.get((a, b)) and not grouped.get((b, a)):
            raise ValueError(
                f"no trials cover the evaluation pair ({a}, {b}) in either order"
            )

    # Per-pair disagreement indicator arrays, one block per ordered condition.
    indicator_blocks: dict[tuple[str, str], list[np.ndarray]] = {}
    for a, b in pairs:
        blocks = []
        for first, second in ((a, b), (b, a)):
            group = grouped.get((first, second), [])
            if group:
                blocks.append(
                    np.array(
                        [float((t.r1 >= threshold) != (t.r2 >= threshold)) for t in group]
                    )
                )
        indicator_blocks[(a, b)] = blocks

    point_d = {
        pair: float(np.concatenate(blocks).mean())
        for pair, blocks in indicator_blocks.items()
    }
    d12, d13, d23 = (point_d[p] for p in pairs)
    slacks = triangle_slacks(d12, d13, d23)

    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    violation_counts = np.zeros(3)
    done = 0
    while done < n_bootstrap:
        block_n = min(_CHUNK, n_bootstrap - done)
        resampled = {}
        for pair, blocks in indicator_blocks.items():
            total = np.zeros(block_n)
            count = 0
            for values in blocks:
                idx = rng.integers(0, len(values), size=(block_n, len(values)))
                total += np.take(values, idx).sum(axis=1)
                count += len(values)
            resampled[pair] = total / count
        r12, r13, r23 = (resampled[p] for p in pairs)
        for k, slack in enumerate(triangle_slacks(r12, r13, r23)):
            violation_counts[k] += int((slack < 0).sum())
        done += block_n

    inequalities = [
        (f"d({pairs[0][0]},{pairs[0][1]}) + d({pairs[2][0]},{pairs[2][1]}) >= "
         f"d({pairs[1][0]},{pairs[1][1]})"),
        (f"d({pairs[0][0]},{pairs[0][1]}) + d({pairs[1][0]},{pairs[1][1]}) >= "
         f"d({pairs[2][0]},{pairs[2][1]})"),
        (f"d({pairs[1][0]},{pairs[1][1]}) + d({pairs[2][0]},{pairs[2][1]}) >= "
         f"d({pairs[0][0]},{pairs[0][1]})"),
    ]
    min_count = min(
        len(grouped.get((a, b), [])) + len(grouped.get((b, a), [])) for a, b in pairs
    )
    results = []
    for k in range(3):
        results.append(
            TriangleTest(
                label=inequalities[k],
                slack=float(slacks[k]),
                bootstrap_violation_fraction=float(violation_counts[k] / n_bootstrap),
                d_estimates={f"d({a},{b})": point_d[(a, b)] for a, b in pairs},
                min_condition_count=min_count,
                eligible=min_count >= min_n,
            )
        )
    return results


def verdict(
    equality_tests: Sequence[EqualityTest],
    triangle_tests: Sequence[TriangleTest],
    alpha: float = 0.01,
    min_n: int = 50,
    notes: Iterable[str] = (),
    session_id: Optional[str] = None,
) -> NicTestReport:
    """Combine both batteries into the three-way NIC verdict.

    ``genuine_noncommutativity`` requires an eligible equality test with
    Holm-corrected p below alpha, or an eligible triangle inequality whose
    slack is negative with bootstrap violation fraction at least 1 - alpha.
    When no test is eligible (all below ``min_n`` trials per condition) the
    verdict is ``insufficient_data``.
    """
    if not equality_tests and not triangle_tests:
        raise ValueError("at least one test is required to produce a verdict")
    eligible_eq = [t for t in equality_tests if t.eligible]
    eligible_tri = [t for t in triangle_tests if t.eligible]
    if not eligible_eq and not eligible_tri:
        return NicTestReport(
            verdict=VERDICT_INSUFFICIENT,
            equality_tests=tuple(equality_tests),
            triangle_tests=tuple(triangle_tests),
            alpha=alpha,
            min_n=min_n,
            notes=tuple(notes),
            session_id=session_id,
        )
    equality_rejects = any(
        t.p_holm is not None and t.p_holm < alpha for t in eligible_eq
    )
    triangle_rejects = any(
        t.slack < 0 and t.bootstrap_violation_fraction >= 1 - alpha
        for t in eligible_tri
    )
    rejected = equality_rejects or triangle_rejects
    return NicTestReport(
        verdict=VERDICT_GENUINE if rejected else VERDICT_CONSISTENT,
        equality_tests=tuple(equality_tests),
        triangle_tests=tuple(triangle_tests),
        alpha=alpha,
        min_n=min_n,
        notes=tuple(notes),
        interpretation=INTERPRETATION_ON_REJECTION if rejected else None,
        session_id=session_id,
    )


def analyze_trials(
    trials: Sequence[TrialRecord],
    *,
    threshold: float = 0.5,
    alpha: float = 0.01,
    n_permutations: int = 10000,
    n_bootstrap: int = 1000,
    min_n: int = 50,
    strata: Optional[Sequence[str]] = None,
    seed: int = 0,
    session_id: Optional[str] = None,
) -> NicTestReport:
    """Run the full battery (estimation, equalities, triangles, verdict)."""
    stats = estimate_stats(trials, binarize_threshold=threshold)
    equality_tests, notes = test_equalities(
        stats, trials, n_permutations=n_permutations, strata=strata, seed=seed, min_n=min_n
    )
    triangle_tests: list[TriangleTest] = []
    if len(stats.labels) == 3 and len(stats.d_hat) == 3:
        triangle_tests = test_triangles(
            trials, threshold=threshold, n_bootstrap=n_bootstrap, seed=seed, min_n=min_n
        )
    elif len(stats.labels) != 3:
        notes = notes + [
            f"triangle battery skipped: needs exactly 3 evaluations, data has {len(stats.labels)}"
        ]
    else:
        covered = set(stats.d_hat)
        missing = [
            (a, b)
            for k, a in enumerate(stats.labels)
            for b in stats.labels[k + 1 :]
            if (a, b) not in covered
        ]
        notes = notes + [f"triangle battery skipped: no trials cover pairs {missing}"]
    return verdict(
        equality_tests,
        triangle_tests,
        alpha=alpha,
        min_n=min_n,
        notes=notes,
        session_id=session_id,
    )


def analyze_by_session(trials: Sequence[TrialRecord], **kwargs) -> dict[str, NicTestReport]:
    """Per-session reports; pooling across sessions is left to the caller."""
    sessions: dict[str, list[TrialRecord]] = {}
    for t in trials:
        sessions.setdefault(t.session_id, []).append(t)
    return {
        sid: analyze_trials(session_trials, session_id=sid, **kwargs)
        for sid, session_trials in sorted(sessions.items())
    }

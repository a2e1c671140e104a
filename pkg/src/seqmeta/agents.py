"""Simulated agents producing two-evaluation trial datasets.

Three families are available:

* ``nic`` - draws a complete latent readout triple per trial and reports the
  relevant components regardless of order, so every non-invasive-classical
  constraint holds by construction (the null model);
* ``invasive_classical`` - same latent triple, but a configured predecessor
  adds a fixed shift to the second readout (a classical, order-dependent
  disturbance);
* ``rotation`` - runs the three-axis rotation model on a per-trial jittered
  initial state.

Randomness discipline: repetition ``r`` of the plan owns the substream
``SeedSequence(seed, spawn_key=(1, r))``; within a repetition the latent state
is drawn once and shared by every condition (common random numbers), while
report noise and covariates are drawn per condition in a fixed order. Trial
content therefore depends only on (condition, repetition), which makes output
byte-identical regardless of how generation is parallelized, and makes the
noiseless nic agent's second-position readouts identical across predecessors
as exact multisets. The shared latent also means the equality permutation
test is conservative (never anti-conservative) on this simulator's output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .core import Evaluation, StateVector, apply_back_action, readout
from .nic import estimate_stats, holm_correction, test_equalities
from .rotation import RotationModelConfig
from .trials import TrialRecord

__all__ = [
    "DiscreteJoint",
    "GaussianLatentJoint",
    "NicAgent",
    "InvasiveClassicalAgent",
    "RotationAgent",
    "CovariateModel",
    "SimulationPlan",
    "simulate",
    "power_curve",
    "PowerPoint",
    "agent_from_dict",
]


def _clip01(value: float) -> float:
    return min(1.0, max(0.0, value))


def _phi(z: float) -> float:
    """Standard normal CDF."""
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@dataclass(frozen=True)
class DiscreteJoint:
    """Latent readout triples drawn from an explicit finite distribution."""

    atoms: tuple[tuple[float, tuple[float, ...]], ...]

    def __post_init__(self) -> None:
        if not self.atoms:
            raise ValueError("discrete joint needs at least one atom")
        total = 0.0
        width = len(self.atoms[0][1])
        for prob, values in self.atoms:
            if prob < 0:
                raise ValueError(f"atom probability {prob} is negative")
            if len(values) != width:
                raise ValueError("all atoms must have the same number of readout values")
            if any(not (0.0 <= v <= 1.0) for v in values):
                raise ValueError(f"latent readout values {values} outside [0, 1]")
            total += prob
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"atom probabilities sum to {total}, expected 1")
        object.__setattr__(
            self,
            "atoms",
            tuple((float(p), tuple(float(v) for v in vs)) for p, vs in self.atoms),
        )

    def sample(self, rng: np.random.Generator) -> tuple[float, ...]:
        u = rng.random()
        acc = 0.0
        for prob, values in self.atoms:
            acc += prob
            if u < acc:
                return values
        return self.atoms[-1][1]


@dataclass(frozen=True)
class GaussianLatentJoint:
    """Correlated latent triples: z ~ N(mean, cov), readouts are Phi(z)."""

    mean: tuple[float, ...]
    cov: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        mean = tuple(float(v) for v in self.mean)
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (len(mean), len(mean)):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {len(mean)}")
        if not np.allclose(cov, cov.T):
            raise ValueError("cov must be symmetric")
        eigvals = np.linalg.eigvalsh(cov)
        if eigvals.min() < -1e-10:
            raise ValueError("cov must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", tuple(tuple(float(x) for x in row) for row in cov))

    def sample(self, rng: np.random.Generator) -> tuple[float, ...]:
        z = rng.multivariate_normal(np.array(self.mean), np.array(self.cov), method="cholesky")
        return tuple(_phi(float(v)) for v in z)


LatentJoint = Union[DiscreteJoint, GaussianLatentJoint]


@dataclass(frozen=True)
class CovariateModel:
    """Declared generative model of the simulated covariates.

    Difficulty is uniform over ``difficulty_levels``; accuracy is Bernoulli
    with logit ``acc_base + acc_latent_gain*(latent-0.5) -
    acc_difficulty_slope*(difficulty-0.5)`` where ``latent`` summarizes the
    trial's pre-noise readouts; response time is log-normal with a mean that
    rises with difficulty and falls with the latent summary.
    """

    enabled: bool = True
    difficulty_levels: tuple[float, ...] = (0.25, 0.5, 0.75)
    acc_base: float = 1.2
    acc_latent_gain: float = 2.0
    acc_difficulty_slope: float = 2.5
    rt_log_mean_ms: float = math.log(650.0)
    rt_difficulty_gain: float = 0.45
    rt_latent_gain: float = 0.35
    rt_log_sigma: float = 0.25

    def draw(self, rng: np.random.Generator, latent_summary: float) -> dict[str, float]:
        difficulty = float(rng.choice(self.difficulty_levels))
        logit = (
            self.acc_base
            + self.acc_latent_gain * (latent_summary - 0.5)
            - self.acc_difficulty_slope * (difficulty - 0.5)
        )
        p_correct = 1.0 / (1.0 + math.exp(-logit))
        accuracy = float(rng.random() < p_correct)
        log_rt = rng.normal(
            self.rt_log_mean_ms
            + self.rt_difficulty_gain * (difficulty - 0.5)
            - self.rt_latent_gain * (latent_summary - 0.5),
            self.rt_log_sigma,
        )
        return {
            "accuracy": accuracy,
            "difficulty": difficulty,
            "response_time_ms": float(math.exp(log_rt)),
        }


@dataclass(frozen=True)
class NicAgent:
    """Order-independent reporter of pre-determined latent readout values."""

    joint: LatentJoint
    noise_sigma: float = 0.0
    evaluations: tuple[str, ...] = ("EC", "EL", "EK")
    covariates: CovariateModel = field(default_factory=CovariateModel)
    kind: str = field(default="nic", init=False)

    def __post_init__(self) -> None:
        _check_agent_common(self)


@dataclass(frozen=True)
class InvasiveClassicalAgent:
    """Classical latent reporter whose second readout shifts after one predecessor.

    When ``after`` runs first, ``delta`` is added to the second-position
    readout (then truncated to [0, 1]); all other orders report the latent
    values unchanged, violating non-invasiveness without any non-classical
    structure.
    """

    joint: LatentJoint
    delta: float = 0.2
    after: str = "EC"
    noise_sigma: float = 0.0
    evaluations: tuple[str, ...] = ("EC", "EL", "EK")
    covariates: CovariateModel = field(default_factory=CovariateModel)
    kind: str = field(default="invasive_classical", init=False)

    def __post_init__(self) -> None:
        _check_agent_common(self)
        if self.after not in self.evaluations:
            raise ValueError(
                f"'after' must name one of the evaluations {self.evaluations}, got {self.after!r}"
            )


@dataclass(frozen=True)
class RotationAgent:
    """The three-axis rotation model run per trial, with state drift and noise."""

    config: RotationModelConfig = field(default_factory=RotationModelConfig)
    noise_sigma: float = 0.0
    drift_sigma: float = 0.0
    evaluations: tuple[str, ...] = ("E1", "E2", "E3")
    covariates: CovariateModel = field(default_factory=CovariateModel)
    kind: str = field(default="rotation", init=False)

    def __post_init__(self) -> None:
        _check_agent_common(self)
        if self.drift_sigma < 0:
            raise ValueError(f"drift_sigma must be nonnegative, got {self.drift_sigma}")


Agent = Union[NicAgent, InvasiveClassicalAgent, RotationAgent]


def _check_agent_common(agent) -> None:
    if agent.noise_sigma < 0:
        raise ValueError(f"noise_sigma must be nonnegative, got {agent.noise_sigma}")
    ids = tuple(agent.evaluations)
    if len(ids) != 3 or len(set(ids)) != 3:
        raise ValueError(f"agents use exactly three distinct evaluations, got {ids}")
    object.__setattr__(agent, "evaluations", ids)


def _all_ordered_pairs(ids: Sequence[str]) -> tuple[tuple[str, str], ...]:
    return tuple((a, b) for a in ids for b in ids if a != b)


@dataclass(frozen=True)
class SimulationPlan:
    """How many trials to run per ordered condition, and in what order."""

    n_trials_per_condition: int
    seed: int = 0
    conditions: Optional[tuple[tuple[str, str], ...]] = None
    counterbalancing: str = "randomized"

    def __post_init__(self) -> None:
        if self.n_trials_per_condition < 1:
            raise ValueError("n_trials_per_condition must be positive")
        if self.counterbalancing not in ("randomized", "blocked"):
            raise ValueError(
                f"counterbalancing must be 'randomized' or 'blocked', got {self.counterbalancing!r}"
            )

    def resolved_conditions(self, agent: Agent) -> tuple[tuple[str, str], ...]:
        if self.conditions is None:
            return _all_ordered_pairs(agent.evaluations)
        known = set(agent.evaluations)
        for first, second in self.conditions:
            if first == second or first not in known or second not in known:
                raise ValueError(f"invalid condition ({first}, {second}) for {sorted(known)}")
        return tuple((str(a), str(b)) for a, b in self.conditions)


def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, rep)))


def _latent_readouts(
    agent: Agent, rng: np.random.Generator
) -> tuple[dict[str, float], Optional[StateVector]]:
    """Pre-noise readout values of every evaluation for one repetition.

    For the rotation agent this draws the per-trial jitter and returns the
    first-position readouts at the jittered state (also returned); sequential
    back-action is applied later per condition.
    """
    if isinstance(agent, RotationAgent):
        jitter = rng.normal(0.0, 1.0, 3)  # drawn even at zero drift to fix stream layout
        v0 = agent.config.v0.as_array()
        if agent.drift_sigma > 0:
            tangent = jitter * agent.drift_sigma
            tangent -= np.dot(tangent, v0) * v0
            state = StateVector.from_array(v0 + tangent)
        else:
            state = agent.config.v0
        evals = agent.config.evaluations(agent.evaluations)
        return {e.id: readout(e, state) for e in evals}, state
    triple = agent.joint.sample(rng)
    if len(triple) != 3:
        raise ValueError("latent joints must produce exactly three readout values")
    return dict(zip(agent.evaluations, triple)), None


def _repetition_payload(agent: Agent, conditions, rep: int, seed: int) -> list[dict]:
    """Readouts and covariates of every condition at one repetition.

    Draw order is fixed: the shared latent state/jitter first, then per
    condition (in plan order) the two report-noise draws and the covariates.
    """
    rng = _rep_rng(seed, rep)
    latent, state = _latent_readouts(agent, rng)
    ids = agent.evaluations
    sigma = agent.noise_sigma
    latent_summary = float(np.mean([latent[e] for e in ids]))

    if isinstance(agent, RotationAgent):
        evals = {e.id: e for e in agent.config.evaluations(ids)}

    payloads = []
    for first, second in conditions:
        if isinstance(agent, RotationAgent):
            base_r1 = latent[first]
            moved = apply_back_action(evals[first], state)
            base_r2 = readout(evals[second], moved)
        else:
            base_r1 = latent[first]
            base_r2 = latent[second]
            if isinstance(agent, InvasiveClassicalAgent) and first == agent.after:
                base_r2 = base_r2 + agent.delta
        # Report noise is independent per condition and position (two draws);
        # only the latent state is shared across conditions at a repetition.
        eps1, eps2 = rng.normal(0.0, 1.0, 2) * sigma
        r1 = _clip01(base_r1 + eps1)
        r2 = _clip01(base_r2 + eps2)
        covariates = (
            agent.covariates.draw(rng, latent_summary) if agent.covariates.enabled else None
        )
        payloads.append(
            {"first": first, "second": second, "r1": r1, "r2": r2, "covariates": covariates}
        )
    return payloads


def simulate(
    agent: Agent,
    plan: SimulationPlan,
    session_id: Optional[str] = None,
    workers: int = 1,
) -> list[TrialRecord]:
    """Generate the plan's trials; deterministic in (agent, plan.seed).

    ``workers`` only parallelizes generation (thread pool over repetitions);
    because every repetition owns its own seeded substream the output is
    byte-identical for any worker count.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    conditions = plan.resolved_conditions(agent)
    n = plan.n_trials_per_condition
    sid = session_id or f"sim-{agent.kind}-{plan.seed}"

    if workers == 1:
        payload_by_rep = [
            _repetition_payload(agent, conditions, rep, plan.seed) for rep in range(n)
        ]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            payload_by_rep = list(
                pool.map(
                    lambda rep: _repetition_payload(agent, conditions, rep, plan.seed),
                    range(n),
                )
            )

    slots = [(c, rep) for rep in range(n) for c in range(len(conditions))]
    if plan.counterbalancing == "randomized":
        order_rng = np.random.default_rng(np.random.SeedSequence(plan.seed, spawn_key=(0,)))
        order_rng.shuffle(slots)
    else:
        slots = [(c, rep) for c in range(len(conditions)) for rep in range(n)]

    records = []
    for trial_index, (c, rep) in enumerate(slots):
        payload = payload_by_rep[rep][c]
        records.append(
            TrialRecord(
                session_id=sid,
                trial_index=trial_index,
                first_eval=payload["first"],
                second_eval=payload["second"],
                r1=payload["r1"],
                r2=payload["r2"],
                covariates=payload["covariates"],
            )
        )
    return records


@dataclass(frozen=True)
class PowerPoint:
    """Rejection rate of the equality battery at one per-condition sample size."""

    n_per_condition: int
    rejection_rate: float
    replications: int


def power_curve(
    agent: Agent,
    plan_template: SimulationPlan,
    n_grid: Sequence[int],
    replications: int,
    alpha: float = 0.01,
    n_permutations: int = 1000,
    seed: int = 0,
) -> list[PowerPoint]:
    """Monte-Carlo rejection rate of the equality battery along a sample-size grid.

    One replication simulates a fresh dataset and rejects when any
    Holm-corrected equality p-value falls below alpha. Rates are monotone
    nondecreasing in the per-condition trial count up to Monte-Carlo error.
    """
    if replications < 100:
        raise ValueError(f"replications must be at least 100, got {replications}")
    if not n_grid:
        raise ValueError("n_grid must be nonempty")
    points = []
    for grid_pos, n in enumerate(n_grid):
        rejections = 0
        for rep in range(replications):
            run_seed = int(
                np.random.SeedSequence(seed, spawn_key=(grid_pos, rep)).generate_state(1)[0]
            )
            plan = replace(plan_template, n_trials_per_condition=int(n), seed=run_seed)
            trials = simulate(agent, plan)
            stats = estimate_stats(trials)
            tests, _ = test_equalities(
                stats, trials, n_permutations=n_permutations, seed=run_seed, min_n=1
            )
            if any(t.p_holm is not None and t.p_holm < alpha for t in tests):
                rejections += 1
        points.append(
            PowerPoint(
                n_per_condition=int(n),
                rejection_rate=rejections / replications,
                replications=replications,
            )
        )
    return points


# ---------------------------------------------------------------------------
# Declarative agent specs (JSON files for the CLI and service).


def _joint_from_dict(payload: dict) -> LatentJoint:
    kind = payload.get("type")
    if kind == "discrete":
        return DiscreteJoint(tuple((p, tuple(vs)) for p, vs in payload["atoms"]))
    if kind == "gaussian":
        return GaussianLatentJoint(tuple(payload["mean"]), tuple(map(tuple, payload["cov"])))
    raise ValueError(f"unknown latent joint type {kind!r} (expected 'discrete' or 'gaussian')")


def agent_from_dict(payload: dict) -> Agent:
    """Build an agent from a declarative spec (the CLI's --agent file format)."""
    kind = payload.get("kind")
    params = payload.get("params", {})
    noise = float(payload.get("noise_sigma", 0.0))
    evaluations = tuple(payload.get("evaluations", ())) or None
    if kind == "rotation":
        cfg_kwargs = {}
        for key in ("alpha", "beta", "gamma"):
            if key in params:
                cfg_kwargs[key] = float(params[key])
        if "v0" in params:
            cfg_kwargs["v0"] = StateVector.from_array(params["v0"])
        agent_kwargs = {
            "config": RotationModelConfig(**cfg_kwargs),
            "noise_sigma": noise,
            "drift_sigma": float(payload.get("drift_sigma", 0.0)),
        }
        if evaluations:
            agent_kwargs["evaluations"] = evaluations
        return RotationAgent(**agent_kwargs)
    if kind in ("nic", "invasive_classical"):
        if "drift_sigma" in payload and float(payload["drift_sigma"]) != 0.0:
            raise ValueError(f"drift_sigma applies only to the rotation agent, not {kind!r}")
        joint = _joint_from_dict(params["joint"])
        common = {"joint": joint, "noise_sigma": noise}
        if evaluations:
            common["evaluations"] = evaluations
        if kind == "nic":
            return NicAgent(**common)
        return InvasiveClassicalAgent(
            delta=float(params.get("delta", 0.2)),
            after=str(params.get("after", "EC")),
            **common,
        )
    raise ValueError(
        f"unknown agent kind {kind!r} (expected 'nic', 'invasive_classical', or 'rotation')"
    )

"""seqmeta: sequential-evaluation order effects, simulation, and NIC tests.

The package models self-evaluations as state-transforming operations with
scalar readouts, simulates sequential-judgment experiments, and tests
recorded or simulated data against the constraints every non-invasive
classical account must satisfy, including an exact joint-distribution
feasibility oracle for binarized readouts.
"""

from .core import (
    Evaluation,
    MixedState,
    OrderDependenceVerdict,
    SequenceOutcome,
    StateVector,
    apply_back_action,
    classify_order_dependence,
    readout,
    run_sequence,
)
from .rotation import (
    CMatrix,
    DisagreementTriple,
    RotationModelConfig,
    binary_check,
    build_rotation,
    equality_gaps,
    exact_c_matrix,
    format_rotation_table,
)
from .trials import TrialRecord, read_trials_jsonl, write_trials_jsonl
from .nic import (
    NicTestReport,
    SequentialStats,
    analyze_by_session,
    analyze_trials,
    estimate_stats,
    test_equalities,
    test_triangles,
    verdict,
)
from .feasibility import (
    FeasibilityResult,
    MarginalSystem,
    brute_force_oracle,
    check_feasibility,
    triangle_necessary_check,
)
from .agents import (
    DiscreteJoint,
    GaussianLatentJoint,
    InvasiveClassicalAgent,
    NicAgent,
    RotationAgent,
    SimulationPlan,
    power_curve,
    simulate,
)
from .store import SessionStore

__version__ = "0.1.0"

"""Risk-based maintenance decisions for a monitored four-bay truss.

The package chains five stages: fault trees compiled to Bayesian networks,
a finite-element truss model, a load-sweep degradation model, probabilistic
damage classifiers, and expected-utility maintenance decisions.  A harness
module ties the stages into a reproducible case study with a CLI.
"""

from .pgm import (
    Variable,
    Factor,
    DiscreteNetwork,
    infer,
    enumerate_joint,
    NetworkStructureError,
    InconsistentEvidenceError,
)
from .faulttree import (
    FaultTree,
    FTNode,
    HealthState,
    CROSS_MEMBERS,
    four_bay_fault_tree,
    top_event_probability,
    failure_marginals,
)
from .truss import (
    TrussModel,
    TrussError,
    LoadCase,
    build_four_bay_truss,
    solve_statics,
    measured_strains,
)
from .transition import (
    LoadGrid,
    TransitionMatrix,
    delta_health,
    build_transition,
    maintenance_matrix,
    new_damage_probability,
    calibrate_wmax,
)
from .classify import (
    GaussianNoveltyDetector,
    MlpLocaliser,
    novelty_probability,
    fuse_belief,
    load_model,
    SINGLE_FAILURE_DECIMALS,
)
from .decision import (
    DecisionModel,
    DecisionError,
    UtilityTables,
    Strategy,
    DecisionScore,
    failure_probability,
    optimal_strategy,
    myopic_decide,
    transitions_until_maintenance,
    decision_accuracy,
    ACTIONS,
    NEVER,
)
from .harness import (
    ExperimentConfig,
    LabelledSample,
    HarnessError,
    synthesize_dataset,
    run_case_study,
    sweep_costs,
)

__version__ = "0.1.0"

__all__ = [
    "Variable",
    "Factor",
    "DiscreteNetwork",
    "infer",
    "enumerate_joint",
    "NetworkStructureError",
    "InconsistentEvidenceError",
    "FaultTree",
    "FTNode",
    "HealthState",
    "CROSS_MEMBERS",
    "four_bay_fault_tree",
    "top_event_probability",
    "failure_marginals",
    "TrussModel",
    "TrussError",
    "LoadCase",
    "build_four_bay_truss",
    "solve_statics",
    "measured_strains",
    "LoadGrid",
    "TransitionMatrix",
    "delta_health",
    "build_transition",
    "maintenance_matrix",
    "new_damage_probability",
    "calibrate_wmax",
    "GaussianNoveltyDetector",
    "MlpLocaliser",
    "novelty_probability",
    "fuse_belief",
    "load_model",
    "SINGLE_FAILURE_DECIMALS",
    "DecisionModel",
    "DecisionError",
    "UtilityTables",
    "Strategy",
    "DecisionScore",
    "failure_probability",
    "optimal_strategy",
    "myopic_decide",
    "transitions_until_maintenance",
    "decision_accuracy",
    "ACTIONS",
    "NEVER",
    "ExperimentConfig",
    "LabelledSample",
    "HarnessError",
    "synthesize_dataset",
    "run_case_study",
    "sweep_costs",
    "__version__",
]

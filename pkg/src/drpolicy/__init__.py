"""Distributionally robust batch policy learning for average-reward MDPs.

Learns a parametric policy from batch trajectories by maximizing a
CVaR-dual of the worst-case long-run average reward over a total-variation
ball around the policy's stationary distribution, using coupled kernel
nuisance estimators and a doubly-robust objective estimate.  An exact
finite-state oracle backs all statistical verification.
"""

from ._validation import ValidationError
from .data import (
    Dataset,
    RobustConfig,
    TransitionTuple,
    flatten_arrays,
    flatten_transitions,
    load_dataset,
    reward_bounds,
    save_dataset,
)
from .estimator import (
    ObjectiveValue,
    double_robustness_probe,
    eif_values,
    evaluate_objective,
    robust_objective_estimate,
    variance_and_ci,
)
from .kernels import (
    GramCache,
    KernelSpec,
    assemble_gram,
    assemble_policy_kernel,
    default_kernel_spec,
    median_heuristic_bandwidth,
    shifted_kernel,
    state_action_kernel,
)
from .learner import RobustPolicyLearner
from .nuisance import (
    FitError,
    RatioFit,
    TuningParams,
    ValueFit,
    build_projection,
    default_tuning,
    fit_ratio,
    fit_value_difference,
    make_gram_cache,
    modified_rewards,
    ratio_fit_gradient,
    value_fit_gradient,
)
from .optimizer import (
    OptimizerConfig,
    RobustObjective,
    TrainResult,
    block_coordinate_ascent,
    maximize_beta,
    maximize_theta,
)
from .oracle import (
    FiniteMDP,
    TabularPolicy,
    avg_visitation_tv,
    choose_c,
    dual_worst_case,
    exact_M,
    exact_ratio,
    exact_relative_value,
    fit_ergodicity_constants,
    primal_worst_case,
    primal_worst_case_lp,
    random_ergodic_mdp,
    random_tabular_policy,
    relative_value_difference,
    simulate_finite_mdp,
    stationary_distribution,
)
from .policy import (
    LogisticPolicy,
    action_prob,
    grad_action_prob,
    project_box,
    sample_action,
    sample_actions,
)
from .simulate import EvalReport, SimConfig, evaluate_policy, reward, simulate_training_data, transition
from .tuning import TuningGrid, TuningSelection, cross_validate_tuning, default_tuning_grid, select_tuning

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EvalReport",
    "FiniteMDP",
    "FitError",
    "GramCache",
    "KernelSpec",
    "LogisticPolicy",
    "ObjectiveValue",
    "OptimizerConfig",
    "RatioFit",
    "RobustConfig",
    "RobustObjective",
    "RobustPolicyLearner",
    "SimConfig",
    "TabularPolicy",
    "TrainResult",
    "TransitionTuple",
    "TuningGrid",
    "TuningParams",
    "TuningSelection",
    "ValidationError",
    "ValueFit",
    "action_prob",
    "assemble_gram",
    "assemble_policy_kernel",
    "avg_visitation_tv",
    "block_coordinate_ascent",
    "build_projection",
    "choose_c",
    "cross_validate_tuning",
    "default_kernel_spec",
    "default_tuning",
    "default_tuning_grid",
    "double_robustness_probe",
    "dual_worst_case",
    "eif_values",
    "evaluate_objective",
    "evaluate_policy",
    "exact_M",
    "exact_ratio",
    "exact_relative_value",
    "fit_ergodicity_constants",
    "fit_ratio",
    "fit_value_difference",
    "flatten_arrays",
    "flatten_transitions",
    "grad_action_prob",
    "load_dataset",
    "make_gram_cache",
    "maximize_beta",
    "maximize_theta",
    "median_heuristic_bandwidth",
    "modified_rewards",
    "primal_worst_case",
    "primal_worst_case_lp",
    "project_box",
    "random_ergodic_mdp",
    "random_tabular_policy",
    "ratio_fit_gradient",
    "relative_value_difference",
    "reward",
    "reward_bounds",
    "robust_objective_estimate",
    "sample_action",
    "sample_actions",
    "save_dataset",
    "select_tuning",
    "shifted_kernel",
    "simulate_finite_mdp",
    "simulate_training_data",
    "state_action_kernel",
    "stationary_distribution",
    "transition",
    "value_fit_gradient",
    "variance_and_ci",
]

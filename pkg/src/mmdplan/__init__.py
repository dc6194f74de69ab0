"""Kernel-embedding trajectory optimization under multi-modal obstacle predictions."""

from mmdplan.baseline import BaselineConfig, ScenarioCost, deterministic_collision_cost, select_boundary_set
from mmdplan.bench import BenchConfig, RunResult, run_benchmark, run_scene, validate_trajectory
from mmdplan.collision import CollisionGeometry, SurrogateConfig, c_aug, f_bar, f_constraint, l_dist
from mmdplan.estimators import (
    BoundarySetSelector,
    MMDTrajectoryPlanner,
    ReducedSetSelector,
    ScenarioTrajectoryPlanner,
)
from mmdplan.exceptions import NumericalFailure, SampleFileError
from mmdplan.frenet import (
    BehavioralInput,
    BoundaryConditions,
    FrenetGains,
    FrenetPlanner,
    Trajectory,
    frenet_plan,
    sample_behaviors,
)
from mmdplan.kernels import KernelSpec, gram, kernel_eval, mmd_weighted
from mmdplan.optimizer import MMDCost, OptimizerConfig, distribution_update, optimize
from mmdplan.projection import ConstraintSpec, ResidualVector, project, residuals
from mmdplan.reduced_set import (
    ObstacleSampleSet,
    ReducedSet,
    ReducedSetOptConfig,
    reduced_set_objective,
    refine_weights,
    select_reduced_set,
)
from mmdplan.scenes import (
    SceneConfig,
    draw_set,
    generate_obstacle_samples,
    load_external_samples,
    make_scene_suite,
    save_samples,
    validation_set,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig",
    "BehavioralInput",
    "BenchConfig",
    "BoundaryConditions",
    "BoundarySetSelector",
    "CollisionGeometry",
    "ConstraintSpec",
    "FrenetGains",
    "FrenetPlanner",
    "KernelSpec",
    "MMDCost",
    "MMDTrajectoryPlanner",
    "NumericalFailure",
    "ObstacleSampleSet",
    "OptimizerConfig",
    "ReducedSet",
    "ReducedSetOptConfig",
    "ReducedSetSelector",
    "ResidualVector",
    "RunResult",
    "SampleFileError",
    "ScenarioCost",
    "ScenarioTrajectoryPlanner",
    "SceneConfig",
    "SurrogateConfig",
    "Trajectory",
    "c_aug",
    "deterministic_collision_cost",
    "distribution_update",
    "draw_set",
    "f_bar",
    "f_constraint",
    "frenet_plan",
    "generate_obstacle_samples",
    "gram",
    "kernel_eval",
    "l_dist",
    "load_external_samples",
    "make_scene_suite",
    "mmd_weighted",
    "optimize",
    "project",
    "reduced_set_objective",
    "refine_weights",
    "residuals",
    "run_benchmark",
    "run_scene",
    "sample_behaviors",
    "save_samples",
    "select_boundary_set",
    "select_reduced_set",
    "validate_trajectory",
    "validation_set",
]

"""Supervised learning of spin-system structure from correlator tables.

Submodules: :mod:`.svm` (dual solver and RBF estimators), :mod:`.features`
(Jensen-Shannon scores and selection), :mod:`.model_selection`
(cross-validation), :mod:`.datasets` (simulated tables) and :mod:`.tasks`
(probe-distance, weak-link and geometry tasks).
"""
from .datasets import (ClassRecipe, Dataset, add_noise, generate_dataset, geometry_feature_specs,
                       link_feature_specs, probe_feature_specs, simulate_class, simulate_dataset)
from .features import JSFeatureSelector, gaussian_js_divergence, js_feature_score, js_feature_scores
from .model_selection import (GEOMETRY_GRID, K_GRID, LINK_GRID, PROBE_GRID, CVResult, build_model,
                              cross_validate, make_folds)
from .svm import DualSolution, KernelSVC, KernelSVR, rbf_kernel, solve_dual
from .tasks import (ABOVE_GRID, GeometryTaskConfig, ProbeTaskConfig, WeakLinkTaskConfig,
                    fit_and_score, interpolate_threshold, run_geometry_task,
                    run_probe_distance_task, run_weak_link_task)

__all__ = [
    "ClassRecipe", "Dataset", "add_noise", "generate_dataset", "geometry_feature_specs",
    "link_feature_specs", "probe_feature_specs", "simulate_class", "simulate_dataset",
    "JSFeatureSelector", "gaussian_js_divergence", "js_feature_score", "js_feature_scores",
    "GEOMETRY_GRID", "K_GRID", "LINK_GRID", "PROBE_GRID", "CVResult", "build_model",
    "cross_validate", "make_folds",
    "DualSolution", "KernelSVC", "KernelSVR", "rbf_kernel", "solve_dual",
    "ABOVE_GRID", "GeometryTaskConfig", "ProbeTaskConfig", "WeakLinkTaskConfig", "fit_and_score",
    "interpolate_threshold", "run_geometry_task", "run_probe_distance_task", "run_weak_link_task",
]

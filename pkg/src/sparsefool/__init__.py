"""Sparse adversarial perturbations via iterative linearization of the
decision boundary, plus the classifier core and evaluation harness that
drive the desk-scale experiments."""

from .attack import (
    AttackOutcome,
    BoxBounds,
    ClipFailureReport,
    SparseFoolConfig,
    box_project,
    clip_failure_experiment,
    delta_bounds,
    linear_solver,
    sparsefool,
)
from .classifiers import (
    AffineClassifier,
    Classifier,
    Layer,
    MlpClassifier,
    ModelFormatError,
    TrainConfig,
    TrainResult,
    load_model,
    save_model,
    train_sgd,
)
from .deepfool import (
    BoundaryEstimate,
    DeepFoolConfig,
    DegenerateClassifierError,
    deepfool,
    deepfool_lp,
    estimate_boundary,
)
from .harness import (
    Dataset,
    EvalReport,
    IdxFormatError,
    attack_dataset,
    evaluate,
    fooling_rate,
    load_idx,
    median_pert_pct,
    outcomes_to_report,
    random_sparse_baseline,
    read_report,
    sweep_delta,
    sweep_lambda,
    synth_blobs,
    synth_digits,
    transfer_matrix,
    write_idx,
    write_report,
)
from .tensor import Rng, Tensor, argmax_abs_excluding, dot, finite_diff_grad

__all__ = [
    "AffineClassifier",
    "AttackOutcome",
    "BoundaryEstimate",
    "BoxBounds",
    "Classifier",
    "ClipFailureReport",
    "Dataset",
    "DeepFoolConfig",
    "DegenerateClassifierError",
    "EvalReport",
    "IdxFormatError",
    "Layer",
    "MlpClassifier",
    "ModelFormatError",
    "Rng",
    "SparseFoolConfig",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "argmax_abs_excluding",
    "attack_dataset",
    "box_project",
    "clip_failure_experiment",
    "deepfool",
    "deepfool_lp",
    "delta_bounds",
    "dot",
    "estimate_boundary",
    "evaluate",
    "finite_diff_grad",
    "fooling_rate",
    "linear_solver",
    "load_idx",
    "load_model",
    "median_pert_pct",
    "outcomes_to_report",
    "random_sparse_baseline",
    "read_report",
    "save_model",
    "sparsefool",
    "sweep_delta",
    "sweep_lambda",
    "synth_blobs",
    "synth_digits",
    "train_sgd",
    "transfer_matrix",
    "write_idx",
    "write_report",
]

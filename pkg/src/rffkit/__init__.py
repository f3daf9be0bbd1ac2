"""Random Fourier feature kernel classifiers with feature selection.

Sample a random cosine feature map approximating a Gaussian, Laplacian,
or sparse Gaussian kernel; train a softmax classifier (optionally through
a low-rank linear bottleneck) with SGD; monitor CE / ENT / ERR / ERLL for
learning-rate decay and early stopping; and distill a compact feature set
by iterative resample-train-retain selection.
"""

from ._backend import BACKEND
from .data import (
    Dataset,
    load_binary,
    load_csv,
    load_feature_map,
    load_model,
    save_binary,
    save_csv,
    save_feature_map,
    save_model,
    split,
    synth_gaussian_mixture,
    synth_sparse_interactions,
)
from .featsel import (
    SelectionSchedule,
    default_schedule,
    select_features,
    top_rows,
)
from .kernels import (
    EnumerationCapError,
    FeatureMap,
    KernelSpec,
    apply_feature_map,
    approx_kernel,
    eval_exact,
    gram_matrix,
    mc_identity_check,
    mc_subset_estimate,
    sample_feature_map,
)
from .model import (
    LogisticModel,
    effective_theta,
    feature_row_norms,
    init_model,
    loss_and_grad,
    param_count,
    predict_proba,
)
from .training import (
    DivergenceError,
    MetricsRecord,
    TrainConfig,
    compute_metrics,
    sgd_epoch,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "DivergenceError",
    "EnumerationCapError",
    "FeatureMap",
    "KernelSpec",
    "LogisticModel",
    "MetricsRecord",
    "SelectionSchedule",
    "TrainConfig",
    "apply_feature_map",
    "approx_kernel",
    "compute_metrics",
    "default_schedule",
    "effective_theta",
    "eval_exact",
    "feature_row_norms",
    "gram_matrix",
    "init_model",
    "load_binary",
    "load_csv",
    "load_feature_map",
    "load_model",
    "loss_and_grad",
    "mc_identity_check",
    "mc_subset_estimate",
    "param_count",
    "predict_proba",
    "sample_feature_map",
    "save_binary",
    "save_csv",
    "save_feature_map",
    "save_model",
    "select_features",
    "sgd_epoch",
    "split",
    "synth_gaussian_mixture",
    "synth_sparse_interactions",
    "top_rows",
    "train",
]

"""Label-distribution refinement by pooling, with simulation-based model selection."""

__version__ = "0.1.0"

from labelpool._kernels import BACKEND
from labelpool.core import (
    DataItem,
    Dataset,
    LabelCounts,
    LabelDistribution,
    LabelSpace,
    Pooling,
    load_dataset,
    normalize,
    pooled_distribution,
    save_dataset,
    split_dataset,
)
from labelpool.divergence import KINDS, distance, kl, pairwise_matrix
from labelpool.nbp import NbpConfig, build_nbp_pooling, neighborhood_profile
from labelpool.clustering import FitConfig, fit_model, fit_median_of_trials, pooling_from_fit
from labelpool.samplers import (
    GenerativeConfig,
    bootstrap_sampler,
    cluster_sampler,
    generate_population_sample,
    nbp_sampler,
)
from labelpool.selection import (
    SelectionReport,
    loss_mean_kl,
    loss_multinomial_loglik,
    pvalue_fraction,
    run_replicates,
    select_cluster_count,
    select_radius,
    standardized_difference,
)
from labelpool.predict import SoftmaxModel, TrainConfig, evaluate, predict, train

__all__ = [
    "__version__",
    "BACKEND",
    "DataItem",
    "Dataset",
    "LabelCounts",
    "LabelDistribution",
    "LabelSpace",
    "Pooling",
    "load_dataset",
    "normalize",
    "pooled_distribution",
    "save_dataset",
    "split_dataset",
    "KINDS",
    "distance",
    "kl",
    "pairwise_matrix",
    "NbpConfig",
    "build_nbp_pooling",
    "neighborhood_profile",
    "FitConfig",
    "fit_model",
    "fit_median_of_trials",
    "pooling_from_fit",
    "GenerativeConfig",
    "bootstrap_sampler",
    "cluster_sampler",
    "generate_population_sample",
    "nbp_sampler",
    "SelectionReport",
    "loss_mean_kl",
    "loss_multinomial_loglik",
    "pvalue_fraction",
    "run_replicates",
    "select_cluster_count",
    "select_radius",
    "standardized_difference",
    "train",
    "predict",
    "evaluate",
    "SoftmaxModel",
    "TrainConfig",
]

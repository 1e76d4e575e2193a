"""Adaptive transfer scheduling for multi-view time series classification.

The package measures how related each source view of a multi-view time
series dataset is to a chosen target view (channel-wise warping or
symbolic-histogram distances), models the resulting distance vectors with
a density estimate (kernel density for few channels, an invertible
coupling flow for many), scores each source view by a matrix norm over
density samples, converts the scores into integer pretraining-epoch
budgets, and runs the pretrain-then-fine-tune experiment with built-in
MLP and convolutional classifiers.
"""

from mvtransfer.dataset import (
    ALIGNMENT_STRATEGIES,
    DatasetError,
    MultiViewDataset,
    SplitSpec,
    align_lengths,
    emit_dataset,
    load_dataset,
    split_dataset,
    standardize_per_channel,
)
from mvtransfer.density import (
    KDE_MAX_DIMENSION,
    DensityError,
    DensityModel,
    KdeModel,
    evaluate_density_grid,
    fit_density,
    fit_kde,
    kde_log_density,
    load_density_model,
    sample_kde,
    save_density_model,
    select_density_method,
)
from mvtransfer.distance import (
    BossParams,
    DistanceError,
    DtwParams,
    ImportanceLatentSet,
    SfaParams,
    boss_distance,
    build_latent_set,
    channel_pairwise_distances,
    dtw_distance,
    sfa_fit,
    sfa_transform,
)
from mvtransfer.flow import (
    FlowConfig,
    FlowTrainingError,
    fit_flow,
    flow_forward,
    flow_inverse,
    flow_log_density,
    init_flow_model,
    sample_flow,
)
from mvtransfer.importance import (
    NORM_KINDS,
    NormConvergenceError,
    SamplingConfig,
    TransferSchedule,
    allocate_epochs,
    build_transfer_schedule,
    draw_importance_matrix,
    matrix_norm,
    schedule_to_json_dict,
    score_source_view,
    write_schedule_json,
)
from mvtransfer.networks import (
    ARCHITECTURES,
    Network,
    NetworkConfig,
    NetworkError,
    TrainConfig,
    evaluate,
    init_network,
    load_network,
    parameter_count,
    save_network,
    train,
    transfer_weights,
)
from mvtransfer.pipeline import (
    ExperimentConfig,
    ExperimentReport,
    PipelineError,
    compute_schedule,
    load_experiment_config,
    run_baseline,
    run_experiment,
    run_transfer,
    save_experiment_config,
)
from mvtransfer.synthetic import make_synthetic_dataset

__version__ = "0.1.0"

__all__ = [
    "ALIGNMENT_STRATEGIES",
    "ARCHITECTURES",
    "BossParams",
    "DatasetError",
    "DensityError",
    "DensityModel",
    "DistanceError",
    "DtwParams",
    "ExperimentConfig",
    "ExperimentReport",
    "FlowConfig",
    "FlowTrainingError",
    "ImportanceLatentSet",
    "KDE_MAX_DIMENSION",
    "KdeModel",
    "MultiViewDataset",
    "NORM_KINDS",
    "Network",
    "NetworkConfig",
    "NetworkError",
    "NormConvergenceError",
    "PipelineError",
    "SamplingConfig",
    "SfaParams",
    "SplitSpec",
    "TrainConfig",
    "TransferSchedule",
    "align_lengths",
    "allocate_epochs",
    "boss_distance",
    "build_latent_set",
    "build_transfer_schedule",
    "channel_pairwise_distances",
    "compute_schedule",
    "draw_importance_matrix",
    "dtw_distance",
    "emit_dataset",
    "evaluate",
    "evaluate_density_grid",
    "fit_density",
    "fit_flow",
    "fit_kde",
    "flow_forward",
    "flow_inverse",
    "flow_log_density",
    "init_flow_model",
    "init_network",
    "kde_log_density",
    "load_dataset",
    "load_density_model",
    "load_experiment_config",
    "load_network",
    "make_synthetic_dataset",
    "matrix_norm",
    "parameter_count",
    "run_baseline",
    "run_experiment",
    "run_transfer",
    "sample_flow",
    "sample_kde",
    "save_density_model",
    "save_experiment_config",
    "save_network",
    "schedule_to_json_dict",
    "score_source_view",
    "select_density_method",
    "sfa_fit",
    "sfa_transform",
    "split_dataset",
    "standardize_per_channel",
    "train",
    "transfer_weights",
    "write_schedule_json",
]

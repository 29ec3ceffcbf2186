"""Supervised whole-DAG structure discovery: synthetic linear-SEM datasets,
a permutation-equivariant edge-probability network trained with BCE + Adam,
greedy acyclic decoding, and precision/recall/SHD evaluation.
"""

from .discover import DiscoveryReport, GraphReport, evaluate, greedy_dag, precision_recall, shd
from .eqnet import (
    ArchConfig,
    EqLayerParams,
    EqModel,
    FcModel,
    eq_layer_backward,
    eq_layer_forward,
    fc_forward,
    init_fc,
    init_params,
    model_forward,
    num_params,
)
from .featurize import (
    CorrelationFeature,
    Dataset,
    DatasetConfig,
    DegenerateDataError,
    Example,
    build_dataset,
    correlation,
    example_rng,
)
from .graph import CyclicGraphError, Dag, gen_er_dag, gen_sf_dag, is_acyclic, topo_order
from .io import (
    ConfigError,
    ExperimentConfig,
    FileFormatError,
    load_checkpoint,
    load_dataset,
    parse_config,
    save_checkpoint,
    save_dataset,
)
from .sem import (
    DataMatrix,
    NoiseSpec,
    Sem,
    analytic_covariance,
    sample_coefficients,
    sample_data,
    with_noise,
)
from .train import AdamState, TrainConfig, adam_step, bce_loss, ensemble_train, init_adam, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ArchConfig",
    "ConfigError",
    "CorrelationFeature",
    "CyclicGraphError",
    "Dag",
    "DataMatrix",
    "Dataset",
    "DatasetConfig",
    "DegenerateDataError",
    "DiscoveryReport",
    "EqLayerParams",
    "EqModel",
    "Example",
    "ExperimentConfig",
    "FcModel",
    "FileFormatError",
    "GraphReport",
    "NoiseSpec",
    "Sem",
    "TrainConfig",
    "adam_step",
    "analytic_covariance",
    "bce_loss",
    "build_dataset",
    "correlation",
    "ensemble_train",
    "eq_layer_backward",
    "eq_layer_forward",
    "evaluate",
    "example_rng",
    "fc_forward",
    "gen_er_dag",
    "gen_sf_dag",
    "greedy_dag",
    "init_adam",
    "init_fc",
    "init_params",
    "is_acyclic",
    "load_checkpoint",
    "load_dataset",
    "model_forward",
    "num_params",
    "parse_config",
    "precision_recall",
    "sample_coefficients",
    "sample_data",
    "save_checkpoint",
    "save_dataset",
    "shd",
    "topo_order",
    "train",
    "with_noise",
]

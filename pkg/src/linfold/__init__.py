"""Linearity-based compression of ReLU multilayer perceptrons."""

__version__ = "0.1.0"

from .compression import (
    CompressionConfig,
    CompressionSummary,
    LayerMode,
    LayerPlan,
    compress,
    fold_layer,
    optimal_layer_threshold,
    parameter_delta,
    select_linear,
)
from .dataio import (
    Dataset,
    SplitSpec,
    load_csv,
    load_idx,
    load_model,
    save_model,
    split,
    synth_dataset,
)
from .harness import (
    CompressionReport,
    combined_run,
    compress_to_fraction,
    emit_report,
    evaluate,
    load_report,
    sweep,
)
from .network import (
    PRESETS,
    Activation,
    DenseLayer,
    DimensionError,
    Network,
    Shortcut,
    build_network,
    count_parameters,
    forward,
    forward_with_trace,
    validate,
)
from .profiling import ActivationProfile, activation_rates, detect_provable_linear
from .training import ImportancePruneConfig, TrainConfig, importance_prune, train

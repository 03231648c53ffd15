"""Residual CNN: layers, model graphs, loss, optimization, and training."""

from .layers import (
    BatchNorm,
    Conv2d,
    Dense,
    GlobalAvgPool,
    LayerSpec,
    MaxPool,
    NNError,
    NonFiniteActivation,
    ReLU,
    ResidualAdd,
    ShapeMismatch,
    Softmax,
)
from .loss import softmax_cross_entropy, softmax_probs
from .model import (
    ModelConfig,
    PRESETS,
    backward,
    canonical_config_json,
    config_from_dict,
    config_hash,
    config_to_dict,
    forward,
    forward_with_caches,
    infer_shapes,
    init_params,
    load_model,
    micro_config,
    param_count,
    resnet18_226_config,
    save_model,
    serialize_params,
    trainable_keys,
)
from .optim import AdamState, EarlyStopper, PlateauScheduler, adam_step
from .train import (
    CrossValReport,
    EpochStats,
    TrainConfig,
    TrainHistory,
    cross_validate,
    history_to_csv,
    train,
)

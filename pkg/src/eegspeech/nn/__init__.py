from .layers import (
    Adam,
    Dropout,
    GruLayer,
    Layer,
    TcnBlock,
    TimeDistributedDense,
    UpsampleRepeat,
    mse_loss,
)
from .models import (
    Model,
    RegressionModel,
    SynthesisModel,
    build_regression_model,
    build_synthesis_model,
    load_model,
    synthesis_param_count,
)
from .training import TrainConfig, TrainHistory, finite_diff_grad_check, train

__all__ = [
    "Adam", "Dropout", "GruLayer", "Layer", "TcnBlock", "TimeDistributedDense",
    "UpsampleRepeat", "mse_loss", "Model", "RegressionModel", "SynthesisModel",
    "build_regression_model", "build_synthesis_model", "load_model",
    "synthesis_param_count", "TrainConfig", "TrainHistory",
    "finite_diff_grad_check", "train",
]

"""Random feature models and random neural networks trained by least squares."""

from .features import (
    Activation,
    DerivativeOrderExceeded,
    FourierFamily,
    NeuronFamily,
    TrigFamily,
    enumerate_multi_indices,
)
from .lsq import OperationCount, RankDeficient, operation_budget, solve_normal_equations
from .model import (
    GaussianTarget,
    RandomFeatureModel,
    SobolevFitSpec,
    evaluate,
    load_model,
    save_model,
    train_random_feature_model,
    train_random_nn,
    weighted_sobolev_error,
)
from .sampling import Gaussian, SeededStream, StudentT, StudentTPair

__version__ = "0.1.0"

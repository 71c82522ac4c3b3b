"""UE positioning from angle-delay profiles with a from-scratch Vision Transformer."""
from .adp import AdpMatrix, compute_adp, dft_f, dft_v, normalize_adp
from .channel import ChannelSample, PathParams, ScenarioConfig, generate_channel, generate_dataset
from .metrics import EvalReport, error_cdf, rmse
from .training import LabelScaler, TrainConfig, split_dataset, train
from .vit import VitConfig, VitRegressor

__version__ = "0.1.0"

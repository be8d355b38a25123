from .model import N_CLASSES, Network, NetworkSpec, init_params
from .ops import NumericError
from .train import EpochRecord, Metrics, Split, TrainConfig, TrainResult, evaluate, train

__all__ = ["N_CLASSES", "Network", "NetworkSpec", "init_params", "NumericError", "EpochRecord",
           "Metrics", "Split", "TrainConfig", "TrainResult", "evaluate", "train"]

from .config import ConfigError, ExperimentConfig, Mix, load_config, parse_config
from .io import Dataset, FormatError, read_checkpoint, read_dataset, write_checkpoint, write_dataset
from .pipeline import DataError, evaluate_checkpoint, sar_figures, synthesize, train_cell
from .report import make_report

__all__ = ["ConfigError", "ExperimentConfig", "Mix", "load_config", "parse_config", "Dataset",
           "FormatError", "read_checkpoint", "read_dataset", "write_checkpoint", "write_dataset",
           "DataError", "evaluate_checkpoint", "sar_figures", "synthesize", "train_cell", "make_report"]

"""Universal federated domain adaptation simulator: black-box source APIs,
pseudo-hot labels, GMM-based contrastive label disambiguation and
mutual-voting open-set decisions, all on synthetic feature-space domains."""
from .config import RunConfig, config_from_dict, load_config
from .errors import (ConfigurationError, DegenerateInputError, DivergenceError, InvariantError,
                     LabelAccessError, ProtocolError, UfdaError)
from .federation import ExperimentReport, evaluate, run_experiment, schedule_rounds, write_report

__version__ = "0.1.0"

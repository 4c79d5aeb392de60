"""Decentralized Consensus Learning over a simulated lossy gossip network."""
from .consensus import DEFAULT_GAMMA, Node, NodeConfig, Phase
from .data import (BatchStream, LabeledDataset, MixSpec, load_idx, make_synthetic,
                   split_biased, split_equal)
from .errors import (BadMagicError, ConfigError, ConsensusLearningError, CountMismatchError,
                     DimensionError, IdxFormatError, TruncatedFileError, UsageError)
from .harness import (ExperimentConfig, MetricsRecord, read_csv, run, run_consensus,
                      run_monolithic, sweep, write_csv)
from .model import AdamState, Architecture, Batch, MlpModel, init_params, train_on_batch
from .netsim import Delivery, Flag, Message, Network, NetworkConfig, SendResult
from .params import add_in_place, pair_update, weighted_delta

__version__ = "0.1.0"

"""Multi-hop selective generation for question-driven abstractive answers."""

from .config import ConfigError, TrainConfig
from .corpus import Batch, BatchLimits, RawExample, Vocabulary, build_vocab, load_dataset, make_batch, tokenize
from .model import MSGModel

__all__ = [
    "Batch", "BatchLimits", "ConfigError", "MSGModel", "RawExample", "TrainConfig", "Vocabulary",
    "build_vocab", "load_dataset", "make_batch", "tokenize",
]
__version__ = "0.1.0"

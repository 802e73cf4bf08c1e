"""Self-corrective learning for sequence generation.

A base generator drafts, a trainable corrector iteratively improves the
draft under a scalar value function, optionally conditioned on natural-
language feedback. The training loop pairs lower-valued generations with
higher-valued ones from a growing datapool and samples training pairs
proportional to value improvement and proximity.
"""

from .core import (
    Candidate,
    ConfigError,
    Hyperparams,
    SelfCorrectError,
    TaskInstance,
    TokenSeq,
    detokenize,
    format_corrector_input,
    tokenize,
)
from .engine import (
    AblationFlags,
    Datapool,
    DecodeModes,
    EvalReport,
    NoPairsAvailable,
    RunConfig,
    Trajectory,
    evaluate,
    explore,
    infer_trajectory,
    init_datapool,
    train,
)
from .model import ToyModelParams, TrainingExample, Vocab, decode, train_batch
from .pairing import (
    EmptyPairSet,
    ValueImprovingPair,
    form_pairs,
    pair_weight,
    sample_pair,
    similarity,
)

__version__ = "0.1.0"

__all__ = [
    "AblationFlags",
    "Candidate",
    "ConfigError",
    "Datapool",
    "DecodeModes",
    "EmptyPairSet",
    "EvalReport",
    "Hyperparams",
    "NoPairsAvailable",
    "RunConfig",
    "SelfCorrectError",
    "TaskInstance",
    "TokenSeq",
    "ToyModelParams",
    "TrainingExample",
    "Trajectory",
    "ValueImprovingPair",
    "Vocab",
    "decode",
    "detokenize",
    "evaluate",
    "explore",
    "form_pairs",
    "format_corrector_input",
    "infer_trajectory",
    "init_datapool",
    "pair_weight",
    "sample_pair",
    "similarity",
    "tokenize",
    "train",
    "train_batch",
]

"""Encoder-decoder generation of multi-word tag sequences."""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, save_checkpoint
from .config import DecodeConfig, RunConfig, TrainConfig, ablation_matrix, load_config
from .corpus import Document, Vocab, build_vocab, ingest_corpus, local_positions, parse_tag_stream, reorder_tags, serialize_tags
from .estimator import TagSequenceRecommender
from .evaluation import EvalReport, error_accounting, evaluate_corpus, prf
from .inference import NBestList, beam_search, classify_tags, generate, greedy_decode, n_best_voting
from .model import TagModel
from .synth import SynthSpec, synth_corpus
from .training import train

__all__ = [
    "Document", "Vocab", "build_vocab", "ingest_corpus", "local_positions", "parse_tag_stream",
    "reorder_tags", "serialize_tags", "TrainConfig", "DecodeConfig", "RunConfig", "load_config",
    "ablation_matrix", "TagModel", "train", "save_checkpoint", "load_checkpoint", "beam_search",
    "greedy_decode", "n_best_voting", "generate", "classify_tags", "NBestList", "prf",
    "evaluate_corpus", "error_accounting", "EvalReport", "TagSequenceRecommender", "SynthSpec",
    "synth_corpus",
]

"""kwasr: a desk-scale laboratory for keyword-conditioned transcription.

The package builds synthetic speech-like corpora with engineered homonyms,
trains a small decoder-only byte model whose prompt carries keyword hints,
and measures how those hints change recognition quality.
"""

__version__ = "0.1.0"

from kwasr.text import Tokenizer, normalize
from kwasr.prompts import PromptRecord, TrainExample, assemble_example, render_prompt
from kwasr.lexicon import SyntheticLexicon, build_lexicon
from kwasr.audio import AdapterWeights, FeatureSequence, project, stack_frames, synth_features
from kwasr.model import DecoderConfig, DecoderModel, LoraConfig, lora_param_count, trainable_fraction
from kwasr.training import OptimizerConfig, fit, make_batches, scaled_lr, schedule_lr
from kwasr.decoding import GenerationLimits, greedy_decode, max_gen_tokens
from kwasr.metrics import EditOps, MetricReport, align, error_rate, kwer, relative_reduction, select_eval_keywords
from kwasr.corpus import CorpusSpec, Utterance, compose_training_mix, filter_videos, generate_corpus, propose_keywords, vote_keywords

__all__ = [
    "Tokenizer", "normalize",
    "PromptRecord", "TrainExample", "assemble_example", "render_prompt",
    "SyntheticLexicon", "build_lexicon",
    "AdapterWeights", "FeatureSequence", "project", "stack_frames", "synth_features",
    "DecoderConfig", "DecoderModel", "LoraConfig", "lora_param_count", "trainable_fraction",
    "OptimizerConfig", "fit", "make_batches", "scaled_lr", "schedule_lr",
    "GenerationLimits", "greedy_decode", "max_gen_tokens",
    "EditOps", "MetricReport", "align", "error_rate", "kwer", "relative_reduction", "select_eval_keywords",
    "CorpusSpec", "Utterance", "compose_training_mix", "filter_videos", "generate_corpus",
    "propose_keywords", "vote_keywords",
]

"""minitune: toy-scale adapter tuning of a tiny causal LM, served over HTTP.

The package consumes instruction JSONL files (``instruction``/``input``/
``output`` per line), pretrains a small decoder-only transformer on them,
fits a frozen-base low-rank adapter on the response tokens, and serves the
result behind ``POST /predict``.
"""

from .data import Sample, load_jsonl
from .decoding import ResponseTemplater, greedy_generate
from .errors import ArtifactError, ConfigError, DataFormatError, HarnessError
from .evalmetrics import category_set_match, combined_cross_entropy, response_fields
from .model import BASE_MODELS, LoRALinear, TinyCausalLM, apply_lora
from .serve import create_app, run_server
from .tokenizer import WordTokenizer, word_tokens
from .tune import ServingModel, TuneConfig, TuneResult, load_artifact, tune

__version__ = "0.1.0"

__all__ = [
    "ArtifactError",
    "BASE_MODELS",
    "ConfigError",
    "DataFormatError",
    "HarnessError",
    "LoRALinear",
    "ResponseTemplater",
    "Sample",
    "ServingModel",
    "TinyCausalLM",
    "TuneConfig",
    "TuneResult",
    "WordTokenizer",
    "apply_lora",
    "category_set_match",
    "combined_cross_entropy",
    "create_app",
    "greedy_generate",
    "load_artifact",
    "load_jsonl",
    "response_fields",
    "run_server",
    "tune",
    "word_tokens",
    "__version__",
]

"""Two-phase tuning: brief base pretraining, then frozen-base adapter tuning.

No model hub is assumed reachable, so the "pretrained" base is produced
in-process: the tiny transformer is trained causally on the full corpus for
a few epochs and saved as ``base_weights.pt``. Every base parameter is then
frozen and only the low-rank adapter is optimized, with the loss restricted
to response tokens. The artifact directory holds base weights, adapter,
tokenizer, config, and metrics — everything needed to serve.
"""

import json
import logging
import random
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn.functional as F

from .data import encode_sample, load_jsonl
from .decoding import ResponseTemplater, bracket_segments, greedy_generate
from .errors import ArtifactError, ConfigError, DataFormatError
from .evalmetrics import category_set_match, combined_cross_entropy, response_fields
from .model import (
    ModelDims,
    TinyCausalLM,
    adapter_parameters,
    adapter_state_dict,
    apply_lora,
    load_adapter_state,
    resolve_base_model,
)
from .tokenizer import WordTokenizer, word_tokens

logger = logging.getLogger(__name__)

ARTIFACT_FORMAT_VERSION = 1

CONFIG_FILE = "config.json"
TOKENIZER_FILE = "tokenizer.json"
BASE_WEIGHTS_FILE = "base_weights.pt"
ADAPTER_FILE = "adapter.pt"
METRICS_FILE = "metrics.json"


@dataclass(frozen=True)
class TuneConfig:
    """Knobs for one tuning run.

    ``epochs`` counts adapter epochs; the base pretraining phase has its own
    budget. The rank bound enforces that the adapter stays far below the
    full rank of the projections it wraps, not merely below it.
    """

    base_model: str = "mini-128"
    rank: int = 8
    learning_rate: float = 3e-3
    batch_size: int = 16
    epochs: int = 40
    port: int = 8947
    pretrain_epochs: int = 30
    holdout_fraction: float = 0.1
    lora_alpha: float = 16.0
    max_new_tokens: int = 48
    seed: int = 0

    def __post_init__(self):
        dims = resolve_base_model(self.base_model)
        if self.rank < 1:
            raise ConfigError(f"adapter rank must be >= 1, got {self.rank}")
        rank_limit = min(dims.d_model, dims.d_ff) // 4
        if self.rank > rank_limit:
            raise ConfigError(
                f"adapter rank must stay well below the layer width: "
                f"rank <= {rank_limit} for base model {self.base_model!r}, "
                f"got {self.rank}"
            )
        if not (self.learning_rate > 0):
            raise ConfigError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.pretrain_epochs < 0:
            raise ConfigError(
                f"pretrain_epochs must be >= 0, got {self.pretrain_epochs}"
            )
        if not (0.0 <= self.holdout_fraction <= 0.5):
            raise ConfigError(
                f"holdout_fraction must be in [0, 0.5], got {self.holdout_fraction}"
            )
        if not (1 <= self.port <= 65535):
            raise ConfigError(f"port must be in [1, 65535], got {self.port}")
        if not (self.lora_alpha > 0):
            raise ConfigError(f"lora_alpha must be positive, got {self.lora_alpha}")
        if self.max_new_tokens < 4:
            raise ConfigError(
                f"max_new_tokens must be >= 4, got {self.max_new_tokens}"
            )

    @property
    def dims(self) -> ModelDims:
        return resolve_base_model(self.base_model)


@dataclass
class TuneResult:
    artifact_dir: Path
    metrics: dict


def collect_category_names(samples) -> list:
    """Category vocabulary: every name inside a ``POIs: [...]`` group.

    Instructions carry the full candidate list, outputs the labels actually
    used; the union (first-seen order) covers categories that never appear
    in any output.
    """
    seen = {}
    for sample in samples:
        for text in (sample.instruction, sample.output_text):
            for segment in bracket_segments(word_tokens(text), "pois"):
                seen.setdefault(" ".join(segment), None)
    return list(seen)


def _batches(encoded, batch_size, rng):
    order = list(range(len(encoded)))
    rng.shuffle(order)
    for start in range(0, len(order), batch_size):
        yield [encoded[i] for i in order[start : start + batch_size]]


def _batch_tensors(batch, pad_id: int, mask_prompt: bool):
    width = max(s.n_tokens for s in batch)
    x = torch.full((len(batch), width), pad_id, dtype=torch.long)
    # Targets at position t are the token at t+1; -100 marks positions whose
    # next token is padding or, in the adapter phase, still inside the prompt.
    y = torch.full((len(batch), width - 1), -100, dtype=torch.long)
    for row, sample in enumerate(batch):
        ids = torch.tensor(sample.ids, dtype=torch.long)
        x[row, : sample.n_tokens] = ids
        first = sample.prompt_len - 1 if mask_prompt else 0
        y[row, first : sample.n_tokens - 1] = ids[first + 1 :]
    return x, y


def _train_phase(
    model,
    encoded,
    params,
    config: TuneConfig,
    pad_id: int,
    epochs: int,
    mask_prompt: bool,
    phase: str,
) -> list:
    if epochs == 0 or not encoded:
        return []
    optimizer = torch.optim.Adam(params, lr=config.learning_rate)
    rng = random.Random(config.seed + (1 if mask_prompt else 0))
    losses = []
    model.train()
    for epoch in range(epochs):
        epoch_losses = []
        for batch in _batches(encoded, config.batch_size, rng):
            x, y = _batch_tensors(batch, pad_id=pad_id, mask_prompt=mask_prompt)
            logits = model(x)[:, :-1]
            loss = F.cross_entropy(
                logits.reshape(-1, logits.shape[-1]), y.reshape(-1), ignore_index=-100
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
            epoch_losses.append(losses[-1])
            logger.debug("[%s] step %d loss %.4f", phase, len(losses), losses[-1])
        logger.info(
            "[%s] epoch %d/%d mean loss %.4f",
            phase,
            epoch + 1,
            epochs,
            sum(epoch_losses) / len(epoch_losses),
        )
    return losses


@dataclass
class ServingModel:
    """A loaded artifact ready to answer prompts."""

    model: TinyCausalLM
    tokenizer: WordTokenizer
    templater: ResponseTemplater
    config: TuneConfig

    def respond_tokens(self, instruction: str, input_text: str) -> list:
        prompt = (
            [self.tokenizer.bos_id]
            + self.tokenizer.encode(instruction)
            + self.tokenizer.encode(input_text)
            + [self.tokenizer.sep_id]
        )
        generated = greedy_generate(
            self.model,
            prompt,
            eos_id=self.tokenizer.eos_id,
            max_new_tokens=self.config.max_new_tokens,
        )
        return self.tokenizer.decode_tokens(generated)

    def respond(self, instruction: str, input_text: str) -> str:
        return self.templater.coerce(self.respond_tokens(instruction, input_text))


def _evaluate(serving: ServingModel, train, holdout) -> dict:
    names = serving.templater.category_names
    matched = 0
    for sample in train:
        truth_names, _ = response_fields(sample.output_text, names)
        pred_names, _ = serving.templater.extract(
            serving.respond_tokens(sample.instruction, sample.input_text)
        )
        matched += category_set_match(truth_names, pred_names)
    eval_pool = holdout if holdout else train
    ce_values = []
    for sample in eval_pool:
        truth_names, truth_cost = response_fields(sample.output_text, names)
        pred_names, pred_cost = serving.templater.extract(
            serving.respond_tokens(sample.instruction, sample.input_text)
        )
        ce_values.append(
            combined_cross_entropy(
                truth_names, truth_cost, pred_names, pred_cost, names
            )
        )
    return {
        "memorization_rate": matched / len(train),
        "combined_ce_mean": sum(ce_values) / len(ce_values),
        "combined_ce_pool": "holdout" if holdout else "train",
    }


def tune(data_path, out_dir, config: TuneConfig) -> TuneResult:
    """Tune on ``data_path`` and write a serveable artifact to ``out_dir``."""
    started = time.monotonic()
    samples = load_jsonl(data_path)
    if not samples:
        raise DataFormatError(f"{data_path}: dataset is empty")

    texts = []
    for s in samples:
        texts.extend((s.instruction, s.input_text, s.output_text))
    tokenizer = WordTokenizer.build(texts)
    category_names = collect_category_names(samples)

    encoded = [encode_sample(s, tokenizer) for s in samples]
    for line_no, enc in enumerate(encoded, start=1):
        if enc.n_tokens > config.dims.max_len:
            raise DataFormatError(
                f"line {line_no}: sample needs {enc.n_tokens} tokens, "
                f"model window is {config.dims.max_len}"
            )

    order = list(range(len(samples)))
    random.Random(config.seed).shuffle(order)
    n_holdout = min(int(round(len(samples) * config.holdout_fraction)), len(samples) - 1)
    holdout_idx = set(order[:n_holdout])
    train = [samples[i] for i in range(len(samples)) if i not in holdout_idx]
    train_encoded = [encoded[i] for i in range(len(samples)) if i not in holdout_idx]
    holdout = [samples[i] for i in sorted(holdout_idx)]
    logger.info(
        "tuning on %d samples (%d held out), vocab %d tokens, %d categories",
        len(train),
        len(holdout),
        tokenizer.vocab_size,
        len(category_names),
    )

    torch.manual_seed(config.seed)
    model = TinyCausalLM(config.dims, tokenizer.vocab_size)
    pretrain_losses = _train_phase(
        model,
        train_encoded,
        list(model.parameters()),
        config,
        pad_id=tokenizer.pad_id,
        epochs=config.pretrain_epochs,
        mask_prompt=False,
        phase="pretrain",
    )
    base_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    apply_lora(model, config.rank, config.lora_alpha)
    adapter_losses = _train_phase(
        model,
        train_encoded,
        adapter_parameters(model),
        config,
        pad_id=tokenizer.pad_id,
        epochs=config.epochs,
        mask_prompt=True,
        phase="adapter",
    )

    serving = ServingModel(
        model=model,
        tokenizer=tokenizer,
        templater=ResponseTemplater(category_names),
        config=config,
    )
    metrics = {
        "n_samples": len(samples),
        "n_train": len(train),
        "n_holdout": len(holdout),
        "vocab_size": tokenizer.vocab_size,
        "n_categories": len(category_names),
        "pretrain_loss": pretrain_losses,
        "adapter_loss": adapter_losses,
    }
    metrics.update(_evaluate(serving, train, holdout))
    metrics["tune_seconds"] = round(time.monotonic() - started, 3)
    logger.info(
        "memorization %.3f, combined CE %.4f over %s pool, %.1fs",
        metrics["memorization_rate"],
        metrics["combined_ce_mean"],
        metrics["combined_ce_pool"],
        metrics["tune_seconds"],
    )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "config": asdict(config),
        "category_names": list(category_names),
    }
    (out_dir / CONFIG_FILE).write_text(
        json.dumps(payload, indent=1) + "\n", encoding="utf-8"
    )
    tokenizer.save(out_dir / TOKENIZER_FILE)
    torch.save(base_state, out_dir / BASE_WEIGHTS_FILE)
    torch.save(adapter_state_dict(model), out_dir / ADAPTER_FILE)
    (out_dir / METRICS_FILE).write_text(
        json.dumps(metrics, indent=1) + "\n", encoding="utf-8"
    )
    return TuneResult(artifact_dir=out_dir, metrics=metrics)


def load_artifact(artifact_dir) -> ServingModel:
    """Reassemble base + adapter + tokenizer from an artifact directory."""
    artifact_dir = Path(artifact_dir)
    config_path = artifact_dir / CONFIG_FILE
    if not config_path.is_file():
        raise ArtifactError(f"no {CONFIG_FILE} in {artifact_dir}")
    payload = json.loads(config_path.read_text(encoding="utf-8"))
    if payload.get("format_version") != ARTIFACT_FORMAT_VERSION:
        raise ArtifactError(
            f"unsupported artifact version {payload.get('format_version')!r}"
        )
    config = TuneConfig(**payload["config"])
    tokenizer = WordTokenizer.load(artifact_dir / TOKENIZER_FILE)
    model = TinyCausalLM(config.dims, tokenizer.vocab_size)
    model.load_state_dict(torch.load(artifact_dir / BASE_WEIGHTS_FILE))
    apply_lora(model, config.rank, config.lora_alpha)
    load_adapter_state(model, torch.load(artifact_dir / ADAPTER_FILE))
    model.eval()
    return ServingModel(
        model=model,
        tokenizer=tokenizer,
        templater=ResponseTemplater(payload["category_names"]),
        config=config,
    )

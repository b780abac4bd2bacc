"""Tiny causal transformer and its low-rank adapter.

The base network is a standard pre-norm decoder-only transformer, small
enough to pretrain from scratch on a few hundred samples in seconds on a
CPU. Adapter tuning freezes every base parameter and adds a rank-``r``
update to each attention and feed-forward projection:

    h = W0 x + (alpha / r) * B (A x)

with ``A`` (r x in) randomly initialized and ``B`` (out x r) zero, so the
wrapped network starts out computing exactly what the frozen base computes.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ArtifactError, ConfigError


@dataclass(frozen=True)
class ModelDims:
    d_model: int
    n_layers: int
    n_heads: int
    d_ff: int
    max_len: int


BASE_MODELS = {
    "pico-64": ModelDims(d_model=64, n_layers=1, n_heads=2, d_ff=128, max_len=384),
    "mini-128": ModelDims(d_model=128, n_layers=2, n_heads=4, d_ff=256, max_len=384),
}


def resolve_base_model(name: str) -> ModelDims:
    try:
        return BASE_MODELS[name]
    except KeyError:
        known = ", ".join(sorted(BASE_MODELS))
        raise ConfigError(f"unknown base model {name!r}; known: {known}") from None


class CausalSelfAttention(nn.Module):
    def __init__(self, dims: ModelDims):
        super().__init__()
        if dims.d_model % dims.n_heads != 0:
            raise ConfigError(
                f"d_model {dims.d_model} not divisible by n_heads {dims.n_heads}"
            )
        self.n_heads = dims.n_heads
        self.head_dim = dims.d_model // dims.n_heads
        self.q_proj = nn.Linear(dims.d_model, dims.d_model)
        self.k_proj = nn.Linear(dims.d_model, dims.d_model)
        self.v_proj = nn.Linear(dims.d_model, dims.d_model)
        self.o_proj = nn.Linear(dims.d_model, dims.d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, seq, _ = x.shape

        def split(t):
            return t.view(batch, seq, self.n_heads, self.head_dim).transpose(1, 2)

        q, k, v = split(self.q_proj(x)), split(self.k_proj(x)), split(self.v_proj(x))
        out = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        out = out.transpose(1, 2).reshape(batch, seq, -1)
        return self.o_proj(out)


class Block(nn.Module):
    def __init__(self, dims: ModelDims):
        super().__init__()
        self.ln1 = nn.LayerNorm(dims.d_model)
        self.attn = CausalSelfAttention(dims)
        self.ln2 = nn.LayerNorm(dims.d_model)
        self.fc_in = nn.Linear(dims.d_model, dims.d_ff)
        self.fc_out = nn.Linear(dims.d_ff, dims.d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        x = x + self.fc_out(F.gelu(self.fc_in(self.ln2(x))))
        return x


class TinyCausalLM(nn.Module):
    def __init__(self, dims: ModelDims, vocab_size: int):
        super().__init__()
        self.dims = dims
        self.vocab_size = vocab_size
        self.tok_emb = nn.Embedding(vocab_size, dims.d_model)
        self.pos_emb = nn.Embedding(dims.max_len, dims.d_model)
        self.blocks = nn.ModuleList(Block(dims) for _ in range(dims.n_layers))
        self.ln_f = nn.LayerNorm(dims.d_model)
        self.head = nn.Linear(dims.d_model, vocab_size, bias=False)
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module):
        if isinstance(module, (nn.Linear, nn.Embedding)):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
            if isinstance(module, nn.Linear) and module.bias is not None:
                nn.init.zeros_(module.bias)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        _, seq = ids.shape
        if seq > self.dims.max_len:
            raise ValueError(
                f"sequence of {seq} tokens exceeds model window {self.dims.max_len}"
            )
        positions = torch.arange(seq, device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(positions)
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_f(x))


class LoRALinear(nn.Module):
    """A frozen linear layer plus a trainable low-rank residual."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float):
        super().__init__()
        if rank < 1:
            raise ConfigError(f"adapter rank must be >= 1, got {rank}")
        full = min(base.in_features, base.out_features)
        if rank > full:
            raise ConfigError(
                f"adapter rank {rank} exceeds the layer's full rank {full}"
            )
        base.weight.requires_grad_(False)
        if base.bias is not None:
            base.bias.requires_grad_(False)
        self.base = base
        self.rank = rank
        self.scale = alpha / rank
        self.lora_a = nn.Parameter(torch.randn(rank, base.in_features) * 0.02)
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + F.linear(F.linear(x, self.lora_a), self.lora_b) * self.scale


# Projections that receive an adapter; embeddings, layer norms, and the LM
# head stay dense and frozen.
_ADAPTER_SITES = (
    ("attn", "q_proj"),
    ("attn", "k_proj"),
    ("attn", "v_proj"),
    ("attn", "o_proj"),
    (None, "fc_in"),
    (None, "fc_out"),
)


def apply_lora(model: TinyCausalLM, rank: int, alpha: float) -> TinyCausalLM:
    """Freeze ``model`` and wrap its block projections with LoRA in place."""
    for param in model.parameters():
        param.requires_grad_(False)
    for block in model.blocks:
        for owner_name, attr in _ADAPTER_SITES:
            owner = getattr(block, owner_name) if owner_name else block
            setattr(owner, attr, LoRALinear(getattr(owner, attr), rank, alpha))
    return model


def adapter_parameters(model: TinyCausalLM) -> list:
    return [p for p in model.parameters() if p.requires_grad]


def adapter_state_dict(model: TinyCausalLM) -> dict:
    return {
        name: tensor.detach().clone()
        for name, tensor in model.state_dict().items()
        if ".lora_a" in name or ".lora_b" in name
    }


def load_adapter_state(model: TinyCausalLM, state: dict) -> None:
    expected = set(adapter_state_dict(model))
    if set(state) != expected:
        raise ArtifactError(
            f"adapter state has {len(state)} tensors, model expects {len(expected)}"
        )
    missing, unexpected = model.load_state_dict(state, strict=False)
    if unexpected:
        raise ArtifactError(f"unexpected adapter tensors: {sorted(unexpected)[:3]}")
    leftover = [name for name in missing if ".lora_" in name]
    if leftover:
        raise ArtifactError(f"adapter tensors not loaded: {leftover[:3]}")

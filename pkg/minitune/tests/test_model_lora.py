import pytest
import torch
import torch.nn.functional as F
from torch import nn

from minitune.errors import ConfigError
from minitune.model import (
    BASE_MODELS,
    LoRALinear,
    TinyCausalLM,
    adapter_parameters,
    adapter_state_dict,
    apply_lora,
    load_adapter_state,
    resolve_base_model,
)

DIMS = BASE_MODELS["pico-64"]


def _model(vocab_size=37, seed=11):
    torch.manual_seed(seed)
    return TinyCausalLM(DIMS, vocab_size)


def test_forward_shape():
    model = _model()
    logits = model(torch.randint(0, 37, (3, 21)))
    assert logits.shape == (3, 21, 37)


def test_causal_masking_prefix_invariance():
    # Changing a future token must not change logits at earlier positions.
    model = _model()
    model.eval()
    ids = torch.randint(0, 37, (1, 16))
    other = ids.clone()
    other[0, -1] = (other[0, -1] + 1) % 37
    with torch.no_grad():
        a = model(ids)[0, :-1]
        b = model(other)[0, :-1]
    assert torch.equal(a, b)


def test_sequence_longer_than_window_rejected():
    model = _model()
    with pytest.raises(ValueError, match="window"):
        model(torch.zeros((1, DIMS.max_len + 1), dtype=torch.long))


def test_unknown_base_model_rejected():
    with pytest.raises(ConfigError, match="unknown base model"):
        resolve_base_model("giga-7b")


def test_lora_initial_delta_is_zero():
    # B starts at zero, so the wrapped layer equals the base layer exactly.
    torch.manual_seed(0)
    base = nn.Linear(10, 6)
    x = torch.randn(4, 10)
    expected = base(x).detach().clone()
    wrapped = LoRALinear(base, rank=3, alpha=6.0)
    with torch.no_grad():
        assert torch.equal(wrapped(x), expected)


def test_lora_forward_matches_manual_update():
    # h = W0 x + (alpha/r) * B (A x), checked against explicit matmuls.
    torch.manual_seed(1)
    base = nn.Linear(8, 5)
    wrapped = LoRALinear(base, rank=2, alpha=4.0)
    with torch.no_grad():
        wrapped.lora_a.copy_(torch.randn(2, 8))
        wrapped.lora_b.copy_(torch.randn(5, 2))
        x = torch.randn(7, 8)
        manual = base(x) + (4.0 / 2) * (x @ wrapped.lora_a.T) @ wrapped.lora_b.T
        assert torch.allclose(wrapped(x), manual, atol=1e-6)


def test_lora_rank_bounds():
    base = nn.Linear(8, 5)
    with pytest.raises(ConfigError, match=">= 1"):
        LoRALinear(base, rank=0, alpha=1.0)
    with pytest.raises(ConfigError, match="full rank"):
        LoRALinear(nn.Linear(8, 5), rank=6, alpha=1.0)


def test_apply_lora_freezes_base_and_exposes_adapter():
    model = _model()
    apply_lora(model, rank=4, alpha=8.0)
    trainable = adapter_parameters(model)
    assert trainable, "adapter must expose trainable parameters"
    for name, param in model.named_parameters():
        if ".lora_a" in name or ".lora_b" in name:
            assert param.requires_grad
        else:
            assert not param.requires_grad, f"{name} should be frozen"
    # Six projections per block, two tensors each.
    assert len(trainable) == 2 * 6 * DIMS.n_layers
    for name, tensor in adapter_state_dict(model).items():
        if name.endswith("lora_a"):
            assert tensor.shape[0] == 4
        else:
            assert tensor.shape[1] == 4


def test_adapter_step_leaves_base_bitwise_unchanged():
    model = _model()
    apply_lora(model, rank=2, alpha=4.0)
    frozen_before = {
        name: param.detach().clone()
        for name, param in model.named_parameters()
        if ".lora_" not in name
    }
    adapter_before = {
        name: tensor.clone() for name, tensor in adapter_state_dict(model).items()
    }
    opt = torch.optim.Adam(adapter_parameters(model), lr=1e-2)
    ids = torch.randint(0, 37, (2, 12))
    logits = model(ids)[:, :-1]
    loss = F.cross_entropy(logits.reshape(-1, 37), ids[:, 1:].reshape(-1))
    loss.backward()
    opt.step()
    for name, param in model.named_parameters():
        if ".lora_" not in name:
            assert torch.equal(param, frozen_before[name]), name
    changed = [
        name
        for name, tensor in adapter_state_dict(model).items()
        if not torch.equal(tensor, adapter_before[name])
    ]
    assert changed, "an optimizer step must move the adapter"


def test_adapter_state_round_trip():
    model = _model(seed=5)
    apply_lora(model, rank=3, alpha=6.0)
    opt = torch.optim.Adam(adapter_parameters(model), lr=1e-2)
    ids = torch.randint(0, 37, (2, 10))
    loss = F.cross_entropy(
        model(ids)[:, :-1].reshape(-1, 37), ids[:, 1:].reshape(-1)
    )
    loss.backward()
    opt.step()
    state = adapter_state_dict(model)

    fresh = _model(seed=5)
    apply_lora(fresh, rank=3, alpha=6.0)
    load_adapter_state(fresh, state)
    x = torch.randint(0, 37, (1, 9))
    with torch.no_grad():
        assert torch.equal(model(x), fresh(x))


def test_load_adapter_state_rejects_wrong_rank():
    model = _model(seed=5)
    apply_lora(model, rank=3, alpha=6.0)
    donor = _model(seed=5)
    apply_lora(donor, rank=2, alpha=6.0)
    from minitune.errors import ArtifactError

    with pytest.raises((ArtifactError, RuntimeError)):
        load_adapter_state(model, adapter_state_dict(donor))

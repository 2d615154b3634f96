import numpy as np
import pytest
import torch

from fusionbench import (
    AttentionBlock,
    AttentionBlockConfig,
    ClassificationHead,
    CnnBackboneConfig,
    FusionSpec,
    HeadConfig,
    TextEncoderConfig,
    VitBackboneConfig,
    build_cnn_backbone,
    build_early_fusion,
    build_intermediate_fusion,
    build_late_fusion,
    build_text_encoder,
    build_vit_backbone,
    decide,
)
from fusionbench.errors import ConfigurationError, ShapeError

from conftest import make_trio


# ---------------------------------------------------------------------------
# late fusion

def test_late_head_width_toy():
    model = make_trio("late")
    assert model.head_in_dim == 64 + 40  # text hidden + final cnn channels


def test_late_head_width_full_scale_shape_probe():
    # pooled widths depend on hidden sizes only, so a 2-layer probe at the
    # full-scale widths exercises the same concatenation contract
    text = build_text_encoder(
        TextEncoderConfig(vocab_size=512, max_seq_len=16, num_layers=2,
                          hidden_dim=768, num_heads=12, ff_dim=1024)
    )
    vision = build_cnn_backbone(
        CnnBackboneConfig(width_multiplier=1.4, input_resolution=64)
    )
    model = build_late_fusion(text, vision, FusionSpec(strategy="late")).eval()
    batch = model.probe_batch(1, seed=0)
    with torch.no_grad():
        hooked = {}

        def capture(module, inputs, output):
            hooked["width"] = inputs[0].shape[1]

        handle = model.head.fc1.register_forward_hook(capture)
        model(**batch)
        handle.remove()
    expected = 768 + max(4, round(160 * 1.4))
    assert model.head_in_dim == expected
    assert hooked["width"] == expected


def test_late_fusion_freezes_exactly_the_backbones():
    model = make_trio("late")
    assert model.frozen_set == {"text_backbone", "vision_backbone"}
    for name, param in model.named_parameters():
        in_backbone = name.startswith(("text_backbone.", "vision_backbone."))
        assert param.requires_grad == (not in_backbone), name


def test_late_fusion_batch_mismatch():
    model = make_trio("late")
    batch = model.probe_batch(2)
    with pytest.raises(ShapeError, match="mismatched batch"):
        model(batch["tokens"], batch["mask"], batch["image"][:1])


# ---------------------------------------------------------------------------
# intermediate fusion

def test_intermediate_registry_truncated_to_max_tap():
    model = make_trio("intermediate")
    names = [n for n, _ in model.named_parameters()]
    assert not any(n.startswith("text_backbone.layers.8.") for n in names)
    assert not any(n.startswith("vision_backbone.bottlenecks.8.") for n in names)
    # layers 1..8 are all present
    for i in range(8):
        assert any(n.startswith(f"text_backbone.layers.{i}.") for n in names)
        assert any(n.startswith(f"vision_backbone.bottlenecks.{i}.") for n in names)


def test_intermediate_head_width_three_joins():
    model = make_trio("intermediate", fusion_dim=64)
    assert model.head_in_dim == 3 * 2 * 64


def test_intermediate_tap_wiring():
    model = make_trio("intermediate")
    # taps 4 and 7 joined through learned linear maps, tap 8 through the
    # attention block
    assert model.taps == (4, 7, 8)
    assert len(model.tap_join) == 2
    assert isinstance(model.attention_block, AttentionBlock)
    f = model.spec.fusion_dim
    for join in model.tap_join:
        assert join.in_features == 2 * f and join.out_features == 2 * f


def test_intermediate_tap_exceeds_depth():
    text = build_text_encoder(TextEncoderConfig(num_layers=6))
    vision = build_cnn_backbone(CnnBackboneConfig())
    with pytest.raises(ConfigurationError, match="tap 8 exceeds"):
        build_intermediate_fusion(text, vision, FusionSpec(strategy="intermediate"))


def test_intermediate_vit_depth_must_match_text():
    text = build_text_encoder(TextEncoderConfig(num_layers=12))
    vision = build_vit_backbone(VitBackboneConfig(num_layers=8))
    with pytest.raises(ConfigurationError, match="equal encoder depths"):
        build_intermediate_fusion(text, vision, FusionSpec(strategy="intermediate"))


def test_intermediate_with_vit_builds_and_runs():
    model = make_trio("intermediate", vision="vit")
    batch = model.probe_batch(2)
    assert model(**batch).shape == (2, 2)


# ---------------------------------------------------------------------------
# early fusion

def test_early_joint_sequence_length():
    model = make_trio("early")
    batch = model.probe_batch(2)
    model(**batch)
    # 32 text tokens + 16 vision tokens at the cut
    assert model.last_joint_shape == (2, 48, 64)


def test_early_block_grid_builds():
    for blocks in (2, 4, 6, 8):
        model = make_trio("early", num_attention_blocks=blocks)
        assert len(model.blocks) == blocks
        batch = model.probe_batch(1)
        model.eval()
        with torch.no_grad():
            assert model(**batch).shape == (1, 2)


def test_early_cut_exceeds_depth():
    text = build_text_encoder(TextEncoderConfig(num_layers=4))
    vision = build_cnn_backbone(CnnBackboneConfig())
    with pytest.raises(ConfigurationError, match="cut_layer 6 exceeds"):
        build_early_fusion(text, vision, FusionSpec(strategy="early"))


def test_early_registry_truncated_at_cut():
    model = make_trio("early")
    names = [n for n, _ in model.named_parameters()]
    assert not any(n.startswith("text_backbone.layers.6.") for n in names)
    assert not any(n.startswith("vision_backbone.bottlenecks.6.") for n in names)


def test_early_with_vit_tokens():
    model = make_trio("early", vision="vit")
    batch = model.probe_batch(1)
    model(**batch)
    # 32 text tokens + 65 vit tokens (64 patches + class token)
    assert model.last_joint_shape[1] == 32 + 65


# ---------------------------------------------------------------------------
# attention block

def test_attention_block_shape_identity():
    block = AttentionBlock(AttentionBlockConfig(model_dim=64, num_heads=4))
    x = torch.randn(3, 11, 64)
    assert block(x).shape == x.shape


def test_attention_block_rows_sum_to_one():
    block = AttentionBlock(AttentionBlockConfig(model_dim=32, num_heads=4)).eval()
    with torch.no_grad():
        block(torch.randn(2, 7, 32), keep_attention=True)
    rows = block.attn.last_attention.sum(dim=-1)
    assert torch.allclose(rows, torch.ones_like(rows), atol=1e-6)


def test_attention_block_width_mismatch():
    block = AttentionBlock(AttentionBlockConfig(model_dim=64, num_heads=4))
    with pytest.raises(ShapeError):
        block(torch.randn(1, 5, 32))


def test_attention_block_heads_divide_dim():
    with pytest.raises(ConfigurationError, match="num_heads"):
        AttentionBlock(AttentionBlockConfig(model_dim=30, num_heads=4))


def test_attention_block_gradients_match_finite_differences():
    torch.manual_seed(3)
    block = AttentionBlock(AttentionBlockConfig(model_dim=16, num_heads=4)).double()
    x = torch.randn(2, 5, 16, dtype=torch.float64)
    target = torch.randn(2, 5, 16, dtype=torch.float64)

    def loss_fn():
        return ((block(x) - target) ** 2).mean()

    loss_fn().backward()
    rng = np.random.default_rng(0)
    params = [(n, p) for n, p in block.named_parameters()]
    eps = 1e-5
    for _ in range(8):
        name, p = params[rng.integers(len(params))]
        idx = int(rng.integers(p.numel()))
        with torch.no_grad():
            orig = p.view(-1)[idx].item()
            p.view(-1)[idx] = orig + eps
            up = loss_fn().item()
            p.view(-1)[idx] = orig - eps
            down = loss_fn().item()
            p.view(-1)[idx] = orig
        numeric = (up - down) / (2 * eps)
        analytic = p.grad.view(-1)[idx].item()
        assert abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8) < 1e-4, name


# ---------------------------------------------------------------------------
# classification head

def test_head_eval_mode_deterministic():
    head = ClassificationHead(10, HeadConfig(dropout=0.5)).eval()
    z = torch.randn(4, 10)
    with torch.no_grad():
        assert torch.equal(head(z), head(z))


def test_head_training_mode_dropout_active():
    torch.manual_seed(0)
    head = ClassificationHead(32, HeadConfig(dropout=0.5)).train()
    z = torch.randn(8, 32)
    assert not torch.equal(head(z), head(z))


def test_head_logits_shape():
    head = ClassificationHead(6, HeadConfig())
    for batch in (1, 3, 17):
        assert head(torch.randn(batch, 6)).shape == (batch, 2)


def test_head_zero_weights_tie_breaks_to_class_zero():
    head = ClassificationHead(6, HeadConfig())
    with torch.no_grad():
        for p in head.parameters():
            p.zero_()
    logits = head(torch.randn(5, 6))
    assert torch.equal(logits, torch.zeros(5, 2))
    assert decide(logits).tolist() == [0] * 5


def test_head_width_mismatch():
    head = ClassificationHead(6, HeadConfig())
    with pytest.raises(ShapeError):
        head(torch.randn(2, 7))


def test_decide_tie_break():
    logits = torch.tensor([[0.5, 0.5], [0.1, 0.2], [0.2, 0.1]])
    assert decide(logits).tolist() == [0, 1, 0]


# ---------------------------------------------------------------------------
# cross-strategy invariants

def test_all_strategies_accept_identical_batches():
    batch = None
    for strategy in ("late", "intermediate", "early"):
        model = make_trio(strategy).eval()
        if batch is None:
            batch = model.probe_batch(3, seed=2)
        with torch.no_grad():
            assert model(**batch).shape == (3, 2)


@pytest.mark.parametrize("strategy", ["late", "intermediate", "early"])
def test_no_dead_modality_at_initialization(strategy):
    model = make_trio(strategy).eval()
    batch = model.probe_batch(2, seed=4)
    with torch.no_grad():
        base = model(**batch)
        no_image = model(batch["tokens"], batch["mask"], torch.zeros_like(batch["image"]))
        plant = batch["tokens"].clone()
        plant[:] = 3
        no_text = model(plant, batch["mask"], batch["image"])
    assert not torch.allclose(base, no_image), "vision path is dead"
    assert not torch.allclose(base, no_text), "text path is dead"


def test_fusion_spec_validation():
    with pytest.raises(ConfigurationError, match="strategy"):
        FusionSpec(strategy="mid").validate()
    with pytest.raises(ConfigurationError, match="ascending"):
        FusionSpec(taps=(4, 4, 8)).validate()
    with pytest.raises(ConfigurationError, match="num_attention_blocks"):
        FusionSpec(num_attention_blocks=0).validate()

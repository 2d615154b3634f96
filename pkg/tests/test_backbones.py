import numpy as np
import pytest
import torch

from fusionbench import (
    CnnBackboneConfig,
    TextEncoderConfig,
    VitBackboneConfig,
    build_cnn_backbone,
    build_text_encoder,
    build_vit_backbone,
)
from fusionbench.backbones.cnn import default_stage_strides
from fusionbench.errors import ConfigurationError, ShapeError


def _text_batch(cfg, batch=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    tokens = torch.randint(0, cfg.vocab_size, (batch, cfg.max_seq_len), generator=g)
    lengths = torch.randint(cfg.max_seq_len // 2, cfg.max_seq_len + 1, (batch,), generator=g)
    mask = (torch.arange(cfg.max_seq_len).unsqueeze(0) < lengths.unsqueeze(1)).float()
    return tokens, mask


# ---------------------------------------------------------------------------
# text encoder

def test_text_reference_depth():
    cfg = TextEncoderConfig(num_layers=12, hidden_dim=768, num_heads=12, ff_dim=3072,
                            vocab_size=3000, max_seq_len=16)
    enc = build_text_encoder(cfg)
    tokens, mask = _text_batch(cfg, batch=1)
    out = enc(tokens, mask)
    assert out.depth == 12


def test_text_layer_shapes():
    cfg = TextEncoderConfig(num_layers=8, hidden_dim=64, num_heads=4, max_seq_len=16)
    enc = build_text_encoder(cfg)
    tokens, mask = _text_batch(cfg, batch=2)
    out = enc(tokens, mask)
    assert out.layer(8).shape == (2, 16, 64)
    assert out.final_pooled.shape == (2, 64)


def test_text_param_count_matches_analytic_oracle():
    cfg = TextEncoderConfig()
    enc = build_text_encoder(cfg)
    d, ff, v, L = cfg.hidden_dim, cfg.ff_dim, cfg.vocab_size, cfg.max_seq_len
    per_layer = (
        4 * (d * d + d)          # q, k, v, out projections
        + 2 * 2 * d              # two layer norms
        + (d * ff + ff)          # ff in
        + (ff * d + d)           # ff out
    )
    expected = (
        v * d                    # token embedding
        + L * d                  # position embedding
        + 2 * d                  # embedding norm
        + cfg.num_layers * per_layer
        + (d * d + d)            # pooler
    )
    assert sum(p.numel() for p in enc.parameters()) == expected


@pytest.mark.parametrize(
    "kwargs,match",
    [
        (dict(vocab_size=0), "vocab_size"),
        (dict(hidden_dim=60, num_heads=7), "num_heads"),
        (dict(num_layers=0), "num_layers"),
    ],
)
def test_text_config_errors_name_invariant(kwargs, match):
    with pytest.raises(ConfigurationError, match=match):
        build_text_encoder(TextEncoderConfig(**kwargs))


def test_text_attention_rows_sum_to_one():
    cfg = TextEncoderConfig(num_layers=2)
    enc = build_text_encoder(cfg).eval()
    tokens, mask = _text_batch(cfg)
    with torch.no_grad():
        enc(tokens, mask, keep_attention=True)
    for layer in enc.layers:
        rows = layer.attn.last_attention.sum(dim=-1)
        assert torch.allclose(rows, torch.ones_like(rows), atol=1e-6)


def test_text_monotone_layer_dependency():
    cfg = TextEncoderConfig(num_layers=4)
    enc = build_text_encoder(cfg).eval()
    tokens, mask = _text_batch(cfg)
    with torch.no_grad():
        base = enc(tokens, mask)
        k = 3  # perturb layer 3 (1-based)
        g = torch.Generator().manual_seed(5)
        for p in enc.layers[k - 1].parameters():
            p += 0.05 * torch.randn(p.shape, generator=g)
        perturbed = enc(tokens, mask)
    for j in range(1, 5):
        max_diff = (base.layer(j) - perturbed.layer(j)).abs().max().item()
        changed = max_diff > 1e-6
        assert changed == (j >= k), f"layer {j}: max diff {max_diff}"


def test_text_batch_equivariance():
    cfg = TextEncoderConfig(num_layers=3)
    enc = build_text_encoder(cfg).eval()
    tokens, mask = _text_batch(cfg, batch=4)
    perm = torch.tensor([2, 0, 3, 1])
    with torch.no_grad():
        out = enc(tokens, mask)
        out_perm = enc(tokens[perm], mask[perm])
    for j in range(1, 4):
        assert torch.allclose(out.layer(j)[perm], out_perm.layer(j), atol=1e-6)
    assert torch.allclose(out.final_pooled[perm], out_perm.final_pooled, atol=1e-6)


def test_text_truncate_drops_parameters():
    enc = build_text_encoder(TextEncoderConfig(num_layers=8))
    enc.truncate_(5)
    names = [n for n, _ in enc.named_parameters()]
    assert not any(n.startswith("layers.5.") for n in names)
    assert enc.depth == 5


def test_text_sequence_too_long():
    cfg = TextEncoderConfig(max_seq_len=8)
    enc = build_text_encoder(cfg)
    with pytest.raises(ShapeError):
        enc(torch.zeros(1, 9, dtype=torch.long))


# ---------------------------------------------------------------------------
# cnn backbone

def test_cnn_reference_depth_and_final_channels():
    cnn = build_cnn_backbone(CnnBackboneConfig())
    out = cnn(torch.randn(2, 3, 64, 64))
    assert out.depth == 16
    assert out.final_pooled.shape == (2, 40)  # 160 * 0.25


def test_cnn_spatial_sizes_match_stride_product_oracle():
    cfg = CnnBackboneConfig(width_multiplier=0.25, input_resolution=64)
    cnn = build_cnn_backbone(cfg).eval()
    with torch.no_grad():
        out = cnn(torch.randn(1, 3, 64, 64))
    down = 2  # stem
    for i, stride in enumerate(cfg.stage_strides, start=1):
        down *= stride
        expected = 64 // down
        assert out.layer(i).shape[-2:] == (expected, expected), f"bottleneck {i}"


def test_cnn_gap_of_constant_map_is_identity():
    # global average pooling of a spatially-constant map returns the
    # channel values untouched
    feature = torch.arange(12.0).reshape(1, 12, 1, 1).expand(1, 12, 5, 5)
    pooled = feature.mean(dim=(2, 3))
    assert torch.allclose(pooled, torch.arange(12.0).unsqueeze(0))


def test_cnn_final_pooled_equals_gap_of_last_map():
    cnn = build_cnn_backbone(CnnBackboneConfig()).eval()
    image = torch.full((1, 3, 64, 64), 0.5)
    with torch.no_grad():
        out = cnn(image)
    assert torch.allclose(out.final_pooled, out.layer(16).mean(dim=(2, 3)))


def test_cnn_resolution_mismatch():
    cnn = build_cnn_backbone(CnnBackboneConfig(input_resolution=64))
    with pytest.raises(ShapeError, match="resolution"):
        cnn(torch.randn(1, 3, 32, 32))


def test_cnn_stride_validation():
    with pytest.raises(ConfigurationError, match="stage_strides"):
        CnnBackboneConfig(stage_strides=(1,) * 15).validate()
    with pytest.raises(ConfigurationError, match="1 or 2"):
        CnnBackboneConfig(stage_strides=(3,) + (1,) * 15).validate()


def test_cnn_width_multiplier_positive():
    with pytest.raises(ConfigurationError, match="width_multiplier"):
        CnnBackboneConfig(width_multiplier=0.0).validate()


def test_default_stride_profiles():
    toy = default_stage_strides(16, "toy")
    fast = default_stage_strides(16, "fast")
    assert len(toy) == len(fast) == 16
    cfg_toy = CnnBackboneConfig(stage_strides=tuple(toy))
    assert cfg_toy.spatial_size(6) == 4  # 16 fusion tokens at the cut
    cfg_fast = CnnBackboneConfig(stage_strides=tuple(fast))
    assert cfg_fast.spatial_size(6) == 2


def test_cnn_truncate_drops_parameters():
    cnn = build_cnn_backbone(CnnBackboneConfig())
    cnn.truncate_(8)
    names = [n for n, _ in cnn.named_parameters()]
    assert not any(n.startswith("bottlenecks.8.") for n in names)
    assert cnn.depth == 8


# ---------------------------------------------------------------------------
# vit backbone

def test_vit_reference_patch_arithmetic():
    cfg = VitBackboneConfig(patch_size=16, input_resolution=224, num_layers=2,
                            hidden_dim=64, num_heads=4)
    vit = build_vit_backbone(cfg)
    out = vit(torch.randn(1, 3, 224, 224))
    assert out.layer(1).shape == (1, 197, 64)  # 196 patches + class token


def test_vit_toy_patch_arithmetic():
    cfg = VitBackboneConfig(patch_size=8, input_resolution=32, num_layers=2)
    vit = build_vit_backbone(cfg)
    out = vit(torch.randn(2, 3, 32, 32))
    assert out.layer(2).shape == (2, 17, 64)  # (32/8)^2 + 1


def test_vit_resolution_divisibility():
    with pytest.raises(ConfigurationError, match="patch_size"):
        build_vit_backbone(VitBackboneConfig(patch_size=7, input_resolution=64))


def test_vit_identical_images_identical_rows():
    vit = build_vit_backbone(VitBackboneConfig(num_layers=3)).eval()
    image = torch.randn(1, 3, 64, 64)
    batch = image.expand(2, -1, -1, -1)
    with torch.no_grad():
        out = vit(batch)
    for k in range(1, 4):
        assert torch.allclose(out.layer(k)[0], out.layer(k)[1])
    assert torch.allclose(out.final_pooled[0], out.final_pooled[1])


def test_vit_attention_rows_sum_to_one():
    vit = build_vit_backbone(VitBackboneConfig(num_layers=2)).eval()
    with torch.no_grad():
        vit(torch.randn(2, 3, 64, 64), keep_attention=True)
    for layer in vit.layers:
        rows = layer.attn.last_attention.sum(dim=-1)
        assert torch.allclose(rows, torch.ones_like(rows), atol=1e-6)


# ---------------------------------------------------------------------------
# gradient correctness (2-layer configs, float64, central differences)

def _central_diff_check(model, loss_fn, n_probes=6, eps=1e-5, rel_tol=1e-4, seed=0):
    model.double()
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    params = [(n, p) for n, p in model.named_parameters() if p.grad is not None]
    for _ in range(n_probes):
        name, p = params[rng.integers(len(params))]
        flat_idx = int(rng.integers(p.numel()))
        with torch.no_grad():
            original = p.view(-1)[flat_idx].item()
            p.view(-1)[flat_idx] = original + eps
            up = loss_fn().item()
            p.view(-1)[flat_idx] = original - eps
            down = loss_fn().item()
            p.view(-1)[flat_idx] = original
        numeric = (up - down) / (2 * eps)
        analytic = p.grad.view(-1)[flat_idx].item()
        denom = max(abs(numeric), abs(analytic), 1e-8)
        assert abs(numeric - analytic) / denom < rel_tol, (
            f"{name}[{flat_idx}]: analytic {analytic} vs numeric {numeric}"
        )


def test_text_encoder_gradients_match_finite_differences():
    cfg = TextEncoderConfig(num_layers=2, hidden_dim=32, num_heads=4, ff_dim=64,
                            max_seq_len=8, vocab_size=50, dropout=0.0)
    enc = build_text_encoder(cfg)
    tokens, mask = _text_batch(cfg, batch=2, seed=1)
    target = torch.randn(2, 32, dtype=torch.float64)

    def loss_fn():
        out = enc(tokens, mask)
        return ((out.final_pooled - target) ** 2).mean() + out.layer(2).pow(2).mean()

    _central_diff_check(enc, loss_fn)


def test_cnn_gradients_match_finite_differences():
    cfg = CnnBackboneConfig(num_bottlenecks=2, width_multiplier=0.25, input_resolution=16,
                            stage_strides=(1, 2))
    cnn = build_cnn_backbone(cfg)
    cnn.eval()  # fixed BN statistics: the checked function must be deterministic
    image = torch.randn(2, 3, 16, 16, dtype=torch.float64)

    def loss_fn():
        out = cnn(image)
        return out.final_pooled.pow(2).mean()

    _central_diff_check(cnn, loss_fn)

import pytest
import torch
import torch.nn as nn

from fusionbench import (
    CnnBackboneConfig,
    TextEncoderConfig,
    build_cnn_backbone,
    build_text_encoder,
    count_flops_params,
)
from fusionbench.errors import UnknownLayerError
from fusionbench.flops import FlopReport
from fusionbench.fusion import FusionSpec, UnimodalClassifier, build_fusion
from fusionbench.profiles import benchmark_cnn_config, benchmark_text_config

from conftest import make_trio


class _Wrapper(nn.Module):
    """Adapts a bare module to the counter's (tokens, mask, image) probe."""

    def __init__(self, inner, run):
        super().__init__()
        self.inner = inner
        self._run = run

    def probe_batch(self, batch_size=1, seed=0):
        return {"tokens": torch.zeros(batch_size, 1, dtype=torch.long),
                "mask": torch.ones(batch_size, 1),
                "image": torch.zeros(batch_size, 1)}

    def forward(self, tokens, mask, image):
        return self._run(self.inner, tokens.shape[0])


def test_single_linear_macs_definition():
    linear = nn.Linear(13, 7)
    model = _Wrapper(linear, lambda m, b: m(torch.zeros(b, 13)))
    report = count_flops_params(model)
    assert report.flops == 13 * 7
    assert report.params == 13 * 7 + 7


def test_conv_macs_definition():
    conv = nn.Conv2d(4, 8, 3, padding=1)
    model = _Wrapper(conv, lambda m, b: m(torch.zeros(b, 4, 10, 10)))
    report = count_flops_params(model)
    assert report.flops == 8 * 10 * 10 * 4 * 9


def test_depthwise_conv_macs_respect_groups():
    conv = nn.Conv2d(6, 6, 3, padding=1, groups=6, bias=False)
    model = _Wrapper(conv, lambda m, b: m(torch.zeros(b, 6, 5, 5)))
    report = count_flops_params(model)
    assert report.flops == 6 * 5 * 5 * 1 * 9


def test_unknown_parameterized_layer_rejected():
    class Odd(nn.Module):
        def __init__(self):
            super().__init__()
            self.w = nn.Parameter(torch.zeros(3))

        def forward(self, x):
            return x * self.w.sum()

    model = _Wrapper(Odd(), lambda m, b: m(torch.zeros(b, 3)))
    with pytest.raises(UnknownLayerError, match="Odd"):
        count_flops_params(model)


def test_doubling_sequence_scaling_laws():
    """MACs of non-attention text compute scale linearly with sequence
    length; attention-score MACs scale quadratically."""

    def report_for(seq):
        cfg = TextEncoderConfig(max_seq_len=seq)
        model = UnimodalClassifier(build_text_encoder(cfg))
        model.probe_batch = lambda batch_size=1, seed=0, _c=cfg: {
            "tokens": torch.zeros(batch_size, _c.max_seq_len, dtype=torch.long),
            "mask": torch.ones(batch_size, _c.max_seq_len),
            "image": torch.zeros(batch_size, 3, 8, 8),
        }
        return count_flops_params(model)

    def attention_macs(seq, layers=8, d=64):
        return layers * 2 * seq * seq * d

    short, long = report_for(32), report_for(64)
    # pooler/head are sequence-independent; subtract to isolate per-token work
    head_pooler = 64 * 64 + 64 * 64 + 64 * 2
    attn_short, attn_long = attention_macs(32), attention_macs(64)
    linear_short = short.flops - attn_short - head_pooler
    linear_long = long.flops - attn_long - head_pooler
    assert linear_long == 2 * linear_short
    assert attn_long == 4 * attn_short


def test_flops_additive_over_groups():
    model = make_trio("intermediate")
    report = count_flops_params(model)
    assert sum(report.by_group.values()) == report.flops
    assert set(report.by_group) == {"text_backbone", "vision_backbone", "fusion", "head"}


def test_flops_match_closed_form_for_text_encoder():
    cfg = TextEncoderConfig()
    model = UnimodalClassifier(build_text_encoder(cfg))
    model.probe_batch = lambda batch_size=1, seed=0: {
        "tokens": torch.zeros(batch_size, cfg.max_seq_len, dtype=torch.long),
        "mask": torch.ones(batch_size, cfg.max_seq_len),
        "image": torch.zeros(batch_size, 3, 8, 8),
    }
    report = count_flops_params(model)
    L, d, ff, n = cfg.max_seq_len, cfg.hidden_dim, cfg.ff_dim, cfg.num_layers
    per_layer = 4 * L * d * d + 2 * L * L * d + 2 * L * d * ff
    expected = n * per_layer + d * d + (d * 64 + 64 * 2)  # + pooler + head
    assert report.flops == expected


def test_benchmark_trio_flop_ordering():
    def build(strategy):
        return make_trio(strategy, text_cfg=benchmark_text_config(),
                         vision_cfg=benchmark_cnn_config())

    flops = {s: count_flops_params(build(s)).flops for s in ("late", "intermediate", "early")}
    assert flops["early"] < flops["intermediate"] < flops["late"]
    vision_only = UnimodalClassifier(build_cnn_backbone(benchmark_cnn_config()))
    probe_owner = build("late")
    vision_only.probe_batch = probe_owner.probe_batch
    assert count_flops_params(vision_only).flops < flops["early"]

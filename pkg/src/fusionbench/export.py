"""Serialize fused/unimodal models (evaluation semantics) to the exchange
format, plus the parity verifier against the embedded runtime.

Every strategy exports with the unified input signature {tokens, mask,
image} (dynamic batch dimension) and a logits (batch, 2) output. Dropout
is folded out; LayerNorm and GELU are decomposed into primitive ops so the
file needs nothing beyond the pinned opset's core operators.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from . import __version__
from .backbones.cnn import CnnBackbone
from .backbones.layers import MASK_FILL, FeedForward, MultiHeadSelfAttention, TransformerEncoderLayer
from .backbones.text import TextEncoder
from .backbones.vit import VitBackbone
from .errors import ExportError, GraphLoadError, ValidationError
from .fusion import (
    AttentionBlock,
    ClassificationHead,
    EarlyFusionModel,
    FusedModel,
    IntermediateFusionModel,
    LateFusionModel,
    UnimodalClassifier,
)
from .onnx_proto import (
    FLOAT,
    INT64,
    OPSET_VERSION,
    model_proto,
    node_proto,
    tensor_proto,
    value_info,
)
from .onnx_run import GraphExecutor


def _np(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy()


class GraphBuilder:
    def __init__(self):
        self.nodes: List[bytes] = []
        self.initializers: List[bytes] = []
        self._init_names: set = set()
        self._counter = 0
        self._const_cache: Dict[tuple, str] = {}

    def init(self, name: str, array: np.ndarray) -> str:
        if name not in self._init_names:
            self._init_names.add(name)
            self.initializers.append(tensor_proto(name, array))
        return name

    def scalar(self, value: float) -> str:
        key = ("f32", float(np.float32(value)))
        if key not in self._const_cache:
            name = f"const_{len(self._const_cache)}"
            self._const_cache[key] = self.init(name, np.float32(value).reshape(()))
        return self._const_cache[key]

    def ints(self, values: Sequence[int]) -> str:
        key = ("i64",) + tuple(int(v) for v in values)
        if key not in self._const_cache:
            name = f"const_{len(self._const_cache)}"
            self._const_cache[key] = self.init(name, np.asarray(values, dtype=np.int64))
        return self._const_cache[key]

    def index(self, value: int) -> str:
        key = ("idx", int(value))
        if key not in self._const_cache:
            name = f"const_{len(self._const_cache)}"
            self._const_cache[key] = self.init(name, np.asarray(value, dtype=np.int64))
        return self._const_cache[key]

    def n(self, op: str, inputs: Sequence[str], attrs: Optional[dict] = None) -> str:
        out = f"v{self._counter:04d}_{op.lower()}"
        self._counter += 1
        self.nodes.append(node_proto(op, list(inputs), [out], name=f"node_{out}", attrs=attrs))
        return out


# ---------------------------------------------------------------------------
# shared emitters

def emit_linear(b: GraphBuilder, module: nn.Linear, x: str, prefix: str) -> str:
    w = b.init(prefix + ".weight_t", _np(module.weight).T.copy())
    y = b.n("MatMul", [x, w])
    if module.bias is not None:
        bias = b.init(prefix + ".bias", _np(module.bias))
        y = b.n("Add", [y, bias])
    return y


def emit_layer_norm(b: GraphBuilder, module: nn.LayerNorm, x: str, rank: int, prefix: str) -> str:
    axis = rank - 1
    mu = b.n("ReduceMean", [x], {"axes": [axis], "keepdims": 1})
    xc = b.n("Sub", [x, mu])
    var = b.n("ReduceMean", [b.n("Mul", [xc, xc])], {"axes": [axis], "keepdims": 1})
    std = b.n("Sqrt", [b.n("Add", [var, b.scalar(module.eps)])])
    normed = b.n("Div", [xc, std])
    gamma = b.init(prefix + ".weight", _np(module.weight))
    beta = b.init(prefix + ".bias", _np(module.bias))
    return b.n("Add", [b.n("Mul", [normed, gamma]), beta])


def emit_gelu(b: GraphBuilder, x: str) -> str:
    t = b.n("Mul", [x, b.scalar(1.0 / np.sqrt(2.0))])
    a = b.n("Add", [b.n("Erf", [t]), b.scalar(1.0)])
    return b.n("Mul", [b.n("Mul", [x, a]), b.scalar(0.5)])


def emit_attention(
    b: GraphBuilder,
    module: MultiHeadSelfAttention,
    x: str,
    seq_len: int,
    bias: Optional[str],
    prefix: str,
) -> str:
    h, dh, d = module.num_heads, module.head_dim, module.model_dim

    def project(linear: nn.Linear, name: str) -> str:
        y = emit_linear(b, linear, x, f"{prefix}.{name}")
        y = b.n("Reshape", [y, b.ints([0, seq_len, h, dh])])
        return b.n("Transpose", [y], {"perm": [0, 2, 1, 3]})

    q = project(module.q_proj, "q_proj")
    k = project(module.k_proj, "k_proj")
    v = project(module.v_proj, "v_proj")
    kt = b.n("Transpose", [k], {"perm": [0, 1, 3, 2]})
    scores = b.n("Mul", [b.n("MatMul", [q, kt]), b.scalar(module.scale)])
    if bias is not None:
        scores = b.n("Add", [scores, bias])
    attn = b.n("Softmax", [scores], {"axis": 3})
    ctx = b.n("MatMul", [attn, v])
    ctx = b.n("Transpose", [ctx], {"perm": [0, 2, 1, 3]})
    ctx = b.n("Reshape", [ctx, b.ints([0, seq_len, d])])
    return emit_linear(b, module.out_proj, ctx, f"{prefix}.out_proj")


def emit_feed_forward(b: GraphBuilder, module: FeedForward, x: str, prefix: str) -> str:
    y = emit_linear(b, module.fc1, x, f"{prefix}.fc1")
    y = emit_gelu(b, y)
    return emit_linear(b, module.fc2, y, f"{prefix}.fc2")


def emit_encoder_layer(
    b: GraphBuilder,
    layer: TransformerEncoderLayer,
    x: str,
    seq_len: int,
    bias: Optional[str],
    prefix: str,
) -> str:
    if layer.norm_first:
        a_in = emit_layer_norm(b, layer.norm1, x, 3, f"{prefix}.norm1")
        x = b.n("Add", [x, emit_attention(b, layer.attn, a_in, seq_len, bias, f"{prefix}.attn")])
        f_in = emit_layer_norm(b, layer.norm2, x, 3, f"{prefix}.norm2")
        x = b.n("Add", [x, emit_feed_forward(b, layer.ff, f_in, f"{prefix}.ff")])
    else:
        a = emit_attention(b, layer.attn, x, seq_len, bias, f"{prefix}.attn")
        x = emit_layer_norm(b, layer.norm1, b.n("Add", [x, a]), 3, f"{prefix}.norm1")
        f = emit_feed_forward(b, layer.ff, x, f"{prefix}.ff")
        x = emit_layer_norm(b, layer.norm2, b.n("Add", [x, f]), 3, f"{prefix}.norm2")
    return x


def emit_text_mask_bias(b: GraphBuilder, mask: str) -> str:
    """(B, L) keep-mask -> (B, 1, 1, L) additive bias."""
    inv = b.n("Sub", [b.scalar(1.0), mask])
    scaled = b.n("Mul", [inv, b.scalar(MASK_FILL)])
    return b.n("Unsqueeze", [scaled, b.ints([1, 2])])


def emit_joint_mask_bias(b: GraphBuilder, text_bias: str, extra_tokens: int) -> str:
    """Extend a (B,1,1,L) text bias with zeros for always-visible vision tokens."""
    head = b.n("Slice", [text_bias, b.ints([0]), b.ints([1]), b.ints([3])])
    zero = b.n("Mul", [head, b.scalar(0.0)])
    tail = b.n("Tile", [zero, b.ints([1, 1, 1, extra_tokens])])
    return b.n("Concat", [text_bias, tail], {"axis": 3})


def emit_text_encoder(
    b: GraphBuilder, enc: TextEncoder, tokens: str, mask_bias: Optional[str], prefix: str = "text_backbone"
) -> Tuple[List[str], str]:
    """Returns (per-layer sequence outputs, pooled output)."""
    seq = enc.cfg.max_seq_len
    emb_w = b.init(f"{prefix}.token_embedding.weight", _np(enc.token_embedding.weight))
    x = b.n("Gather", [emb_w, tokens], {"axis": 0})
    pos = b.init(
        f"{prefix}.position_embedding.slice",
        _np(enc.position_embedding.weight)[:seq][None, :, :].copy(),
    )
    x = b.n("Add", [x, pos])
    x = emit_layer_norm(b, enc.embedding_norm, x, 3, f"{prefix}.embedding_norm")
    per_layer = []
    for i, layer in enumerate(enc.layers):
        x = emit_encoder_layer(b, layer, x, seq, mask_bias, f"{prefix}.layers.{i}")
        per_layer.append(x)
    first = b.n("Gather", [x, b.index(0)], {"axis": 1})
    pooled = b.n("Tanh", [emit_linear(b, enc.pooler, first, f"{prefix}.pooler")])
    return per_layer, pooled


def _emit_conv(b: GraphBuilder, conv: nn.Conv2d, x: str, prefix: str) -> str:
    inputs = [x, b.init(prefix + ".weight", _np(conv.weight))]
    if conv.bias is not None:
        inputs.append(b.init(prefix + ".bias", _np(conv.bias)))
    attrs = {
        "group": conv.groups,
        "kernel_shape": list(conv.kernel_size),
        "pads": [conv.padding[0], conv.padding[1], conv.padding[0], conv.padding[1]],
        "strides": list(conv.stride),
    }
    return b.n("Conv", inputs, attrs)


def _emit_bn(b: GraphBuilder, bn: nn.BatchNorm2d, x: str, prefix: str) -> str:
    inputs = [
        x,
        b.init(prefix + ".weight", _np(bn.weight)),
        b.init(prefix + ".bias", _np(bn.bias)),
        b.init(prefix + ".running_mean", _np(bn.running_mean)),
        b.init(prefix + ".running_var", _np(bn.running_var)),
    ]
    return b.n("BatchNormalization", inputs, {"epsilon": float(bn.eps)})


def _emit_relu6(b: GraphBuilder, x: str) -> str:
    return b.n("Clip", [x, b.scalar(0.0), b.scalar(6.0)])


def emit_cnn_backbone(
    b: GraphBuilder, cnn: CnnBackbone, image: str, prefix: str = "vision_backbone"
) -> Tuple[List[str], str]:
    stem_conv, stem_bn = cnn.stem[0], cnn.stem[1]
    x = _emit_relu6(b, _emit_bn(b, stem_bn, _emit_conv(b, stem_conv, image, f"{prefix}.stem.0"), f"{prefix}.stem.1"))
    per_layer = []
    for i, block in enumerate(cnn.bottlenecks):
        inner = x
        mods = list(block.block)
        j = 0
        conv_idx = 0
        while j < len(mods):
            mod = mods[j]
            name = f"{prefix}.bottlenecks.{i}.block.{j}"
            if isinstance(mod, nn.Conv2d):
                inner = _emit_conv(b, mod, inner, name)
                conv_idx += 1
            elif isinstance(mod, nn.BatchNorm2d):
                inner = _emit_bn(b, mod, inner, name)
            elif isinstance(mod, nn.ReLU6):
                inner = _emit_relu6(b, inner)
            else:
                raise ExportError(f"unexportable layer {name} of kind {type(mod).__name__}")
            j += 1
        x = b.n("Add", [x, inner]) if block.use_residual else inner
        per_layer.append(x)
    pooled = b.n("GlobalAveragePool", [x])
    pooled = b.n("Reshape", [pooled, b.ints([0, cnn.feature_width])])
    return per_layer, pooled


def emit_vit_backbone(
    b: GraphBuilder, vit: VitBackbone, image: str, prefix: str = "vision_backbone"
) -> Tuple[List[str], str]:
    cfg = vit.cfg
    patches = _emit_conv(b, vit.patch_embed, image, f"{prefix}.patch_embed")
    tok = b.n("Reshape", [patches, b.ints([0, cfg.hidden_dim, cfg.num_patches])])
    tok = b.n("Transpose", [tok], {"perm": [0, 2, 1]})
    # batch-sized class token: zero out one patch token slot and add the
    # learned (1,1,D) class embedding so broadcasting yields (B,1,D)
    first = b.n("Slice", [tok, b.ints([0]), b.ints([1]), b.ints([1])])
    zeros = b.n("Mul", [first, b.scalar(0.0)])
    cls = b.init(f"{prefix}.cls_token", _np(vit.cls_token))
    cls_b = b.n("Add", [zeros, cls])
    x = b.n("Concat", [cls_b, tok], {"axis": 1})
    pos = b.init(f"{prefix}.pos_embed", _np(vit.pos_embed))
    x = b.n("Add", [x, pos])
    per_layer = []
    for i, layer in enumerate(vit.layers):
        x = emit_encoder_layer(b, layer, x, cfg.seq_len, None, f"{prefix}.layers.{i}")
        per_layer.append(x)
    final = emit_layer_norm(b, vit.final_norm, x, 3, f"{prefix}.final_norm")
    pooled = b.n("Gather", [final, b.index(0)], {"axis": 1})
    return per_layer, pooled


def emit_vision_backbone(b: GraphBuilder, vision: nn.Module, image: str, prefix: str = "vision_backbone"):
    if isinstance(vision, CnnBackbone):
        return emit_cnn_backbone(b, vision, image, prefix)
    if isinstance(vision, VitBackbone):
        return emit_vit_backbone(b, vision, image, prefix)
    raise ExportError(f"unexportable vision backbone kind {type(vision).__name__}")


def emit_vision_tokens(
    b: GraphBuilder, vision: nn.Module, feature: str, layer_index: int
) -> Tuple[str, int]:
    """Tap feature -> (B, T, C) token sequence plus its static length."""
    if isinstance(vision, CnnBackbone):
        channels = vision.channels_at(layer_index)
        side = vision.cfg.spatial_size(layer_index)
        flat = b.n("Reshape", [feature, b.ints([0, channels, side * side])])
        return b.n("Transpose", [flat], {"perm": [0, 2, 1]}), side * side
    return feature, vision.cfg.seq_len


def emit_vision_pooled_tap(b: GraphBuilder, vision: nn.Module, feature: str, layer_index: int) -> str:
    if isinstance(vision, CnnBackbone):
        pooled = b.n("GlobalAveragePool", [feature])
        return b.n("Reshape", [pooled, b.ints([0, vision.channels_at(layer_index)])])
    return b.n("Gather", [feature, b.index(0)], {"axis": 1})


def emit_attention_block(
    b: GraphBuilder, block: AttentionBlock, x: str, seq_len: int, bias: Optional[str], prefix: str
) -> str:
    a = emit_attention(b, block.attn, x, seq_len, bias, f"{prefix}.attn")
    x = emit_layer_norm(b, block.norm1, b.n("Add", [x, a]), 3, f"{prefix}.norm1")
    y = emit_linear(b, block.fc1, x, f"{prefix}.fc1")
    y = emit_gelu(b, y)
    y = emit_linear(b, block.fc2, y, f"{prefix}.fc2")
    return emit_layer_norm(b, block.norm2, b.n("Add", [x, y]), 3, f"{prefix}.norm2")


def emit_head(b: GraphBuilder, head: ClassificationHead, z: str, prefix: str = "head") -> str:
    y = emit_linear(b, head.fc1, z, f"{prefix}.fc1")
    y = b.n("Relu", [y])
    return emit_linear(b, head.fc2, y, f"{prefix}.fc2")


def _segment_mean(b: GraphBuilder, seq: str, start: int, end: int) -> str:
    part = b.n("Slice", [seq, b.ints([start]), b.ints([end]), b.ints([1])])
    return b.n("ReduceMean", [part], {"axes": [1], "keepdims": 0})


# ---------------------------------------------------------------------------
# per-strategy graph emission

def _emit_model(b: GraphBuilder, model: nn.Module) -> str:
    tokens, mask, image = "tokens", "mask", "image"
    if isinstance(model, UnimodalClassifier):
        if model.modality == "T":
            bias = emit_text_mask_bias(b, mask)
            _, pooled = emit_text_encoder(b, model.backbone, tokens, bias, "backbone")
        else:
            _, pooled = emit_vision_backbone(b, model.backbone, image, "backbone")
        return emit_head(b, model.head, pooled)

    if isinstance(model, LateFusionModel):
        bias = emit_text_mask_bias(b, mask)
        _, t_pooled = emit_text_encoder(b, model.text_backbone, tokens, bias)
        _, v_pooled = emit_vision_backbone(b, model.vision_backbone, image)
        fused = b.n("Concat", [t_pooled, v_pooled], {"axis": 1})
        return emit_head(b, model.head, fused)

    if isinstance(model, IntermediateFusionModel):
        bias = emit_text_mask_bias(b, mask)
        t_layers, _ = emit_text_encoder(b, model.text_backbone, tokens, bias)
        v_layers, _ = emit_vision_backbone(b, model.vision_backbone, image)
        joins = []
        for i, tap in enumerate(model.taps[:-1]):
            t_first = b.n("Gather", [t_layers[tap - 1], b.index(0)], {"axis": 1})
            t_vec = emit_linear(b, model.tap_text_proj[i], t_first, f"fusion.tap_text_proj.{i}")
            v_pooled = emit_vision_pooled_tap(b, model.vision_backbone, v_layers[tap - 1], tap)
            v_vec = emit_linear(b, model.tap_vision_proj[i], v_pooled, f"fusion.tap_vision_proj.{i}")
            join = b.n("Concat", [t_vec, v_vec], {"axis": 1})
            joins.append(emit_linear(b, model.tap_join[i], join, f"fusion.tap_join.{i}"))
        last = model.taps[-1]
        t_tok = emit_linear(b, model.seq_text_proj, t_layers[last - 1], "fusion.seq_text_proj")
        v_raw, v_count = emit_vision_tokens(b, model.vision_backbone, v_layers[last - 1], last)
        v_tok = emit_linear(b, model.seq_vision_proj, v_raw, "fusion.seq_vision_proj")
        seq = b.n("Concat", [t_tok, v_tok], {"axis": 1})
        n_text = model.text_backbone.cfg.max_seq_len
        joint_bias = emit_joint_mask_bias(b, bias, v_count)
        attended = emit_attention_block(
            b, model.attention_block, seq, n_text + v_count, joint_bias, "fusion.attention_block"
        )
        joins.append(
            b.n("Concat", [
                _segment_mean(b, attended, 0, n_text),
                _segment_mean(b, attended, n_text, n_text + v_count),
            ], {"axis": 1})
        )
        return emit_head(b, model.head, b.n("Concat", joins, {"axis": 1}))

    if isinstance(model, EarlyFusionModel):
        bias = emit_text_mask_bias(b, mask)
        t_layers, _ = emit_text_encoder(b, model.text_backbone, tokens, bias)
        v_layers, _ = emit_vision_backbone(b, model.vision_backbone, image)
        cut = model.cut_layer
        v_raw, v_count = emit_vision_tokens(b, model.vision_backbone, v_layers[cut - 1], cut)
        v_tok = emit_linear(b, model.vision_token_proj, v_raw, "fusion.vision_token_proj")
        seq = b.n("Concat", [t_layers[cut - 1], v_tok], {"axis": 1})
        n_text = model.text_backbone.cfg.max_seq_len
        joint_bias = emit_joint_mask_bias(b, bias, v_count)
        for i, block in enumerate(model.blocks):
            seq = emit_attention_block(b, block, seq, n_text + v_count, joint_bias, f"fusion.blocks.{i}")
        pooled = b.n("ReduceMean", [seq], {"axes": [1], "keepdims": 0})
        return emit_head(b, model.head, pooled)

    raise ExportError(f"unexportable model kind {type(model).__name__}")


# ---------------------------------------------------------------------------
# artifact + verification

@dataclass
class ExportArtifact:
    graph_path: Path
    meta_path: Path
    input_signature: List[dict]
    output_signature: List[dict]
    metadata: dict


def model_fingerprint(model: nn.Module) -> str:
    parts: dict = {"strategy": getattr(model, "strategy", type(model).__name__)}
    if isinstance(model, FusedModel):
        parts["text"] = dataclasses.asdict(model.text_backbone.cfg)
        parts["vision"] = dataclasses.asdict(model.vision_backbone.cfg)
        parts["spec"] = dataclasses.asdict(model.spec)
    elif isinstance(model, UnimodalClassifier):
        parts["backbone"] = dataclasses.asdict(model.backbone.cfg)
        parts["head"] = dataclasses.asdict(model.head.cfg)
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=list).encode()).hexdigest()[:16]


def _geometry(model: nn.Module) -> Tuple[int, int]:
    if isinstance(model, UnimodalClassifier):
        if model.modality == "T":
            return model.backbone.cfg.max_seq_len, 64
        # vision-only models still declare the unified signature; pick the
        # backbone resolution and a nominal text length
        return 32, model.backbone.cfg.input_resolution
    return model.text_backbone.cfg.max_seq_len, model.vision_backbone.cfg.input_resolution


def input_signature(model: nn.Module) -> List[dict]:
    seq, res = _geometry(model)
    return [
        {"name": "tokens", "dtype": "int64", "shape": ["batch", seq]},
        {"name": "mask", "dtype": "float32", "shape": ["batch", seq]},
        {"name": "image", "dtype": "float32", "shape": ["batch", 3, res, res]},
    ]


def export_graph(
    model: nn.Module,
    path: Path,
    model_name: Optional[str] = None,
    config_hash: Optional[str] = None,
) -> ExportArtifact:
    """Write the exchange-format graph plus its metadata sidecar."""
    model.eval()  # evaluation semantics: dropout folded out, BN in eval
    b = GraphBuilder()
    logits = _emit_model(b, model)
    # rename the terminal value to the declared output
    b.nodes.append(node_proto("Identity", [logits], ["logits"], name="node_logits"))
    seq, res = _geometry(model)
    inputs = [
        value_info("tokens", INT64, ["batch", seq]),
        value_info("mask", FLOAT, ["batch", seq]),
        value_info("image", FLOAT, ["batch", 3, res, res]),
    ]
    outputs = [value_info("logits", FLOAT, ["batch", 2])]
    name = model_name or getattr(model, "strategy", "model")
    blob = model_proto(name, b.nodes, b.initializers, inputs, outputs,
                       producer_version=__version__)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    if isinstance(model, UnimodalClassifier):
        vocab = model.backbone.cfg.vocab_size if model.modality == "T" else 100
    else:
        vocab = model.text_backbone.cfg.vocab_size
    metadata = {
        "format": "onnx",
        "opset": OPSET_VERSION,
        "toolkit_version": __version__,
        "strategy": getattr(model, "strategy", type(model).__name__),
        "model_name": name,
        "config_hash": config_hash or model_fingerprint(model),
        "token_vocab_size": vocab,
        "inputs": input_signature(model),
        "outputs": [{"name": "logits", "dtype": "float32", "shape": ["batch", 2]}],
    }
    meta_path = path.with_suffix(path.suffix + ".meta.json") if path.suffix != ".onnx" \
        else path.with_name(path.stem + ".meta.json")
    meta_path.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    return ExportArtifact(
        graph_path=path,
        meta_path=meta_path,
        input_signature=metadata["inputs"],
        output_signature=metadata["outputs"],
        metadata=metadata,
    )


@dataclass
class ParityReport:
    n_batches: int
    max_abs_diff: float
    argmax_agreement: float
    tolerance: float
    passed: bool


def verify_parity(
    model: nn.Module,
    artifact: ExportArtifact,
    n_batches: int = 16,
    tol: float = 1e-5,
    batch_size: int = 4,
) -> ParityReport:
    """Compare live logits vs the exported graph run by the embedded
    executor over seeded random batches."""
    if n_batches < 1:
        raise ValidationError("verify_parity: n_batches >= 1 required")
    executor = GraphExecutor.from_file(artifact.graph_path)
    model.eval()
    max_diff = 0.0
    agree = 0
    total = 0
    for i in range(n_batches):
        batch = _probe_batch(model, batch_size, seed=1000 + i)
        with torch.no_grad():
            live = model(batch["tokens"], batch["mask"], batch["image"]).numpy()
        (exported,) = executor.run({
            "tokens": batch["tokens"].numpy(),
            "mask": batch["mask"].numpy(),
            "image": batch["image"].numpy(),
        })
        max_diff = max(max_diff, float(np.max(np.abs(live - exported))))
        agree += int(np.sum(np.argmax(live, axis=1) == np.argmax(exported, axis=1)))
        total += live.shape[0]
    return ParityReport(
        n_batches=n_batches,
        max_abs_diff=max_diff,
        argmax_agreement=agree / total,
        tolerance=tol,
        passed=max_diff <= tol,
    )


def _probe_batch(model: nn.Module, batch_size: int, seed: int) -> dict:
    if hasattr(model, "probe_batch"):
        return model.probe_batch(batch_size, seed)
    # unimodal models: derive geometry from the signature
    seq, res = _geometry(model)
    g = torch.Generator().manual_seed(seed)
    vocab = model.backbone.cfg.vocab_size if model.modality == "T" else 100
    tokens = torch.randint(0, vocab, (batch_size, seq), generator=g)
    lengths = torch.randint(seq // 2, seq + 1, (batch_size,), generator=g)
    mask = (torch.arange(seq).unsqueeze(0) < lengths.unsqueeze(1)).float()
    image = torch.randn(batch_size, 3, res, res, generator=g)
    return {"tokens": tokens, "mask": mask, "image": image}

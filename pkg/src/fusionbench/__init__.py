"""fusionbench: multimodal fusion strategies and their accuracy-vs-latency
trade-off, end to end (data -> train -> evaluate -> export -> benchmark ->
report)."""

__version__ = "0.1.0"

from .backbones import (
    CnnBackbone,
    CnnBackboneConfig,
    LayerOutputs,
    TextEncoder,
    TextEncoderConfig,
    VitBackbone,
    VitBackboneConfig,
    build_cnn_backbone,
    build_text_encoder,
    build_vit_backbone,
    default_stage_strides,
)
from .data import (
    Label,
    RawClip,
    Sample,
    SampleSet,
    SplitManifest,
    make_splits,
    middle_frame,
    reduce_label,
    synth_dataset,
)
from .fusion import (
    AttentionBlock,
    AttentionBlockConfig,
    ClassificationHead,
    EarlyFusionModel,
    FusedModel,
    FusionSpec,
    HeadConfig,
    IntermediateFusionModel,
    LateFusionModel,
    UnimodalClassifier,
    build_early_fusion,
    build_fusion,
    build_intermediate_fusion,
    build_late_fusion,
    decide,
)
from .training import TrainRecipe, recipe_for, train, freeze, unfreeze
from .metrics import MetricsRecord, binary_accuracy, f1_score
from .flops import FlopReport, count_flops_params
from .latency import LatencyReport, measure_latency, model_runner
from .ablation import AblationResult, run_ablation
from .report import TradeoffRecord, collect_tradeoff, emit_tradeoff

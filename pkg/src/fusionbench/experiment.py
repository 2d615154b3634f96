"""Experiment configuration: one YAML file describing dataset, backbones,
fusion, training and eval; every run is keyed by the hash of its resolved
config and writes that resolved config next to its outputs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import yaml

from .backbones import (
    CnnBackboneConfig,
    TextEncoderConfig,
    VitBackboneConfig,
    build_cnn_backbone,
    build_text_encoder,
    build_vit_backbone,
    default_stage_strides,
)
from .backbones.cnn import reference_cnn_config
from .backbones.text import reference_text_config
from .backbones.vit import reference_vit_config
from .data import (
    DEFAULT_MEAN,
    DEFAULT_STD,
    HashTokenizer,
    SampleSet,
    SplitManifest,
    SynthSpec,
    load_corpus,
    make_splits,
    preprocess_corpus,
    split_sample_set,
    synth_dataset,
)
from .errors import ConfigurationError
from .fusion import FusionSpec, HeadConfig, UnimodalClassifier, build_fusion
from .training import TrainRecipe, recipe_for


def _strict(section: str, payload: dict, allowed: set) -> None:
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigurationError(
            f"config section {section!r}: unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}"
        )


@dataclass(frozen=True)
class DatasetSection:
    kind: str = "synth"  # synth | corpus
    path: Optional[str] = None
    synth_size: int = 512
    seed: int = 0
    fractions: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    normalize_mean: Tuple[float, float, float] = DEFAULT_MEAN
    normalize_std: Tuple[float, float, float] = DEFAULT_STD

    def validate(self) -> "DatasetSection":
        if self.kind not in ("synth", "corpus"):
            raise ConfigurationError(f"dataset.kind must be synth or corpus, got {self.kind!r}")
        if self.kind == "corpus" and not self.path:
            raise ConfigurationError("dataset.kind=corpus requires dataset.path")
        if self.kind == "synth" and self.synth_size < 1:
            raise ConfigurationError("dataset.synth_size must be >= 1")
        return self


_TEXT_PRESETS = {"toy": TextEncoderConfig(), "full": reference_text_config()}
_CNN_PRESETS = {"toy": CnnBackboneConfig(), "full": reference_cnn_config()}
_VIT_PRESETS = {"toy": VitBackboneConfig(), "full": reference_vit_config()}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    text: TextEncoderConfig = field(default_factory=TextEncoderConfig)
    vision_kind: str = "cnn"
    cnn: CnnBackboneConfig = field(default_factory=CnnBackboneConfig)
    vit: VitBackboneConfig = field(default_factory=VitBackboneConfig)
    fusion: FusionSpec = field(default_factory=FusionSpec)
    training_seed: int = 0
    # per-stage recipe overrides: {"late": {"epochs": 20}, ...}
    training_overrides: Dict[str, dict] = field(default_factory=dict)
    eval_warmup: int = 50
    eval_iters: int = 200
    eval_hardware: Optional[str] = None  # descriptor override; probed when unset
    output_dir: str = "runs"

    def validate(self) -> "ExperimentConfig":
        self.dataset.validate()
        self.text.validate()
        if self.vision_kind not in ("cnn", "vit"):
            raise ConfigurationError(f"vision.kind must be cnn or vit, got {self.vision_kind!r}")
        self.cnn.validate()
        self.vit.validate()
        self.fusion.validate()
        if self.eval_iters < 30:
            raise ConfigurationError("eval.iters >= 30 required")
        if self.eval_warmup < 10:
            raise ConfigurationError("eval.warmup >= 10 required")
        return self

    # -- resolution --------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "dataset": dataclasses.asdict(self.dataset),
            "text": dataclasses.asdict(self.text),
            "vision": {"kind": self.vision_kind,
                       "cnn": dataclasses.asdict(self.cnn),
                       "vit": dataclasses.asdict(self.vit)},
            "fusion": dataclasses.asdict(self.fusion),
            "training": {"seed": self.training_seed, **self.training_overrides},
            "eval": {"warmup": self.eval_warmup, "iters": self.eval_iters,
                     "hardware": self.eval_hardware},
            "output_dir": self.output_dir,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.config_hash()

    def write_resolved(self) -> Path:
        run_dir = self.run_dir()
        run_dir.mkdir(parents=True, exist_ok=True)
        path = run_dir / "resolved_config.yaml"
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))
        return path

    # -- builders ----------------------------------------------------------
    def vision_config(self):
        return self.cnn if self.vision_kind == "cnn" else self.vit

    def build_text(self):
        return build_text_encoder(self.text)

    def build_vision(self):
        if self.vision_kind == "cnn":
            return build_cnn_backbone(self.cnn)
        return build_vit_backbone(self.vit)

    def build_fused(self, strategy: Optional[str] = None, blocks: Optional[int] = None):
        spec = self.fusion
        if strategy:
            spec = replace(spec, strategy=strategy)
        if blocks is not None:
            spec = replace(spec, num_attention_blocks=blocks)
        return build_fusion(self.build_text(), self.build_vision(), spec)

    def build_unimodal(self, which: str) -> UnimodalClassifier:
        if which == "text_base":
            return UnimodalClassifier(self.build_text(), self.fusion.head)
        if which == "cnn_base":
            return UnimodalClassifier(self.build_vision(), self.fusion.head)
        raise ConfigurationError(f"unknown unimodal model {which!r}")

    def model_name(self, stage: str) -> str:
        if stage == "text_base":
            return "text_base"
        if stage == "cnn_base":
            return f"vision_base_{self.vision_kind}"
        return f"{stage}_{self.vision_kind}"

    def recipe(self, stage: str) -> TrainRecipe:
        recipe = recipe_for(stage, seed=self.training_seed)
        overrides = {
            k: v for k, v in (self.training_overrides.get(stage) or {}).items() if v is not None
        }
        if overrides:
            allowed = {f.name for f in dataclasses.fields(TrainRecipe)}
            _strict(f"training.{stage}", overrides, allowed)
            if "freeze" in overrides:
                overrides["freeze"] = frozenset(overrides["freeze"])
            if "betas" in overrides:
                overrides["betas"] = tuple(overrides["betas"])
            recipe = replace(recipe, **overrides)
        return recipe.validate()


# ---------------------------------------------------------------------------
# parsing

def _section(payload: dict, key: str) -> dict:
    value = payload.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"config section {key!r} must be a mapping")
    return dict(value)


def _preset_config(preset_map, base_cls, section_name: str, payload: dict):
    scale = payload.pop("scale", "toy")
    if scale not in preset_map:
        raise ConfigurationError(f"{section_name}.scale must be one of {sorted(preset_map)}")
    base = dataclasses.asdict(preset_map[scale])
    allowed = set(base)
    _strict(section_name, payload, allowed)
    base.update(payload)
    if "stage_strides" in base and base["stage_strides"] is not None:
        base["stage_strides"] = tuple(base["stage_strides"])
    return base_cls(**base)


def config_from_dict(payload: dict) -> ExperimentConfig:
    payload = dict(payload or {})
    _strict("<root>", payload, {"dataset", "text", "vision", "fusion", "training", "eval", "output_dir"})

    ds = _section(payload, "dataset")
    _strict("dataset", ds, {f.name for f in dataclasses.fields(DatasetSection)})
    for key in ("fractions", "normalize_mean", "normalize_std"):
        if key in ds:
            ds[key] = tuple(ds[key])
    dataset = DatasetSection(**ds)

    text = _preset_config(_TEXT_PRESETS, TextEncoderConfig, "text", _section(payload, "text"))

    vision = _section(payload, "vision")
    vision_kind = vision.pop("kind", "cnn")
    if "cnn" in vision or "vit" in vision:
        # resolved-config form: per-backbone subsections hold full field sets
        cnn_section = dict(vision.pop("cnn", {}) or {})
        vit_section = dict(vision.pop("vit", {}) or {})
        if vision:
            raise ConfigurationError(
                f"config section 'vision': unknown key(s) {sorted(vision)} beside cnn/vit"
            )
        cnn_section["stage_strides"] = tuple(cnn_section.get("stage_strides") or
                                             CnnBackboneConfig().stage_strides)
        cnn_cfg = CnnBackboneConfig(**cnn_section)
        vit_cfg = VitBackboneConfig(**vit_section) if vit_section else VitBackboneConfig()
    else:
        stride_profile = vision.pop("stride_profile", None)
        cnn_keys = {f.name for f in dataclasses.fields(CnnBackboneConfig)}
        vit_keys = {f.name for f in dataclasses.fields(VitBackboneConfig)}
        cnn_payload = {k: v for k, v in vision.items() if k in cnn_keys and k not in ("scale",)}
        vit_payload = {k: v for k, v in vision.items() if k in vit_keys}
        unknown = set(vision) - cnn_keys - vit_keys - {"scale"}
        if unknown:
            raise ConfigurationError(f"config section 'vision': unknown key(s) {sorted(unknown)}")
        scale = vision.get("scale", "toy")
        cnn_cfg = _preset_config(_CNN_PRESETS, CnnBackboneConfig, "vision", {"scale": scale, **cnn_payload})
        if stride_profile is not None:
            cnn_cfg = dataclasses.replace(
                cnn_cfg, stage_strides=tuple(default_stage_strides(cnn_cfg.num_bottlenecks, stride_profile))
            )
        vit_cfg = _preset_config(_VIT_PRESETS, VitBackboneConfig, "vision", {"scale": scale, **vit_payload})

    fusion_payload = _section(payload, "fusion")
    if "head" in fusion_payload:  # resolved-config form
        nested = dict(fusion_payload.pop("head") or {})
        head_payload = {
            "hidden_dim": nested.get("hidden_dim", 64),
            "dropout": nested.get("dropout", 0.1),
            "num_classes": nested.get("num_classes", 2),
        }
    else:
        head_payload = {
            "hidden_dim": fusion_payload.pop("head_hidden_dim", 64),
            "dropout": fusion_payload.pop("head_dropout", 0.1),
            "num_classes": fusion_payload.pop("head_num_classes", 2),
        }
    allowed = {f.name for f in dataclasses.fields(FusionSpec)} - {"head"}
    _strict("fusion", fusion_payload, allowed)
    if "taps" in fusion_payload:
        fusion_payload["taps"] = tuple(fusion_payload["taps"])
    fusion = FusionSpec(head=HeadConfig(**head_payload), **fusion_payload)

    training = _section(payload, "training")
    training_seed = int(training.pop("seed", 0))
    from .training import STAGES

    _strict("training", training, set(STAGES))
    training = {stage: dict(entry or {}) for stage, entry in training.items()}

    ev = _section(payload, "eval")
    _strict("eval", ev, {"warmup", "iters", "hardware"})

    return ExperimentConfig(
        dataset=dataset,
        text=text,
        vision_kind=vision_kind,
        cnn=cnn_cfg,
        vit=vit_cfg,
        fusion=fusion,
        training_seed=training_seed,
        training_overrides=training,
        eval_warmup=int(ev.get("warmup", 50)),
        eval_iters=int(ev.get("iters", 200)),
        eval_hardware=ev.get("hardware"),
        output_dir=str(payload.get("output_dir", "runs")),
    ).validate()


def load_config(path: Optional[Path] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    payload: dict = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"config file {path} must contain a mapping")
        payload = loaded
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        cursor = payload
        *parents, leaf = dotted.split(".")
        for part in parents:
            cursor = cursor.setdefault(part, {})
        cursor[leaf] = value
    return config_from_dict(payload)


# ---------------------------------------------------------------------------
# data pipeline

def prepare_data(cfg: ExperimentConfig) -> Dict[str, SampleSet]:
    """Build (or load) the preprocessed corpus and return its splits."""
    ds = cfg.dataset
    if ds.kind == "synth":
        spec = SynthSpec(
            seq_len=cfg.text.max_seq_len,
            vocab_size=cfg.text.vocab_size,
            resolution=cfg.vision_config().input_resolution,
        )
        data = synth_dataset(ds.synth_size, seed=ds.seed, spec=spec)
    else:
        clips = load_corpus(Path(ds.path))
        tokenizer = HashTokenizer(cfg.text.vocab_size, cfg.text.max_seq_len)
        data = preprocess_corpus(
            clips, tokenizer, cfg.vision_config().input_resolution,
            ds.normalize_mean, ds.normalize_std,
        )
    manifest = make_splits(data.clip_ids, ds.fractions, ds.seed)
    return {"manifest": manifest, "full": data, **split_sample_set(data, manifest)}

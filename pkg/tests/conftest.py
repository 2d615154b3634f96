import numpy as np
import pytest
import torch

from fusionbench import (
    CnnBackboneConfig,
    FusionSpec,
    TextEncoderConfig,
    VitBackboneConfig,
    build_cnn_backbone,
    build_text_encoder,
    build_vit_backbone,
)


@pytest.fixture(autouse=True)
def _fixed_seed():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture
def toy_text_cfg():
    return TextEncoderConfig()


@pytest.fixture
def toy_cnn_cfg():
    return CnnBackboneConfig()


@pytest.fixture
def toy_vit_cfg():
    return VitBackboneConfig()


def make_trio(strategy: str, text_cfg=None, vision_cfg=None, vision="cnn", **spec_kwargs):
    """Fresh backbones + fused model (builders truncate backbones in place)."""
    text = build_text_encoder(text_cfg or TextEncoderConfig())
    if vision == "cnn":
        vis = build_cnn_backbone(vision_cfg or CnnBackboneConfig())
    else:
        vis = build_vit_backbone(vision_cfg or VitBackboneConfig())
    from fusionbench import build_fusion

    return build_fusion(text, vis, FusionSpec(strategy=strategy, **spec_kwargs))

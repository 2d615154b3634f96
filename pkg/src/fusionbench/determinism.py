"""Seeding and deterministic-mode control.

Deterministic mode is toggled by the FUSIONBENCH_DETERMINISTIC environment
variable (default: on). In deterministic mode every run with the same seed,
data and recipe produces bit-identical parameters and training history on
the same machine/thread configuration.
"""

from __future__ import annotations

import os
import random

import numpy as np
import torch

ENV_VAR = "FUSIONBENCH_DETERMINISTIC"


def deterministic_mode() -> bool:
    return os.environ.get(ENV_VAR, "1") not in ("0", "false", "off")


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    if deterministic_mode():
        torch.use_deterministic_algorithms(True)


def generator(seed: int) -> np.random.Generator:
    """Independent numpy generator for data pipelines."""
    return np.random.Generator(np.random.PCG64(seed))

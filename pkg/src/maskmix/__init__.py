"""Learned channel masks that mix two style codes for face reenactment.

A small per-layer network looks at the difference between a source and a
target style code and decides, channel by channel, whether the reenacted code
takes the target's value (head pose, expression) or keeps the source's
(identity). Training runs against a seeded linear surrogate world whose
hidden channel partition makes the learned split measurable.
"""

__version__ = "0.1.0"

from .estimator import MaskMixReenactor
from .mask_network import init_mask_network, mask_forward, mix
from .metrics import evaluate, frechet_distance, mask_recovery
from .style_space import StyleCode, StyleLayout, builtin_layout, delta, slice_code
from .trainer import TrainConfig, train
from .world import make_world, render, sample_code

__all__ = [
    "MaskMixReenactor", "StyleCode", "StyleLayout", "TrainConfig", "builtin_layout", "delta",
    "evaluate", "frechet_distance", "init_mask_network", "make_world", "mask_forward",
    "mask_recovery", "mix", "render", "sample_code", "slice_code", "train",
]

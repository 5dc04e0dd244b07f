"""Layered style-space layouts and flat style codes.

A style code is a flat vector; each generator layer owns one contiguous
segment of it. Only convolution layers listed in ``active`` are masked.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import FormatError, LayoutMismatchError, MaskMixError

LAYOUT_NAMES = ("stylegan2-ffhq", "toy")


@dataclass(frozen=True)
class LayerSpec:
    s_index: int
    resolution: int
    kind: str  # "conv" or "toRGB"
    channels: int

    def __post_init__(self):
        if self.channels <= 0:
            raise MaskMixError(f"layer {self.s_index}: channels must be positive")
        if self.kind not in ("conv", "toRGB"):
            raise MaskMixError(f"layer {self.s_index}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class StyleLayout:
    name: str
    layers: tuple
    active: tuple  # s_index values of masked layers, in layout order

    def __post_init__(self):
        idx = [layer.s_index for layer in self.layers]
        if len(set(idx)) != len(idx):
            raise MaskMixError("duplicate s_index in layout")
        by_index = {layer.s_index: layer for layer in self.layers}
        for s in self.active:
            if s not in by_index:
                raise MaskMixError(f"active layer {s} not in layout")
            if by_index[s].kind != "conv":
                raise MaskMixError(f"active layer {s} is not a conv layer")
        object.__setattr__(self, "active", tuple(s for s in idx if s in set(self.active)))

    @cached_property
    def offsets(self):
        """s_index -> (start, stop) of the layer's segment in a flat code."""
        out, pos = {}, 0
        for layer in self.layers:
            out[layer.s_index] = (pos, pos + layer.channels)
            pos += layer.channels
        return out

    @property
    def total_dims(self):
        return int(np.sum([layer.channels for layer in self.layers]))

    @property
    def conv_dims(self):
        return int(np.sum([l.channels for l in self.layers if l.kind == "conv"]))

    @property
    def torgb_dims(self):
        return int(np.sum([l.channels for l in self.layers if l.kind == "toRGB"]))

    @property
    def active_layers(self):
        return tuple(self.layer(s) for s in self.active)

    @property
    def active_dims(self):
        return int(np.sum([l.channels for l in self.active_layers]))

    @cached_property
    def active_index(self):
        """Flat positions of the masked channels, concatenated in layer order."""
        parts = [np.arange(*self.offsets[s]) for s in self.active]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.intp)

    @cached_property
    def active_segments(self):
        """s_index -> (start, stop) inside the concatenated active vector."""
        out, pos = {}, 0
        for layer in self.active_layers:
            out[layer.s_index] = (pos, pos + layer.channels)
            pos += layer.channels
        return out

    def layer(self, s_index):
        for layer in self.layers:
            if layer.s_index == s_index:
                return layer
        raise LayoutMismatchError(f"layout {self.name!r} has no layer with s_index {s_index}")

    def to_dict(self):
        return {
            "name": self.name,
            "layers": [
                {"s_index": l.s_index, "resolution": l.resolution, "kind": l.kind, "channels": l.channels}
                for l in self.layers
            ],
            "active": list(self.active),
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            layers = tuple(
                LayerSpec(int(l["s_index"]), int(l["resolution"]), str(l["kind"]), int(l["channels"]))
                for l in doc["layers"]
            )
            return cls(str(doc["name"]), layers, tuple(int(s) for s in doc["active"]))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed layout document: {exc}") from exc

    @cached_property
    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _stylegan2_ffhq():
    # (s_index, resolution, kind, channels) for the 1024px synthesis network
    rows = [(0, 4, "conv", 512), (1, 4, "toRGB", 512)]
    channels = {8: 512, 16: 512, 32: 512, 64: 512, 128: 256, 256: 128, 512: 64, 1024: 32}
    s, res = 2, 8
    prev = 512
    while res <= 1024:
        out = channels[res]
        # conv0_up consumes the previous block's width, conv1 and toRGB the new one
        rows += [(s, res, "conv", prev), (s + 1, res, "conv", out), (s + 2, res, "toRGB", out)]
        prev, s, res = out, s + 3, res * 2
    layers = tuple(LayerSpec(*r) for r in rows)
    conv = [l.s_index for l in layers if l.kind == "conv"]
    return StyleLayout("stylegan2-ffhq", layers, tuple(conv[:12]))


def _toy():
    layers = tuple(LayerSpec(i, 4 * 2 ** i, "conv", 16) for i in range(4))
    return StyleLayout("toy", layers, tuple(range(4)))


def builtin_layout(name):
    if name == "stylegan2-ffhq":
        return _stylegan2_ffhq()
    if name == "toy":
        return _toy()
    raise MaskMixError(f"unknown layout {name!r}; valid names: {', '.join(LAYOUT_NAMES)}")


@dataclass(frozen=True, eq=False)
class StyleCode:
    values: np.ndarray
    layout: StyleLayout

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.layout.total_dims,):
            raise LayoutMismatchError(
                f"code of shape {v.shape} does not fit layout {self.layout.name!r} "
                f"({self.layout.total_dims} dims)"
            )
        object.__setattr__(self, "values", v)


def _check_same_layout(a, b):
    if a.layout.digest != b.layout.digest:
        raise LayoutMismatchError(f"layouts differ: {a.layout.name!r} vs {b.layout.name!r}")


def slice_code(code, layer):
    """The contiguous channel segment of ``layer`` inside ``code``."""
    s_index = layer.s_index if isinstance(layer, LayerSpec) else int(layer)
    if s_index not in code.layout.offsets or (
        isinstance(layer, LayerSpec) and code.layout.layer(s_index) != layer
    ):
        raise LayoutMismatchError(f"layer {layer} does not belong to layout {code.layout.name!r}")
    start, stop = code.layout.offsets[s_index]
    return code.values[start:stop]


def concat_slices(slices, layout):
    return StyleCode(np.concatenate(list(slices)), layout)


def delta(s_s, s_t):
    """Source minus target, componentwise."""
    _check_same_layout(s_s, s_t)
    return StyleCode(s_s.values - s_t.values, s_s.layout)

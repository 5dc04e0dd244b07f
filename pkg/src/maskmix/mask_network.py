"""Per-layer mask sub-networks and the mask-and-mix reenactment step.

Each active layer owns a two-layer MLP ``sigmoid(W2 relu(W1 ds + b1) + b2)``
fed with that layer's slice of ``ds = s_source - s_target``. The outputs are
concatenated into one mask over the active channels, and the reenacted code
takes ``m * s_target + (1 - m) * s_source`` there while every other channel
is copied from the source.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from .errors import LayoutMismatchError, MaskMixError, ShapeError
from .style_space import StyleCode

GLOBAL_REF = "global"


@dataclass
class MaskSubNetParams:
    layer_ref: object  # active s_index, or "global"
    W1: np.ndarray  # hidden x in
    b1: np.ndarray
    W2: np.ndarray  # out x hidden
    b2: np.ndarray

    @property
    def hidden(self):
        return self.W1.shape[0]

    def arrays(self):
        return [self.W1, self.b1, self.W2, self.b2]


@dataclass
class MaskNetworkParams:
    subnets: list
    layout_hash: str
    hidden_width: int | None = None  # None: each subnet as wide as its input
    per_layer: bool = True

    def arrays(self):
        return [a for net in self.subnets for a in net.arrays()]

    def names(self):
        return [f"{net.layer_ref}.{k}" for net in self.subnets for k in ("W1", "b1", "W2", "b2")]

    def with_arrays(self, arrays):
        arrays = list(arrays)
        if len(arrays) != 4 * len(self.subnets):
            raise ShapeError("with_arrays", (len(arrays),), (4 * len(self.subnets),))
        nets = [
            MaskSubNetParams(net.layer_ref, *arrays[4 * i:4 * i + 4])
            for i, net in enumerate(self.subnets)
        ]
        return replace(self, subnets=nets)

    def copy(self):
        return self.with_arrays([a.copy() for a in self.arrays()])

    def check_layout(self, layout):
        if layout.digest != self.layout_hash:
            raise LayoutMismatchError(
                f"mask network trained for layout {self.layout_hash}, got {layout.name!r} ({layout.digest})"
            )


def _glorot(rng, fan_out, fan_in):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_mask_network(layout, hidden_width=None, seed=0, per_layer=True):
    """Glorot-uniform weights, zero biases, one subnet per active layer.

    ``per_layer=False`` builds a single network over all active channels.
    """
    if hidden_width is not None and int(hidden_width) < 1:
        raise MaskMixError("hidden_width must be >= 1")
    rng = np.random.default_rng(seed)
    if per_layer:
        widths = [(l.s_index, l.channels) for l in layout.active_layers]
    else:
        widths = [(GLOBAL_REF, layout.active_dims)]
    subnets = []
    for ref, c in widths:
        h = int(hidden_width) if hidden_width is not None else c
        subnets.append(MaskSubNetParams(
            ref, _glorot(rng, h, c), np.zeros(h), _glorot(rng, c, h), np.zeros(c),
        ))
    return MaskNetworkParams(subnets, layout.digest, hidden_width, per_layer)


def _dense(x, W, b):
    if x.data.ndim == 1:
        return ag.matvec(W, x) + b
    return ag.matmul(x, ag.transpose(W)) + b


def _subnet(net, x):
    return ag.sigmoid(_dense(ag.relu(_dense(x, net.W1, net.b1)), net.W2, net.b2))


def mask_active(net_params, layout, ds_active, weights=None):
    """Mask over the active channels from the active part of ``ds``.

    ``weights`` optionally replaces the parameter arrays with tensors (same
    order as ``net_params.arrays()``) so gradients reach them.
    """
    ds_active = ag.tensor(ds_active)
    if ds_active.shape[-1] != layout.active_dims:
        raise ShapeError("mask_forward", ds_active.shape, (layout.active_dims,))
    nets = net_params.subnets
    if weights is not None:
        nets = [MaskSubNetParams(n.layer_ref, *weights[4 * i:4 * i + 4]) for i, n in enumerate(nets)]
    if not net_params.per_layer:
        return _subnet(nets[0], ds_active)
    parts = []
    for net in nets:
        start, stop = layout.active_segments[net.layer_ref]
        parts.append(_subnet(net, ag.take(ds_active, np.arange(start, stop))))
    return ag.concat(parts)


def mask_forward(params, ds):
    """Mask vector in (0, 1) over the active channels for a difference code."""
    if not isinstance(ds, StyleCode):
        raise MaskMixError("mask_forward expects a StyleCode difference")
    params.check_layout(ds.layout)
    return mask_active(params, ds.layout, ds.values[ds.layout.active_index]).data


def mix_tensors(s_s, s_t, m, layout):
    """Mix full-width codes (1-D or batched 2-D) with a mask over active channels."""
    s_s, s_t, m = ag.tensor(s_s), ag.tensor(s_t), ag.tensor(m)
    if s_s.shape != s_t.shape or s_s.shape[-1] != layout.total_dims:
        raise ShapeError("mix", s_s.shape, s_t.shape)
    if m.shape[-1] != layout.active_dims:
        raise ShapeError("mix", m.shape, (layout.active_dims,))
    idx = layout.active_index
    active = m * ag.take(s_t, idx) + (1.0 - m) * ag.take(s_s, idx)
    keep = np.ones(layout.total_dims)
    keep[idx] = 0.0
    return s_s * keep + ag.embed(active, idx, layout.total_dims)


def mix(s_s, s_t, m):
    """``m * s_t + (1 - m) * s_s`` on active channels; source elsewhere."""
    if s_s.layout.digest != s_t.layout.digest:
        raise LayoutMismatchError("mix: codes come from different layouts")
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (s_s.layout.active_dims,):
        raise ShapeError("mix", m.shape, (s_s.layout.active_dims,))
    out = mix_tensors(s_s.values, s_t.values, m, s_s.layout).data
    return StyleCode(out, s_s.layout)


@dataclass
class Reenactor:
    """Mask network bound to a layout, usable inside and outside autograd.

    ``rotation`` (an orthogonal active_dims x active_dims matrix) switches to
    an entangled basis: codes are rotated before masking and rotated back
    after mixing. ``force_mask`` replaces the network output with a constant,
    which is how the metric probes are run.
    """

    params: MaskNetworkParams
    layout: object
    rotation: np.ndarray | None = None
    force_mask: object = None  # scalar or per-active-channel array
    weights: list | None = field(default=None, repr=False)
    calls: int = 0

    def __post_init__(self):
        self.params.check_layout(self.layout)

    def _to_basis(self, s_active):
        if self.rotation is None:
            return s_active
        return ag.matmul(s_active, self.rotation.T) if s_active.data.ndim == 2 else ag.matvec(self.rotation, s_active)

    def _from_basis(self, u_active):
        if self.rotation is None:
            return u_active
        return ag.matmul(u_active, self.rotation) if u_active.data.ndim == 2 else ag.matvec(self.rotation.T, u_active)

    def mask(self, s_s, s_t):
        s_s, s_t = ag.tensor(s_s), ag.tensor(s_t)
        idx = self.layout.active_index
        self.calls += 1
        if self.force_mask is not None:
            shape = s_s.shape[:-1] + (self.layout.active_dims,)
            return ag.Tensor(np.broadcast_to(np.asarray(self.force_mask, dtype=np.float64), shape).copy())
        du = self._to_basis(ag.take(s_s, idx)) - self._to_basis(ag.take(s_t, idx))
        return mask_active(self.params, self.layout, du, self.weights)

    def reenact(self, s_s, s_t):
        """Return ``(s_r, m)`` for full-width codes."""
        s_s, s_t = ag.tensor(s_s), ag.tensor(s_t)
        m = self.mask(s_s, s_t)
        if self.rotation is None:
            return mix_tensors(s_s, s_t, m, self.layout), m
        idx = self.layout.active_index
        us, ut = self._to_basis(ag.take(s_s, idx)), self._to_basis(ag.take(s_t, idx))
        active = self._from_basis(m * ut + (1.0 - m) * us)
        keep = np.ones(self.layout.total_dims)
        keep[idx] = 0.0
        return s_s * keep + ag.embed(active, idx, self.layout.total_dims), m

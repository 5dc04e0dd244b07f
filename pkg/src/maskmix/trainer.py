"""Training loop: sample unpaired code triples, minimize the total loss with Adam.

Only the mask network is optimized; the world is never written to. Every
iteration draws its codes from ``default_rng([seed, 1, iteration])`` so a run
split across a resume is bitwise identical to an uninterrupted one.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import autograd as ag
from .errors import DigestMismatchError, FormatError, LayoutMismatchError, MaskMixError, NonFiniteError
from .losses import LossBreakdown, LossWeights, total_loss
from .mask_network import Reenactor, init_mask_network
from .style_space import builtin_layout
from .world import WorldSizes, _orthogonal, make_world

log = logging.getLogger(__name__)

DESK_PRESET = {"iterations": 2000, "batch_size": 8, "layout": "toy", "learning_rate": 3e-3}

LOG_FIELDS = ["iteration", "L_x", "L_id", "L_r", "L_cx", "L_cid", "L_cycle", "total", "grad_norm", "wall_time"]


@dataclass
class TrainConfig:
    iterations: int = 70000
    batch_size: int = 6
    learning_rate: float = 1e-4
    hidden_width: int | None = None
    lambda_x: float = 1.0
    lambda_id: float = 1.0
    cycle_enabled: bool = True
    per_layer_network: bool = True
    seed: int = 0
    layout: str = "stylegan2-ffhq"
    world_seed: int = 7
    world_sizes: dict = field(default_factory=dict)
    world_path: str | None = None
    entangle_seed: int | None = None
    log_every: int = 100
    checkpoint_every: int = 0
    desk_preset: bool = False
    out_dir: str = "run"

    def __post_init__(self):
        if int(self.iterations) < 0:
            raise MaskMixError("iterations must be >= 0")
        if int(self.batch_size) < 1:
            raise MaskMixError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise MaskMixError("learning_rate must be > 0")
        LossWeights(self.lambda_x, self.lambda_id)

    def resolved(self):
        """Config with the desk preset applied (a no-op when it is off)."""
        if not self.desk_preset:
            return self
        return replace(self, desk_preset=False, **DESK_PRESET)

    @property
    def weights(self):
        return LossWeights(self.lambda_x, self.lambda_id)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names - {"format_version", "kind"}
        if unknown:
            raise FormatError(f"unknown config fields: {sorted(unknown)}")
        return cls(**{k: v for k, v in doc.items() if k in names})


@dataclass
class Checkpoint:
    params: object
    adam: ag.AdamState
    iteration: int
    seed: int
    world_digest: str
    layout: object
    entangle_seed: int | None = None
    config: dict = field(default_factory=dict)

    def reenactor(self, **kw):
        return Reenactor(self.params, self.layout, rotation=entangling_rotation(self.layout, self.entangle_seed), **kw)

    @property
    def digest(self):
        from .io import params_digest

        return params_digest(self.params)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    rows: list
    world: object


def entangling_rotation(layout, entangle_seed):
    if entangle_seed is None:
        return None
    return _orthogonal(np.random.default_rng([int(entangle_seed), 3]), layout.active_dims)


def world_for(config):
    """Build (or load) the world a config trains against."""
    config = config.resolved()
    if config.world_path:
        from .io import load_world

        world = load_world(config.world_path)
        if world.layout.name != config.layout:
            raise LayoutMismatchError(
                f"world file uses layout {world.layout.name!r}, config asks for {config.layout!r}"
            )
        return world
    return make_world(builtin_layout(config.layout), WorldSizes(**config.world_sizes), config.world_seed)


def init_checkpoint(config, world):
    config = config.resolved()
    params = init_mask_network(world.layout, config.hidden_width, config.seed, config.per_layer_network)
    adam = ag.AdamState.for_params(params.arrays(), learning_rate=config.learning_rate)
    return Checkpoint(params, adam, 0, config.seed, world.digest, world.layout,
                      config.entangle_seed, config.to_dict())


def check_resume(ckpt, config, world):
    if ckpt.layout.digest != world.layout.digest:
        raise DigestMismatchError("layout", ckpt.layout.digest, world.layout.digest)
    if ckpt.world_digest != world.digest:
        raise DigestMismatchError("world", ckpt.world_digest, world.digest)
    if ckpt.seed != config.seed:
        raise DigestMismatchError("training seed", ckpt.seed, config.seed)
    if ckpt.entangle_seed != config.entangle_seed:
        raise DigestMismatchError("entangle seed", ckpt.entangle_seed, config.entangle_seed)


def sample_triple(world, seed, iteration, batch_size, cycle):
    rng = np.random.default_rng([int(seed), 1, int(iteration)])
    d = world.layout.total_dims
    s_s = rng.standard_normal((batch_size, d))
    s_t = rng.standard_normal((batch_size, d))
    s_t2 = rng.standard_normal((batch_size, d)) if cycle else None
    return s_s, s_t, s_t2


def train_step(ckpt, config, world, iteration, rotation=None):
    """One optimizer step; returns ``(new_checkpoint, breakdown, grad_norm)``."""
    s_s, s_t, s_t2 = sample_triple(world, config.seed, iteration, config.batch_size, config.cycle_enabled)
    weights = [ag.Tensor(a, requires_grad=True) for a in ckpt.params.arrays()]
    model = Reenactor(ckpt.params, world.layout, rotation=rotation, weights=weights)
    loss, breakdown = total_loss(config.weights, world, model, s_s, s_t, s_t2, cycle=config.cycle_enabled)
    for term, value in breakdown.as_dict().items():
        if not np.isfinite(value):
            raise NonFiniteError(f"non-finite {term} at iteration {iteration}", iteration=iteration, term=term)
    ag.backward(loss)
    grads = [w.grad for w in weights]
    grad_norm = float(np.sqrt(np.sum([np.sum(g * g) for g in grads])))
    arrays, adam = ag.adam_step(ckpt.params.arrays(), grads, ckpt.adam, ckpt.params.names())
    new = replace(ckpt, params=ckpt.params.with_arrays(arrays), adam=adam, iteration=iteration + 1)
    return new, breakdown, grad_norm


def _append_rows(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        if fresh:
            writer.writeheader()
        writer.writerows(rows)


def train(config, world=None, resume=None, checkpoint_path=None, log_path=None):
    """Train (or continue training) a mask network.

    Parameters
    ----------
    config : TrainConfig
    world : SurrogateWorld, optional
        Defaults to :func:`world_for` ``(config)``.
    resume : Checkpoint, optional
        Continue from this state up to ``config.iterations`` total iterations.
    checkpoint_path, log_path : path-like, optional
        Where to persist checkpoints and CSV log rows as training proceeds.

    Returns
    -------
    TrainResult
    """
    config = config.resolved()
    world = world_for(config) if world is None else world
    if resume is None:
        ckpt = init_checkpoint(config, world)
    else:
        check_resume(resume, config, world)
        ckpt = resume
    rotation = entangling_rotation(world.layout, config.entangle_seed)

    rows, pending = [], []
    start = time.perf_counter()
    for it in range(ckpt.iteration, config.iterations):
        ckpt, breakdown, grad_norm = train_step(ckpt, config, world, it, rotation)
        last = it == config.iterations - 1
        if config.log_every and (it % config.log_every == 0 or last):
            row = {"iteration": it, **breakdown.as_dict(), "grad_norm": grad_norm,
                   "wall_time": round(time.perf_counter() - start, 3)}
            rows.append(row)
            pending.append(row)
            log.info("iter %d total %.6g", it, breakdown.total)
        if checkpoint_path and config.checkpoint_every and (it + 1) % config.checkpoint_every == 0 and not last:
            _persist(ckpt, checkpoint_path, pending, log_path)
            pending = []
    ckpt.config = config.to_dict()
    if checkpoint_path:
        _persist(ckpt, checkpoint_path, pending, log_path)
    elif log_path and pending:
        _append_rows(log_path, pending)
    return TrainResult(ckpt, rows, world)


def _persist(ckpt, checkpoint_path, rows, log_path):
    from .io import save_checkpoint

    save_checkpoint(checkpoint_path, ckpt)
    if log_path and rows:
        _append_rows(log_path, rows)


def initial_loss(config, world):
    """Total loss of the untrained network on iteration 0's batch."""
    config = config.resolved()
    ckpt = init_checkpoint(config, world)
    s_s, s_t, s_t2 = sample_triple(world, config.seed, 0, config.batch_size, config.cycle_enabled)
    model = ckpt.reenactor()
    _, breakdown = total_loss(config.weights, world, model, s_s, s_t, s_t2, cycle=config.cycle_enabled)
    return breakdown


__all__ = [
    "TrainConfig", "Checkpoint", "TrainResult", "LossBreakdown", "DESK_PRESET",
    "train", "train_step", "init_checkpoint", "world_for", "initial_loss", "entangling_rotation",
]

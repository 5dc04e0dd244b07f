"""Reenactment metrics against a surrogate world, plus mask recovery scoring.

Reductions used throughout:

* pose error: mean absolute difference over (yaw, pitch, roll), degrees
* expression error: mean absolute coefficient difference
* NME: 100 * mean landmark distance / diagonal of the ground-truth bounding box
* Frechet distance: Gaussian fit (``np.cov``, ddof=1) of identity embeddings
  of reenacted codes versus fresh random codes
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DigestMismatchError, MaskMixError, ShapeError
from .losses import posed_target_shape
from .mask_network import MaskNetworkParams, MaskSubNetParams, Reenactor

METRIC_FIELDS = ("csim", "pose_err", "expr_err", "nme", "frechet", "mask_f1")

REDUCTION_NOTES = {
    "pose_err": "mean |angle difference| over yaw, pitch, roll (degrees)",
    "expr_err": "mean |expression coefficient difference|",
    "nme": "100 * mean point distance / ground-truth bounding-box diagonal",
    "frechet": "Gaussian Frechet distance, identity embeddings of reenacted vs fresh codes",
}


def frechet_distance(feats_a, feats_b):
    """Frechet distance between Gaussians fitted to two sample sets."""
    a, b = np.asarray(feats_a, dtype=np.float64), np.asarray(feats_b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise ShapeError("frechet_distance", a.shape, b.shape)
    if len(a) < 2 or len(b) < 2:
        raise MaskMixError("frechet_distance needs at least 2 vectors per set")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False))

    w, v = np.linalg.eigh(cov_a)
    root_a = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    inner = root_a @ cov_b @ root_a
    inner = 0.5 * (inner + inner.T)
    tr_sqrt = np.sqrt(np.clip(np.linalg.eigvalsh(inner), 0.0, None)).sum()
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)


@dataclass
class MaskRecovery:
    precision: float
    recall: float
    f1: float
    mean_mask: np.ndarray = field(repr=False)
    threshold: float = 0.5
    # scored over pose, expression and identity channels only
    f1_informative: float = 0.0

    def scores(self):
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "f1_informative": self.f1_informative, "threshold": self.threshold}


def _prf(pred, truth):
    tp = int(np.sum(pred & truth))
    precision = tp / int(pred.sum()) if pred.any() else 0.0
    recall = tp / int(truth.sum()) if truth.any() else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def _model(source, world, **kw):
    if isinstance(source, Reenactor):
        if kw:
            return Reenactor(source.params, source.layout, source.rotation, **kw)
        return source
    if source.world_digest != world.digest:
        raise DigestMismatchError("world", source.world_digest, world.digest)
    return source.reenactor(**kw)


def _pairs(world, n_pairs, seed, extra=0):
    """Per-pair seeded draws, so any pair's codes do not depend on batch order."""
    d = world.layout.total_dims
    out = np.empty((n_pairs, 2 + extra, d))
    for i in range(n_pairs):
        out[i] = np.random.default_rng([int(seed), 2, i]).standard_normal((2 + extra, d))
    return [out[:, k] for k in range(2 + extra)]


def mask_recovery(source, world, n_pairs=200, seed=0, threshold=0.5):
    """Average the mask over random pairs and score it against pose+expr channels."""
    model = _model(source, world)
    s_s, s_t = _pairs(world, n_pairs, seed)
    mean_mask = model.mask(s_s, s_t).data.mean(axis=0)
    pred = mean_mask > threshold
    truth = np.zeros(world.layout.active_dims, dtype=bool)
    truth[world.partition.take_from_target] = True
    precision, recall, f1 = _prf(pred, truth)
    seen = np.zeros_like(truth)
    seen[np.concatenate([world.partition.take_from_target, world.partition.identity])] = True
    f1_info = _prf(pred[seen], truth[seen])[2]
    return MaskRecovery(precision, recall, f1, mean_mask, threshold, f1_info)


@dataclass
class MetricsReport:
    csim: float
    pose_err: float
    expr_err: float
    nme: float
    frechet: float
    mask_recovery: dict
    n_pairs: int
    seed: int
    world_digest: str
    checkpoint_digest: str
    probe: float | None = None
    notes: dict = field(default_factory=lambda: dict(REDUCTION_NOTES))

    def to_dict(self):
        return asdict(self)

    def row(self):
        return {
            "csim": self.csim, "pose_err": self.pose_err, "expr_err": self.expr_err, "nme": self.nme,
            "frechet": self.frechet, "mask_f1": self.mask_recovery["f1"],
            "mask_precision": self.mask_recovery["precision"], "mask_recall": self.mask_recovery["recall"],
            "n_pairs": self.n_pairs, "seed": self.seed,
            "world_digest": self.world_digest, "checkpoint_digest": self.checkpoint_digest,
        }

    def render(self, fmt="json"):
        if fmt == "json":
            return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if fmt == "csv":
            buf = io.StringIO()
            writer = csv.DictWriter(buf, fieldnames=list(self.row()))
            writer.writeheader()
            writer.writerow(self.row())
            return buf.getvalue()
        if fmt == "table":
            width = max(len(k) for k in self.row())
            return "".join(
                f"{k:<{width}}  {v:.6g}\n" if isinstance(v, float) else f"{k:<{width}}  {v}\n"
                for k, v in self.row().items()
            )
        raise MaskMixError(f"unknown format {fmt!r}; use json, csv or table")


def pair_metrics(world, model, s_s, s_t):
    """Per-pair metric arrays for batched source/target codes."""
    I_s, I_t = world.render_t(s_s).data, world.render_t(s_t).data
    s_r, _ = model.reenact(s_s, s_t)
    I_r = world.render_t(s_r.data).data

    f_s, f_r = world.identity_t(I_s).data, world.identity_t(I_r).data
    csim = np.sum(f_s * f_r, axis=-1)
    pose_err = np.abs(world.pose_t(I_r).data - world.pose_t(I_t).data).mean(axis=-1)
    expr_err = np.abs(world.expr_t(I_r).data - world.expr_t(I_t).data).mean(axis=-1)

    n = world.sizes.n_landmarks
    X_gt = posed_target_shape(world, I_s, I_t).data.reshape(-1, n, 3)
    X_r = world.landmarks_t(I_r).data.reshape(-1, n, 3)
    diag = np.linalg.norm(X_gt.max(axis=1) - X_gt.min(axis=1), axis=-1)
    nme = 100.0 * np.linalg.norm(X_r - X_gt, axis=-1).mean(axis=-1) / diag
    return {"csim": csim, "pose_err": pose_err, "expr_err": expr_err, "nme": nme, "identity": f_r}


def evaluate(source, world, n_pairs=500, seed=0, probe=None, self_pairs=False):
    """Metrics over ``n_pairs`` random (source, target) pairs.

    ``probe`` forces a constant mask (0 keeps the source, 1 copies the target
    on every active channel). ``self_pairs`` uses each source as its own target.
    """
    if n_pairs < 2:
        raise MaskMixError("evaluate needs n_pairs >= 2 (Frechet distance needs a covariance)")
    model = _model(source, world, force_mask=probe) if probe is not None else _model(source, world)
    s_s, s_t, fresh = _pairs(world, n_pairs, seed, extra=1)
    if self_pairs:
        s_t = s_s
    per = pair_metrics(world, model, s_s, s_t)
    fresh_id = world.identity_t(world.render_t(fresh).data).data
    rec = mask_recovery(model, world, n_pairs, seed)
    digest = getattr(source, "digest", None)
    if digest is None:
        from .io import params_digest

        digest = params_digest(model.params)
    return MetricsReport(
        csim=float(per["csim"].mean()),
        pose_err=float(per["pose_err"].mean()),
        expr_err=float(per["expr_err"].mean()),
        nme=float(per["nme"].mean()),
        frechet=frechet_distance(per["identity"], fresh_id),
        mask_recovery=rec.scores(),
        n_pairs=int(n_pairs),
        seed=int(seed),
        world_digest=world.digest,
        checkpoint_digest=digest,
        probe=probe,
    )


def oracle_mask_network(world, strength=30.0, invert=False, hidden_width=1):
    """Hand-built per-layer network emitting ~1 on pose+expr channels, ~0 elsewhere."""
    layout = world.layout
    target = np.full(layout.active_dims, -strength)
    target[world.partition.take_from_target] = strength
    if invert:
        target = -target
    nets = []
    for layer in layout.active_layers:
        start, stop = layout.active_segments[layer.s_index]
        c = layer.channels
        nets.append(MaskSubNetParams(
            layer.s_index, np.zeros((hidden_width, c)), np.zeros(hidden_width),
            np.zeros((c, hidden_width)), target[start:stop].copy(),
        ))
    return MaskNetworkParams(nets, layout.digest, hidden_width, True)


def channel_table(world, recovery):
    """Rows of (channel, s_index, mean mask, block label) for every active channel."""
    layout = world.layout
    labels = world.partition.label(layout.active_dims)
    s_of = np.concatenate([np.full(l.channels, l.s_index) for l in layout.active_layers])
    return [
        {"channel": i, "s_index": int(s_of[i]), "mean_mask": float(recovery.mean_mask[i]), "block": labels[i]}
        for i in range(layout.active_dims)
    ]

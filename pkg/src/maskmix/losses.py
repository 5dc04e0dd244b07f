"""Reenactment, recurrent-cycle and total objectives.

All functions take batched tensors (one row per pair) and return scalar
tensors. L1 terms are means over coordinates and pairs; identity terms are
``1 - cosine similarity`` so that minimizing them pulls embeddings together.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .errors import MaskMixError, ShapeError
from .face_model import reconstruct_tensor, rotate_tensor


@dataclass(frozen=True)
class LossWeights:
    lambda_x: float = 1.0
    lambda_id: float = 1.0

    def __post_init__(self):
        for name in ("lambda_x", "lambda_id"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise MaskMixError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class LossBreakdown:
    L_x: float = 0.0
    L_id: float = 0.0
    L_r: float = 0.0
    L_cx: float = 0.0
    L_cid: float = 0.0
    L_cycle: float = 0.0
    total: float = 0.0

    def as_dict(self):
        return asdict(self)


def shape_loss(X_r, X_gt):
    """Mean absolute coordinate difference."""
    X_r, X_gt = ag.tensor(X_r), ag.tensor(X_gt)
    if X_r.shape != X_gt.shape:
        raise ShapeError("shape_loss", X_r.shape, X_gt.shape)
    return ag.abs_sum(X_r - X_gt) * (1.0 / X_r.data.size)


def identity_loss(f_a, f_b, tol=1e-6):
    """Mean of ``1 - cos(f_a, f_b)`` over rows; inputs must be unit vectors."""
    f_a, f_b = ag.tensor(f_a), ag.tensor(f_b)
    for f in (f_a, f_b):
        n = np.linalg.norm(f.data, axis=-1)
        if np.any(np.abs(n - 1.0) > tol):
            raise MaskMixError(f"identity_loss expects unit vectors, got norms {np.atleast_1d(n)[:4]}")
    return 1.0 - ag.mean(ag.cosine_sim(f_a, f_b))


def reenactment_loss(weights, X_r, X_gt, f_s, f_r):
    """Return ``(L_r, L_x, L_id)`` with ``L_r = lx * L_x + lid * L_id``."""
    L_x = shape_loss(X_r, X_gt)
    L_id = identity_loss(f_s, f_r)
    return weights.lambda_x * L_x + weights.lambda_id * L_id, L_x, L_id


def cycle_codes(model, s_s, s_r, s_t2):
    """Reenact both the source and the first result toward a second target."""
    s_r1, _ = model.reenact(s_s, s_t2)
    s_r2, _ = model.reenact(s_r, s_t2)
    return s_r1, s_r2


def posed_target_shape(world, I_source, I_target):
    """Ground-truth landmarks: source shape coefficients, target expression and pose."""
    X = reconstruct_tensor(world.basis, world.shape_t(I_source), world.expr_t(I_target))
    return ag.Tensor(rotate_tensor(X, world.pose_t(I_target)).data)


def cycle_loss(weights, world, s_s, s_r, s_t2, model, I_s=None, f_s=None):
    """Return ``(L_cycle, L_cx, L_cid)`` for the recurrent cycle branch."""
    s_s = ag.tensor(s_s)
    I_s = world.render_t(s_s).data if I_s is None else I_s
    f_s = world.identity_t(I_s) if f_s is None else f_s
    I_t2 = world.render_t(ag.tensor(s_t2).data).data
    X_gt2 = posed_target_shape(world, I_s, I_t2)

    s_r1, s_r2 = cycle_codes(model, s_s, s_r, s_t2)
    I_r1, I_r2 = world.render_t(s_r1), world.render_t(s_r2)
    L_cx = shape_loss(world.landmarks_t(I_r1), X_gt2) + shape_loss(world.landmarks_t(I_r2), X_gt2)
    f_r1, f_r2 = world.identity_t(I_r1), world.identity_t(I_r2)
    L_cid = identity_loss(f_s, f_r1) + identity_loss(f_s, f_r2) + identity_loss(f_r1, f_r2)
    return weights.lambda_x * L_cx + weights.lambda_id * L_cid, L_cx, L_cid


def total_loss(weights, world, model, s_s, s_t, s_t2=None, cycle=True):
    """Full objective for a batch of (source, target, second target) codes.

    Returns ``(total, breakdown)``; ``total`` is a scalar tensor.
    """
    s_s, s_t = np.atleast_2d(s_s), np.atleast_2d(s_t)
    I_s = world.render_t(s_s).data
    I_t = world.render_t(s_t).data
    f_s = ag.Tensor(world.identity_t(I_s).data)
    X_gt = posed_target_shape(world, I_s, I_t)

    s_r, _ = model.reenact(s_s, s_t)
    I_r = world.render_t(s_r)
    L_r, L_x, L_id = reenactment_loss(weights, world.landmarks_t(I_r), X_gt, f_s, world.identity_t(I_r))

    if cycle:
        if s_t2 is None:
            raise MaskMixError("cycle branch needs a second target")
        L_cycle, L_cx, L_cid = cycle_loss(weights, world, s_s, s_r, np.atleast_2d(s_t2), model, I_s, f_s)
        total = L_r + L_cycle
    else:
        L_cycle = L_cx = L_cid = ag.Tensor(0.0)
        total = L_r
    parts = {k: float(v.data) for k, v in
             dict(L_x=L_x, L_id=L_id, L_r=L_r, L_cx=L_cx, L_cid=L_cid, L_cycle=L_cycle, total=total).items()}
    return total, LossBreakdown(**parts)

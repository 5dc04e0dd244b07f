"""Linear 3D morphable landmark model and rigid head pose.

Landmarks are flat vectors ``[x0, y0, z0, x1, ...]`` of length ``3N``; the
public functions return ``(N, 3)`` arrays. Rotation composes
``R = R_roll(z) @ R_yaw(y) @ R_pitch(x)`` with angles given in degrees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .errors import MaskMixError, ShapeError


@dataclass(frozen=True, eq=False)
class MorphableBasis:
    mean_shape: np.ndarray  # (3N,)
    shape_basis: np.ndarray  # (3N, m_s)
    expr_basis: np.ndarray  # (3N, m_e)
    seed: int | None = None

    def __post_init__(self):
        rows = self.mean_shape.shape[0]
        if rows % 3 or self.shape_basis.shape[0] != rows or self.expr_basis.shape[0] != rows:
            raise ShapeError("MorphableBasis", self.mean_shape.shape, self.shape_basis.shape, self.expr_basis.shape)

    @property
    def n_landmarks(self):
        return self.mean_shape.shape[0] // 3

    @property
    def m_s(self):
        return self.shape_basis.shape[1]

    @property
    def m_e(self):
        return self.expr_basis.shape[1]

    def to_dict(self):
        return {
            "seed": self.seed,
            "n_landmarks": self.n_landmarks,
            "m_s": self.m_s,
            "m_e": self.m_e,
            "mean_shape": self.mean_shape.tolist(),
            "shape_basis": self.shape_basis.tolist(),
            "expr_basis": self.expr_basis.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            np.asarray(doc["mean_shape"], dtype=np.float64),
            np.asarray(doc["shape_basis"], dtype=np.float64).reshape(-1, int(doc["m_s"])),
            np.asarray(doc["expr_basis"], dtype=np.float64).reshape(-1, int(doc["m_e"])),
            doc.get("seed"),
        )


@dataclass(frozen=True)
class ShapeParams:
    a_s: np.ndarray
    a_e: np.ndarray


@dataclass(frozen=True)
class PoseAngles:
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def as_array(self):
        return np.array([self.yaw, self.pitch, self.roll])

    def __neg__(self):
        return PoseAngles(-self.yaw, -self.pitch, -self.roll)


def make_basis(n_landmarks=16, m_s=8, m_e=6, seed=0):
    """Seeded mean shape plus jointly orthonormal shape/expression bases."""
    if 3 * n_landmarks < m_s + m_e:
        raise MaskMixError("basis needs 3N >= m_s + m_e")
    rng = np.random.default_rng(seed)
    mean = rng.normal(size=3 * n_landmarks)
    q, r = np.linalg.qr(rng.normal(size=(3 * n_landmarks, m_s + m_e)))
    q = q * np.sign(np.diag(r))
    return MorphableBasis(mean, q[:, :m_s].copy(), q[:, m_s:].copy(), seed)


def reconstruct_tensor(basis, a_s, a_e):
    """Mean plus shape and expression offsets; batched along the leading axis."""
    a_s, a_e = ag.tensor(a_s), ag.tensor(a_e)
    if a_s.shape[-1] != basis.m_s or a_e.shape[-1] != basis.m_e:
        raise ShapeError("reconstruct", a_s.shape, a_e.shape, (basis.m_s, basis.m_e))
    if a_s.data.ndim == 1:
        return basis.mean_shape + ag.matvec(basis.shape_basis, a_s) + ag.matvec(basis.expr_basis, a_e)
    return (basis.mean_shape + ag.matmul(a_s, basis.shape_basis.T)) + ag.matmul(a_e, basis.expr_basis.T)


def rotate_tensor(X, angles_deg):
    """Rotate flat landmarks by per-sample ``(yaw, pitch, roll)`` in degrees."""
    X, angles = ag.tensor(X), ag.tensor(angles_deg)
    if angles.shape[-1] != 3 or X.shape[-1] % 3:
        raise ShapeError("rotate", X.shape, angles.shape)
    n = X.shape[-1] // 3
    rad = angles * (np.pi / 180.0)

    def angle(k):
        a = ag.take(rad, [k])
        return ag.cos(a), ag.sin(a)

    cy, sy = angle(0)
    cx, sx = angle(1)
    cz, sz = angle(2)
    x, y, z = (ag.take(X, np.arange(k, 3 * n, 3)) for k in range(3))
    # pitch about x, then yaw about y, then roll about z
    y, z = cx * y - sx * z, sx * y + cx * z
    x, z = cy * x + sy * z, cy * z - sy * x
    x, y = cz * x - sz * y, sz * x + cz * y
    stacked = ag.concat([x, y, z])
    order = np.arange(3 * n).reshape(3, n).T.ravel()
    return ag.take(stacked, order)


def rotation_matrix(pose):
    """Dense 3x3 matrix of the same convention, for reference computations."""
    yaw, pitch, roll = np.deg2rad(pose.as_array())
    cx, sx, cy, sy, cz, sz = np.cos(pitch), np.sin(pitch), np.cos(yaw), np.sin(yaw), np.cos(roll), np.sin(roll)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def reconstruct(basis, p):
    a_s, a_e = np.asarray(p.a_s, float), np.asarray(p.a_e, float)
    if a_s.shape != (basis.m_s,) or a_e.shape != (basis.m_e,):
        raise ShapeError("reconstruct", a_s.shape, a_e.shape, (basis.m_s, basis.m_e))
    return reconstruct_tensor(basis, a_s, a_e).data.reshape(-1, 3)


def rotate(X, pose):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 3:
        raise ShapeError("rotate", X.shape, (None, 3))
    if not np.all(np.isfinite(pose.as_array())):
        raise MaskMixError("rotate: non-finite angles")
    return rotate_tensor(X.ravel(), pose.as_array()).data.reshape(-1, 3)


def unrotate(X, pose):
    """Undo :func:`rotate` by applying the inverse rotations in reverse order."""
    return np.asarray(X, dtype=np.float64) @ rotation_matrix(pose)


def gt_reenacted_shape(basis, a_s_source, a_e_target, pose_target):
    """Source identity shape wearing the target's expression and head pose."""
    return rotate(reconstruct(basis, ShapeParams(a_s_source, a_e_target)), pose_target)

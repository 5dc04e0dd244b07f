"""Seeded linear stand-in for a frozen generator and its perception networks.

The world renders a style code with an orthogonal matrix, ``I = G s``. Every
extractor first undoes the render (``G^T I``) and then reads one hidden block
of the active channels:

* pose      -> yaw/pitch/roll in degrees
* expr      -> expression coefficients
* id        -> split into a shape sub-block (shape coefficients) and a
               feature sub-block (unit-norm identity embedding)
* nuisance  -> read by nothing

Because the blocks are known, how well a learned mask separates pose and
expression from identity can be scored exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from . import autograd as ag
from .errors import FormatError, LayoutMismatchError, MaskMixError, ZeroNormError
from .face_model import MorphableBasis, PoseAngles, make_basis, reconstruct_tensor, rotate_tensor
from .style_space import StyleCode, StyleLayout, builtin_layout

WORLD_FORMAT = "1.0"


@dataclass(frozen=True)
class WorldSizes:
    m_s: int = 8
    m_e: int = 6
    n_landmarks: int = 16
    id_feature_dim: int = 8
    pose_scale: float = 15.0  # degrees per unit of code std
    pose_block: int = 6
    expr_block: int = 6
    id_block: int = 20
    nuisance_block: int = 32

    @classmethod
    def from_dict(cls, doc):
        known = cls.__dataclass_fields__
        unknown = set(doc) - set(known)
        if unknown:
            raise FormatError(f"unknown world size fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class ChannelPartition:
    """Disjoint blocks, as positions within the active-channel vector."""

    pose: np.ndarray
    expr: np.ndarray
    shape: np.ndarray  # first part of the identity block
    feature: np.ndarray  # second part of the identity block
    nuisance: np.ndarray

    @property
    def identity(self):
        return np.concatenate([self.shape, self.feature])

    @property
    def take_from_target(self):
        return np.sort(np.concatenate([self.pose, self.expr]))

    def label(self, active_dims):
        """Per-active-channel block name (``"unused"`` when in no block)."""
        out = np.full(active_dims, "unused", dtype=object)
        for name in ("pose", "expr", "shape", "feature", "nuisance"):
            out[getattr(self, name)] = "identity" if name in ("shape", "feature") else name
        return out


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def _row_unit(rng, rows, cols):
    a = rng.normal(size=(rows, cols))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


@dataclass(eq=False)
class SurrogateWorld:
    layout: StyleLayout
    sizes: WorldSizes
    seed: int
    partition: ChannelPartition
    basis: MorphableBasis
    pose_map: np.ndarray  # (3, |pose|)
    expr_map: np.ndarray  # (m_e, |expr|)
    shape_map: np.ndarray  # (m_s, |shape|)
    id_map: np.ndarray  # (id_feature_dim, |feature|)
    _render: np.ndarray | None = field(default=None, repr=False)

    @cached_property
    def render_map(self):
        """The orthogonal matrix G (built on first use for large layouts)."""
        if self._render is not None:
            return self._render
        return _orthogonal(np.random.default_rng([self.seed, 1]), self.layout.total_dims)

    @property
    def digest(self):
        doc = {
            "format_version": WORLD_FORMAT,
            "layout": self.layout.digest,
            "sizes": asdict(self.sizes),
            "seed": self.seed,
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    def _flat(self, block):
        return self.layout.active_index[block]

    # -- differentiable pipeline (rows are samples) --

    def render_t(self, s):
        s = ag.tensor(s)
        if s.shape[-1] != self.layout.total_dims:
            raise LayoutMismatchError(f"code width {s.shape[-1]} != {self.layout.total_dims}")
        G = self.render_map
        return ag.matvec(G, s) if s.data.ndim == 1 else ag.matmul(s, G.T)

    def _latent(self, image, block):
        image = ag.tensor(image)
        G = self.render_map
        cols = self._flat(block)
        # reads (G^T I)[cols] without forming the full product
        Gc = G[:, cols]
        return ag.matvec(Gc.T, image) if image.data.ndim == 1 else ag.matmul(image, Gc)

    def _apply(self, A, z):
        return ag.matvec(A, z) if z.data.ndim == 1 else ag.matmul(z, A.T)

    def pose_t(self, image):
        return self._apply(self.pose_map, self._latent(image, self.partition.pose)) * self.sizes.pose_scale

    def expr_t(self, image):
        return self._apply(self.expr_map, self._latent(image, self.partition.expr))

    def shape_t(self, image):
        return self._apply(self.shape_map, self._latent(image, self.partition.shape))

    def identity_t(self, image):
        raw = self._apply(self.id_map, self._latent(image, self.partition.feature))
        try:
            return ag.normalize(raw)
        except ZeroNormError as exc:
            raise ZeroNormError("identity feature vanished; degenerate world or image") from exc

    def landmarks_t(self, image):
        X = reconstruct_tensor(self.basis, self.shape_t(image), self.expr_t(image))
        return rotate_tensor(X, self.pose_t(image))

    # -- serialization --

    def to_dict(self, include_matrices=True):
        doc = {
            "format_version": WORLD_FORMAT,
            "kind": "world",
            "digest": self.digest,
            "seed": self.seed,
            "layout": self.layout.to_dict(),
            "sizes": asdict(self.sizes),
            "partition": {k: getattr(self.partition, k).tolist()
                          for k in ("pose", "expr", "shape", "feature", "nuisance")},
        }
        if include_matrices:
            doc["matrices"] = {
                "render_map": self.render_map.tolist(),
                "pose_map": self.pose_map.tolist(),
                "expr_map": self.expr_map.tolist(),
                "shape_map": self.shape_map.tolist(),
                "id_map": self.id_map.tolist(),
                "basis": self.basis.to_dict(),
            }
        return doc

    @classmethod
    def from_dict(cls, doc):
        from .io import check_format

        check_format(doc, "world", WORLD_FORMAT)
        try:
            layout = StyleLayout.from_dict(doc["layout"])
            world = make_world(layout, WorldSizes.from_dict(doc["sizes"]), int(doc["seed"]))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed world document: {exc}") from exc
        if doc.get("digest") not in (None, world.digest):
            from .errors import DigestMismatchError

            raise DigestMismatchError("world", doc["digest"], world.digest)
        mats = doc.get("matrices")
        if mats:
            world = SurrogateWorld(
                layout, world.sizes, world.seed, world.partition,
                MorphableBasis.from_dict(mats["basis"]),
                *(np.asarray(mats[k], dtype=np.float64) for k in ("pose_map", "expr_map", "shape_map", "id_map")),
                _render=np.asarray(mats["render_map"], dtype=np.float64),
            )
        return world


def make_world(layout, sizes=None, seed=0):
    """Deterministic world for ``layout``; same (layout, sizes, seed) -> same world."""
    if isinstance(layout, str):
        layout = builtin_layout(layout)
    sizes = sizes or WorldSizes()
    if sizes.pose_block < 3:
        raise MaskMixError("pose block needs at least 3 channels")
    if sizes.expr_block < sizes.m_e:
        raise MaskMixError("expression block smaller than m_e")
    if sizes.id_block < sizes.m_s + sizes.id_feature_dim:
        raise MaskMixError("identity block smaller than m_s + id_feature_dim")
    blocks = [sizes.pose_block, sizes.expr_block, sizes.id_block, sizes.nuisance_block]
    if min(blocks) < 0 or np.sum(blocks) > layout.active_dims:
        raise MaskMixError(
            f"blocks {blocks} need {int(np.sum(blocks))} channels; layout has {layout.active_dims} active"
        )

    rng = np.random.default_rng([seed, 0])
    perm = rng.permutation(layout.active_dims)
    edges = np.cumsum([0] + blocks)
    pose, expr, ident, nuisance = (np.sort(perm[edges[i]:edges[i + 1]]) for i in range(4))
    n_shape = sizes.m_s + (sizes.id_block - sizes.m_s - sizes.id_feature_dim) // 2
    partition = ChannelPartition(pose, expr, ident[:n_shape], ident[n_shape:], nuisance)

    maps = np.random.default_rng([seed, 2])
    pose_map = _row_unit(maps, 3, len(pose))
    expr_map = _row_unit(maps, sizes.m_e, len(expr))
    shape_map = _row_unit(maps, sizes.m_s, n_shape)
    id_map = _row_unit(maps, sizes.id_feature_dim, len(partition.feature))
    basis = make_basis(sizes.n_landmarks, sizes.m_s, sizes.m_e, seed=seed)
    return SurrogateWorld(layout, sizes, int(seed), partition, basis, pose_map, expr_map, shape_map, id_map)


def sample_codes(world, rng, n):
    """``n`` standard-normal codes as an (n, D) array."""
    return rng.standard_normal((n, world.layout.total_dims))


def sample_code(world, seed):
    return StyleCode(np.random.default_rng(seed).standard_normal(world.layout.total_dims), world.layout)


def _image(world, x):
    values = x.values if isinstance(x, StyleCode) else x
    return np.asarray(values, dtype=np.float64)


def render(world, s):
    if isinstance(s, StyleCode) and s.layout.digest != world.layout.digest:
        raise LayoutMismatchError("code layout does not match world")
    return world.render_t(_image(world, s)).data


def extract_pose(world, image):
    yaw, pitch, roll = world.pose_t(_image(world, image)).data
    return PoseAngles(float(yaw), float(pitch), float(roll))


def extract_expr(world, image):
    return world.expr_t(_image(world, image)).data


def extract_shape(world, image):
    return world.shape_t(_image(world, image)).data


def extract_identity(world, image):
    return world.identity_t(_image(world, image)).data


def landmarks(world, image):
    return world.landmarks_t(_image(world, image)).data.reshape(-1, 3)

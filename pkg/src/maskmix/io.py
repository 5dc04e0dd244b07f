"""JSON artifact formats: versions, digests, checkpoints and style codes."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .autograd import AdamState
from .errors import FormatError, LayoutMismatchError
from .mask_network import MaskNetworkParams, MaskSubNetParams
from .style_space import StyleCode, StyleLayout

FORMAT_VERSION = "1.0"


def canonical_bytes(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def sha16(doc):
    return hashlib.sha256(canonical_bytes(doc)).hexdigest()[:16]


def check_format(doc, kind, supported=FORMAT_VERSION):
    if not isinstance(doc, dict):
        raise FormatError(f"expected a JSON object for {kind}")
    version = str(doc.get("format_version", ""))
    if not version:
        raise FormatError(f"{kind} document has no format_version")
    if version.split(".")[0] != supported.split(".")[0]:
        raise FormatError(f"unsupported {kind} format_version {version} (reader handles {supported})")
    if doc.get("kind", kind) != kind:
        raise FormatError(f"expected a {kind} document, got {doc.get('kind')!r}")


def read_json(path):
    """Parse a JSON file; decode errors become FormatError with line/column."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def write_json(path, doc, indent=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=indent, sort_keys=True) + "\n")


# -- mask network -------------------------------------------------------------

def params_to_dict(params):
    return {
        "layout_hash": params.layout_hash,
        "hidden_width": params.hidden_width,
        "per_layer": params.per_layer,
        "subnets": [
            {"layer_ref": n.layer_ref, "W1": n.W1.tolist(), "b1": n.b1.tolist(),
             "W2": n.W2.tolist(), "b2": n.b2.tolist()}
            for n in params.subnets
        ],
    }


def params_from_dict(doc):
    try:
        nets = []
        for n in doc["subnets"]:
            W1 = np.asarray(n["W1"], dtype=np.float64)
            W2 = np.asarray(n["W2"], dtype=np.float64)
            nets.append(MaskSubNetParams(
                n["layer_ref"], W1.reshape(len(n["W1"]), -1), np.asarray(n["b1"], dtype=np.float64),
                W2.reshape(len(n["W2"]), -1), np.asarray(n["b2"], dtype=np.float64),
            ))
        return MaskNetworkParams(nets, str(doc["layout_hash"]), doc.get("hidden_width"), bool(doc["per_layer"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed mask network: {exc}") from exc


def params_digest(params):
    return sha16(params_to_dict(params))


# -- checkpoints --------------------------------------------------------------

def adam_to_dict(state):
    return {
        "learning_rate": state.learning_rate, "beta1": state.beta1, "beta2": state.beta2,
        "epsilon": state.epsilon, "step_count": state.step_count,
        "first_moment": [m.tolist() for m in state.first_moment],
        "second_moment": [v.tolist() for v in state.second_moment],
    }


def adam_from_dict(doc, params):
    shapes = [p.shape for p in params.arrays()]

    def arrays(key):
        if len(doc[key]) != len(shapes):
            raise FormatError(f"adam {key} has {len(doc[key])} blocks, network has {len(shapes)}")
        try:
            return [np.asarray(a, dtype=np.float64).reshape(s) for a, s in zip(doc[key], shapes)]
        except ValueError as exc:
            raise FormatError(f"adam {key} does not match the network: {exc}") from exc

    return AdamState(
        learning_rate=float(doc["learning_rate"]), beta1=float(doc["beta1"]), beta2=float(doc["beta2"]),
        epsilon=float(doc["epsilon"]), step_count=int(doc["step_count"]),
        first_moment=arrays("first_moment"), second_moment=arrays("second_moment"),
    )


def checkpoint_to_dict(ckpt):
    return {
        "format_version": FORMAT_VERSION,
        "kind": "checkpoint",
        "layout": ckpt.layout.to_dict(),
        "world_digest": ckpt.world_digest,
        "seed": ckpt.seed,
        "iteration": ckpt.iteration,
        "entangle_seed": ckpt.entangle_seed,
        "mask_network": params_to_dict(ckpt.params),
        "adam": adam_to_dict(ckpt.adam),
        "config": ckpt.config,
    }


def checkpoint_from_dict(doc):
    from .trainer import Checkpoint

    check_format(doc, "checkpoint")
    try:
        layout = StyleLayout.from_dict(doc["layout"])
        params = params_from_dict(doc["mask_network"])
        params.check_layout(layout)
        return Checkpoint(
            params=params,
            adam=adam_from_dict(doc["adam"], params),
            iteration=int(doc["iteration"]),
            seed=int(doc["seed"]),
            world_digest=str(doc["world_digest"]),
            layout=layout,
            entangle_seed=doc.get("entangle_seed"),
            config=doc.get("config", {}),
        )
    except KeyError as exc:
        raise FormatError(f"checkpoint missing field {exc}") from exc


def save_checkpoint(path, ckpt):
    write_json(path, checkpoint_to_dict(ckpt))


def load_checkpoint(path):
    return checkpoint_from_dict(read_json(path))


# -- worlds -------------------------------------------------------------------

def save_world(path, world, include_matrices=True):
    write_json(path, world.to_dict(include_matrices))


def load_world(path):
    from .world import SurrogateWorld

    return SurrogateWorld.from_dict(read_json(path))


# -- style codes --------------------------------------------------------------

def code_to_dict(code):
    return {
        "format_version": FORMAT_VERSION,
        "kind": "style_code",
        "layout_hash": code.layout.digest,
        "layout_name": code.layout.name,
        "values": code.values.tolist(),
    }


def code_from_dict(doc, layout):
    check_format(doc, "style_code")
    if "values" not in doc:
        raise FormatError("style_code has no values")
    if doc.get("layout_hash") not in (None, layout.digest):
        raise LayoutMismatchError(f"code made for layout {doc['layout_hash']}, world uses {layout.digest}")
    values = np.asarray(doc["values"], dtype=np.float64)
    return StyleCode(values, layout)

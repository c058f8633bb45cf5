"""Checkpoint archive: a zip holding a JSON header and raw float32 blobs.

Layout:
    config.json    -- format tag, step counter, caller-supplied metadata
    manifest.json  -- ordered blob descriptors {name, shape, role}
    blobs/<n>      -- little-endian float32 payloads, one per tensor

Parameters and AdamW moments are float32 end to end, so a save/load cycle is
bit-exact and a resumed run reproduces the uninterrupted one.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .errors import ModelError

FORMAT = "stcast-checkpoint-v1"
_OPT_KEYS = ("exp_avg", "exp_avg_sq", "step")


def _tensor_bytes(t: torch.Tensor) -> bytes:
    arr = t.detach().cpu().numpy()
    if arr.dtype != np.float32:
        raise ModelError("bad-dtype",
                         f"checkpoint blobs are float32; got {arr.dtype}")
    return arr.astype("<f4").tobytes(order="C")


def save_checkpoint(path, model: torch.nn.Module,
                    optimizer: torch.optim.Optimizer | None = None,
                    extra: dict | None = None, step: int = 0) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = []
    blobs = []

    for name, tensor in model.state_dict().items():
        manifest.append({"name": name, "shape": list(tensor.shape),
                         "role": "param"})
        blobs.append(_tensor_bytes(tensor))

    if optimizer is not None:
        param_names = {id(p): n for n, p in model.named_parameters()}
        for group in optimizer.param_groups:
            for p in group["params"]:
                state = optimizer.state.get(p)
                if not state:
                    continue
                pname = param_names.get(id(p))
                if pname is None:
                    raise ModelError("bad-optimizer",
                                     "optimizer holds a tensor not in the model")
                for key in _OPT_KEYS:
                    t = state[key]
                    manifest.append({"name": f"opt/{pname}/{key}",
                                     "shape": list(t.shape), "role": "opt"})
                    blobs.append(_tensor_bytes(t))

    header = {"format": FORMAT, "step": step, "extra": extra or {}}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("config.json", json.dumps(header, indent=2))
        zf.writestr("manifest.json", json.dumps(manifest))
        for entry, blob in zip(manifest, blobs):
            zf.writestr(f"blobs/{entry['name']}", blob)


def load_checkpoint(path, model: torch.nn.Module,
                    optimizer: torch.optim.Optimizer | None = None):
    """Restore parameters (and moments, if an optimizer is given).

    Returns (extra, step) from the header.
    """
    path = Path(path)
    if not path.exists():
        raise ModelError("missing-checkpoint", f"no checkpoint at {path}")
    with zipfile.ZipFile(path) as zf:
        try:
            header = json.loads(zf.read("config.json"))
            manifest = json.loads(zf.read("manifest.json"))
        except (KeyError, json.JSONDecodeError) as e:
            raise ModelError("malformed-checkpoint", str(e)) from e
        if header.get("format") != FORMAT:
            raise ModelError("malformed-checkpoint",
                             f"unknown format {header.get('format')!r}")
        tensors = {}
        for entry in manifest:
            raw = np.frombuffer(zf.read(f"blobs/{entry['name']}"), dtype="<f4")
            expect = int(np.prod(entry["shape"])) if entry["shape"] else 1
            if raw.size != expect:
                raise ModelError("malformed-checkpoint",
                                 f"blob {entry['name']} holds {raw.size} floats, "
                                 f"manifest says {expect}")
            tensors[entry["name"]] = torch.from_numpy(
                raw.reshape(entry["shape"]).copy())

    params = {e["name"]: tensors[e["name"]] for e in manifest
              if e["role"] == "param"}
    model_state = model.state_dict()
    if set(params) != set(model_state):
        missing = set(model_state) - set(params)
        surplus = set(params) - set(model_state)
        raise ModelError("geometry-mismatch",
                         f"checkpoint/model mismatch: missing={sorted(missing)} "
                         f"surplus={sorted(surplus)}")
    for name, tensor in params.items():
        if tuple(tensor.shape) != tuple(model_state[name].shape):
            raise ModelError("geometry-mismatch",
                             f"{name}: checkpoint {tuple(tensor.shape)} vs "
                             f"model {tuple(model_state[name].shape)}")
    model.load_state_dict(params)

    if optimizer is not None:
        name_params = dict(model.named_parameters())
        for pname, p in name_params.items():
            key = f"opt/{pname}/exp_avg"
            if key not in tensors:
                continue
            optimizer.state[p] = {
                "step": tensors[f"opt/{pname}/step"].reshape(()),
                "exp_avg": tensors[f"opt/{pname}/exp_avg"],
                "exp_avg_sq": tensors[f"opt/{pname}/exp_avg_sq"],
            }
    return header.get("extra", {}), int(header.get("step", 0))

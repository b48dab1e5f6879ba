"""Versioned checkpoint container.

A checkpoint is a zip archive holding meta.json plus one little-endian
float32 blob per tensor. meta.json records the format version, the full
model config, the global step, a tensor index (name, shape) and the
optimizer state layout. Loaders reject any other format version.
"""

import io
import json
import zipfile

import numpy as np
import torch

from .config import ModelConfig
from .network import VideoPredictor

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _tensor_bytes(t):
    arr = t.detach().cpu().numpy().astype("<f4", copy=False)
    return arr.tobytes()


def _read_tensor(blob, shape):
    arr = np.frombuffer(blob, dtype="<f4").reshape(shape).copy()
    return torch.from_numpy(arr)


def save_checkpoint(path, model, optimizer=None, global_step=0, extra=None):
    """Write model (and optionally Adam state) to `path`."""
    tensors = []
    index = []

    def add(name, tensor):
        index.append({"name": name, "shape": list(tensor.shape)})
        tensors.append(_tensor_bytes(tensor))

    for name, p in model.state_dict().items():
        add(f"model/{name}", p)

    opt_meta = None
    if optimizer is not None:
        sd = optimizer.state_dict()
        groups = []
        for g in sd["param_groups"]:
            g = dict(g)
            g["params"] = list(g["params"])
            groups.append(g)
        states = []
        for pid, st in sd["state"].items():
            entry = {"param": int(pid), "tensors": {}, "scalars": {}}
            for key, val in st.items():
                if torch.is_tensor(val) and val.dim() > 0:
                    tname = f"opt/{pid}/{key}"
                    add(tname, val)
                    entry["tensors"][key] = tname
                elif torch.is_tensor(val):
                    entry["scalars"][key] = float(val)
                else:
                    entry["scalars"][key] = val
            states.append(entry)
        opt_meta = {"param_groups": groups, "state": states}

    meta = {
        "format_version": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "global_step": int(global_step),
        "tensors": index,
        "optimizer": opt_meta,
        "extra": extra or {},
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        zf.writestr("meta.json", json.dumps(meta, indent=1))
        for i, blob in enumerate(tensors):
            zf.writestr(f"tensors/{i:05d}.bin", blob)
    return path


def load_checkpoint(path):
    """Read a checkpoint; returns (model, optimizer_state, global_step, extra).

    The model is reconstructed from the stored config with float32
    parameters. optimizer_state is a torch-compatible state dict or None.
    """
    try:
        zf = zipfile.ZipFile(path, "r")
    except (OSError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"cannot open checkpoint {path}: {e}") from e
    with zf:
        try:
            meta = json.loads(zf.read("meta.json"))
        except KeyError:
            raise CheckpointError(f"{path} has no meta.json; not a checkpoint")
        version = meta.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint format_version {version!r}, "
                f"this build reads {FORMAT_VERSION}"
            )
        loaded = {}
        for i, item in enumerate(meta["tensors"]):
            blob = zf.read(f"tensors/{i:05d}.bin")
            expected = int(np.prod(item["shape"])) * 4 if item["shape"] else 4
            if len(blob) != expected:
                raise CheckpointError(
                    f"tensor {item['name']}: {len(blob)} bytes, expected {expected}"
                )
            loaded[item["name"]] = _read_tensor(blob, item["shape"])

    config = ModelConfig.from_dict(meta["model_config"])
    model = VideoPredictor(config)
    state = {}
    for name in model.state_dict():
        key = f"model/{name}"
        if key not in loaded:
            raise CheckpointError(f"checkpoint is missing tensor {name}")
        state[name] = loaded[key]
    model.load_state_dict(state)

    opt_state = None
    opt_meta = meta.get("optimizer")
    if opt_meta is not None:
        states = {}
        for entry in opt_meta["state"]:
            st = {}
            for key, tname in entry["tensors"].items():
                st[key] = loaded[tname]
            for key, val in entry["scalars"].items():
                st[key] = torch.tensor(float(val)) if key == "step" else val
            states[entry["param"]] = st
        opt_state = {"param_groups": opt_meta["param_groups"], "state": states}

    return model, opt_state, meta["global_step"], meta.get("extra", {})

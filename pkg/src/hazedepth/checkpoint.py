"""Checkpoint archive.

A stored zip (fixed timestamps, sorted entries) holding::

    VERSION                      format tag
    meta.json                    config snapshot, step, tensor index, RNG state
    params/<name>                raw little-endian float32 (model state_dict)
    optim/<name>/exp_avg         Adam first moment, same encoding
    optim/<name>/exp_avg_sq      Adam second moment

Saving the same state twice gives byte-identical files.
"""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

FORMAT = "hazedepth-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(RuntimeError):
    pass


def _encode(t: torch.Tensor) -> bytes:
    return t.detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes()


def _decode(raw: bytes, shape) -> torch.Tensor:
    return torch.from_numpy(np.frombuffer(raw, dtype="<f4").reshape(shape).copy())


def _write(zf: zipfile.ZipFile, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(path, model: torch.nn.Module, optimizer: torch.optim.Optimizer | None,
                    step: int, config: dict, rng_state: torch.Tensor | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    state = model.state_dict()
    names = {id(p): n for n, p in model.named_parameters()}
    entries: dict[str, bytes] = {}
    index = []
    for name in sorted(state):
        t = state[name]
        index.append({"name": name, "shape": list(t.shape)})
        entries[f"params/{name}"] = _encode(t)

    optim_index = {}
    if optimizer is not None:
        for group in optimizer.param_groups:
            for p in group["params"]:
                st = optimizer.state.get(p)
                if not st:
                    continue
                name = names[id(p)]
                optim_index[name] = {"step": int(st["step"])}
                entries[f"optim/{name}/exp_avg"] = _encode(st["exp_avg"])
                entries[f"optim/{name}/exp_avg_sq"] = _encode(st["exp_avg_sq"])

    rng = rng_state if rng_state is not None else torch.get_rng_state()
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "step": int(step),
        "config": config,
        "params": index,
        "optimizer": optim_index,
        "rng": {"torch": bytes(rng.numpy()).hex()},
        "extra": extra or {},
    }
    entries["meta.json"] = json.dumps(meta, sort_keys=True, indent=1).encode()
    entries["VERSION"] = f"{FORMAT} {VERSION}\n".encode()

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for name in sorted(entries):
            _write(zf, name, entries[name])
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)
    return path


def read_checkpoint(path) -> tuple[dict, dict[str, torch.Tensor], dict[str, dict]]:
    """Return ``(meta, state_dict, optimizer_moments)`` without building a model."""
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"cannot open checkpoint {path}: {e}") from e
    with zf:
        tag = zf.read("VERSION").decode().split()
        if tag[0] != FORMAT or int(tag[1]) != VERSION:
            raise CheckpointError(f"unsupported checkpoint format {tag}")
        meta = json.loads(zf.read("meta.json"))
        state = {e["name"]: _decode(zf.read(f"params/{e['name']}"), e["shape"]) for e in meta["params"]}
        shapes = {e["name"]: e["shape"] for e in meta["params"]}
        moments = {}
        for name, info in meta["optimizer"].items():
            moments[name] = {
                "step": info["step"],
                "exp_avg": _decode(zf.read(f"optim/{name}/exp_avg"), shapes[name]),
                "exp_avg_sq": _decode(zf.read(f"optim/{name}/exp_avg_sq"), shapes[name]),
            }
    return meta, state, moments


def restore(path, model: torch.nn.Module, optimizer: torch.optim.Optimizer | None = None) -> dict:
    meta, state, moments = read_checkpoint(path)
    model.load_state_dict(state)
    if optimizer is not None:
        params = dict(model.named_parameters())
        optimizer.state.clear()
        for name, m in moments.items():
            p = params[name]
            optimizer.state[p] = {
                "step": torch.tensor(float(m["step"])),
                "exp_avg": m["exp_avg"].to(p.dtype),
                "exp_avg_sq": m["exp_avg_sq"].to(p.dtype),
            }
    rng = bytes.fromhex(meta["rng"]["torch"])
    meta["rng_state"] = torch.frombuffer(bytearray(rng), dtype=torch.uint8)
    return meta

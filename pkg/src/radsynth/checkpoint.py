"""Single-file weight container shared by the denoiser and SR models.

An npz archive holding a JSON header (schema version, model kind, layer
shapes, free-form metadata) plus live and optional EMA weights. Loading
validates shapes against the header before any tensor is touched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .errors import DataError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    kind: str
    version: int
    live: dict[str, np.ndarray]
    ema: dict[str, np.ndarray] | None
    meta: dict[str, str]


def _module_arrays(module: nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def save_checkpoint(
    path: str | Path,
    kind: str,
    live: nn.Module,
    ema: nn.Module | None = None,
    meta: dict[str, str] | None = None,
) -> None:
    live_arrays = _module_arrays(live)
    ema_arrays = _module_arrays(ema) if ema is not None else {}
    header = {
        "version": SCHEMA_VERSION,
        "kind": kind,
        "meta": dict(meta or {}),
        "shapes": {k: list(v.shape) for k, v in live_arrays.items()},
        "has_ema": ema is not None,
    }
    arrays = {f"live.{k}": v for k, v in live_arrays.items()}
    arrays.update({f"ema.{k}": v for k, v in ema_arrays.items()})
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, __header__=np.frombuffer(
            json.dumps(header).encode(), dtype=np.uint8), **arrays)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    with np.load(path) as archive:
        if "__header__" not in archive:
            raise DataError(f"{path} is not a weight container (missing header)")
        header = json.loads(archive["__header__"].tobytes().decode())
        if header.get("version") != SCHEMA_VERSION:
            raise DataError(f"unsupported container version {header.get('version')}")
        live = {k[5:]: archive[k] for k in archive.files if k.startswith("live.")}
        ema = {k[4:]: archive[k] for k in archive.files if k.startswith("ema.")}
    for name, shape in header["shapes"].items():
        if name not in live:
            raise DataError(f"missing weight {name!r} announced by header")
        if list(live[name].shape) != shape:
            raise DataError(
                f"weight {name!r} has shape {list(live[name].shape)}, header says {shape}"
            )
    return Checkpoint(
        kind=header["kind"],
        version=header["version"],
        live=live,
        ema=ema if header.get("has_ema") else None,
        meta=header.get("meta", {}),
    )


def restore_module(module: nn.Module, arrays: dict[str, np.ndarray]) -> None:
    """Load weights into a module; mismatched names or shapes are data errors."""
    state = module.state_dict()
    if set(state) != set(arrays):
        missing = sorted(set(state) - set(arrays))
        extra = sorted(set(arrays) - set(state))
        raise DataError(f"weight names mismatch: missing {missing}, unexpected {extra}")
    for name, tensor in state.items():
        if tuple(tensor.shape) != arrays[name].shape:
            raise DataError(
                f"weight {name!r}: model wants {tuple(tensor.shape)}, "
                f"container has {arrays[name].shape}"
            )
    module.load_state_dict(
        {k: torch.as_tensor(v) for k, v in arrays.items()}
    )

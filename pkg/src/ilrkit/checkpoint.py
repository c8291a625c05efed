"""Checkpoint container shared by fusion adapters and expert heads.

Layout: a JSON header line (kind, shapes, scalars) terminated by a
newline, followed by all parameters concatenated as little-endian 32-bit
floats in the order listed in the header.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataValidationError
from .expert import ExpertHead
from .fusion import FusionAdapter

_KIND_ADAPTER = "fusion_adapter"
_KIND_EXPERT = "expert_head"


def _write(path: Path, header: dict, params: list[np.ndarray]) -> None:
    header = dict(header)
    header["params"] = [list(p.shape) for p in params]
    blob = b"".join(np.asarray(p, dtype="<f4").tobytes() for p in params)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(blob)


def _read(path: Path) -> tuple[dict, list[np.ndarray]]:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise DataValidationError(f"{path}: missing checkpoint header")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataValidationError(f"{path}: malformed checkpoint header: {exc}") from exc
    off = nl + 1
    params = []
    for shape in header.get("params", []):
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if off + nbytes > len(data):
            raise DataValidationError(f"{path}: truncated parameter blob")
        params.append(
            np.frombuffer(data[off : off + nbytes], dtype="<f4").astype(np.float64).reshape(shape)
        )
        off += nbytes
    if off != len(data):
        raise DataValidationError(f"{path}: trailing bytes after parameter blob")
    return header, params


def save_adapter(adapter: FusionAdapter, path: str | Path, seed: int | None = None) -> None:
    header = {"kind": _KIND_ADAPTER, "temperature": adapter.temperature}
    if seed is not None:
        header["seed"] = seed
    _write(Path(path), header, [adapter.w1, adapter.b1, adapter.w2, adapter.b2])


def load_adapter(path: str | Path) -> FusionAdapter:
    header, params = _read(Path(path))
    if header.get("kind") != _KIND_ADAPTER:
        raise DataValidationError(f"{path}: not a fusion adapter checkpoint")
    w1, b1, w2, b2 = params
    return FusionAdapter(w1, b1, w2, b2, temperature=header["temperature"])


def save_expert(head: ExpertHead, path: str | Path, seed: int | None = None) -> None:
    header = {
        "kind": _KIND_EXPERT,
        "margin": head.margin,
        "loss_weights": list(head.loss_weights),
    }
    if seed is not None:
        header["seed"] = seed
    _write(Path(path), header, [head.w, head.b])


def load_expert(path: str | Path) -> ExpertHead:
    header, params = _read(Path(path))
    if header.get("kind") != _KIND_EXPERT:
        raise DataValidationError(f"{path}: not an expert head checkpoint")
    w, b = params
    return ExpertHead(w, b, margin=header["margin"], loss_weights=tuple(header["loss_weights"]))

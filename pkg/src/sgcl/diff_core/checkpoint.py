"""Binary checkpoint files.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header,
then every tensor's values as contiguous little-endian float64 in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from sgcl.diff_core.params import ParameterStore

MAGIC = b"SGCLCKP1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, stores: list[ParameterStore], meta: dict | None = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for store in stores:
        for name, t in store.items():
            raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
            entries.append({"name": name, "role": store.role, "shape": list(t.shape), "offset": offset})
            blobs.append(raw)
            offset += len(raw)
    header = {
        "roles": {s.role: s.digest() for s in stores},
        "meta": meta or {},
        "tensors": entries,
    }
    head = json.dumps(header, sort_keys=True).encode()
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def read_checkpoint(path) -> tuple[dict, dict[str, dict[str, np.ndarray]]]:
    """Return (header, {role: {name: array}})."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16 : 16 + n].decode())
    body = data[16 + n :]
    by_role: dict[str, dict[str, np.ndarray]] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        values = np.frombuffer(body, dtype="<f8", count=count, offset=start).reshape(shape)
        by_role.setdefault(entry["role"], {})[entry["name"]] = values.astype(np.float64)
    return header, by_role


def load_into(path, store: ParameterStore) -> dict:
    header, by_role = read_checkpoint(path)
    if store.role not in by_role:
        raise CheckpointError(f"{path}: no {store.role} parameters")
    store.load_state(by_role[store.role])
    return header

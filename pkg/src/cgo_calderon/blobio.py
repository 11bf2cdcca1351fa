"""Binary container: 8-byte little-endian header length, JSON header, then a
row-major little-endian complex128 payload."""
from __future__ import annotations

import json

import numpy as np


def write_blob(path, header: dict, array: np.ndarray) -> None:
    raw = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(len(raw).to_bytes(8, "little"))
        fh.write(raw)
        fh.write(np.ascontiguousarray(array, dtype="<c16").tobytes())


def read_blob(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        size = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(size))
        data = np.frombuffer(fh.read(), dtype="<c16").copy()
    return header, data

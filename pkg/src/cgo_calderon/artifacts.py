"""Run outputs: vertex CSV, 16-bit PGM slices and the hashed JSON manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np
from scipy.interpolate import LinearNDInterpolator

from .geometry import VolumeMesh


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_vertex_csv(path, mesh: VolumeMesh, columns: dict) -> None:
    """One row per vertex: ``x, y, z`` followed by the named columns."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "y", "z"] + names)
        for i, p in enumerate(mesh.vertices):
            wr.writerow([repr(float(c)) for c in p] + [repr(float(columns[k][i])) for k in names])


def read_vertex_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], np.array(rows[1:], float)
    return {name: body[:, i] for i, name in enumerate(head)}


def write_pgm16(path, image: np.ndarray, lo: float | None = None, hi: float | None = None) -> dict:
    """Binary P5 PGM with 16-bit big-endian samples; NaN pixels map to 0.

    Returns the value range used for scaling.
    """
    img = np.asarray(image, float)
    finite = np.isfinite(img)
    lo = float(np.nanmin(img)) if lo is None else lo
    hi = float(np.nanmax(img)) if hi is None else hi
    span = hi - lo if hi > lo else 1.0
    scaled = np.where(finite, np.clip((img - lo) / span, 0, 1) * 65535, 0).round().astype(">u2")
    h, w = scaled.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(scaled.tobytes())
    return {"min": lo, "max": hi}


def read_pgm16(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data[pos:pos + 2 * w * h], dtype=">u2").reshape(h, w)


def slice_images(mesh: VolumeMesh, values: np.ndarray, pixels: int = 64) -> dict:
    """Vertex field sampled on the three coordinate mid-planes (NaN outside the mesh)."""
    ext = float(np.abs(mesh.vertices).max())
    t = np.linspace(-ext, ext, pixels)
    A, B = np.meshgrid(t, t, indexing="ij")
    interp = LinearNDInterpolator(mesh.vertices, values)
    out = {}
    for name, axes in (("xy", (0, 1)), ("xz", (0, 2)), ("yz", (1, 2))):
        pts = np.zeros((pixels * pixels, 3))
        pts[:, axes[0]] = A.ravel()
        pts[:, axes[1]] = B.ravel()
        out[name] = interp(pts).reshape(pixels, pixels)
    return out


class Manifest:
    """Collects configuration, numbers and every written file with its hash."""

    def __init__(self, out_dir, command: str, config: dict):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.data = {"command": command, "config": config, "files": {}, "results": {}, "timings": {},
                     "environment": {"python": platform.python_version(), "numpy": np.__version__}}

    def add_file(self, path, kind: str) -> None:
        p = Path(path)
        self.data["files"][p.name] = {"kind": kind, "sha256": sha256_file(p)}

    def record(self, key: str, value) -> None:
        self.data["results"][key] = _jsonable(value)

    def timing(self, key: str, seconds: float) -> None:
        self.data["timings"][key] = round(float(seconds), 3)

    def write(self) -> Path:
        path = self.out_dir / f"manifest_{self.data['command']}.json"
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
        return path


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (complex, np.complexfloating)):
        return {"re": float(o.real), "im": float(o.imag)}
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    return o

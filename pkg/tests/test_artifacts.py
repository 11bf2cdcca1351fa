import json

import numpy as np
from numpy.testing import assert_allclose

from cgo_calderon.artifacts import (Manifest, read_pgm16, read_vertex_csv, sha256_file, slice_images, write_pgm16,
                                    write_vertex_csv)
from cgo_calderon.geometry import DomainSpec, make_domain


def test_vertex_csv_roundtrip_is_exact(tmp_path):
    mesh = make_domain(DomainSpec(), 0.5)
    vals = np.random.default_rng(0).normal(size=len(mesh.vertices))
    write_vertex_csv(tmp_path / "v.csv", mesh, {"sigma": vals})
    back = read_vertex_csv(tmp_path / "v.csv")
    assert_allclose(back["sigma"], vals, atol=0)
    assert_allclose(np.stack([back["x"], back["y"], back["z"]], axis=1), mesh.vertices, atol=0)


def test_pgm_scaling_and_nan(tmp_path):
    img = np.array([[0.0, 0.5], [1.0, np.nan]])
    rng = write_pgm16(tmp_path / "a.pgm", img)
    assert rng == {"min": 0.0, "max": 1.0}
    back = read_pgm16(tmp_path / "a.pgm")
    assert back.shape == (2, 2)
    assert back.tolist() == [[0, 32768], [65535, 0]]


def test_slices_of_linear_field():
    mesh = make_domain(DomainSpec(), 0.25)
    sl = slice_images(mesh, mesh.vertices[:, 0], pixels=16)
    xy = sl["xy"]
    inside = np.isfinite(xy)
    t = np.linspace(-1, 1, 16)
    assert inside.sum() > 100
    assert_allclose(xy[inside], np.broadcast_to(t[:, None], xy.shape)[inside], atol=1e-12)


def test_manifest_hashes_files(tmp_path):
    (tmp_path / "f.txt").write_text("abc")
    man = Manifest(tmp_path, "demo", {"a": 1})
    man.add_file(tmp_path / "f.txt", "text")
    man.record("value", 1 + 2j)
    path = man.write()
    data = json.loads(path.read_text())
    assert path.name == "manifest_demo.json"
    assert data["files"]["f.txt"]["sha256"] == sha256_file(tmp_path / "f.txt")
    assert data["results"]["value"] == {"re": 1.0, "im": 2.0}

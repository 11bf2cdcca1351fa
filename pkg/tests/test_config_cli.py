import json

import pytest
from click.testing import CliRunner

from cgo_calderon.artifacts import read_vertex_csv
from cgo_calderon.cli import main
from cgo_calderon.config import ConfigError, PipelineConfig, parse_config

SMALL = """
phantom: {kind: constant, params: {value: 1.0}}
mesh_h: 0.25
basis_L: 4
box: {n: 16}
recon: {T: 2.0, n_tau: 1, n_theta: 2}
"""


def test_yaml_roundtrip():
    cfg = parse_config(SMALL)
    assert parse_config(cfg.to_yaml()) == cfg
    assert cfg.recon_config().T == 2.0 and cfg.box.n == 16


@pytest.mark.parametrize("text", [
    "mesh_h: 0.1\nbogus: 1\n",
    "box: {n: 48}\n",
    "phantom: {kind: spiral}\n",
    "recon: {T: 3.0, c: 2.0}\n",
    "domain: {kind: ball, perturbation: [[2, 0, 0.1]]}\n",
    "- a list\n",
])
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_defaults_are_valid():
    cfg = PipelineConfig()
    assert cfg.recon.mode == "simplified" and cfg.basis_L == 8


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    (root / "c.yaml").write_text(SMALL)
    return root


def invoke(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def pipeline(root, name):
    out = str(root / name)
    cfg = str(root / "c.yaml")
    for cmd in ("phantom", "forward"):
        assert invoke(cmd, "--config", cfg, "--out", out).exit_code == 0
    res = invoke("recon", "--config", cfg, "--out", out, "--dtn", f"{out}/dtn.bin")
    assert res.exit_code == 0, res.output
    return root / name


def test_constant_pipeline_is_deterministic(run_dir):
    a, b = pipeline(run_dir, "a"), pipeline(run_dir, "b")
    img = read_vertex_csv(a / "sigma_recovered.csv")["image"]
    assert abs(img - 1.0).max() < 1e-2
    for name in ("sigma_recovered.csv", "qhat_samples.csv", "dtn.bin", "slice_xy.pgm"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma = json.loads((a / "manifest_recon.json").read_text())
    mb = json.loads((b / "manifest_recon.json").read_text())
    # the recorded configs differ only in the output directory
    files = {k: v for k, v in ma["files"].items() if not k.startswith("config_")}
    assert files == {k: v for k, v in mb["files"].items() if not k.startswith("config_")}
    assert ma["results"] == mb["results"]

    res = invoke("report", "--config", str(run_dir / "c.yaml"), "--out", str(a))
    assert res.exit_code == 0 and "BAD" not in res.output
    (a / "qhat_samples.csv").write_text("tampered\n")
    assert invoke("report", "--config", str(run_dir / "c.yaml"), "--out", str(a)).exit_code == 4


def test_unknown_key_exits_with_config_code(run_dir):
    (run_dir / "bad.yaml").write_text("mesh_h: 0.2\nmystery: 3\n")
    res = invoke("phantom", "--config", str(run_dir / "bad.yaml"), "--out", str(run_dir / "x"))
    assert res.exit_code == 2


def test_dtn_from_other_mesh_is_rejected(run_dir):
    out = pipeline(run_dir, "c")
    (run_dir / "fine.yaml").write_text(SMALL.replace("mesh_h: 0.25", "mesh_h: 0.2"))
    res = invoke("recon", "--config", str(run_dir / "fine.yaml"), "--out", str(run_dir / "d"),
                 "--dtn", str(out / "dtn.bin"))
    assert res.exit_code == 2

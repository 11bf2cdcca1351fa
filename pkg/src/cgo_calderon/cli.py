"""Command-line pipeline: phantom, forward, recon, verify, report.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 failed
verification.
"""
from __future__ import annotations

import functools
import json
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import checks
from .artifacts import Manifest, sha256_file, slice_images, write_pgm16, write_vertex_csv
from .config import ConfigError, PipelineConfig, load_config
from .faddeev import KernelError
from .forward import DtnMatrix, ForwardError, assemble_dtn, sigma_on_mesh
from .geometry import GeometryError, make_boundary_basis, make_domain
from .phantoms import PhantomError
from .potential import PotentialError, indicator_hat, quadrature_box, synth_qT, write_samples_csv
from .reconstruction import (ReconError, grid_sampler, meas_many, q_hat_richardson, recover_image_simplified,
                             recover_sigma_semilinear)
from .solver import CgoSolverError

EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 2, 3, 4
log = logging.getLogger("cgo_calderon")


class VerificationFailed(Exception):
    pass


def _options(fn=None, *, record: bool = True):
    """Shared flags and the mapping of exceptions to exit codes."""
    if fn is None:
        return functools.partial(_options, record=record)

    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                  help="YAML pipeline configuration (defaults apply when omitted).")
    @click.option("--workers", type=int, default=1, show_default=True, help="Worker processes.")
    @click.option("--seed", type=int, default=None, help="Overrides the configured seed.")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                  help="Overrides the configured output directory.")
    @functools.wraps(fn)
    def wrapper(config_path, workers, seed, out_dir, **kw):
        try:
            cfg = load_config(config_path) if config_path else PipelineConfig()
            if seed is not None or out_dir is not None:
                cfg = cfg.model_copy(update={k: v for k, v in (("seed", seed), ("out", out_dir)) if v is not None})
            if workers < 1:
                raise ConfigError("--workers must be at least 1")
            out = Path(cfg.out)
            if record:
                out.mkdir(parents=True, exist_ok=True)
                (out / f"config_{fn.__name__}.yaml").write_text(cfg.to_yaml())
            fn(cfg=cfg, workers=workers, out=out, **kw)
        except (ConfigError, GeometryError, PhantomError, FileNotFoundError) as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except (ForwardError, ReconError, CgoSolverError, KernelError, PotentialError,
                np.linalg.LinAlgError, FloatingPointError) as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
        except VerificationFailed as exc:
            click.echo(f"verification failed: {exc}", err=True)
            sys.exit(EXIT_VERIFY)

    return wrapper


def _setup(cfg: PipelineConfig):
    domain = cfg.domain.build()
    mesh = make_domain(domain, cfg.mesh_h)
    return domain, mesh


def _manifest(out: Path, command: str, cfg: PipelineConfig) -> Manifest:
    m = Manifest(out, command, cfg.model_dump(mode="json"))
    m.add_file(out / f"config_{command}.yaml", "config")
    return m


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """CGO reconstruction of a 3-D conductivity from boundary data."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command()
@_options
def phantom(cfg: PipelineConfig, workers: int, out: Path):
    """Sample the configured phantom on the mesh."""
    _, mesh = _setup(cfg)
    sigma = sigma_on_mesh(cfg.phantom.build(), mesh)
    man = _manifest(out, "phantom", cfg)
    path = out / "sigma_true.csv"
    g = sigma.grad_log_sigma
    write_vertex_csv(path, mesh, {"sigma": sigma.values, "dlog_x": g[:, 0], "dlog_y": g[:, 1], "dlog_z": g[:, 2]})
    man.add_file(path, "vertex_csv")
    mesh.export_text(out / "mesh.txt")
    man.add_file(out / "mesh.txt", "mesh_text")
    man.record("mesh_hash", mesh.content_hash)
    man.record("lower_bound", sigma.lower_bound)
    man.record("lipschitz_bound", sigma.lipschitz_bound)
    man.write()
    click.echo(f"sigma in [{sigma.values.min():.4g}, {sigma.values.max():.4g}], "
               f"Lipschitz bound {sigma.lipschitz_bound:.4g}")


@main.command()
@_options
def forward(cfg: PipelineConfig, workers: int, out: Path):
    """Assemble the DtN matrix of the configured phantom."""
    t0 = time.perf_counter()
    _, mesh = _setup(cfg)
    basis = make_boundary_basis(mesh, cfg.basis_L)
    dtn = assemble_dtn(sigma_on_mesh(cfg.phantom.build(), mesh), basis, mesh)
    path = out / "dtn.bin"
    dtn.save(path)
    man = _manifest(out, "forward", cfg)
    man.add_file(path, "dtn_matrix")
    man.record("mesh_hash", mesh.content_hash)
    man.record("n_tets", len(mesh.tetrahedra))
    man.record("symmetry_defect", dtn.symmetry_defect())
    man.timing("forward", time.perf_counter() - t0)
    man.write()
    click.echo(f"DtN {dtn.entries.shape[0]}x{dtn.entries.shape[0]} written to {path}")


def _sigma_on_boundary(dtn: DtnMatrix, basis, mesh) -> np.ndarray:
    """Boundary conductivity at mesh vertices from the samples stored with the DtN."""
    coeffs = basis.project(np.asarray(dtn.sigma_boundary, float))
    return np.real(basis.evaluate(mesh.vertices[mesh.boundary_vertices]) @ coeffs)


@main.command()
@_options
@click.option("--dtn", "dtn_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="DtN matrix written by the forward command.")
def recon(cfg: PipelineConfig, workers: int, out: Path, dtn_path: str):
    """Fourier samples of q, the synthesized q_T and the recovered conductivity."""
    timings = {}
    t0 = time.perf_counter()
    domain, mesh = _setup(cfg)
    dtn = DtnMatrix.load(dtn_path)
    if dtn.mesh_hash != mesh.content_hash:
        raise ConfigError(f"DtN was built on mesh {dtn.mesh_hash}, config gives mesh {mesh.content_hash}")
    if dtn.max_degree != cfg.basis_L:
        raise ConfigError(f"DtN has degree {dtn.max_degree}, config asks for {cfg.basis_L}")
    basis = make_boundary_basis(mesh, cfg.basis_L)
    rc = cfg.recon_config()
    man = _manifest(out, "recon", cfg)
    man.record("mesh_hash", mesh.content_hash)
    man.record("dtn_sha256", sha256_file(dtn_path))
    xis = np.asarray(cfg.recon.xi, float) if cfg.recon.xi else rc.lattice()
    log.info("%d frequencies, mode %s", len(xis), rc.mode)

    t = time.perf_counter()
    if rc.mode == "simplified":
        values = meas_many(dtn, None, xis, rc, basis)
        samples = {tuple(x): v for x, v in zip(xis, values)}
        corrected = values + 0.5 * np.sum(xis ** 2, axis=1) * indicator_hat(domain, xis)
        sample_rows = {tuple(x): v for x, v in zip(xis, corrected)}
    else:
        raw = [q_hat_richardson(dtn, None, x, rc, basis, workers) for x in xis]
        sample_rows = {tuple(x): r["extrapolated"] for x, r in zip(xis, raw)}
        write_samples_csv({tuple(x): r["value_T"] for x, r in zip(xis, raw)}, out / "qhat_T.csv")
        write_samples_csv({tuple(x): r["value_2T"] for x, r in zip(xis, raw)}, out / "qhat_2T.csv")
        man.add_file(out / "qhat_T.csv", "qhat_samples_raw_T")
        man.add_file(out / "qhat_2T.csv", "qhat_samples_raw_2T")
        # synth_qT adds the boundary correction, which the full formula does not need
        samples = {k: v - 0.5 * np.dot(k, k) * indicator_hat(domain, np.atleast_2d(k))[0]
                   for k, v in sample_rows.items()}
    timings["samples"] = time.perf_counter() - t
    write_samples_csv(sample_rows, out / "qhat_samples.csv")
    man.add_file(out / "qhat_samples.csv", "qhat_samples")

    if cfg.recon.xi:
        man.record("note", "explicit frequency list: synthesis and recovery skipped")
    else:
        t = time.perf_counter()
        qbox = quadrature_box(domain, cfg.box.n)
        qT = synth_qT(samples, rc.T, rc.R, rc.c, domain, qbox)
        qT.save(out / "qT.grid")
        man.add_file(out / "qT.grid", "grid_field")
        sb = _sigma_on_boundary(dtn, basis, mesh)
        if rc.recovery == "semilinear":
            rec = recover_sigma_semilinear(grid_sampler(qT), sb, mesh)
            image, extra = rec.sigma.values, {"newton_residuals": rec.residuals}
            name = "sigma"
        else:
            img = recover_image_simplified(qT, sb, mesh)
            image, extra = img.values, {"smallest_eigenvalue": img.smallest_eigenvalue}
            name = "image"
        timings["recovery"] = time.perf_counter() - t
        write_vertex_csv(out / "sigma_recovered.csv", mesh, {name: image})
        man.add_file(out / "sigma_recovered.csv", "vertex_csv")
        lo, hi = float(np.min(image)), float(np.max(image))
        for plane, pix in slice_images(mesh, image).items():
            path = out / f"slice_{plane}.pgm"
            write_pgm16(path, pix, lo, hi)
            man.add_file(path, "pgm16")
        man.record("image_range", [lo, hi])
        for k, v in extra.items():
            man.record(k, v)
    timings["total"] = time.perf_counter() - t0
    for k, v in timings.items():
        man.timing(k, v)
    man.write()
    click.echo(f"{len(xis)} samples; outputs in {out}")


@main.command()
@_options
def verify(cfg: PipelineConfig, workers: int, out: Path):
    """Carleman estimate, kernel identities and the boundary identity."""
    v = cfg.verify
    domain, mesh = _setup(cfg)
    R = domain.R
    man = _manifest(out, "verify", cfg)
    report = {}
    t = time.perf_counter()
    report["carleman"] = checks.carleman_suite(v.lambdas, v.rho_factors, v.n_samples, R, v.box_n, cfg.seed, v.slack)
    man.timing("carleman", time.perf_counter() - t)
    abs_rhos = sorted({f * lam * R for lam in v.lambdas for f in v.rho_factors})
    report["right_inverse"] = checks.right_inverse_check(abs_rhos, v.n_samples, R, v.box_n, cfg.seed)
    report["skew_symmetry"] = checks.skew_symmetry_check(100, R, n=v.box_n, seed=cfg.seed)
    report["free_limit"] = checks.free_limit_check(100, R, n=v.box_n, seed=cfg.seed)
    t = time.perf_counter()
    basis = make_boundary_basis(mesh, cfg.basis_L)
    n_psi = min(20, basis.size)
    ale = checks.alessandrini_check(cfg.phantom.build(), mesh, basis, n_psi, cfg.seed)
    ale["tolerance"] = 1e-2
    ale["passed"] = ale["relative_error"] < 1e-2
    report["alessandrini"] = ale
    man.timing("alessandrini", time.perf_counter() - t)

    path = out / "verify_report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True))
    man.add_file(path, "verify_report")
    counts = {k: bool(r["passed"]) for k, r in report.items()}
    man.record("passed", counts)
    man.write()
    for k, r in report.items():
        click.echo(f"{'PASS' if r['passed'] else 'FAIL'}  {k}")
    for c in report["carleman"]["cases"]:
        click.echo(f"      carleman lambda={c['lambda']} |rho|={c['abs_rho']}: "
                   f"{c['passed_samples']}/{c['n_samples']} (max ratio {c['max_ratio']:.3g})")
    failed = [k for k, ok in counts.items() if not ok]
    if failed:
        raise VerificationFailed(", ".join(failed))


@main.command()
@_options(record=False)
def report(cfg: PipelineConfig, workers: int, out: Path):
    """Summarize the manifests of a run directory and check every file hash."""
    paths = sorted(out.glob("manifest_*.json"))
    if not paths:
        raise FileNotFoundError(f"no manifest in {out}")
    bad = []
    for path in paths:
        data = json.loads(path.read_text())
        click.echo(f"== {data['command']} ({path.name})")
        for name, entry in sorted(data["files"].items()):
            target = out / name
            ok = target.exists() and sha256_file(target) == entry["sha256"]
            bad += [] if ok else [name]
            click.echo(f"{'ok ' if ok else 'BAD'} {entry['kind']:<20} {name}")
        for key, val in sorted(data["results"].items()):
            click.echo(f"{key}: {json.dumps(val)[:120]}")
        for key, val in sorted(data["timings"].items()):
            click.echo(f"time {key}: {val:.1f} s")
    hashes = {json.loads(p.read_text())["results"].get("mesh_hash") for p in paths} - {None}
    if len(hashes) > 1:
        bad.append(f"mesh hashes differ: {sorted(hashes)}")
    if bad:
        raise VerificationFailed(f"hash mismatch for {', '.join(bad)}")


if __name__ == "__main__":
    main()

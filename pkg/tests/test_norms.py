import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cgo_calderon.checks import rho_with_norm
from cgo_calderon.faddeev import GridField
from cgo_calderon.geometry import make_periodic_box, symbol_on_box
from cgo_calderon.norms import (dual_norm_split, localization_sweep, pairing_frequency, pairing_physical,
                                random_bumps, sobolev_equivalence, verify_carleman, weighted_l2, weighted_x_norm,
                                write_reports, xdot_norm)

R = 2.0


def test_xdot_norm_of_plane_wave():
    rho = rho_with_norm(6.0)
    box = make_periodic_box(R, 16, rho)
    x, y, z = box.points
    k = np.array([box.freq_axis(d)[3] for d in range(3)])
    f = GridField(box, np.exp(1j * (k[0] * x + k[1] * y + k[2] * z)))
    m = abs(-k @ k + 2j * rho @ k)
    l2 = np.sqrt(box.side ** 3)
    assert xdot_norm(f, rho, 0.5) == pytest.approx(np.sqrt(m) * l2, rel=1e-12)
    assert xdot_norm(f, rho, -0.5) == pytest.approx(l2 / np.sqrt(m), rel=1e-12)
    with pytest.raises(ValueError):
        xdot_norm(f, rho, 1.0)


def test_pairings_agree():
    rho = rho_with_norm(8.0)
    box = make_periodic_box(R, 32, rho)
    f, g = random_bumps(box, R, 2, seed=5)
    assert_allclose(pairing_frequency(f, g), pairing_physical(f, g), rtol=1e-12)


def test_weighted_l2_reduces_to_l2_at_zero_lambda():
    rho = rho_with_norm(8.0)
    box = make_periodic_box(R, 32, rho)
    (f,) = random_bumps(box, R, 1, seed=1)
    plain = np.sqrt(np.sum(np.abs(f.values) ** 2) * box.cell_volume)
    assert weighted_l2(f, rho, 0.0, R) == pytest.approx(plain, rel=1e-12)


def test_duality_bound():
    # |<f, g>| <= ||f||_{dual} ||g||_X for the split upper bound of the dual norm
    rho = rho_with_norm(16.0)
    box = make_periodic_box(R, 64, rho)
    fs = random_bumps(box, R, 6, seed=3)
    for lam in (2.0, 4.0):
        for f, g in zip(fs[:3], fs[3:]):
            lhs = abs(pairing_physical(f, GridField(box.mirrored(), g.values)))
            assert lhs <= dual_norm_split(f, rho, lam, R) * weighted_x_norm(g, rho, lam, R)


def test_localization_constants_stable_in_rho():
    out = localization_sweep([rho_with_norm(a) for a in (8.0, 16.0, 32.0)], 5, R, n=64)
    assert out["stable"]
    assert_allclose(out["C_half"], [0.6693, 0.6053, 0.5659], rtol=1e-3)


def test_sobolev_equivalence_constants():
    rho = rho_with_norm(16.0)
    box = make_periodic_box(R, 64, rho)
    for f in random_bumps(box, R, 2, seed=3):
        rep = sobolev_equivalence(f, rho, R)
        assert rep.params["low"] > 1.0 and rep.params["high"] < 1.0


def test_carleman_ratio_drops_with_rho(tmp_path):
    # the weighted gain is stable in |rho|; its size is tracked in the acceptance suite
    lam = 2.0
    small = verify_carleman(rho_with_norm(4 * lam * R), lam, 4, R, n=32, seed=0)
    big = verify_carleman(rho_with_norm(8 * lam * R), lam, 4, R, n=32, seed=0)
    assert max(r.ratio for r in big) < max(r.ratio for r in small)
    path = tmp_path / "reports.jsonl"
    write_reports(small, path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == 4 and rows[0]["params"]["lambda"] == 2.0


def test_carleman_rejects_small_rho():
    with pytest.raises(ValueError):
        verify_carleman(rho_with_norm(3.0), 2.0, 1, R)


def test_symbol_floor_on_offset_grid():
    rho = rho_with_norm(10.0)
    box = make_periodic_box(R, 32, rho)
    assert np.abs(symbol_on_box(rho, box)).min() > 1e-2

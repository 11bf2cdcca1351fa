"""Discrete symbol-weighted norms and numerical checks of the weighted
estimates for ``Delta_rho^{-1}``.

All norms are Plancherel-normalized: with ``s = 0`` the homogeneous norm is
the plain L2 norm on the box.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .faddeev import GridField, inv_delta_rho
from .geometry import PeriodicBox, make_periodic_box, symbol_on_box


@dataclass
class NormReport:
    lhs: float
    rhs: float
    ratio: float
    params: dict = field(default_factory=dict)
    passed: bool = True

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=_jsonable)


def _jsonable(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def write_reports(reports, path) -> None:
    """One JSON object per line."""
    with open(path, "w") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")


def theta_of(rho) -> np.ndarray:
    re = np.real(np.asarray(rho, complex))
    nrm = np.linalg.norm(re)
    if nrm == 0:
        raise ValueError("Re rho vanishes; the weight direction is undefined")
    return re / nrm


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def cutoff_B(box: PeriodicBox, R: float) -> np.ndarray:
    """Smooth cutoff equal to one on ``B`` and vanishing outside ``2B``."""
    return 1.0 - _smooth_step(box.radius / R - 1.0)


def ball_mask(box: PeriodicBox, R: float) -> np.ndarray:
    return box.radius < R


def xdot_norm(f: GridField, rho, s: float) -> float:
    """``|| |m_rho|^s f_hat ||`` over the offset grid (Plancherel-normalized)."""
    if s not in (-0.5, 0.5):
        raise ValueError("s must be -1/2 or +1/2")
    box = f.box
    fh = f.to_freq().values
    w = np.abs(symbol_on_box(rho, box)) ** (2 * s)
    return float(np.sqrt(np.sum(w * np.abs(fh) ** 2)) / box.side ** 1.5)


def pairing_physical(f: GridField, g: GridField) -> complex:
    """``int f g`` on the grid (bilinear, no conjugation)."""
    return complex(np.sum(f.to_phys().values * g.to_phys().values) * f.box.cell_volume)


def pairing_frequency(f: GridField, g: GridField) -> complex:
    """``(2 pi)^-3 int f_hat(k) g_hat(-k) dk`` evaluated on the grid."""
    box = f.box
    fh = f.to_freq().values
    gbar = GridField(box, np.conj(g.to_phys().values))
    g_minus = np.conj(gbar.to_freq().values)
    return complex(np.sum(fh * g_minus) / box.side ** 3)


def weighted_l2(f: GridField, rho, lam: float, R: float, sign: float = 1.0) -> float:
    """``|| f ||_{L2(B, exp(sign lam (theta.x)^2))}``."""
    box = f.box
    theta = theta_of(rho)
    x, y, z = box.points
    tx = theta[0] * x + theta[1] * y + theta[2] * z
    w = np.exp(sign * lam * tx * tx) * ball_mask(box, R)
    return float(np.sqrt(np.sum(w * np.abs(f.to_phys().values) ** 2) * box.cell_volume))


def extend(f: GridField, R: float) -> GridField:
    """The fixed extension ``f chi_B`` used for restriction norms."""
    return GridField(f.box, f.to_phys().values * cutoff_B(f.box, R))


def weighted_x_norm(f: GridField, rho, lam: float, R: float) -> float:
    """``lam^{1/4}|rho|^{1/2} ||f||_{L2(B,w)} + lam^{-1/4} ||f chi_B||_{Xdot^{1/2}}``."""
    if not lam > 1:
        raise ValueError("lambda must exceed 1")
    nr = np.linalg.norm(rho)
    return float(lam ** 0.25 * np.sqrt(nr) * weighted_l2(f, rho, lam, R)
                 + lam ** -0.25 * xdot_norm(extend(f, R), rho, 0.5))


def weighted_y_norm(f: GridField, rho, lam: float, R: float) -> float:
    """Max-type variant on the ``-rho`` side with the decaying weight."""
    if not lam > 1:
        raise ValueError("lambda must exceed 1")
    nr = np.linalg.norm(rho)
    ext = extend(f, R)
    mirrored = GridField(f.box.mirrored(), ext.values)
    a = lam ** 0.25 * np.sqrt(nr) * weighted_l2(f, rho, lam, R, sign=-1.0)
    b = xdot_norm(mirrored, -np.asarray(rho), 0.5) / (lam ** 0.25 * np.exp(lam * R * R / 2))
    return float(max(a, b))


def dual_norm_split(f: GridField, rho, lam: float, R: float) -> float:
    """Upper bound for the dual-space infimum via the low-pass split at ``4|rho|``."""
    box = f.box
    nr = np.linalg.norm(rho)
    low = np.sqrt(box.freq_norm2) <= 4 * nr
    fh = f.to_freq().values
    flat = GridField(box, fh * low, "frequency")
    sharp = GridField(box, fh * ~low, "frequency")
    return float(weighted_l2(flat, rho, lam, R) / (lam ** 0.25 * np.sqrt(nr))
                 + lam ** 0.25 * np.exp(lam * R * R / 2) * xdot_norm(sharp, rho, -0.5))


def random_bumps(box: PeriodicBox, R: float, n_samples: int, seed: int = 0, n_modes: int = 4) -> list[GridField]:
    """Band-limited random fields under a smooth envelope vanishing at ``|x| = R``."""
    rng = np.random.default_rng(seed)
    x, y, z = box.points
    t = box.radius / R
    inside = t < 1
    env = np.zeros_like(t)
    env[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    kcap = box.k_max / 4
    out = []
    for _ in range(n_samples):
        vals = np.zeros(t.shape, complex)
        for _ in range(n_modes):
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            k = d * kcap * rng.uniform() ** (1 / 3)
            c = rng.normal() + 1j * rng.normal()
            vals += c * np.exp(1j * (k[0] * x + k[1] * y + k[2] * z))
        out.append(GridField(box, vals * env))
    return out


def verify_carleman(rho, lam: float, n_samples: int, R: float, n: int = 64, seed: int = 0,
                    slack: float = 0.05, samples: list[GridField] | None = None) -> list[NormReport]:
    """Weighted L2 gain of ``Delta_rho^{-1}`` on random fields supported in ``B``.

    ``lhs = int_B |Delta_rho^{-1} f|^2 w`` and
    ``rhs = 2/(lam |rho|^2) int |f|^2 w`` with ``w = exp(lam (theta.x)^2)``.
    """
    nr = float(np.linalg.norm(rho))
    if nr < 4 * lam * R * (1 - 1e-12):
        raise ValueError(f"|rho| = {nr} violates |rho| >= 4 lam R = {4 * lam * R}")
    if abs(np.dot(rho, rho)) > 1e-10 * nr * nr:
        raise ValueError("rho . rho must vanish")
    box = make_periodic_box(R, n, rho)
    if samples is None:
        samples = random_bumps(box, R, n_samples, seed)
    reports = []
    for i, f in enumerate(samples):
        f = GridField(box, f.to_phys().values)
        u = inv_delta_rho(f, rho)
        lhs = weighted_l2(u, rho, lam, R) ** 2
        rhs = 2.0 / (lam * nr * nr) * weighted_l2(f, rho, lam, R) ** 2
        ratio = lhs / rhs if rhs > 0 else 0.0
        reports.append(NormReport(lhs, rhs, ratio, {"abs_rho": nr, "lambda": lam, "sample": i},
                                  ratio <= 1 + slack))
    return reports


def verify_localization(rho, n_samples: int, R: float, n: int = 64, seed: int = 0,
                        samples: list[GridField] | None = None) -> list[NormReport]:
    """Fitted constants for the two localization inequalities.

    Each report carries ``C_half`` for ``|rho|^{1/2}||g||_{L2(B)} <= C ||g||_{Xdot^{1/2}}``
    and ``C_minus`` for ``|rho|^{1/2}||f||_{Xdot^{-1/2}} <= C ||f||_{L2}``.
    """
    box = make_periodic_box(R, n, rho)
    nr = float(np.linalg.norm(rho))
    if samples is None:
        samples = random_bumps(box, R, n_samples, seed)
    mask = ball_mask(box, R)
    reports = []
    for i, g in enumerate(samples):
        g = GridField(box, g.to_phys().values)
        l2B = float(np.sqrt(np.sum(np.abs(g.values) ** 2 * mask) * box.cell_volume))
        l2 = float(np.sqrt(np.sum(np.abs(g.values) ** 2) * box.cell_volume))
        c_half = np.sqrt(nr) * l2B / xdot_norm(g, rho, 0.5)
        c_minus = np.sqrt(nr) * xdot_norm(g, rho, -0.5) / l2
        reports.append(NormReport(np.sqrt(nr) * l2B, xdot_norm(g, rho, 0.5), c_half,
                                  {"abs_rho": nr, "sample": i, "C_half": c_half, "C_minus": c_minus}, True))
    return reports


def localization_sweep(rhos, n_samples: int, R: float, n: int = 64, seed: int = 0) -> dict:
    """Largest fitted constant per ``|rho|`` and whether they agree within 2x."""
    c_half, c_minus = [], []
    for rho in rhos:
        reps = verify_localization(rho, n_samples, R, n, seed)
        c_half.append(max(r.params["C_half"] for r in reps))
        c_minus.append(max(r.params["C_minus"] for r in reps))
    stable = max(c_half) / min(c_half) < 2 and max(c_minus) / min(c_minus) < 2
    return {"C_half": c_half, "C_minus": c_minus, "stable": bool(stable)}


def h1_norm_ball(f: GridField, R: float) -> float:
    box = f.box
    mask = ball_mask(box, R)
    v = f.to_phys().values
    g = box.gradient(v)
    dens = np.abs(v) ** 2 + np.sum(np.abs(g) ** 2, axis=0)
    return float(np.sqrt(np.sum(dens * mask) * box.cell_volume))


def sobolev_equivalence(f: GridField, rho, R: float) -> NormReport:
    """Compare the extension-based ``Xdot^{1/2}(B)`` norm with ``H^1(B)``.

    ``params['low']`` is ``|rho|^{1/2} X / H1`` (bounded below by ``c``) and
    ``params['high']`` is ``X / (|rho|^{1/2} H1)`` (bounded above by ``C``).
    """
    nr = float(np.linalg.norm(rho))
    if not nr > 1:
        raise ValueError("|rho| must exceed 1")
    x = xdot_norm(extend(f, R), rho, 0.5)
    h = h1_norm_ball(f, R)
    ratio = x / h
    return NormReport(x, h, ratio, {"abs_rho": nr, "low": np.sqrt(nr) * ratio, "high": ratio / np.sqrt(nr)},
                      bool(np.isfinite(ratio)))

"""FFT inverse of the conjugated Laplacian and the Faddeev kernels.

``Delta_rho = Delta + 2 rho . grad`` has symbol ``m_rho(k) = -|k|^2 + 2i rho.k``.
Its inverse is a pointwise division on the offset frequency grid of a
:class:`PeriodicBox`. The kernel ``F_rho`` is the mollified Fourier
inversion of ``1/m_rho``; ``G_rho = e^{rho.x} F_rho`` is a fundamental solution
of the Laplacian and ``H_rho = G_rho + 1/(4 pi |x|)`` is its smooth harmonic
part.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage, special

from .blobio import read_blob, write_blob
from .geometry import PeriodicBox, floor_for, symbol_on_box

INV_4PI = 1.0 / (4.0 * np.pi)


class KernelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridField:
    """Complex scalar field on a periodic box, tagged with its space."""

    box: PeriodicBox
    values: np.ndarray
    space: str = "physical"

    def to_freq(self) -> "GridField":
        if self.space == "frequency":
            return self
        return GridField(self.box, self.box.to_freq(self.values), "frequency")

    def to_phys(self) -> "GridField":
        if self.space == "physical":
            return self
        return GridField(self.box, self.box.to_phys(self.values), "physical")

    def save(self, path, rho=None) -> None:
        header = {
            "side": self.box.side, "n": self.box.n, "offset": list(self.box.offset),
            "space": self.space,
            "rho": None if rho is None else [[float(c.real), float(c.imag)] for c in np.asarray(rho)],
        }
        write_blob(path, header, self.values)

    @classmethod
    def load(cls, path) -> "GridField":
        header, data = read_blob(path)
        box = PeriodicBox(header["side"], header["n"], tuple(header["offset"]))
        return cls(box, data.reshape((box.n,) * 3).copy(), header["space"])


@dataclass(frozen=True)
class MollifierSpec:
    """Gaussian mollifier of scale ``r``.

    ``shape="gaussian"`` is the plain ``exp(-|k|^2/r^2)``. ``shape="conjugated"``
    evaluates the same Gaussian at the shifted frequency ``k - i rho``, which
    gives the multiplier ``exp(m_rho(k)/r^2)``. In the ``e^{rho.x}`` frame
    that is a radial smoothing of ``G_rho``, so the harmonic part ``H_rho`` is
    left untouched and only the free part becomes
    ``-erf(r|z|/2)/(4 pi |z|)``, which is removed analytically.
    """

    r: float
    shape: str = "conjugated"

    def __post_init__(self):
        if self.shape not in ("gaussian", "conjugated"):
            raise KernelError(f"unknown mollifier shape {self.shape!r}")
        if not self.r > 0:
            raise KernelError("mollifier scale must be positive")

    def __call__(self, k2: np.ndarray) -> np.ndarray:
        """Plain Gaussian factor at squared frequencies ``k2``."""
        return np.exp(-k2 / (self.r * self.r))

    def multiplier(self, box: PeriodicBox, rho) -> np.ndarray:
        m = symbol_on_box(rho, box)
        if self.shape == "gaussian":
            return self(box.freq_norm2) / m
        return np.exp(m / (self.r * self.r)) / m


def smoothed_free(z: np.ndarray, r: float) -> np.ndarray:
    """``-erf(r|z|/2)/(4 pi |z|)``: the free solution smoothed at scale ``1/r``."""
    d = np.linalg.norm(np.asarray(z, float), axis=-1)
    safe = np.where(d > 0, d, 1.0)
    return np.where(d > 0, -special.erf(r * safe / 2) * INV_4PI / safe, -r * INV_4PI / np.sqrt(np.pi))


def free_fundamental(z: np.ndarray) -> np.ndarray:
    """``-1/(4 pi |z|)`` for points ``z`` of shape (..., 3)."""
    return -INV_4PI / np.linalg.norm(z, axis=-1)


def check_box(box: PeriodicBox, rho) -> None:
    floor = floor_for(rho)
    got = box.min_symbol(rho)
    if got < floor:
        raise KernelError(f"box offset gives min|m_rho| = {got:.3e} below the floor {floor:.3e}")


def inv_delta_rho(g: GridField, rho) -> GridField:
    """Exact right inverse of the spectral ``Delta_rho`` on ``g.box``."""
    box = g.box
    check_box(box, rho)
    m = symbol_on_box(rho, box)
    if g.space == "frequency":
        return GridField(box, g.values / m, "frequency")
    return GridField(box, box.apply_multiplier(g.values, 1.0 / m), "physical")


def delta_rho(u: GridField, rho) -> GridField:
    """Spectral ``Delta_rho``."""
    box = u.box
    m = symbol_on_box(rho, box)
    if u.space == "frequency":
        return GridField(box, u.values * m, "frequency")
    return GridField(box, box.apply_multiplier(u.values, m), "physical")


def trig_eval(box: PeriodicBox, coeffs: np.ndarray, points: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Evaluate ``(1/side^3) sum_k coeffs[k] e^{i k.x}`` at arbitrary points.

    This is exact trigonometric interpolation of the grid function whose
    continuous-transform samples are ``coeffs``.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    k = [box.freq_axis(d) for d in range(3)]
    out = np.empty(len(pts), dtype=complex)
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        e2 = np.exp(1j * np.outer(p[:, 2], k[2]))
        t = np.einsum("ijl,pl->pij", coeffs, e2)
        e1 = np.exp(1j * np.outer(p[:, 1], k[1]))
        t = np.einsum("pij,pj->pi", t, e1)
        e0 = np.exp(1j * np.outer(p[:, 0], k[0]))
        out[s:s + chunk] = np.einsum("pi,pi->p", t, e0)
    return out / box.side ** 3


@dataclass(frozen=True)
class KernelValues:
    """Kernel samples plus the outcome of the mollifier ladder."""

    values: np.ndarray
    converged: bool
    ladder_change: float


def ladder_radii(box: PeriodicBox) -> tuple[float, float, float]:
    k = box.k_max
    return k / 8, k / 6, k / 4


def _smooth_part(rho, z: np.ndarray, box: PeriodicBox, moll: MollifierSpec) -> np.ndarray:
    """``e^{rho.z} F_r(z) + erf(r|z|/2)/(4 pi |z|)``, exact for the conjugated shape."""
    vals = np.exp(z @ rho) * trig_eval(box, moll.multiplier(box, rho), z)
    return vals - smoothed_free(z, moll.r)


def faddeev_F(rho, points: np.ndarray, box: PeriodicBox, moll: MollifierSpec | None = None,
              tol: float = 1e-4) -> KernelValues:
    """Fourier inversion of ``1/m_rho`` at ``points``.

    With the conjugated mollifier the ``r -> infinity`` limit is taken
    analytically: ``F = e^{-rho.z}(H_rho(z) - 1/(4 pi |z|))``. A plain
    Gaussian mollifier returns the mollified integral itself. Without an
    explicit mollifier the ladder ``r in {k_max/8, k_max/6, k_max/4}`` is run
    and the result is flagged when the last two rungs differ by more than
    ``tol`` (relative, max-norm).
    """
    rho = np.asarray(rho, complex)
    check_box(box, rho)
    z = np.atleast_2d(np.asarray(points, float))

    def one(m: MollifierSpec) -> np.ndarray:
        if m.shape == "gaussian":
            return trig_eval(box, m.multiplier(box, rho), z)
        return np.exp(-(z @ rho)) * (_smooth_part(rho, z, box, m) + free_fundamental(z))

    if moll is not None:
        return KernelValues(one(moll), True, 0.0)
    rungs = [one(MollifierSpec(r)) for r in ladder_radii(box)[1:]]
    change = float(np.abs(rungs[1] - rungs[0]).max() / max(np.abs(rungs[1]).max(), 1e-300))
    return KernelValues(rungs[1], change < tol, change)


def smooth_part_H(rho, points: np.ndarray, box: PeriodicBox, moll: MollifierSpec | None = None) -> np.ndarray:
    """``H_rho = G_rho + 1/(4 pi |x|)`` at ``points``; smooth through the origin."""
    rho = np.asarray(rho, complex)
    check_box(box, rho)
    moll = MollifierSpec(box.k_max / 4) if moll is None else moll
    if moll.shape != "conjugated":
        raise KernelError("H_rho needs the conjugated mollifier")
    return _smooth_part(rho, np.atleast_2d(np.asarray(points, float)), box, moll)


def green_G(rho, x, y, box: PeriodicBox, moll: MollifierSpec | None = None) -> np.ndarray:
    """``G_rho(x, y) = -1/(4 pi |x-y|) + H_rho(x-y)`` for arrays of point pairs."""
    z = np.atleast_2d(np.asarray(x, float) - np.asarray(y, float))
    if np.any(np.linalg.norm(z, axis=1) == 0):
        raise KernelError("G is singular at x = y")
    return free_fundamental(z) + smooth_part_H(rho, z, box, moll)


class KernelTable:
    """Tabulated ``H_rho`` for one ``rho`` with spline interpolation.

    The mollified kernel ``F_r`` is band-limited at scale ``r``, so it is
    synthesized once on a refined copy of the box, cropped to displacements
    ``|z_i| <= extent`` and interpolated by cubic splines. The factor
    ``e^{rho.z}`` and the smoothed free part are applied analytically.
    """

    def __init__(self, rho, box: PeriodicBox, extent: float, upsample: int = 2, r: float | None = None):
        check_box(box, rho)
        self.rho = np.asarray(rho, complex)
        self.base = box
        self.fine = box.with_n(box.n * upsample)
        self.moll = MollifierSpec(box.k_max / 4 if r is None else float(r))
        self.extent = float(extent)

    @cached_property
    def _crop(self) -> tuple[slice, np.ndarray]:
        fb = self.fine
        pad = 4 * fb.dx
        idx = np.flatnonzero(np.abs(fb.axis) <= self.extent + pad)
        return slice(idx[0], idx[-1] + 1), fb.axis[idx]

    @cached_property
    def f_grid(self) -> np.ndarray:
        """Mollified kernel ``F_r`` on the cropped fine grid."""
        fb = self.fine
        sl, _ = self._crop
        return fb.to_phys(self.moll.multiplier(fb, self.rho))[sl, sl, sl]

    @cached_property
    def _splines(self) -> tuple[np.ndarray, np.ndarray]:
        F = self.f_grid
        return (ndimage.spline_filter(F.real, order=3, mode="nearest"),
                ndimage.spline_filter(F.imag, order=3, mode="nearest"))

    def H(self, z: np.ndarray) -> np.ndarray:
        """Smooth part ``H_rho`` at displacement vectors ``z`` (..., 3)."""
        z = np.asarray(z, float)
        shape = z.shape[:-1]
        flat = z.reshape(-1, 3)
        if np.abs(flat).max(initial=0.0) > self.extent + 1e-9:
            raise KernelError("displacement outside the tabulated extent")
        _, ax = self._crop
        coords = ((flat - ax[0]) / self.fine.dx).T
        re, im = self._splines
        F = ndimage.map_coordinates(re, coords, order=3, mode="nearest", prefilter=False) \
            + 1j * ndimage.map_coordinates(im, coords, order=3, mode="nearest", prefilter=False)
        out = np.exp(flat @ self.rho) * F - smoothed_free(flat, self.moll.r)
        return out.reshape(shape)

    def G(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``G_rho(x, y)`` through the split ``-1/(4 pi |x-y|) + H_rho(x-y)``."""
        z = np.asarray(x, float) - np.asarray(y, float)
        return free_fundamental(z) + self.H(z)

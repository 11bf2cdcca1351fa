"""The potential ``q = sigma^{-1/2} Delta sigma^{1/2}`` as a bilinear form.

For Lipschitz ``sigma`` the potential is only a distribution, so it is
represented by ``a0 = |grad log sigma|^2 / 4`` and ``A = -grad log sigma / 2``
through ``<q, psi> = int_Omega a0 psi + A . grad psi``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .faddeev import GridField
from .geometry import DomainSpec, PeriodicBox, sphere_quadrature
from .phantoms import Phantom


class PotentialError(ValueError):
    pass


def box_points(box: PeriodicBox) -> np.ndarray:
    """Grid points as an ``(n, n, n, 3)`` array."""
    x, y, z = np.broadcast_arrays(*box.points)
    return np.stack([x, y, z], axis=-1)


@dataclass(frozen=True, eq=False)
class PotentialForm:
    """Grid representation of ``q`` on a periodic box, supported in ``Omega``."""

    box: PeriodicBox
    a0: np.ndarray
    A: np.ndarray
    support: np.ndarray

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights of the ``Omega``-restricted grid sum."""
        return self.support * self.box.cell_volume

    def div_A(self) -> np.ndarray:
        return sum(self.box.gradient(self.A[d])[d] for d in range(3))


def quadrature_box(domain: DomainSpec, n: int = 128) -> PeriodicBox:
    """Tight box around ``Omega`` for accurate volume quadrature of ``q``."""
    return PeriodicBox(2.2 * domain.sup_radius, n)


def potential_form(phantom: Phantom, domain: DomainSpec, box: PeriodicBox) -> PotentialForm:
    """Sample ``a0`` and ``A`` on the box from the phantom's exact gradient."""
    pts = box_points(box)
    support = domain.contains(pts.reshape(-1, 3)).reshape(pts.shape[:3])
    gl = phantom.grad_log_sigma(pts) * support[..., None]
    A = -0.5 * np.moveaxis(gl, -1, 0)
    a0 = 0.25 * np.sum(gl * gl, axis=-1)
    return PotentialForm(box, a0, A, support)


def _test_gradient(test: GridField) -> np.ndarray:
    return test.box.gradient(test.to_phys().values)


def q_pairing(pf: PotentialForm, test: GridField) -> complex:
    """``<q, psi> = int_Omega a0 psi + A . grad psi`` with a spectral gradient."""
    psi = test.to_phys().values
    grad = _test_gradient(test)
    integrand = pf.a0 * psi + np.einsum("d...,d...->...", pf.A, grad)
    return complex(np.sum(pf.weights * integrand))


def product_field(f: GridField, g: GridField) -> GridField:
    """``f g`` on the box whose offset is the sum of the two offsets."""
    off = tuple(float((a + b) % 1.0) for a, b in zip(f.box.offset, g.box.offset))
    box = PeriodicBox(f.box.side, f.box.n, off)
    return GridField(box, f.to_phys().values * g.to_phys().values)


def mq_bilinear(pf: PotentialForm, f: GridField, g: GridField) -> complex:
    """``B(f, g) = int_Omega a0 f g + A . grad(f g)`` via the product rule."""
    fv, gv = f.to_phys().values, g.to_phys().values
    grad_fg = fv * _test_gradient(g) + gv * _test_gradient(f)
    integrand = pf.a0 * fv * gv + np.einsum("d...,d...->...", pf.A, grad_fg)
    return complex(np.sum(pf.weights * integrand))


def q_hat_direct(pf: PotentialForm, xi) -> complex:
    """``q_hat(xi) = <q, exp(-i xi . x)>`` with the exact test gradient."""
    return complex(q_hat_many(pf, np.atleast_2d(xi))[0])


def q_hat_many(pf: PotentialForm, xis: np.ndarray) -> np.ndarray:
    """``q_hat`` at many frequencies with separable one-dimensional sums."""
    xis = np.atleast_2d(np.asarray(xis, float))
    box = pf.box
    ax = box.axis
    w = pf.weights
    out = np.empty(len(xis), complex)
    fields = [w * pf.a0] + [w * pf.A[d] for d in range(3)]
    for i, xi in enumerate(xis):
        e = [np.exp(-1j * xi[d] * ax) for d in range(3)]
        vals = [np.einsum("ijk,i,j,k->", fld, *e, optimize=True) for fld in fields]
        out[i] = vals[0] - 1j * (xi[0] * vals[1] + xi[1] * vals[2] + xi[2] * vals[3])
    return out


def q_hat_cube(pf: PotentialForm, freqs: np.ndarray) -> np.ndarray:
    """``q_hat`` on the tensor grid ``freqs^3``, shape ``(m, m, m)``."""
    freqs = np.asarray(freqs, float)
    E = np.exp(-1j * pf.box.axis[:, None] * freqs[None, :])
    w = pf.weights

    def transform(fld):
        return np.einsum("ijk,ia,jb,kc->abc", fld, E, E, E, optimize=True)

    f0, f1, f2 = np.meshgrid(freqs, freqs, freqs, indexing="ij")
    return (transform(w * pf.a0) - 1j * (f0 * transform(w * pf.A[0]) + f1 * transform(w * pf.A[1])
                                         + f2 * transform(w * pf.A[2])))


def pointwise_q(phantom: Phantom, points: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Classical ``sigma^{-1/2} Delta sigma^{1/2}`` for radial smooth phantoms.

    The radial Laplacian ``s'' + 2 s'/d`` of ``s = sigma^{1/2}`` is taken by
    centered differences of the closed-form profile.
    """
    x = np.asarray(points, float) - phantom.center
    d = np.linalg.norm(x, axis=-1)
    d = np.maximum(d, step)

    def s(r):
        return np.sqrt(phantom.base + phantom.profile(r)[0])

    s0, sp, sm = s(d), s(d + step), s(d - step)
    lap = (sp - 2 * s0 + sm) / step ** 2 + 2 * (sp - sm) / (2 * step) / d
    return lap / s0


def indicator_hat(domain: DomainSpec, xi: np.ndarray, n_radial: int = 48, quad_degree: int = 60) -> np.ndarray:
    """``int_Omega exp(-i xi . x) dx``; closed form for the ball."""
    xi = np.atleast_2d(np.asarray(xi, float))
    k = np.linalg.norm(xi, axis=1)
    if domain.is_ball:
        a = domain.radius_omega
        ka = k * a
        small = ka < 1e-3
        kk = np.where(small, 1.0, k)
        big = 4 * np.pi * (np.sin(kk * a) - kk * a * np.cos(kk * a)) / kk ** 3
        series = 4 * np.pi * a ** 3 / 3 * (1 - ka ** 2 / 10)
        return np.where(small, series, big).astype(complex)
    dirs, w = sphere_quadrature(quad_degree)
    rmax = domain.radial_function(dirs)
    t, tw = np.polynomial.legendre.leggauss(n_radial)
    t, tw = (t + 1) / 2, tw / 2
    out = np.empty(len(xi), complex)
    for i, x in enumerate(xi):
        proj = dirs @ x
        r = rmax[:, None] * t[None, :]
        integrand = np.exp(-1j * proj[:, None] * r) * r ** 2 * rmax[:, None] * tw[None, :]
        out[i] = np.sum(w * integrand.sum(axis=1))
    return out


def lattice(T: float, R: float, c: float = 1.0) -> np.ndarray:
    """Integer indices ``j`` with ``j / R`` in ``[-cT, cT]^3``."""
    m = int(np.floor(c * T * R + 1e-9))
    r = np.arange(-m, m + 1)
    J = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    return J


def synth_qT(meas: dict, T: float, R: float, c: float, omega: DomainSpec, box: PeriodicBox) -> GridField:
    """Truncated Fourier synthesis of ``q`` from averaged boundary measurements.

    ``meas`` maps lattice frequencies ``xi`` (3-tuples in ``R^{-1} Z^3``) to
    ``Meas_T(xi)``; the boundary correction ``|xi|^2/2 * 1_Omega_hat(xi)`` is
    added here before the sum ``(2 pi R)^-3 sum exp(i x . xi) (...)``.
    """
    J = lattice(T, R, c)
    have = {tuple(int(v) for v in np.rint(np.asarray(k, float) * R)): val for k, val in meas.items()}
    holes = [tuple(j) for j in J if tuple(j) not in have]
    if holes:
        shown = ", ".join(str(tuple(np.array(h) / R)) for h in holes[:10])
        raise PotentialError(f"{len(holes)} lattice samples missing, e.g. {shown}")
    xis = J / R
    vals = np.array([have[tuple(j)] for j in J], complex)
    vals = vals + 0.5 * np.sum(xis ** 2, axis=1) * indicator_hat(omega, xis)
    m = int(J.max()) if len(J) else 0
    cube = np.zeros((2 * m + 1,) * 3, complex)
    cube[J[:, 0] + m, J[:, 1] + m, J[:, 2] + m] = vals
    freq = np.arange(-m, m + 1) / R
    E = np.exp(1j * box.axis[:, None] * freq[None, :])
    out = np.einsum("abc,ia,jb,kc->ijk", cube, E, E, E, optimize=True) / (2 * np.pi * R) ** 3
    return GridField(box, out)


def write_samples_csv(samples: dict, path) -> None:
    """Frequency samples as ``xi1, xi2, xi3, re, im`` rows."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["xi1", "xi2", "xi3", "re", "im"])
        for k in sorted(samples):
            v = complex(samples[k])
            wr.writerow([repr(float(k[0])), repr(float(k[1])), repr(float(k[2])), repr(v.real), repr(v.imag)])


def read_samples_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {(float(r["xi1"]), float(r["xi2"]), float(r["xi3"])): complex(float(r["re"]), float(r["im"]))
            for r in rows}

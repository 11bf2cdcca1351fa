"""Domain, meshes, periodic boxes and the boundary basis.

Everything here is plain geometry: the domain ``Omega`` (a ball or a
star-shaped perturbation of one), the enclosing ball radius ``R``, a
tetrahedral volume mesh, the periodic FFT box that carries grid fields and
the real spherical-harmonic basis used for boundary functions.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from math import factorial
from typing import Sequence

import numpy as np
from scipy import optimize


class GeometryError(ValueError):
    """Raised for invalid domains, boxes or bases."""


# ---------------------------------------------------------------------------
# spherical harmonics
# ---------------------------------------------------------------------------

def sh_index(l: int, m: int) -> int:
    """Flat index of the real harmonic of degree ``l`` and order ``m``."""
    return l * l + l + m


def sh_degrees(L: int) -> np.ndarray:
    """Degree of every basis slot up to ``L``."""
    return np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])


def real_solid_harmonics(points: np.ndarray, L: int) -> np.ndarray:
    """Orthonormal real solid harmonics ``r^l Y_lm`` evaluated at ``points``.

    The harmonics are built from polynomial recurrences in ``x, y, z`` only,
    so complex points are allowed and give the analytic continuation. On the
    unit sphere the result is the usual real orthonormal ``Y_lm`` (no
    Condon-Shortley phase).

    Parameters
    ----------
    points : (N, 3) array, real or complex
    L : int
        Maximal degree.

    Returns
    -------
    (N, (L+1)**2) array, ordered by ``sh_index``.
    """
    p = np.asarray(points)
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    r2 = x * x + y * y + z * z
    out = np.zeros((p.shape[0], (L + 1) ** 2), dtype=np.result_type(p.dtype, float))
    # cos_m + i sin_m = (x + i y)^m as separate polynomials
    cos_m = [np.ones_like(x)]
    sin_m = [np.zeros_like(x)]
    for m in range(1, L + 1):
        c, s = cos_m[-1], sin_m[-1]
        cos_m.append(x * c - y * s)
        sin_m.append(x * s + y * c)
    for m in range(L + 1):
        # P[l] = r^(l-m) P_l^m(cos t) / sin^m t, a polynomial in z and r^2
        p_mm = np.full_like(x, float(np.prod(np.arange(1, 2 * m, 2))) if m else 1.0)
        prev, cur = None, p_mm
        for l in range(m, L + 1):
            if l == m + 1:
                prev, cur = cur, (2 * m + 1) * z * cur
            elif l > m + 1:
                nxt = ((2 * l - 1) * z * cur - (l - 1 + m) * r2 * prev) / (l - m)
                prev, cur = cur, nxt
            norm = np.sqrt((2 * l + 1) / (4 * np.pi) * factorial(l - m) / factorial(l + m))
            if m == 0:
                out[:, sh_index(l, 0)] = norm * cur
            else:
                out[:, sh_index(l, m)] = np.sqrt(2.0) * norm * cur * cos_m[m]
                out[:, sh_index(l, -m)] = np.sqrt(2.0) * norm * cur * sin_m[m]
    return out


def sphere_quadrature(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre x trapezoid product rule on the unit sphere.

    Exact for polynomials of total degree ``<= degree``.
    """
    n_t = degree // 2 + 1
    n_p = degree + 1
    t, wt = np.polynomial.legendre.leggauss(n_t)
    phi = 2 * np.pi * (np.arange(n_p) + 0.5) / n_p
    st = np.sqrt(1 - t * t)
    nodes = np.stack(
        [np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(t, np.ones(n_p))], axis=-1
    ).reshape(-1, 3)
    weights = np.outer(wt, np.full(n_p, 2 * np.pi / n_p)).ravel()
    return nodes, weights


def fibonacci_sphere(n: int) -> np.ndarray:
    """Quasi-uniform unit vectors (golden-angle spiral)."""
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    phi = np.pi * (1 + 5 ** 0.5) * k
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


# ---------------------------------------------------------------------------
# domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Ball of radius ``radius_omega`` or a star-shaped perturbation of it.

    The boundary is ``r(w) = radius_omega * (1 + sum c_lm Y_lm(w))`` with the
    perturbation given as ``(l, m, c_lm)`` triples. ``R`` is always derived
    from the geometry.
    """

    kind: str = "ball"
    radius_omega: float = 1.0
    perturbation: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("ball", "star_shaped"):
            raise GeometryError(f"unknown domain kind {self.kind!r}")
        if not self.radius_omega > 0:
            raise GeometryError("radius_omega must be positive")
        if self.kind == "ball" and self.perturbation:
            raise GeometryError("a ball takes no perturbation")
        object.__setattr__(self, "perturbation", tuple(tuple(p) for p in self.perturbation))

    @property
    def is_ball(self) -> bool:
        return self.kind == "ball"

    def radial_function(self, directions: np.ndarray) -> np.ndarray:
        """Boundary radius along each unit direction."""
        d = np.atleast_2d(directions)
        r = np.ones(d.shape[0])
        if self.perturbation:
            L = max(p[0] for p in self.perturbation)
            Y = real_solid_harmonics(d, L)
            for l, m, c in self.perturbation:
                r = r + c * Y[:, sh_index(l, m)]
        return self.radius_omega * r

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points strictly inside the domain."""
        p = np.atleast_2d(np.asarray(points, float))
        r = np.linalg.norm(p, axis=1)
        if self.is_ball:
            return r < self.radius_omega
        d = np.divide(p, r[:, None], out=np.tile([0.0, 0.0, 1.0], (len(p), 1)), where=r[:, None] > 0)
        return r < self.radial_function(d)

    @cached_property
    def sup_radius(self) -> float:
        """``sup |x|`` over the domain, by dense sampling plus local polish."""
        if self.is_ball:
            return float(self.radius_omega)
        dirs = fibonacci_sphere(200_000)
        r = self.radial_function(dirs)
        if r.min() <= 0:
            raise GeometryError("perturbation makes the radius non-positive; domain is not star-shaped")
        best = dirs[np.argsort(r)[-8:]]

        def neg_r(angles):
            t, p = angles
            d = np.array([[np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)]])
            return -self.radial_function(d)[0]

        top = r.max()
        for d in best:
            t0 = np.arccos(np.clip(d[2], -1, 1))
            p0 = np.arctan2(d[1], d[0])
            res = optimize.minimize(neg_r, [t0, p0], method="Nelder-Mead",
                                    options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
            top = max(top, -res.fun)
        return float(top)

    @property
    def R(self) -> float:
        """Enclosing-ball radius, twice the largest distance to the origin."""
        return 2.0 * self.sup_radius


# ---------------------------------------------------------------------------
# volume mesh
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VolumeMesh:
    """Tetrahedral mesh of the domain with outward boundary facets."""

    vertices: np.ndarray
    tetrahedra: np.ndarray
    boundary_facets: np.ndarray
    facet_normals: np.ndarray
    mesh_h: float
    domain: DomainSpec
    R: float

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_facets)

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        mask = np.ones(len(self.vertices), bool)
        mask[self.boundary_vertices] = False
        return np.flatnonzero(mask)

    @cached_property
    def volumes(self) -> np.ndarray:
        v = self.vertices[self.tetrahedra]
        return np.einsum("ij,ij->i", np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), v[:, 3] - v[:, 0]) / 6.0

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.tetrahedra].mean(axis=1)

    @cached_property
    def shape_gradients(self) -> np.ndarray:
        """Gradients of the four barycentric functions per tet, shape (M, 4, 3)."""
        v = self.vertices[self.tetrahedra]
        J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=2)
        Jinv = np.linalg.inv(J)  # rows are gradients of barycentrics 1..3
        g = np.empty((len(v), 4, 3))
        g[:, 1:] = Jinv
        g[:, 0] = -Jinv.sum(axis=1)
        return g

    @cached_property
    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.tetrahedra).tobytes())
        return h.hexdigest()[:16]

    def export_text(self, path) -> None:
        """Plain-text dump: vertex count, vertices, tet count, tets."""
        with open(path, "w") as fh:
            fh.write(f"{len(self.vertices)}\n")
            np.savetxt(fh, self.vertices, fmt="%.17g")
            fh.write(f"{len(self.tetrahedra)}\n")
            np.savetxt(fh, self.tetrahedra, fmt="%d")


def _kuhn_cube(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of [-1,1]^3 with N cells per side and the Kuhn 6-tet split."""
    g = np.linspace(-1.0, 1.0, N + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (N + 1) + j) * (N + 1) + k

    i, j, k = np.meshgrid(np.arange(N), np.arange(N), np.arange(N), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    tets = []
    unit = np.eye(3, dtype=int)
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        corner = np.zeros(3, dtype=int)
        path = [vid(i, j, k)]
        for axis in perm:
            corner = corner + unit[axis]
            path.append(vid(i + corner[0], j + corner[1], k + corner[2]))
        tets.append(np.stack(path, axis=1))
    return pts, np.concatenate(tets)


def make_domain(spec: DomainSpec, mesh_h: float) -> VolumeMesh:
    """Mesh the domain with tetrahedra of nominal spacing ``mesh_h``.

    A Kuhn-split cube lattice is pushed onto the ball by the blended radial
    map ``p -> p (1 + |p|_inf (|p|_inf / |p|_2 - 1))``, which is monotone along
    every ray, and then radially stretched to the star-shaped boundary. All
    boundary vertices lie exactly on the boundary.
    """
    if not mesh_h > 0:
        raise GeometryError("mesh_h must be positive")
    R = spec.R  # validates star-shapedness
    a = spec.radius_omega
    N = max(2, int(np.ceil(2.0 * a / mesh_h)))
    N += N % 2
    pts, tets = _kuhn_cube(N)
    n2 = np.linalg.norm(pts, axis=1)
    ninf = np.abs(pts).max(axis=1)
    scale = np.divide(ninf, n2, out=np.zeros_like(n2), where=n2 > 0)
    # blend toward the identity in the core; a faster blend folds the diagonals
    scale = 1.0 + ninf * (scale - 1.0)
    ball = pts * scale[:, None]
    rad = np.linalg.norm(ball, axis=1)
    dirs = np.divide(ball, rad[:, None], out=np.zeros_like(ball), where=rad[:, None] > 0)
    if spec.is_ball:
        verts = a * ball
    else:
        verts = ball * spec.radial_function(np.where(rad[:, None] > 0, dirs, [0.0, 0.0, 1.0]))[:, None]

    v = verts[tets]
    vol = np.einsum("ij,ij->i", np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), v[:, 3] - v[:, 0])
    neg = vol < 0
    tets[neg, 0], tets[neg, 1] = tets[neg, 1].copy(), tets[neg, 0].copy()

    faces = np.concatenate([tets[:, [1, 2, 3]], tets[:, [0, 3, 2]], tets[:, [0, 1, 3]], tets[:, [0, 2, 1]]])
    key = np.sort(faces, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    bfaces = faces[counts[inv.ravel()] == 1]
    p0, p1, p2 = verts[bfaces[:, 0]], verts[bfaces[:, 1]], verts[bfaces[:, 2]]
    nrm = np.cross(p1 - p0, p2 - p0)
    flip = np.einsum("ij,ij->i", nrm, (p0 + p1 + p2) / 3) < 0
    bfaces[flip, 1], bfaces[flip, 2] = bfaces[flip, 2].copy(), bfaces[flip, 1].copy()
    nrm[flip] *= -1
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]

    edges = np.concatenate([tets[:, [0, 1]], tets[:, [0, 2]], tets[:, [0, 3]],
                            tets[:, [1, 2]], tets[:, [1, 3]], tets[:, [2, 3]]])
    h_max = float(np.linalg.norm(verts[edges[:, 0]] - verts[edges[:, 1]], axis=1).max())
    return VolumeMesh(verts, tets, bfaces, nrm, h_max, spec, R)


# ---------------------------------------------------------------------------
# periodic box
# ---------------------------------------------------------------------------

def _halton(i: int, base: int) -> float:
    f, r = 1.0, 0.0
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


OFFSET_CANDIDATES: tuple[tuple[float, float, float], ...] = ((0.5, 0.5, 0.5),) + tuple(
    (_halton(i, 2), _halton(i, 3), _halton(i, 5)) for i in range(1, 16)
)


def floor_for(rho) -> float:
    """Smallest admissible ``|m_rho|`` on a grid built for ``rho``."""
    return 1e-3 * max(1.0, float(np.linalg.norm(np.asarray(rho))))


@dataclass(frozen=True, eq=False)
class PeriodicBox:
    """Cube ``[-side/2, side/2)^3`` with ``n`` points per axis.

    Grid functions are quasi-periodic: the frequency lattice is
    ``(2 pi / side) (k + offset)``.
    """

    side: float
    n_per_axis: int
    offset: tuple[float, float, float] = (0.5, 0.5, 0.5)

    @property
    def n(self) -> int:
        return self.n_per_axis

    @property
    def dx(self) -> float:
        return self.side / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx ** 3

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.side / 2 + self.dx * np.arange(self.n)

    @cached_property
    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays of shape (n,1,1), (1,n,1), (1,1,n)."""
        a = self.axis
        return a[:, None, None], a[None, :, None], a[None, None, :]

    @cached_property
    def radius(self) -> np.ndarray:
        x, y, z = self.points
        return np.sqrt(x * x + y * y + z * z)

    def freq_axis(self, d: int) -> np.ndarray:
        k = np.fft.fftfreq(self.n) * self.n + self.offset[d]
        return 2 * np.pi / self.side * k

    @cached_property
    def freqs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k0, k1, k2 = (self.freq_axis(d) for d in range(3))
        return k0[:, None, None], k1[None, :, None], k2[None, None, :]

    @cached_property
    def freq_norm2(self) -> np.ndarray:
        k0, k1, k2 = self.freqs
        return k0 ** 2 + k1 ** 2 + k2 ** 2

    @property
    def k_max(self) -> float:
        """Nyquist frequency."""
        return np.pi / self.dx

    @cached_property
    def _modulation(self) -> tuple[np.ndarray, ...]:
        p = np.arange(self.n)
        return tuple(np.exp(-2j * np.pi * o * p / self.n) for o in self.offset)

    @cached_property
    def _phase(self) -> tuple[np.ndarray, ...]:
        j = np.fft.fftfreq(self.n) * self.n
        return tuple(np.exp(1j * np.pi * (j + o)) for o in self.offset)

    def _outer(self, vecs) -> np.ndarray:
        return vecs[0][:, None, None] * vecs[1][None, :, None] * vecs[2][None, None, :]

    def to_freq(self, values: np.ndarray) -> np.ndarray:
        """Samples of the continuous transform ``int e^{-i k x} f(x) dx``."""
        mod = self._outer(self._modulation)
        ph = self._outer(self._phase)
        return self.cell_volume * ph * np.fft.fftn(values * mod)

    def to_phys(self, coeffs: np.ndarray) -> np.ndarray:
        """Inverse of ``to_freq`` on the grid."""
        mod = self._outer(self._modulation)
        ph = self._outer(self._phase)
        return np.fft.ifftn(coeffs / ph) * np.conj(mod) / self.cell_volume

    def apply_multiplier(self, values: np.ndarray, mult: np.ndarray) -> np.ndarray:
        """Apply a Fourier multiplier given on this box's frequency grid."""
        mod = self._outer(self._modulation)
        return np.fft.ifftn(mult * np.fft.fftn(values * mod)) * np.conj(mod)

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Spectral gradient, shape (3, n, n, n)."""
        mod = self._outer(self._modulation)
        F = np.fft.fftn(values * mod)
        cm = np.conj(mod)
        return np.stack([np.fft.ifftn(1j * k * F) * cm for k in self.freqs])

    def mirrored(self) -> "PeriodicBox":
        """Same box with the offset negated (grid of ``-k``)."""
        return PeriodicBox(self.side, self.n, tuple(float((-o) % 1.0) for o in self.offset))

    def with_n(self, n: int) -> "PeriodicBox":
        return PeriodicBox(self.side, n, self.offset)

    def min_symbol(self, rho) -> float:
        return float(np.abs(symbol_on_box(rho, self)).min())


def symbol_on_box(rho, box: PeriodicBox) -> np.ndarray:
    """``m_rho(k) = -|k|^2 + 2 i rho . k`` on the box's frequency grid."""
    rho = np.asarray(rho, dtype=complex)
    k0, k1, k2 = box.freqs
    return -box.freq_norm2 + 2j * (rho[0] * k0 + rho[1] * k1 + rho[2] * k2)


def make_periodic_box(R: float, n: int, rho, side: float | None = None,
                      candidates: Sequence[Sequence[float]] = OFFSET_CANDIDATES) -> PeriodicBox:
    """Box of side ``4R`` whose offset keeps ``|m_rho|`` above the floor.

    Every candidate offset is scanned over the full grid and the one with the
    largest minimum of ``|m_rho|`` wins, so the choice depends only on
    ``(R, n, rho)``. The box for ``-rho`` is always the mirror of the box for
    ``rho``, which keeps ``G_{-rho}(y, x) = G_rho(x, y)`` exact on the grid.
    """
    flat = np.concatenate([np.real(rho), np.imag(rho)]).astype(float)
    lead = flat[np.abs(flat) > 1e-14]
    if lead.size and lead[0] < 0:
        return make_periodic_box(R, n, -np.asarray(rho), side, candidates).mirrored()
    if n < 2 or n & (n - 1):
        raise GeometryError(f"n must be a power of two, got {n}")
    side = 4.0 * R if side is None else float(side)
    if side < 4.0 * R - 1e-12:
        raise GeometryError("box side must be at least 4R")
    floor = floor_for(rho)
    best, best_min = None, -1.0
    for off in candidates:
        box = PeriodicBox(side, n, tuple(float(o) for o in off))
        mmin = box.min_symbol(rho)
        if mmin > best_min:
            best, best_min = box, mmin
    if best_min < floor:
        raise GeometryError(f"no offset reaches the floor {floor:.3e}; best minimum {best_min:.3e}")
    return best


# ---------------------------------------------------------------------------
# boundary basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundaryBasis:
    """Orthonormal real harmonic basis on the boundary with its quadrature.

    ``coef`` maps raw harmonics ``Y_lm(x/|x|)`` to the orthonormal basis:
    ``basis(x) = Y(x/|x|) @ coef``. On a ball of radius ``a`` it is ``I/a``.
    """

    max_degree: int
    nodes: np.ndarray
    weights: np.ndarray
    coef: np.ndarray
    domain: DomainSpec
    quad_degree: int
    normals: np.ndarray = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return (self.max_degree + 1) ** 2

    @cached_property
    def degrees(self) -> np.ndarray:
        return sh_degrees(self.max_degree)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Basis values at boundary points (only their direction is used)."""
        p = np.asarray(points, float)
        d = p / np.linalg.norm(p, axis=1)[:, None]
        return real_solid_harmonics(d, self.max_degree) @ self.coef

    @cached_property
    def values(self) -> np.ndarray:
        """Basis values at the quadrature nodes, shape (Nq, size)."""
        return self.evaluate(self.nodes)

    @cached_property
    def gram(self) -> np.ndarray:
        V = self.values
        return V.T @ (self.weights[:, None] * V)

    def project(self, node_values: np.ndarray) -> np.ndarray:
        """L2 projection of node samples onto the basis (coefficients)."""
        return self.values.T @ (self.weights * node_values)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.values @ coeffs

    def multiplication_matrix(self, node_factor: np.ndarray) -> np.ndarray:
        """Galerkin matrix of multiplication by a function sampled at nodes."""
        node_factor = np.broadcast_to(node_factor, self.weights.shape)
        if np.all(node_factor == node_factor[0]):
            # the basis is orthonormal, so a constant factor is exactly c I
            return node_factor[0] * np.eye(self.size)
        V = self.values
        return V.T @ ((self.weights * node_factor)[:, None] * V)

    def integrate(self, node_values: np.ndarray) -> complex:
        return np.sum(self.weights * node_values)


def _surface_element(spec: DomainSpec, dirs: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """``dS / d(omega)`` for the radial graph ``x = r(w) w``."""
    r = spec.radial_function(dirs)
    a = np.where(np.abs(dirs[:, 0])[:, None] < 0.9, np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))
    t1 = np.cross(dirs, a)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(dirs, t1)
    grad2 = np.zeros(len(dirs))
    for t in (t1, t2):
        dp = dirs + step * t
        dm = dirs - step * t
        dp /= np.linalg.norm(dp, axis=1)[:, None]
        dm /= np.linalg.norm(dm, axis=1)[:, None]
        grad2 += ((spec.radial_function(dp) - spec.radial_function(dm)) / (2 * step)) ** 2
    return r * np.sqrt(r * r + grad2)


def make_boundary_basis(mesh: VolumeMesh | DomainSpec, L: int, quad_degree: int | None = None) -> BoundaryBasis:
    """Orthonormal boundary basis with ``(L+1)^2`` functions."""
    if L < 0:
        raise GeometryError("L must be non-negative")
    spec = mesh.domain if isinstance(mesh, VolumeMesh) else mesh
    quad_degree = 2 * L + 4 if quad_degree is None else int(quad_degree)
    if quad_degree < 2 * L:
        raise GeometryError(f"quadrature degree {quad_degree} cannot integrate degree {2 * L} products")
    dirs, w = sphere_quadrature(quad_degree)
    if spec.is_ball:
        a = spec.radius_omega
        nodes = a * dirs
        weights = a * a * w
        coef = np.eye((L + 1) ** 2) / a
    else:
        r = spec.radial_function(dirs)
        nodes = r[:, None] * dirs
        weights = w * _surface_element(spec, dirs)
        Y = real_solid_harmonics(dirs, L)
        G = Y.T @ (weights[:, None] * Y)
        chol = np.linalg.cholesky(G)
        coef = np.linalg.inv(chol).T
    return BoundaryBasis(L, nodes, weights, coef, spec, quad_degree)

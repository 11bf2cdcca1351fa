"""Fourier samples of ``q`` from boundary data and the two recovery routes
for ``sigma``."""
from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import linalg as spla

from .cgo import CgoVector, sample_average_set
from .faddeev import GridField
from .forward import (DIRECT_LIMIT, TET_QUAD, DtnMatrix, SigmaField, bi_matrix, harmonic_extension, quadrature_points,
                      stiffness, _scatter)
from .geometry import BoundaryBasis, PeriodicBox, VolumeMesh, make_periodic_box, real_solid_harmonics
from .norms import xdot_norm
from .phantoms import Phantom
from .potential import PotentialForm, indicator_hat, lattice
from .solver import assemble_gamma, exp_rho_coefficients, fredholm_trace, mq_apply_weak

NEWTON_TOL = 1e-9
NEWTON_STEPS = 50


class ReconError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReconConfig:
    """Sampling parameters for the averaged inversion formula.

    The frequency lattice is ``R^{-1} Z^3`` cut to ``[-cT, cT]^3``.
    """

    T: float
    n_tau: int = 4
    n_theta: int = 8
    c: float = 1.0
    R: float = 2.0
    mode: str = "full"
    recovery: str = "semilinear"
    box_n: int = 64

    def __post_init__(self):
        if not self.T > 1:
            raise ReconError("T must exceed 1")
        if not self.c * self.T >= 1:
            raise ReconError("the lattice cutoff cT must be at least 1")
        if self.mode not in ("full", "simplified"):
            raise ReconError(f"unknown mode {self.mode!r}")
        if self.recovery not in ("semilinear", "simplified_image"):
            raise ReconError(f"unknown recovery {self.recovery!r}")
        if self.n_tau < 1 or self.n_theta < 1:
            raise ReconError("n_tau and n_theta must be positive")
        top = np.sqrt(3) * np.floor(self.c * self.T * self.R + 1e-9) / self.R
        if not self.T > top / 2:
            raise ReconError(f"T = {self.T} must exceed half the largest lattice |xi| = {top / 2:.4g}; lower c")

    @property
    def spacing(self) -> float:
        return 1.0 / self.R

    @property
    def cutoff(self) -> float:
        return self.c * self.T

    def with_T(self, T: float) -> "ReconConfig":
        return dataclasses.replace(self, T=T)

    def lattice(self) -> np.ndarray:
        return lattice(self.T, self.R, self.c) / self.R


def _nodes(xi, cfg: ReconConfig) -> list[CgoVector]:
    return sample_average_set(xi, cfg.T, cfg.n_tau, cfg.n_theta)


def _with_sigma(dtn: DtnMatrix, sigma_bnd) -> DtnMatrix:
    if sigma_bnd is None:
        return dtn
    return dataclasses.replace(dtn, sigma_boundary=np.asarray(sigma_bnd, float))


def exp_coefficients_many(rhos: np.ndarray, basis: BoundaryBasis) -> np.ndarray:
    """Closed-form ``e_rho`` coefficients for many ``rho`` at once, shape (N, size)."""
    if not basis.domain.is_ball:
        return np.stack([exp_rho_coefficients(r, basis) for r in rhos])
    a = basis.domain.radius_omega
    Y = real_solid_harmonics(a * np.asarray(rhos, complex), basis.max_degree)
    dfact = np.array([np.prod(np.arange(1, 2 * l + 2, 2), dtype=float) for l in basis.degrees])
    return 4 * np.pi * a * Y / dfact


# ---------------------------------------------------------------------------
# full inversion formula
# ---------------------------------------------------------------------------

def node_value_full(dtn: DtnMatrix, node: CgoVector, basis: BoundaryBasis, cfg: ReconConfig,
                    W: np.ndarray | None = None) -> complex:
    """``BI((I - Gamma)^{-1}[e_rho], e_rho')`` at one sampling node."""
    W = bi_matrix(dtn, basis) if W is None else W
    box = make_periodic_box(cfg.R, cfg.box_n, node.rho)
    gamma = assemble_gamma(dtn, node.rho, basis, box=box)
    v = fredholm_trace(gamma, node.rho, basis)
    return complex(v.coeffs @ W @ exp_rho_coefficients(node.rho_prime, basis))


def _full_task(args) -> complex:
    dtn, node, basis, cfg = args
    return node.weight * node_value_full(dtn, node, basis, cfg)


def q_hat_from_dtn(dtn: DtnMatrix, sigma_bnd, xi, cfg: ReconConfig, basis: BoundaryBasis,
                   workers: int = 1) -> complex:
    """Averaged inversion formula for ``q_hat(xi)`` at one ``T``.

    Every ``(tau, theta)`` node assembles ``Gamma`` at ``rho``, solves the
    Fredholm system for the boundary trace and pairs it with ``e_rho'``
    through ``BI``.
    """
    if cfg.mode != "full":
        raise ReconError("q_hat_from_dtn needs mode='full'")
    dtn = _with_sigma(dtn, sigma_bnd)
    W = bi_matrix(dtn, basis)
    nodes = _nodes(xi, cfg)
    if not np.any(W):
        return 0j
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return complex(sum(ex.map(_full_task, [(dtn, n, basis, cfg) for n in nodes])))
    return complex(sum(n.weight * node_value_full(dtn, n, basis, cfg, W) for n in nodes))


def richardson(value_T: complex, value_2T: complex) -> complex:
    """Two-point extrapolation assuming an error proportional to ``1/T``."""
    return 2 * value_2T - value_T


def q_hat_richardson(dtn: DtnMatrix, sigma_bnd, xi, cfg: ReconConfig, basis: BoundaryBasis,
                     workers: int = 1) -> dict:
    """Raw values at ``T`` and ``2T`` and their extrapolation."""
    a = q_hat_from_dtn(dtn, sigma_bnd, xi, cfg, basis, workers)
    b = q_hat_from_dtn(dtn, sigma_bnd, xi, cfg.with_T(2 * cfg.T), basis, workers)
    return {"T": cfg.T, "value_T": a, "value_2T": b, "extrapolated": richardson(a, b)}


# ---------------------------------------------------------------------------
# simplified measurement
# ---------------------------------------------------------------------------

def meas_T(dtn: DtnMatrix, sigma_bnd, xi, cfg: ReconConfig, basis: BoundaryBasis, consistent: bool = True) -> complex:
    """Averaged ``int Lambda[sigma^{-1/2} e_rho] sigma^{-1/2} e_rho'`` with raw ``e_rho`` data.

    With ``consistent=True`` the Galerkin harmonic part ``c^T D0 c'`` is
    swapped for its exact value ``rho.rho' 1_Omega_hat(xi) = -|xi|^2/2
    1_Omega_hat(xi)``, so the discretization error of ``Lambda_1`` cancels.
    """
    return complex(meas_many(dtn, sigma_bnd, np.atleast_2d(xi), cfg, basis, consistent)[0])


def meas_many(dtn: DtnMatrix, sigma_bnd, xis: np.ndarray, cfg: ReconConfig, basis: BoundaryBasis,
              consistent: bool = True, chunk: int = 256) -> np.ndarray:
    """``meas_T`` at many frequencies, vectorized over the sampling nodes."""
    dtn = _with_sigma(dtn, sigma_bnd)
    M = basis.multiplication_matrix(dtn.sigma_boundary ** -0.5)
    A = bi_matrix(dtn, basis) if consistent else M @ dtn.entries @ M
    xis = np.atleast_2d(np.asarray(xis, float))
    out = np.empty(len(xis), complex)
    for s in range(0, len(xis), chunk):
        block = xis[s:s + chunk]
        nodes = [_nodes(x, cfg) for x in block]
        k = len(nodes[0])
        rho = np.array([n.rho for ns in nodes for n in ns])
        rhop = np.array([n.rho_prime for ns in nodes for n in ns])
        wts = np.array([n.weight for ns in nodes for n in ns])
        c, cp = exp_coefficients_many(rho, basis), exp_coefficients_many(rhop, basis)
        vals = np.einsum("ni,ij,nj->n", c, A, cp) * wts
        out[s:s + chunk] = vals.reshape(len(block), k).sum(axis=1)
    if consistent:
        out -= 0.5 * np.sum(xis ** 2, axis=1) * indicator_hat(basis.domain, xis)
    return out


# ---------------------------------------------------------------------------
# decay diagnostic
# ---------------------------------------------------------------------------

def q_functional(pf: PotentialForm, box: PeriodicBox) -> GridField:
    """``q`` as frequency coefficients on ``box`` (same grid points as ``pf``)."""
    moved = PotentialForm(box, pf.a0, pf.A, pf.support)
    return mq_apply_weak(moved, GridField(box, np.zeros((box.n,) * 3, complex)), constant=1.0)


def ht_decay(pf: PotentialForm, xi, T_list, cfg: ReconConfig) -> np.ndarray:
    """Sampled average of ``||q||^2`` in ``Xdot^{-1/2}_rho`` for each ``T``."""
    out = []
    for T in T_list:
        total = 0.0
        for node in sample_average_set(xi, T, cfg.n_tau, cfg.n_theta):
            box = make_periodic_box(cfg.R, pf.box.n, node.rho, side=pf.box.side)
            total += node.weight * xdot_norm(q_functional(pf, box), node.rho, -0.5) ** 2
        out.append(total)
    return np.array(out)


# ---------------------------------------------------------------------------
# recovery of sigma
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Recovery:
    """Recovered conductivity together with the iteration record."""

    sigma: SigmaField
    w: np.ndarray
    residuals: list


@dataclass(frozen=True, eq=False)
class ImageField:
    """``v^2`` on mesh vertices from the simplified Schrodinger solve."""

    mesh: VolumeMesh
    values: np.ndarray
    v: np.ndarray
    smallest_eigenvalue: float


def _boundary_values(sigma_bnd, mesh: VolumeMesh) -> np.ndarray:
    pts = mesh.vertices[mesh.boundary_vertices]
    if callable(sigma_bnd):
        vals = np.asarray(sigma_bnd(pts), float)
    elif np.isscalar(sigma_bnd):
        vals = np.full(len(pts), float(sigma_bnd))
    else:
        vals = np.asarray(sigma_bnd, float)
    if vals.shape != (len(pts),) or not np.all(vals > 0):
        raise ReconError("boundary conductivity must be positive at every boundary vertex")
    return vals


def grid_sampler(field: GridField):
    """Cubic-spline evaluation of a grid field at arbitrary points (real part)."""
    box = field.box
    vals = np.real(field.to_phys().values)
    coef = ndimage.spline_filter(vals, order=3, mode="grid-wrap")

    def sample(points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, float).reshape(-1, 3)
        coords = ((p + box.side / 2) / box.dx).T
        return ndimage.map_coordinates(coef, coords, order=3, mode="grid-wrap", prefilter=False)

    return sample


def q_load_vector(q, mesh: VolumeMesh) -> np.ndarray:
    """``int q phi_i`` for a pointwise ``q`` (grid field or callable) or the oracle form of a phantom."""
    x = quadrature_points(mesh)
    w = mesh.volumes[:, None] / 4.0
    if isinstance(q, Phantom):
        gl = q.grad_log_sigma(x)
        a0 = 0.25 * np.sum(gl * gl, axis=-1)
        A = -0.5 * gl
        local = np.einsum("tq,qi->ti", w * a0, TET_QUAD) + np.einsum("tq,tqd,tid->ti", w, A, mesh.shape_gradients)
    else:
        sampler = grid_sampler(q) if isinstance(q, GridField) else q
        qv = np.asarray(sampler(x.reshape(-1, 3))).reshape(x.shape[:2])
        local = np.einsum("tq,qi->ti", w * qv, TET_QUAD)
    n = len(mesh.vertices)
    return np.bincount(mesh.tetrahedra.ravel(), weights=local.ravel(), minlength=n)


def _convection(mesh: VolumeMesh, grads: np.ndarray) -> sparse.csr_matrix:
    """``C_ij = int 2 (b . grad phi_j) phi_i`` with ``b`` constant per tet."""
    bg = np.einsum("td,tjd->tj", grads, mesh.shape_gradients)
    local = 2 * (mesh.volumes / 4.0)[:, None, None] * np.broadcast_to(bg[:, None, :], (len(bg), 4, 4))
    return _scatter(mesh, local)


def _sparse_solve(A: sparse.csr_matrix, b: np.ndarray, K: sparse.csr_matrix) -> np.ndarray:
    if A.shape[0] <= DIRECT_LIMIT:
        return spla.spsolve(A.tocsc(), b)
    import pyamg
    ml = pyamg.smoothed_aggregation_solver(K.tocsr(), symmetry="hermitian")
    x, info = spla.gmres(A, b, M=ml.aspreconditioner(), rtol=1e-13, atol=0.0, restart=60, maxiter=50)
    if info != 0:
        raise ReconError(f"Newton linear solve did not converge (info={info})")
    return x


def recover_sigma_semilinear(q, sigma_bnd, mesh: VolumeMesh, tol: float = NEWTON_TOL,
                             max_steps: int = NEWTON_STEPS) -> Recovery:
    """Newton solve of ``Delta w + |grad w|^2 = q``, ``w = log(sigma)/2`` on the boundary.

    ``q`` is a grid field (for instance a synthesized ``q_T``), a callable
    giving pointwise values, or a :class:`Phantom` whose bilinear form is used
    directly. Returns ``sigma = exp(2 w)`` on the vertices.
    """
    sb = _boundary_values(sigma_bnd, mesh)
    ii = mesh.interior_vertices
    w = harmonic_extension(0.5 * np.log(sb), mesh).values.copy()
    K = stiffness(mesh)
    load = q_load_vector(q, mesh)
    K_ii = K[ii][:, ii].tocsr()
    vol4 = mesh.volumes / 4.0
    history = []
    scale = max(1.0, float(np.abs(load).max()))
    for _ in range(max_steps + 1):
        g = np.einsum("tk,tkd->td", w[mesh.tetrahedra], mesh.shape_gradients)
        quad = np.bincount(mesh.tetrahedra.ravel(), weights=np.repeat(vol4 * np.sum(g * g, axis=1), 4),
                           minlength=len(w))
        # weak residual of -Delta w - |grad w|^2 + q
        res = (K @ w - quad + load)[ii]
        history.append(float(np.abs(res).max()))
        if history[-1] < tol * scale:
            break
        J = (K - _convection(mesh, g))[ii][:, ii].tocsr()
        w[ii] -= _sparse_solve(J, res, K_ii)
    else:
        raise ReconError(f"Newton did not converge in {max_steps} steps; residuals {history}")
    sigma = np.exp(2 * w)
    g = np.einsum("tk,tkd->td", w[mesh.tetrahedra], mesh.shape_gradients)
    grad_vertex = np.zeros((len(w), 3))
    counts = np.bincount(mesh.tetrahedra.ravel(), minlength=len(w))[:, None]
    for k in range(4):
        np.add.at(grad_vertex, mesh.tetrahedra[:, k], 2 * g)
    grad_vertex /= np.maximum(counts, 1)
    sg = np.einsum("tk,tkd->td", sigma[mesh.tetrahedra], mesh.shape_gradients)
    field = SigmaField(None, mesh, sigma, grad_vertex, float(sigma.min()), float(np.linalg.norm(sg, axis=1).max()))
    return Recovery(field, w, history)


def potential_mass(mesh: VolumeMesh, q) -> sparse.csr_matrix:
    """``int q phi_i phi_j`` with ``q`` sampled at the degree-2 points."""
    x = quadrature_points(mesh)
    sampler = grid_sampler(q) if isinstance(q, GridField) else q
    qv = np.asarray(sampler(x.reshape(-1, 3))).reshape(x.shape[:2])
    w = mesh.volumes[:, None] / 4.0
    local = np.einsum("tq,qi,qj->tij", w * qv, TET_QUAD, TET_QUAD)
    return _scatter(mesh, local)


def smallest_eigenvalue(A: sparse.spmatrix, K: sparse.spmatrix) -> float:
    """Eigenvalue of the symmetric ``A`` closest to zero.

    Shift-invert ARPACK for small systems; LOBPCG preconditioned by AMG on
    the Laplacian ``K`` otherwise (then the lowest eigenvalue is returned).
    """
    if A.shape[0] <= DIRECT_LIMIT:
        # fixed start vector keeps repeated runs bit-identical
        v0 = np.ones(A.shape[0])
        return float(spla.eigsh(A.tocsc(), k=1, sigma=0, which="LM", v0=v0, return_eigenvectors=False)[0])
    import pyamg
    ml = pyamg.smoothed_aggregation_solver(K.tocsr(), symmetry="hermitian")
    X = np.random.default_rng(0).normal(size=(A.shape[0], 2))
    vals, _ = spla.lobpcg(A.tocsr(), X, M=ml.aspreconditioner(), largest=False, tol=1e-6, maxiter=200)
    return float(np.min(vals))


def recover_image_simplified(qT, sigma_bnd, mesh: VolumeMesh, singular_tol: float = 1e-8) -> ImageField:
    """Solve ``Delta v = (Re q_T) v`` with ``v = sigma^{1/2}`` on the boundary; image ``v^2``."""
    sb = _boundary_values(sigma_bnd, mesh)
    bi, ii = mesh.boundary_vertices, mesh.interior_vertices
    K = stiffness(mesh)
    A = (K + potential_mass(mesh, qT)).tocsr()
    A_ii = A[ii][:, ii].tocsc()
    K_ii = K[ii][:, ii].tocsc()
    lam = smallest_eigenvalue(A_ii, K_ii)
    lam0 = smallest_eigenvalue(K_ii, K_ii)
    if abs(lam) < singular_tol * abs(lam0):
        raise ReconError(f"0 is nearly a Dirichlet eigenvalue: smallest eigenvalue {lam:.3e}")
    g = np.sqrt(sb)
    rhs = -(A[ii][:, bi] @ g)
    v = np.zeros(len(mesh.vertices))
    v[bi] = g
    v[ii] = _sparse_solve(A_ii.tocsr(), rhs, K_ii.tocsr())
    return ImageField(mesh, v * v, v, float(lam))


def relative_l2(mesh: VolumeMesh, values: np.ndarray, truth: np.ndarray) -> float:
    """Relative ``L2(Omega)`` error with the lumped vertex mass."""
    mass = np.bincount(mesh.tetrahedra.ravel(), weights=np.repeat(mesh.volumes / 4.0, 4),
                       minlength=len(mesh.vertices))
    return float(np.sqrt(np.sum(mass * (values - truth) ** 2) / np.sum(mass * truth ** 2)))

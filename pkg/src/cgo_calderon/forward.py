"""P1 finite elements for the conductivity and Schrodinger equations, the
Dirichlet-to-Neumann matrix and the boundary functional ``BI``."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import pyamg
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.sparse import linalg as spla

from .blobio import read_blob, write_blob
from .geometry import BoundaryBasis, VolumeMesh
from .phantoms import Phantom

DIRECT_LIMIT = 20_000
SOLVER_RTOL = 1e-12

# degree-2 rule on the reference tetrahedron (barycentric points, equal weights)
_A, _B = 0.5854101966249685, 0.1381966011250105
TET_QUAD = np.array([[_A, _B, _B, _B], [_B, _A, _B, _B], [_B, _B, _A, _B], [_B, _B, _B, _A]])


class ForwardError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SigmaField:
    """Conductivity sampled on mesh vertices, backed by a closed-form phantom."""

    phantom: Phantom
    mesh: VolumeMesh
    values: np.ndarray
    grad_log_sigma: np.ndarray
    lower_bound: float
    lipschitz_bound: float

    def at(self, points: np.ndarray) -> np.ndarray:
        return self.phantom.sigma(points)

    @cached_property
    def boundary_values(self) -> np.ndarray:
        return self.values[self.mesh.boundary_vertices]


def sigma_on_mesh(phantom: Phantom, mesh: VolumeMesh) -> SigmaField:
    v = phantom.sigma(mesh.vertices)
    return SigmaField(phantom, mesh, v, phantom.grad_log_sigma(mesh.vertices),
                      phantom.lower_bound, phantom.lipschitz_bound)


@dataclass(frozen=True)
class BoundaryFunction:
    """Boundary function by its coefficients in a :class:`BoundaryBasis`."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, complex)
        if not np.all(np.isfinite(c)):
            raise ForwardError("boundary coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    def h_half_norm(self, basis: BoundaryBasis) -> float:
        return float(np.sqrt(np.sum((1 + basis.degrees) * np.abs(self.coeffs) ** 2)))


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Nodal values of a P1 function on the mesh."""

    mesh: VolumeMesh
    values: np.ndarray
    residual: float = 0.0

    def tet_gradients(self) -> np.ndarray:
        return np.einsum("tk,tkd->td", self.values[self.mesh.tetrahedra], self.mesh.shape_gradients)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _scatter(mesh: VolumeMesh, local: np.ndarray) -> sparse.csr_matrix:
    t = mesh.tetrahedra
    rows = np.repeat(t, 4, axis=1).ravel()
    cols = np.tile(t, (1, 4)).ravel()
    n = len(mesh.vertices)
    return sparse.csr_matrix((local.reshape(-1), (rows, cols)), shape=(n, n))


def stiffness(mesh: VolumeMesh, tet_coef: np.ndarray | None = None) -> sparse.csr_matrix:
    """``int c grad phi_i . grad phi_j`` with ``c`` constant per tet."""
    g = mesh.shape_gradients
    local = np.einsum("tid,tjd->tij", g, g) * mesh.volumes[:, None, None]
    if tet_coef is not None:
        local = local * tet_coef[:, None, None]
    return _scatter(mesh, local)


def conductivity_stiffness(sigma: SigmaField) -> sparse.csr_matrix:
    """Exact for the P1 interpolant of ``sigma``: its tet mean multiplies the gradients."""
    return stiffness(sigma.mesh, sigma.values[sigma.mesh.tetrahedra].mean(axis=1))


def quadrature_points(mesh: VolumeMesh) -> np.ndarray:
    """Degree-2 quadrature points, shape (M, 4, 3)."""
    return np.einsum("qk,tkd->tqd", TET_QUAD, mesh.vertices[mesh.tetrahedra])


def potential_matrix(mesh: VolumeMesh, phantom: Phantom) -> sparse.csr_matrix:
    """Matrix of ``B(f, g) = int a0 f g + A . grad(f g)`` on P1 functions."""
    x = quadrature_points(mesh)
    gl = phantom.grad_log_sigma(x)
    a0 = 0.25 * np.sum(gl * gl, axis=-1)
    A = -0.5 * gl
    w = mesh.volumes[:, None] / 4.0
    g = mesh.shape_gradients
    mass = np.einsum("tq,qi,qj->tij", w * a0, TET_QUAD, TET_QUAD)
    Ag = np.einsum("tqd,tjd->tqj", A, g)
    drift = np.einsum("tq,qi,tqj->tij", w, TET_QUAD, Ag)
    return _scatter(mesh, mass + drift + drift.transpose(0, 2, 1))


class DirichletSolver:
    """Reusable solver for ``K u = 0`` in the interior with given boundary values."""

    def __init__(self, K: sparse.csr_matrix, mesh: VolumeMesh):
        self.mesh = mesh
        self.K = K
        bi, ii = mesh.boundary_vertices, mesh.interior_vertices
        self.K_ii = K[ii][:, ii].tocsr()
        self.K_ib = K[ii][:, bi].tocsr()
        if len(ii) <= DIRECT_LIMIT:
            try:
                self._lu = spla.splu(self.K_ii.tocsc())
            except RuntimeError as exc:
                raise ForwardError(f"singular stiffness matrix: {exc}") from exc
            self._amg = None
        else:
            self._lu = None
            self._amg = pyamg.smoothed_aggregation_solver(self.K_ii.tocsr(), symmetry="hermitian")

    def _solve_real(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(rhs)
        res: list[float] = []
        x = self._amg.solve(rhs, tol=SOLVER_RTOL, accel="cg", maxiter=500, residuals=res)
        if res[-1] > 1e-9 * max(res[0], 1e-300):
            raise ForwardError(f"AMG-CG stalled at relative residual {res[-1] / res[0]:.2e}")
        return x

    def solve(self, boundary_values: np.ndarray) -> PotentialField:
        g = np.asarray(boundary_values)
        rhs = -(self.K_ib @ g)
        if np.iscomplexobj(rhs):
            ui = self._solve_real(rhs.real.copy()) + 1j * self._solve_real(rhs.imag.copy())
        else:
            ui = self._solve_real(rhs)
        u = np.zeros(len(self.mesh.vertices), ui.dtype if np.iscomplexobj(ui) else float)
        u[self.mesh.boundary_vertices] = g
        u[self.mesh.interior_vertices] = ui
        r = self.K_ii @ ui - rhs
        rel = float(np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300))
        return PotentialField(self.mesh, u, rel)


def dirichlet_data(phi, mesh: VolumeMesh, basis: BoundaryBasis | None = None) -> np.ndarray:
    """Boundary-vertex values from coefficients, a callable or raw values."""
    pts = mesh.vertices[mesh.boundary_vertices]
    if isinstance(phi, BoundaryFunction):
        if basis is None:
            raise ForwardError("a basis is needed to evaluate boundary coefficients")
        return basis.evaluate(pts) @ phi.coeffs
    if callable(phi):
        return np.asarray(phi(pts))
    return np.asarray(phi)


def solve_conductivity(sigma: SigmaField, phi, mesh: VolumeMesh, basis: BoundaryBasis | None = None) -> PotentialField:
    """P1 solution of ``div(sigma grad u) = 0`` with ``u = phi`` on the boundary."""
    return DirichletSolver(conductivity_stiffness(sigma), mesh).solve(dirichlet_data(phi, mesh, basis))


def harmonic_extension(phi, mesh: VolumeMesh, basis: BoundaryBasis | None = None) -> PotentialField:
    return DirichletSolver(stiffness(mesh), mesh).solve(dirichlet_data(phi, mesh, basis))


def schrodinger_solver(mesh: VolumeMesh, phantom: Phantom) -> DirichletSolver:
    """Solver for ``int grad v . grad psi + B(v, psi) = 0``."""
    return DirichletSolver((stiffness(mesh) + potential_matrix(mesh, phantom)).tocsr(), mesh)


def solve_schrodinger(phantom: Phantom, phi, mesh: VolumeMesh, basis: BoundaryBasis | None = None) -> PotentialField:
    return schrodinger_solver(mesh, phantom).solve(dirichlet_data(phi, mesh, basis))


# ---------------------------------------------------------------------------
# Dirichlet-to-Neumann matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DtnMatrix:
    """Galerkin DtN matrix in the boundary basis.

    ``free_entries`` is the ``sigma = 1`` matrix on the same mesh; it stands
    for the normal derivative of the harmonic extension in ``BI``.
    """

    entries: np.ndarray
    free_entries: np.ndarray
    sigma_boundary: np.ndarray
    max_degree: int
    mesh_hash: str = ""
    meta: dict = field(default_factory=dict)

    def symmetry_defect(self) -> float:
        return float(np.linalg.norm(self.entries - self.entries.T) / np.linalg.norm(self.entries))

    def scaled(self, s: float) -> "DtnMatrix":
        return DtnMatrix(self.entries * s, self.free_entries, self.sigma_boundary, self.max_degree,
                         self.mesh_hash, dict(self.meta))

    def with_noise(self, level: float, seed: int = 0) -> "DtnMatrix":
        """Additive Gaussian noise relative to the largest entry, kept symmetric."""
        rng = np.random.default_rng(seed)
        E = rng.normal(size=self.entries.shape)
        E = (E + E.T) / 2 * level * np.abs(self.entries).max()
        return DtnMatrix(self.entries + E, self.free_entries, self.sigma_boundary, self.max_degree,
                         self.mesh_hash, {**self.meta, "noise": level, "noise_seed": seed})

    def save(self, path) -> None:
        n = self.entries.shape[0]
        header = {"basis_degree": self.max_degree, "size": n, "mesh_hash": self.mesh_hash,
                  "sigma_boundary": np.asarray(self.sigma_boundary, float).tolist(), "meta": self.meta}
        write_blob(path, header, np.concatenate([self.entries.ravel(), self.free_entries.ravel()]))

    @classmethod
    def load(cls, path) -> "DtnMatrix":
        header, data = read_blob(path)
        n = header["size"]
        ent = data[: n * n].reshape(n, n)
        free = data[n * n:].reshape(n, n)
        return cls(ent, free, np.asarray(header["sigma_boundary"]), header["basis_degree"],
                   header["mesh_hash"], header.get("meta", {}))


def _galerkin_dtn(K: sparse.csr_matrix, mesh: VolumeMesh, basis: BoundaryBasis) -> np.ndarray:
    """``D_ij = u_i^T K u_j`` with ``u_i`` the discrete solution for basis function ``i``."""
    solver = DirichletSolver(K, mesh)
    traces = basis.evaluate(mesh.vertices[mesh.boundary_vertices])
    U = np.stack([solver.solve(traces[:, i]).values for i in range(basis.size)], axis=1)
    D = U.T @ (K @ U)
    return 0.5 * (D + D.T)


def assemble_dtn(sigma: SigmaField, basis: BoundaryBasis, mesh: VolumeMesh) -> DtnMatrix:
    K_sigma, K = conductivity_stiffness(sigma), stiffness(mesh)
    D = _galerkin_dtn(K_sigma, mesh, basis)
    # identical matrices give identical maps; iterative solves would differ in roundoff
    D0 = D if (K_sigma != K).nnz == 0 else _galerkin_dtn(K, mesh, basis)
    sb = sigma.at(basis.nodes)
    return DtnMatrix(D.astype(complex), D0.astype(complex), sb, basis.max_degree, mesh.content_hash,
                     {"phantom": sigma.phantom.kind, "mesh_h": mesh.mesh_h})


def _coefficients(psi, basis: BoundaryBasis) -> np.ndarray:
    if isinstance(psi, BoundaryFunction):
        return psi.coeffs
    vals = np.asarray(psi)
    if not np.all(np.isfinite(vals)):
        raise ForwardError("psi values must be finite")
    return basis.project(vals)


def bi_matrix(dtn: DtnMatrix, basis: BoundaryBasis) -> np.ndarray:
    """Matrix of ``BI`` in basis coefficients: ``M D M - D0`` with ``M`` the
    Galerkin multiplication by ``sigma^{-1/2}``."""
    M = basis.multiplication_matrix(dtn.sigma_boundary ** -0.5)
    return M @ dtn.entries @ M - dtn.free_entries


def boundary_integral(dtn: DtnMatrix, phi: BoundaryFunction, psi, basis: BoundaryBasis) -> complex:
    """``int (sigma^{-1/2} Lambda[sigma^{-1/2} phi] - d_nu P0[phi]) psi`` on the boundary.

    ``psi`` is a :class:`BoundaryFunction` or its values at the basis
    quadrature nodes.
    """
    return complex(phi.coeffs @ bi_matrix(dtn, basis) @ _coefficients(psi, basis))


def radial_dtn_eigenvalues(phantom: Phantom, L: int, radius: float = 1.0, r0: float = 1e-4) -> np.ndarray:
    """Exact DtN eigenvalues ``sigma(a) f_l'(a) / f_l(a)`` for a centred radial phantom on a ball.

    ``f_l`` solves ``(sigma r^2 f')' = l(l+1) sigma f`` with ``f ~ r^l`` at the origin.
    """
    if np.any(phantom.center != 0):
        raise ForwardError("the radial oracle needs a phantom centred at the origin")

    def sig(r):
        return float(phantom.sigma(np.array([[r, 0.0, 0.0]]))[0])

    out = np.empty(L + 1)
    for l in range(L + 1):
        def rhs(r, y, l=l):
            s = sig(r)
            return [y[1] / (s * r * r), l * (l + 1) * s * y[0]]

        s0 = sig(r0)
        sol = solve_ivp(rhs, [r0, radius], [1.0, s0 * r0 * l], rtol=1e-12, atol=1e-300, method="DOP853")
        f, p = sol.y[:, -1]
        out[l] = p / (radius * radius * f)
    return out


def radial_dtn(phantom: Phantom, basis: BoundaryBasis) -> DtnMatrix:
    """Oracle :class:`DtnMatrix` of a centred radial phantom on a ball from the radial ODE."""
    dom = basis.domain
    if not dom.is_ball:
        raise ForwardError("the radial oracle needs a ball")
    a = dom.radius_omega
    lam = radial_dtn_eigenvalues(phantom, basis.max_degree, a)[basis.degrees]
    free = basis.degrees / a
    return DtnMatrix(np.diag(lam).astype(complex), np.diag(free).astype(complex), phantom.sigma(basis.nodes),
                     basis.max_degree, "", {"phantom": phantom.kind, "oracle": "radial_ode"})

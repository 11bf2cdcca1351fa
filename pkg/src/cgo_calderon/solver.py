"""CGO remainder solve, the operator ``S_q``, the boundary operator ``Gamma``
and its Fredholm solve.

All volume computations work in the cancelled frame: for ``v = e_rho u`` the
composition ``S_q v = e_rho Delta_rho^{-1} M_q[u]`` is evaluated on ``u`` so
that no exponential ever multiplies a grid field.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import linalg as spla

from .blobio import read_blob, write_blob
from .cgo import CgoVector, exp_rho
from .faddeev import GridField, KernelTable, check_box, inv_delta_rho, trig_eval
from .forward import BoundaryFunction, DtnMatrix, bi_matrix, quadrature_points
from .geometry import BoundaryBasis, PeriodicBox, VolumeMesh, real_solid_harmonics, sphere_quadrature
from .norms import weighted_x_norm
from .potential import PotentialForm, pointwise_q

FIXED_POINT_TOL = 1e-8
COND_LIMIT = 1e12


class CgoSolverError(RuntimeError):
    pass


class NeumannDivergence(CgoSolverError):
    pass


class FredholmError(CgoSolverError):
    pass


def rho_array(rho) -> np.ndarray:
    return np.asarray(rho.rho if isinstance(rho, CgoVector) else rho, complex)


def _same_grid(a: PeriodicBox, b: PeriodicBox) -> None:
    if a.n != b.n or abs(a.side - b.side) > 1e-12:
        raise CgoSolverError("potential form and field live on different grids")


# ---------------------------------------------------------------------------
# M_q and S_q
# ---------------------------------------------------------------------------

def mq_apply_weak(pf: PotentialForm, f: GridField, constant: complex = 0.0) -> GridField:
    """Functional ``g -> B(c + f, g)`` as frequency coefficients on ``f.box``.

    The distribution is ``a0 u + A . grad f - div(A u)`` with ``u = c + f``;
    the constant never enters a spectral derivative. Pairing it with a field
    on the mirrored box reproduces ``mq_bilinear`` by exact summation by parts.
    """
    box = f.box
    _same_grid(pf.box, box)
    fv = f.to_phys().values
    u = constant + fv
    grad_f = box.gradient(fv)
    Au = pf.A * u
    div = sum(box.gradient(Au[d])[d] for d in range(3))
    h = pf.a0 * u + np.einsum("d...,d...->...", pf.A, grad_f) - div
    return GridField(box, box.to_freq(h), "frequency")


def functional_pairing(functional: GridField, g: GridField) -> complex:
    """``<F, g>`` as the bilinear grid sum."""
    return complex(np.sum(functional.to_phys().values * g.to_phys().values) * functional.box.cell_volume)


def sq_apply(pf: PotentialForm, v_grid: GridField, rho, constant: complex = 0.0,
             frame: str = "cancelled") -> GridField:
    """``S_q = e_rho Delta_rho^{-1} M_q[e_{-rho} .]``.

    In the cancelled frame ``v_grid`` holds ``u = e_{-rho} v`` (plus the
    optional constant) and the result is ``e_{-rho} S_q v``, so the
    exponentials cancel analytically. ``frame="raw"`` multiplies by the
    exponentials explicitly and is guarded against overflow.
    """
    rho = rho_array(rho)
    box = v_grid.box
    if frame == "cancelled":
        return inv_delta_rho(mq_apply_weak(pf, v_grid, constant), rho).to_phys()
    if frame != "raw":
        raise CgoSolverError(f"unknown frame {frame!r}")
    pts = np.stack(np.broadcast_arrays(*box.points), axis=-1).reshape(-1, 3)
    e_minus = exp_rho(-rho, pts).reshape((box.n,) * 3)
    u = GridField(box, e_minus * (constant + v_grid.to_phys().values))
    w = inv_delta_rho(mq_apply_weak(pf, u), rho).to_phys()
    return GridField(box, w.values / e_minus)


# ---------------------------------------------------------------------------
# the remainder equation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CgoSolution:
    """Remainder ``w`` of ``v = e_rho (1 + w)`` and the boundary trace of ``v``."""

    rho: object
    w: GridField
    v_boundary: BoundaryFunction | None
    method: str
    residual: float
    neumann_terms: int = 0

    def __post_init__(self):
        if not self.residual < FIXED_POINT_TOL:
            raise CgoSolverError(f"fixed-point residual {self.residual:.2e} exceeds {FIXED_POINT_TOL:.0e}")


def _rhs_and_operator(pf: PotentialForm, rho, box: PeriodicBox):
    zero = GridField(box, np.zeros((box.n,) * 3, complex))
    rhs = sq_apply(pf, zero, rho, constant=1.0).values

    def apply(w: np.ndarray) -> np.ndarray:
        return sq_apply(pf, GridField(box, w), rho).values

    return rhs, apply


def fixed_point_residual(pf: PotentialForm, w: GridField, rho) -> float:
    """``||w - Delta_rho^{-1} M_q[1 + w]|| / ||Delta_rho^{-1} M_q[1]||``."""
    rho = rho_array(rho)
    rhs, apply = _rhs_and_operator(pf, rho, w.box)
    wv = w.to_phys().values
    den = np.linalg.norm(rhs)
    if den == 0:
        return float(np.linalg.norm(wv))
    return float(np.linalg.norm(wv - apply(wv) - rhs) / den)


def solve_w(pf: PotentialForm, rho, method: str = "direct", box: PeriodicBox | None = None,
            basis: BoundaryBasis | None = None, tol: float = 1e-11, maxiter: int = 400,
            trace_degree: int | None = None) -> CgoSolution:
    """Solve ``(I - Delta_rho^{-1} M_q) w = Delta_rho^{-1} M_q[1]`` on the grid.

    ``method="neumann"`` iterates from ``w = 0`` and gives up when the update
    norm grows three times in a row; ``method="direct"`` runs GMRES with the
    operator applied matrix-free. With a ``basis`` the boundary trace of
    ``e_rho (1 + w)`` is attached.
    """
    rho_v = rho_array(rho)
    box = pf.box if box is None else box
    check_box(box, rho_v)
    rhs, apply = _rhs_and_operator(pf, rho_v, box)
    shape = rhs.shape
    den = np.linalg.norm(rhs)
    terms = 0
    if den == 0:
        w = np.zeros(shape, complex)
    elif method == "neumann":
        w = np.zeros(shape, complex)
        last, growth = np.inf, 0
        for terms in range(1, maxiter + 1):
            new = apply(w) + rhs
            step = np.linalg.norm(new - w)
            w = new
            growth = growth + 1 if step > last else 0
            if growth >= 3:
                raise NeumannDivergence(
                    f"Neumann series diverges at |rho|={np.linalg.norm(rho_v):.3g} after {terms} terms; "
                    "use method='direct'")
            last = step
            if step <= tol * den:
                break
        else:
            raise NeumannDivergence(f"Neumann series not converged in {maxiter} terms; use method='direct'")
    elif method == "direct":
        N = rhs.size
        op = spla.LinearOperator((N, N), matvec=lambda x: x - apply(x.reshape(shape)).ravel(), dtype=complex)
        sol, info = spla.gmres(op, rhs.ravel(), x0=rhs.ravel(), rtol=tol, atol=0.0, restart=80,
                               maxiter=maxiter)
        if info != 0:
            raise CgoSolverError(f"GMRES did not converge (info={info})")
        w = sol.reshape(shape)
    else:
        raise CgoSolverError(f"unknown method {method!r}")
    wf = GridField(box, w)
    res = 0.0 if den == 0 else float(np.linalg.norm(w - apply(w) - rhs) / den)
    trace = None if basis is None else cgo_trace(wf, rho_v, basis, trace_degree)
    return CgoSolution(rho, wf, trace, method, res, terms)


def trace_degree_for(rho, radius: float, L: int) -> int:
    """Surface quadrature degree that resolves ``e_rho`` on a sphere of radius ``radius``."""
    return int(max(2 * L + 4, np.ceil(2 * np.linalg.norm(rho_array(rho)) * radius) + 16))


def exp_rho_coefficients(rho, basis: BoundaryBasis, quad_degree: int | None = None) -> np.ndarray:
    """Coefficients of ``e_rho`` restricted to the boundary.

    On a ball of radius ``a`` the degree-``l`` part of ``e^{rho.x}`` is the
    harmonic polynomial ``(rho.x)^l / l!``, which gives
    ``c_lm = 4 pi a Y_lm(a rho) / (2l+1)!!`` with ``Y_lm`` the solid harmonic
    continued to complex arguments. Other shapes use surface quadrature.
    """
    rho = rho_array(rho)
    dom = basis.domain
    L = basis.max_degree
    if dom.is_ball:
        a = dom.radius_omega
        Y = real_solid_harmonics((a * rho)[None, :], L)[0]
        dfact = np.array([np.prod(np.arange(1, 2 * l + 2, 2), dtype=float) for l in basis.degrees])
        return 4 * np.pi * a * Y / dfact
    deg = trace_degree_for(rho, dom.sup_radius, L) if quad_degree is None else quad_degree
    nodes, weights = _surface_rule(basis, deg)
    return basis.evaluate(nodes).T @ (weights * exp_rho(rho, nodes))


def _surface_rule(basis: BoundaryBasis, degree: int) -> tuple[np.ndarray, np.ndarray]:
    if degree <= basis.quad_degree:
        return basis.nodes, basis.weights
    from .geometry import make_boundary_basis
    fine = make_boundary_basis(basis.domain, basis.max_degree, degree)
    return fine.nodes, fine.weights


def cgo_trace(w: GridField, rho, basis: BoundaryBasis, quad_degree: int | None = None) -> BoundaryFunction:
    """Boundary coefficients of ``e_rho (1 + w)``."""
    rho = rho_array(rho)
    deg = trace_degree_for(rho, basis.domain.sup_radius, basis.max_degree) if quad_degree is None else quad_degree
    nodes, weights = _surface_rule(basis, deg)
    wv = trig_eval(w.box, w.to_freq().values, nodes)
    extra = basis.evaluate(nodes).T @ (weights * exp_rho(rho, nodes) * wv)
    return BoundaryFunction(exp_rho_coefficients(rho, basis) + extra)


def contraction_estimate(pf: PotentialForm, rho, lam: float, R: float, iters: int = 15, seed: int = 0) -> float:
    """Power-iteration estimate of ``||Delta_rho^{-1} M_q||`` in the ``X^{1/2}_{lam,rho}`` norm."""
    rho = rho_array(rho)
    box = pf.box
    rng = np.random.default_rng(seed)
    x = GridField(box, rng.normal(size=(box.n,) * 3) + 1j * rng.normal(size=(box.n,) * 3))
    x = GridField(box, x.values / weighted_x_norm(x, rho, lam, R))
    est = 0.0
    for _ in range(iters):
        y = sq_apply(pf, x, rho)
        est = weighted_x_norm(y, rho, lam, R)
        if est == 0:
            return 0.0
        x = GridField(box, y.values / est)
    return float(est)


def default_upsample(box: PeriodicBox, fine_n: int = 256) -> int:
    """Refinement factor that tabulates kernels on a ``fine_n``-point axis."""
    return max(1, fine_n // box.n)


# ---------------------------------------------------------------------------
# boundary operator Gamma
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GammaOperator:
    """Matrix of ``Gamma`` in the boundary basis.

    ``kernel_cache`` holds the Galerkin matrix ``K_ka = int int b_k G_rho b_a``
    on the boundary, from which ``Gamma = K BI^T``.
    """

    matrix: np.ndarray
    rho: np.ndarray
    kernel_cache: np.ndarray
    meta: dict = field(default_factory=dict)

    @cached_property
    def condition(self) -> float:
        return float(np.linalg.cond(np.eye(len(self.matrix)) - self.matrix))

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def save(self, path) -> None:
        n = self.matrix.shape[0]
        header = {"size": n, "rho": [[float(c.real), float(c.imag)] for c in self.rho], "meta": self.meta}
        write_blob(path, header, np.concatenate([self.matrix.ravel(), self.kernel_cache.ravel()]))

    @classmethod
    def load(cls, path) -> "GammaOperator":
        header, data = read_blob(path)
        n = header["size"]
        rho = np.array([complex(a, b) for a, b in header["rho"]])
        return cls(data[: n * n].reshape(n, n), rho, data[n * n:].reshape(n, n), header.get("meta", {}))


def boundary_kernel_matrix(rho, basis: BoundaryBasis, box: PeriodicBox, quad_degree: int | None = None,
                           upsample: int | None = None) -> np.ndarray:
    """``K_ka = int int b_k(x) G_rho(x, y) b_a(y) dS dS`` on a ball.

    The free part is the single layer of a sphere, ``-a/(2l+1)`` on the
    diagonal; the smooth part ``H_rho`` is integrated by a product rule of
    degree high enough for ``e^{rho.(x-y)}``.
    """
    rho = rho_array(rho)
    dom = basis.domain
    if not dom.is_ball:
        raise CgoSolverError("the boundary kernel matrix is implemented for the ball only")
    a = dom.radius_omega
    deg = trace_degree_for(rho, 2 * a, basis.max_degree) if quad_degree is None else quad_degree
    dirs, w = sphere_quadrature(deg)
    nodes, weights = a * dirs, a * a * w
    table = KernelTable(rho, box, 2 * a, upsample=default_upsample(box) if upsample is None else upsample)
    B = basis.evaluate(nodes) * weights[:, None]
    K = np.zeros((basis.size, basis.size), complex)
    step = max(1, 4_000_000 // len(nodes))
    for s in range(0, len(nodes), step):
        H = table.H(nodes[s:s + step, None, :] - nodes[None, :, :])
        if not np.all(np.isfinite(H)):
            raise CgoSolverError("kernel cache incomplete: non-finite H values")
        K += B[s:s + step].T @ (H @ B)
    K[np.diag_indices_from(K)] += -a / (2 * basis.degrees + 1)
    return K


def assemble_gamma(dtn: DtnMatrix, rho, basis: BoundaryBasis, mesh: VolumeMesh | None = None,
                   box: PeriodicBox | None = None, kernel: np.ndarray | None = None,
                   quad_degree: int | None = None) -> GammaOperator:
    """Column ``j`` is the projection of ``x -> BI(phi_j, G_rho(x, .))``."""
    rho_v = rho_array(rho)
    if dtn.max_degree != basis.max_degree:
        raise CgoSolverError(f"DtN degree {dtn.max_degree} does not match basis degree {basis.max_degree}")
    if mesh is not None and dtn.mesh_hash and dtn.mesh_hash != mesh.content_hash:
        raise CgoSolverError("DtN matrix was assembled on a different mesh")
    if kernel is None:
        if box is None:
            raise CgoSolverError("kernel cache incomplete: pass a box or a precomputed kernel matrix")
        kernel = boundary_kernel_matrix(rho_v, basis, box, quad_degree)
    if kernel.shape != (basis.size, basis.size):
        raise CgoSolverError("kernel cache incomplete: wrong shape")
    W = bi_matrix(dtn, basis)
    return GammaOperator(kernel @ W.T, rho_v, kernel, {"basis_degree": basis.max_degree})


def fredholm_trace(gamma: GammaOperator, rho, basis: BoundaryBasis, rhs: np.ndarray | None = None) -> BoundaryFunction:
    """Solve ``(I - Gamma) c = e_rho|_boundary`` for the trace of the CGO solution."""
    b = exp_rho_coefficients(rho, basis) if rhs is None else np.asarray(rhs, complex)
    cond = gamma.condition
    if not cond < COND_LIMIT:
        raise FredholmError(f"I - Gamma has condition number {cond:.2e} > {COND_LIMIT:.0e}; increase L or n")
    return BoundaryFunction(np.linalg.solve(np.eye(len(b)) - gamma.matrix, b))


def gamma_volume_route(phantom, phi_coeffs: np.ndarray, rho, basis: BoundaryBasis, mesh: VolumeMesh,
                       box: PeriodicBox, upsample: int = 4, chunk: int = 4000) -> np.ndarray:
    """``T[S_q P_q phi]`` by volume quadrature, for smooth radial phantoms.

    ``P_q phi`` is the FEM Schrodinger solution and
    ``S_q v(x) = int G_rho(x, y) q(y) v(y) dy`` is integrated with the
    degree-2 tetrahedral rule using the pointwise ``q``; ``x`` runs over the
    basis quadrature nodes. ``phi_coeffs`` is one coefficient vector or a
    matrix with one column per boundary function.
    """
    from .forward import TET_QUAD, schrodinger_solver

    rho = rho_array(rho)
    phis = np.asarray(phi_coeffs)
    single = phis.ndim == 1
    phis = phis[:, None] if single else phis
    solver = schrodinger_solver(mesh, phantom)
    traces = basis.evaluate(mesh.vertices[mesh.boundary_vertices]) @ phis
    V = np.stack([solver.solve(traces[:, j]).values for j in range(phis.shape[1])], axis=1)
    yq = quadrature_points(mesh).reshape(-1, 3)
    vq = np.einsum("qk,tkj->tqj", TET_QUAD, V[mesh.tetrahedra]).reshape(-1, phis.shape[1])
    wq = np.repeat(mesh.volumes / 4.0, 4)
    q = pointwise_q(phantom, yq)
    keep = np.abs(q) > 0
    yq, src = yq[keep], (q * wq)[keep, None] * vq[keep]
    table = KernelTable(rho, box, 2 * basis.domain.sup_radius, upsample=upsample)
    out = np.zeros((len(basis.nodes), phis.shape[1]), complex)
    for s in range(0, len(yq), chunk):
        z = basis.nodes[:, None, :] - yq[None, s:s + chunk, :]
        out += table.G(z, np.zeros(3)) @ src[s:s + chunk]
    coeffs = basis.values.T @ (basis.weights[:, None] * out)
    return coeffs[:, 0] if single else coeffs

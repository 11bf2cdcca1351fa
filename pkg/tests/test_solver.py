import numpy as np
import pytest
from numpy.testing import assert_allclose

from cgo_calderon.cgo import exp_rho, make_rho_pair
from cgo_calderon.forward import assemble_dtn, sigma_on_mesh
from cgo_calderon.geometry import DomainSpec, make_boundary_basis, make_domain, make_periodic_box
from cgo_calderon.norms import random_bumps
from cgo_calderon.phantoms import make_phantom
from cgo_calderon.potential import mq_bilinear, potential_form
from cgo_calderon.solver import (CgoSolverError, FredholmError, GammaOperator, NeumannDivergence, assemble_gamma,
                                 contraction_estimate, exp_rho_coefficients, fixed_point_residual, fredholm_trace,
                                 functional_pairing, mq_apply_weak, solve_w)

DOM = DomainSpec()
R = DOM.R
XI = np.array([1.0, 0.0, 0.0])


def gaussian_form(rho, n=64):
    return potential_form(make_phantom("radial_gaussian"), DOM, make_periodic_box(R, n, rho))


@pytest.fixture(scope="module")
def fem():
    mesh = make_domain(DOM, 0.1)
    basis = make_boundary_basis(mesh, 8)
    return mesh, basis, assemble_dtn(sigma_on_mesh(make_phantom("radial_gaussian"), mesh), basis, mesh)


@pytest.mark.parametrize("tau", [1.0, 3.0, 6.0])
def test_exp_coefficients_match_quadrature(tau):
    rho = make_rho_pair(np.array([1.0, 0.5, 0.0]), tau, 0.7).rho
    basis = make_boundary_basis(DOM, 8)
    fine = make_boundary_basis(DOM, 8, 80)
    quad = fine.values.T @ (fine.weights * exp_rho(rho, fine.nodes))
    assert_allclose(exp_rho_coefficients(rho, basis), quad, atol=1e-12 * np.abs(quad).max())


def test_weak_application_matches_bilinear_form():
    rho = make_rho_pair(XI, 4.0, 0.3).rho
    pf = gaussian_form(rho)
    f = random_bumps(pf.box, R, 1, seed=1)[0]
    g = random_bumps(pf.box.mirrored(), R, 1, seed=2)[0]
    assert_allclose(functional_pairing(mq_apply_weak(pf, f), g), mq_bilinear(pf, f, g), rtol=1e-10)


def test_direct_and_neumann_agree_at_small_rho():
    rho = make_rho_pair(XI, 2.0, 0.3).rho
    pf = gaussian_form(rho, 32)
    direct = solve_w(pf, rho, "direct")
    neumann = solve_w(pf, rho, "neumann")
    assert neumann.neumann_terms > 1
    assert_allclose(neumann.w.values, direct.w.values, atol=1e-9 * np.abs(direct.w.values).max())
    assert fixed_point_residual(pf, direct.w, rho) < 1e-10


def test_unit_conductivity_gives_trivial_remainder():
    rho = make_rho_pair(XI, 3.0, 0.3).rho
    pf = potential_form(make_phantom("constant"), DOM, make_periodic_box(R, 32, rho))
    sol = solve_w(pf, rho, basis=make_boundary_basis(DOM, 4))
    assert np.abs(sol.w.values).max() == 0.0
    assert_allclose(sol.v_boundary.coeffs, exp_rho_coefficients(rho, make_boundary_basis(DOM, 4)))


def test_neumann_divergence_is_reported():
    # a strong potential at small |rho| makes the series diverge
    rho = make_rho_pair(XI, 1.0, 0.3).rho
    pf = potential_form(make_phantom("radial_gaussian", amplitude=30.0), DOM, make_periodic_box(R, 32, rho))
    with pytest.raises(NeumannDivergence):
        solve_w(pf, rho, "neumann")


def test_contraction_decreases_with_rho():
    ests = []
    for tau in (4.0, 8.0):
        rho = make_rho_pair(XI, tau, 0.3).rho
        ests.append(contraction_estimate(gaussian_form(rho, 32), rho, 2.0, R))
    assert ests[1] < ests[0]


def test_unit_conductivity_gamma_vanishes():
    mesh = make_domain(DOM, 0.2)
    basis = make_boundary_basis(mesh, 4)
    rho = make_rho_pair(XI, 2.0, 0.3).rho
    dtn = assemble_dtn(sigma_on_mesh(make_phantom("constant"), mesh), basis, mesh)
    gamma = assemble_gamma(dtn, rho, basis, mesh, make_periodic_box(R, 32, rho))
    assert gamma.norm() < 1e-10 * np.abs(gamma.kernel_cache).max()
    assert_allclose(fredholm_trace(gamma, rho, basis).coeffs, exp_rho_coefficients(rho, basis), rtol=1e-10)


@pytest.mark.parametrize("tau", [1.0, 3.0])
def test_boundary_route_matches_grid_route(fem, tau):
    mesh, basis, dtn = fem
    rho = make_rho_pair(XI, tau, 0.3).rho
    box = make_periodic_box(R, 64, rho)
    grid = solve_w(potential_form(make_phantom("radial_gaussian"), DOM, box), rho, basis=basis)
    bnd = fredholm_trace(assemble_gamma(dtn, rho, basis, mesh, box), rho, basis)
    ref = grid.v_boundary.coeffs
    assert np.linalg.norm(bnd.coeffs - ref) / np.linalg.norm(ref) < 5e-3


def test_gamma_roundtrip_and_checks(tmp_path, fem):
    mesh, basis, dtn = fem
    rho = make_rho_pair(XI, 1.0, 0.3).rho
    gamma = assemble_gamma(dtn, rho, basis, mesh, make_periodic_box(R, 32, rho))
    gamma.save(tmp_path / "g.bin")
    back = GammaOperator.load(tmp_path / "g.bin")
    assert_allclose(back.matrix, gamma.matrix, atol=0)
    assert_allclose(back.kernel_cache, gamma.kernel_cache, atol=0)
    assert_allclose(back.rho, rho, atol=0)
    with pytest.raises(CgoSolverError, match="different mesh"):
        assemble_gamma(dtn, rho, basis, make_domain(DOM, 0.2), kernel=gamma.kernel_cache)
    with pytest.raises(CgoSolverError, match="kernel cache"):
        assemble_gamma(dtn, rho, basis, mesh)


def test_ill_conditioned_gamma_is_refused():
    basis = make_boundary_basis(DOM, 1)
    rho = make_rho_pair(XI, 1.0, 0.3).rho
    # one eigenvalue of Gamma next to 1
    gamma = GammaOperator(np.diag([1 - 1e-14, 0.0, 0.0, 0.0]), rho, np.eye(basis.size))
    with pytest.raises(FredholmError):
        fredholm_trace(gamma, rho, basis)

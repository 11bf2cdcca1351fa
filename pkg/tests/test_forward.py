import numpy as np
import pytest
from numpy.testing import assert_allclose

from cgo_calderon.checks import alessandrini_check
from cgo_calderon.forward import (BoundaryFunction, DtnMatrix, ForwardError, assemble_dtn, bi_matrix,
                                  boundary_integral, harmonic_extension, radial_dtn, radial_dtn_eigenvalues,
                                  sigma_on_mesh, solve_conductivity)
from cgo_calderon.geometry import DomainSpec, make_boundary_basis, make_domain
from cgo_calderon.phantoms import make_phantom

DOM = DomainSpec()
# sigma(1) f_l'(1)/f_l(1) - l for the default radial Gaussian, from the radial ODE
GAUSSIAN_SHIFT = [0.0, 0.0426095954, 0.0409078942, 0.0349468974, 0.0290458408,
                  0.0238775683, 0.0195113713, 0.0158838995, 0.0129000695]


@pytest.fixture(scope="module")
def coarse():
    mesh = make_domain(DOM, 0.2)
    return mesh, make_boundary_basis(mesh, 4)


def test_radial_oracle_constant_and_gaussian():
    assert_allclose(radial_dtn_eigenvalues(make_phantom("constant", value=4.0), 4), 4.0 * np.arange(5), atol=1e-9)
    lam = radial_dtn_eigenvalues(make_phantom("radial_gaussian"), 8)
    assert_allclose(lam - np.arange(9), GAUSSIAN_SHIFT, atol=1e-9)


def test_radial_oracle_rejects_offset_phantom():
    with pytest.raises(ForwardError):
        radial_dtn_eigenvalues(make_phantom("offset_bump"), 2)


def test_linear_functions_extend_exactly(coarse):
    mesh, _ = coarse
    u = harmonic_extension(lambda p: 2 * p[:, 0] - p[:, 2] + 0.5, mesh)
    assert_allclose(u.values, 2 * mesh.vertices[:, 0] - mesh.vertices[:, 2] + 0.5, atol=1e-12)
    assert u.residual < 1e-10


def test_constant_conductivity_scales_solution(coarse):
    mesh, basis = coarse
    phi = BoundaryFunction(np.random.default_rng(0).normal(size=basis.size))
    u1 = solve_conductivity(sigma_on_mesh(make_phantom("constant"), mesh), phi, mesh, basis)
    u3 = solve_conductivity(sigma_on_mesh(make_phantom("constant", value=3.0), mesh), phi, mesh, basis)
    assert_allclose(u1.values, u3.values, atol=1e-12)


def test_unit_conductivity_dtn_equals_free_and_bi_vanishes(coarse):
    mesh, basis = coarse
    dtn = assemble_dtn(sigma_on_mesh(make_phantom("constant"), mesh), basis, mesh)
    assert_allclose(dtn.entries, dtn.free_entries, atol=0)
    assert np.abs(bi_matrix(dtn, basis)).max() == 0.0
    assert dtn.symmetry_defect() == 0.0
    # P1 Galerkin error on the diagonal is O(h^2 l^2)
    assert_allclose(np.diag(dtn.entries).real[1:], basis.degrees[1:], rtol=0.1)


def test_dtn_converges_to_radial_oracle():
    errs = []
    for h in (0.2, 0.1):
        mesh = make_domain(DOM, h)
        basis = make_boundary_basis(mesh, 4)
        dtn = assemble_dtn(sigma_on_mesh(make_phantom("radial_gaussian"), mesh), basis, mesh)
        W = np.diag(bi_matrix(dtn, basis)).real
        errs.append(np.abs(W - np.array(GAUSSIAN_SHIFT)[basis.degrees]).max())
    # second order in h
    assert errs[1] < errs[0] / 3.5
    assert errs[1] < 4e-3


def test_oracle_dtn_bi_is_diagonal_shift():
    basis = make_boundary_basis(DOM, 8)
    dtn = radial_dtn(make_phantom("radial_gaussian"), basis)
    assert_allclose(np.diag(bi_matrix(dtn, basis)).real, np.array(GAUSSIAN_SHIFT)[basis.degrees], atol=1e-9)


def test_dtn_roundtrip_and_scaling(tmp_path, coarse):
    mesh, basis = coarse
    dtn = assemble_dtn(sigma_on_mesh(make_phantom("offset_bump"), mesh), basis, mesh)
    dtn.save(tmp_path / "d.bin")
    back = DtnMatrix.load(tmp_path / "d.bin")
    assert_allclose(back.entries, dtn.entries, atol=0)
    assert_allclose(back.free_entries, dtn.free_entries, atol=0)
    assert back.mesh_hash == mesh.content_hash
    phi = BoundaryFunction(np.eye(basis.size)[1])
    psi = BoundaryFunction(np.eye(basis.size)[3])
    a = boundary_integral(dtn, phi, psi, basis)
    b = boundary_integral(dtn.scaled(2.0), phi, psi, basis)
    assert_allclose(b - a, phi.coeffs @ basis.multiplication_matrix(dtn.sigma_boundary ** -0.5)
                    @ dtn.entries @ basis.multiplication_matrix(dtn.sigma_boundary ** -0.5) @ psi.coeffs)


def test_alessandrini_identity_improves_under_refinement():
    ph = make_phantom("radial_gaussian")
    errs = []
    for h in (0.2, 0.1):
        mesh = make_domain(DOM, h)
        errs.append(alessandrini_check(ph, mesh, make_boundary_basis(mesh, 6), 20)["relative_error"])
    assert errs[1] < errs[0]
    assert errs[1] < 0.05

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cgo_calderon.forward import sigma_on_mesh
from cgo_calderon.geometry import DomainSpec, make_domain
from cgo_calderon.phantoms import PhantomError, make_phantom


def test_constant_phantom():
    ph = make_phantom("constant", value=2.5)
    p = np.random.default_rng(0).normal(size=(10, 3))
    assert_allclose(ph.sigma(p), 2.5)
    assert_allclose(ph.grad_log_sigma(p), 0.0)
    assert ph.lower_bound == 2.5 and ph.lipschitz_bound == 0.0


def test_gaussian_bounds():
    ph = make_phantom("radial_gaussian")
    assert ph.lower_bound == pytest.approx(1.0)
    # max of 0.3 (2d/w^2) exp(-d^2/w^2) sits at d = w/sqrt(2), inside the untapered core
    expected = 0.3 * 2 * (0.5 / np.sqrt(2)) / 0.25 * np.exp(-0.5)
    assert ph.lipschitz_bound == pytest.approx(expected, rel=1e-8)


def test_gaussian_is_one_near_boundary():
    ph = make_phantom("radial_gaussian")
    d = np.linspace(0.95, 1.0, 11)
    p = np.stack([d, 0 * d, 0 * d], axis=1)
    assert_allclose(ph.sigma(p), 1.0)
    assert_allclose(ph.grad_sigma(p), 0.0)


def test_shell_lipschitz_is_ramp_slope():
    ph = make_phantom("radial_shell")
    assert ph.lipschitz_bound == pytest.approx(1.0 / 0.05)


def test_gradient_matches_finite_difference():
    ph = make_phantom("offset_bump")
    p = np.array([[0.35, 0.1, -0.05]])
    h = 1e-6
    fd = np.array([(ph.sigma(p + h * e) - ph.sigma(p - h * e))[0] / (2 * h) for e in np.eye(3)])
    assert_allclose(ph.grad_sigma(p)[0], fd, rtol=1e-6)


def test_negative_conductivity_rejected():
    with pytest.raises(PhantomError):
        make_phantom("radial_gaussian", amplitude=-1.5)
    with pytest.raises(PhantomError):
        make_phantom("constant", value=0.0)
    with pytest.raises(PhantomError):
        make_phantom("radial_gaussian", color=1)
    with pytest.raises(PhantomError):
        make_phantom("spiral")


def test_sigma_on_mesh_matches_phantom():
    mesh = make_domain(DomainSpec(), 0.25)
    ph = make_phantom("radial_gaussian")
    s = sigma_on_mesh(ph, mesh)
    assert_allclose(s.values, ph.sigma(mesh.vertices))
    assert_allclose(s.boundary_values, 1.0)

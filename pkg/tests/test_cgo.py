import numpy as np
import pytest
from numpy.testing import assert_allclose

from cgo_calderon.cgo import CgoError, exp_rho, make_rho_pair, sample_average_set


@pytest.mark.parametrize("xi", [(0.5, 0, 0), (0.3, -0.7, 1.1), (0, 0, 0)])
def test_rho_pair_identities(xi):
    xi = np.array(xi, float)
    c = make_rho_pair(xi, 3.0, 0.7)
    assert abs(c.rho @ c.rho) < 1e-12
    assert abs(c.rho_prime @ c.rho_prime) < 1e-12
    assert_allclose(c.rho + c.rho_prime, -1j * xi, atol=0)
    assert c.abs_rho == pytest.approx(np.sqrt(2) * 3.0)
    assert abs(c.rho @ c.rho_prime + xi @ xi / 2) < 1e-12


def test_rho_pair_needs_tau_above_half_xi():
    with pytest.raises(CgoError):
        make_rho_pair(np.array([4.0, 0, 0]), 1.9, 0.0)


def test_average_set_weights_sum_to_one():
    nodes = sample_average_set(np.array([1.0, 0, 0]), 3.0, 4, 8)
    assert len(nodes) == 32
    assert sum(n.weight for n in nodes) == pytest.approx(1.0)
    taus = sorted({n.tau for n in nodes})
    assert_allclose(taus, 3 + 3 * (np.arange(4) + 0.5) / 4)


def test_exp_rho_overflow_guard():
    rho = np.array([800.0, 800j, 0])
    with pytest.raises(CgoError):
        exp_rho(rho, np.array([[1.0, 0, 0]]))
    assert_allclose(exp_rho(np.array([1.0, 1j, 0]), np.array([[0.5, 0.25, 0]])), [np.exp(0.5 + 0.25j)])

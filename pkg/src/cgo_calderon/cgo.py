"""Complex frequency pairs, the symbol of the conjugated Laplacian and the
(tau, theta) averaging set."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PeriodicBox, symbol_on_box

OVERFLOW_EXPONENT = 700.0


class CgoError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CgoVector:
    """Null vectors ``rho``, ``rho_prime`` with ``rho + rho_prime = -i xi``."""

    rho: np.ndarray
    rho_prime: np.ndarray
    xi: np.ndarray
    tau: float
    theta: np.ndarray
    vartheta: np.ndarray
    weight: float = 1.0

    @property
    def abs_rho(self) -> float:
        return float(np.linalg.norm(self.rho))


def plane_basis(xi) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal basis of the plane orthogonal to ``xi``."""
    xi = np.asarray(xi, float)
    nrm = np.linalg.norm(xi)
    if nrm == 0:
        return np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    xh = xi / nrm
    a = np.array([0, 1.0, 0]) if abs(xh[0]) > 0.9 else np.array([1.0, 0, 0])
    b1 = np.cross(xh, a)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(xh, b1)
    return b1, b2


def make_rho_pair(xi, tau: float, theta_angle: float, weight: float = 1.0) -> CgoVector:
    """Build ``rho = tau theta + i(-xi/2 + s vartheta)`` and its partner.

    ``s = sqrt(tau^2 - |xi|^2/4)``; ``rho_prime`` is formed as ``-i xi - rho``
    so that the sum is exact in floating point.
    """
    xi = np.asarray(xi, float)
    nx = np.linalg.norm(xi)
    if tau <= nx / 2:
        raise CgoError(f"tau={tau} must exceed |xi|/2={nx / 2}")
    b1, b2 = plane_basis(xi)
    theta = np.cos(theta_angle) * b1 + np.sin(theta_angle) * b2
    if nx > 0:
        vartheta = np.cross(xi / nx, theta)
    else:
        vartheta = np.cross(np.array([0, 0, 1.0]), theta)
    s = np.sqrt(tau * tau - nx * nx / 4)
    rho = tau * theta + 1j * (-xi / 2 + s * vartheta)
    rho_prime = -1j * xi - rho
    return CgoVector(rho, rho_prime, xi, float(tau), theta, vartheta, weight)


def symbol_m(rho, box: PeriodicBox) -> np.ndarray:
    """``m_rho`` at every offset grid frequency of ``box``."""
    return symbol_on_box(rho, box)


def exp_rho(rho, points: np.ndarray) -> np.ndarray:
    """``exp(rho . x)`` with a hard guard against overflow."""
    rho = np.asarray(rho, complex)
    p = np.asarray(points, float)
    expo = p @ rho
    worst = np.abs(expo.real).max() if expo.size else 0.0
    if worst > OVERFLOW_EXPONENT:
        bound = np.linalg.norm(rho) * np.linalg.norm(p, axis=-1).max()
        raise CgoError(f"|Re rho.x| reaches {worst:.1f} > {OVERFLOW_EXPONENT} (|rho| sup|x| = {bound:.1f})")
    return np.exp(expo)


def sample_average_set(xi, T: float, n_tau: int, n_theta: int) -> list[CgoVector]:
    """Midpoint rule in ``tau`` on ``[T, 2T]`` times uniform angles.

    The weights already contain the ``1/(2 pi T)`` normalization and sum
    to one.
    """
    xi = np.asarray(xi, float)
    if T <= max(1.0, np.linalg.norm(xi) / 2):
        raise CgoError("T must exceed max(1, |xi|/2)")
    taus = T + T * (np.arange(n_tau) + 0.5) / n_tau
    angles = 2 * np.pi * np.arange(n_theta) / n_theta
    w = 1.0 / (n_tau * n_theta)
    return [make_rho_pair(xi, t, a, w) for t in taus for a in angles]

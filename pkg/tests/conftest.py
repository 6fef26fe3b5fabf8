import numpy as np
import pytest
from scipy.linalg import sqrtm

from gwpdyn.packet import PacketParams


def random_valid_pair(rng, d, spread=0.3):
    """Random (Q, P) satisfying both symplectic matrix relations.

    Valid Q factor as (real SPD) x (unitary); P = B Q with B complex
    symmetric and Im B = (Q Q*)^-1.
    """
    A = np.eye(d) + spread * rng.standard_normal((d, d))
    M = A @ A.T + 0.5 * np.eye(d)
    W, _ = np.linalg.qr(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
    Q = np.asarray(sqrtm(M), dtype=complex) @ W
    Bre = rng.standard_normal((d, d))
    B = spread * (Bre + Bre.T) / 2.0 + 1j * np.linalg.inv(M)
    return Q, B @ Q


def random_packet(rng, d, eps, spread=0.3, q_scale=0.5, p_scale=0.5):
    Q, P = random_valid_pair(rng, d, spread)
    return PacketParams(q_scale * rng.standard_normal(d), p_scale * rng.standard_normal(d),
                        Q, P, float(rng.standard_normal()), eps)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

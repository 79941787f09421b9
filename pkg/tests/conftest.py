"""Shared independent oracles: dense operators, expm rotations, brute sums."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from spintwist import estimator as est
from spintwist import spinstate as ss


def dense_operator(n, axis):
    """(N+1)x(N+1) collective operator built directly from ladder elements."""
    j = n / 2.0
    m = np.arange(n + 1) - j
    dim = n + 1
    jp = np.zeros((dim, dim), dtype=complex)
    for k in range(n):
        jp[k + 1, k] = math.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jm = jp.conj().T
    if axis == "x":
        return (jp + jm) / 2.0
    if axis == "y":
        return (jp - jm) / (2.0j)
    return np.diag(m.astype(complex))


def dense_rotation(n, axis, theta):
    return expm(-1j * theta * dense_operator(n, axis))


def random_state(rng, n):
    amps = rng.standard_normal(n + 1) + 1j * rng.standard_normal(n + 1)
    amps /= np.linalg.norm(amps)
    return ss.CollectiveState(n, amps)


def random_twisted_state(rng, n):
    """Parity-symmetric state from random twists and x-rotations."""
    state = ss.coherent_x(n)
    for _ in range(rng.integers(1, 4)):
        state = ss.apply_twist(state, float(rng.uniform(-0.5, 0.5)) / n**0.5)
        state = ss.apply_rotation(state, "x", float(rng.uniform(-1.5, 1.5)))
    return state


def brute_force_error(protocol):
    """Direct quadrature + fully nested outcome sums (no operator shortcut)."""
    nodes, weights = np.polynomial.hermite.hermgauss(protocol.quadrature_nodes)
    phis = protocol.prior_mean + math.sqrt(2.0) * protocol.prior_sigma * nodes
    ws = weights / math.sqrt(math.pi)
    total = 0.0

    def recurse(k, phi, acc_est, weight):
        nonlocal total
        if k == len(protocol.ensembles):
            total += weight * (phi - acc_est) ** 2
            return
        ens = protocol.ensembles[k]
        p = est.conditional_outcome_dist(ens.state, phi - acc_est)
        for i, m in enumerate(ens.state.m_values):
            recurse(k + 1, phi, acc_est + 2.0 * m / ens.n_particles, weight * p[i])

    for phi, w in zip(phis, ws):
        recurse(0, phi, protocol.prior_mean, w)
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

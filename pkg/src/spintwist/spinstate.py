"""Exact state-vector simulation of N spin-1/2 particles in the symmetric subspace.

States live in the (N+1)-dimensional maximal-spin sector and are stored as
complex amplitudes over the J_z eigenbasis |m>, m = -N/2 ... N/2 (index
i <-> m = i - N/2).  Rotations about x/y go through a cached one-time
eigendecomposition of the tridiagonal collective operator; twists and
z-rotations are diagonal phases.  All operations are pure and return new
states.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

__all__ = [
    "CollectiveState",
    "RotationCache",
    "rotation_cache",
    "coherent_x",
    "gss",
    "apply_twist",
    "apply_rotation",
    "measurement_distribution",
    "husimi_q",
]

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class CollectiveState:
    """Normalized amplitudes over the Dicke basis |J_z = m>, m = i - N/2."""

    n_particles: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError(f"n_particles must be >= 1, got {self.n_particles}")
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.n_particles + 1,):
            raise ValueError(
                f"amplitudes must have length N+1 = {self.n_particles + 1}, "
                f"got shape {amps.shape}"
            )
        norm2 = float(np.sum(np.abs(amps) ** 2))
        if abs(norm2 - 1.0) > _NORM_TOL:
            raise ValueError(f"state not normalized: sum |a_m|^2 = {norm2!r}")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def m_values(self) -> np.ndarray:
        """J_z eigenvalues m = -N/2 ... N/2 aligned with the amplitude index."""
        return np.arange(self.n_particles + 1) - self.n_particles / 2.0


def _ladder_couplings(n: int) -> np.ndarray:
    """Off-diagonal elements <m+1|J_+|m> = sqrt(J(J+1) - m(m+1)), length N."""
    j = n / 2.0
    m = np.arange(n) - j
    return np.sqrt(j * (j + 1) - m * (m + 1))


@dataclass(frozen=True)
class RotationCache:
    """Eigendecomposition of J_x for one N, reused for x/y rotations and bases.

    x_vectors columns are J_x eigenvectors in the z basis (real orthogonal);
    eigenvalues are snapped to the exact grid {-N/2, ..., N/2}.  The J_y
    eigenbasis is x_vectors with rows rephased by y_phase = (-i)^k, since
    J_y = D J_x D^dagger for D = diag((-i)^k).
    """

    n_particles: int
    eigenvalues: np.ndarray
    x_vectors: np.ndarray
    y_phase: np.ndarray


@functools.lru_cache(maxsize=4)
def rotation_cache(n: int) -> RotationCache:
    """Build (or fetch) the J_x eigendecomposition for N particles."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    c = _ladder_couplings(n)
    vals, vecs = eigh_tridiagonal(np.zeros(n + 1), c / 2.0)
    m_grid = np.arange(n + 1) - n / 2.0
    dev = float(np.max(np.abs(vals - m_grid)))
    if dev > 1e-9:
        raise RuntimeError(f"J_x eigenvalues deviate from half-integer grid by {dev}")
    vecs.flags.writeable = False
    phase = (-1j) ** np.arange(n + 1)
    phase.flags.writeable = False
    grid = m_grid.copy()
    grid.flags.writeable = False
    return RotationCache(n, grid, vecs, phase)


def coherent_x(n: int) -> CollectiveState:
    """Coherent spin state |J_x = N/2> expanded in the J_z basis.

    a_m = 2^{-N/2} sqrt(C(N, N/2+m)); square roots via log-gamma so N > 1000
    does not overflow.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    k = np.arange(n + 1)
    log_amp = 0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)) \
        - 0.5 * n * np.log(2.0)
    amps = np.exp(log_amp).astype(np.complex128)
    amps /= np.linalg.norm(amps)
    return CollectiveState(n, amps)


def gss(n: int, s2: float, axis: str = "z") -> CollectiveState:
    """Gaussian spin-squeezed state: amplitudes ~ exp(-m^2/(s2*N)) in one basis.

    axis "z" builds the profile directly in the stored basis; axis "y"
    rigidly rotates that state so the profile sits over the J_y eigenvalues
    (|y_m> = exp(i pi/2 J_x) |z_m>), keeping the uncertainty ellipse
    untilted.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if s2 <= 0:
        raise ValueError(f"s2 must be positive, got {s2}")
    if axis not in ("y", "z"):
        raise ValueError(f"axis must be 'y' or 'z', got {axis!r}")
    m = np.arange(n + 1) - n / 2.0
    profile = np.exp(-(m**2) / (s2 * n) + (m**2).min() / (s2 * n))
    profile = profile.astype(np.complex128)
    profile /= np.linalg.norm(profile)
    state = CollectiveState(n, profile)
    if axis == "z":
        return state
    return apply_rotation(state, "x", -math.pi / 2.0)


def apply_twist(state: CollectiveState, chi: float) -> CollectiveState:
    """One-axis twist exp(-i chi J_z^2): diagonal phase e^{-i chi m^2}."""
    m = state.m_values
    amps = state.amplitudes * np.exp(-1j * chi * m**2)
    return CollectiveState(state.n_particles, amps)


def apply_rotation(state: CollectiveState, axis: str, theta: float) -> CollectiveState:
    """Global rotation exp(-i theta J_axis) |psi>."""
    if axis == "z":
        amps = state.amplitudes * np.exp(-1j * theta * state.m_values)
        return CollectiveState(state.n_particles, amps)
    cache = rotation_cache(state.n_particles)
    phases = np.exp(-1j * theta * cache.eigenvalues)
    if axis == "x":
        coeff = cache.x_vectors.T @ state.amplitudes
        amps = cache.x_vectors @ (phases * coeff)
    elif axis == "y":
        coeff = cache.x_vectors.T @ (np.conj(cache.y_phase) * state.amplitudes)
        amps = cache.y_phase * (cache.x_vectors @ (phases * coeff))
    else:
        raise ValueError(f"axis must be 'x', 'y' or 'z', got {axis!r}")
    return CollectiveState(state.n_particles, amps)


def basis_amplitudes(state: CollectiveState, axis: str) -> np.ndarray:
    """Amplitudes <J_axis = m|psi> for m ascending."""
    if axis == "z":
        return state.amplitudes.copy()
    cache = rotation_cache(state.n_particles)
    if axis == "x":
        return cache.x_vectors.T @ state.amplitudes
    if axis == "y":
        return cache.x_vectors.T @ (np.conj(cache.y_phase) * state.amplitudes)
    raise ValueError(f"axis must be 'x', 'y' or 'z', got {axis!r}")


def measurement_distribution(state: CollectiveState, axis: str) -> np.ndarray:
    """Outcome probabilities p_m = |<J_axis = m|psi>|^2, clamped at zero."""
    p = np.abs(basis_amplitudes(state, axis)) ** 2
    return np.maximum(p, 0.0)


def husimi_q(state: CollectiveState, grid) -> np.ndarray:
    """Q(theta, phi) = |<css(theta, phi)|psi>|^2 over (polar, azimuth) pairs.

    Coherent-state overlap convention: <m|theta,phi> has modulus
    sqrt(C(N,k)) cos^k(theta/2) sin^{N-k}(theta/2), k = m + N/2, so the
    output lies in [0, 1] and peaks where the state points.
    """
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    if pts.shape[-1] != 2:
        raise ValueError("grid must be a sequence of (polar, azimuth) pairs")
    n = state.n_particles
    k = np.arange(n + 1)
    log_binom = 0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))
    half = pts[:, 0] / 2.0
    # clamp so the poles give exp(k * log 0) = 0 without -inf arithmetic
    log_cos = np.log(np.clip(np.abs(np.cos(half)), 1e-300, None))
    log_sin = np.log(np.clip(np.abs(np.sin(half)), 1e-300, None))
    log_mag = (
        log_binom[None, :]
        + k[None, :] * log_cos[:, None]
        + (n - k)[None, :] * log_sin[:, None]
    )
    css = np.exp(log_mag) * np.exp(1j * k[None, :] * pts[:, 1][:, None])
    overlap = np.conj(css) @ state.amplitudes
    q = np.abs(overlap) ** 2
    return np.minimum(np.maximum(q, 0.0), 1.0)


def apply_operator(state: CollectiveState, axis: str) -> np.ndarray:
    """J_axis |psi> as a raw amplitude vector (tridiagonal application)."""
    a = state.amplitudes
    if axis == "z":
        return state.m_values * a
    c = _ladder_couplings(state.n_particles)
    out = np.zeros_like(a)
    if axis == "x":
        out[1:] += 0.5 * c * a[:-1]
        out[:-1] += 0.5 * c * a[1:]
    elif axis == "y":
        out[1:] += -0.5j * c * a[:-1]
        out[:-1] += 0.5j * c * a[1:]
    else:
        raise ValueError(f"axis must be 'x', 'y' or 'z', got {axis!r}")
    return out

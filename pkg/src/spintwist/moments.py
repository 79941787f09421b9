"""Spin moments, squeezing parameters, optimal quadrature angles, kurtoses.

All quantities are exact sums over measurement eigenbases of a
CollectiveState; fourth moments come from the outcome distributions rather
than operator powers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .spinstate import CollectiveState, apply_operator, measurement_distribution

__all__ = [
    "MomentSet",
    "DegenerateOrientationError",
    "UndefinedKurtosisError",
    "DegeneracyWarning",
    "compute_moments",
    "wineland_xi2",
    "rotated_xibar2",
    "min_variance_angle",
    "min_variance",
    "min_xi2",
    "kurtosis",
]


class DegenerateOrientationError(ValueError):
    """Mean spin direction vanishes; squeezing parameters are undefined."""


class UndefinedKurtosisError(ValueError):
    """Variance along the requested axis is zero."""


class DegeneracyWarning(UserWarning):
    """Moments are isotropic in the y-z plane; optimal angle is arbitrary."""


@dataclass(frozen=True)
class MomentSet:
    """First/second/fourth collective-spin moments of one state.

    jx2 etc. are raw second moments <J_mu^2>; cov_yz is the symmetrized
    covariance (1/2)<{J_y, J_z}> - <J_y><J_z>.
    """

    n_particles: int
    jx: float
    jy: float
    jz: float
    jx2: float
    jy2: float
    jz2: float
    cov_yz: float
    jy4: float
    jz4: float

    @property
    def var_x(self) -> float:
        return self.jx2 - self.jx**2

    @property
    def var_y(self) -> float:
        return self.jy2 - self.jy**2

    @property
    def var_z(self) -> float:
        return self.jz2 - self.jz**2

    @property
    def anticomm_yz(self) -> float:
        """<{J_y, J_z}>."""
        return 2.0 * (self.cov_yz + self.jy * self.jz)


def compute_moments(state: CollectiveState) -> MomentSet:
    m = state.m_values
    moments = {}
    for axis in ("x", "y", "z"):
        p = measurement_distribution(state, axis)
        moments[axis] = (float(p @ m), float(p @ m**2), float(p @ m**4))
    jz_psi = apply_operator(state, "z")
    jy_jz_psi = np.conj(state.amplitudes) @ _apply_y(state.n_particles, jz_psi)
    half_anti = float(np.real(jy_jz_psi))  # (1/2)<{J_y,J_z}> since <J_z J_y> = conj
    jx, jx2, _ = moments["x"]
    jy, jy2, jy4 = moments["y"]
    jz, jz2, jz4 = moments["z"]
    return MomentSet(
        n_particles=state.n_particles,
        jx=jx, jy=jy, jz=jz,
        jx2=jx2, jy2=jy2, jz2=jz2,
        cov_yz=half_anti - jy * jz,
        jy4=jy4, jz4=jz4,
    )


def _apply_y(n: int, vec: np.ndarray) -> np.ndarray:
    from .spinstate import _ladder_couplings

    c = _ladder_couplings(n)
    out = np.zeros_like(vec)
    out[1:] += -0.5j * c * vec[:-1]
    out[:-1] += 0.5j * c * vec[1:]
    return out


def _check_orientation(m: MomentSet) -> None:
    if abs(m.jx) ** 2 <= 1e-12 * m.n_particles**2:
        raise DegenerateOrientationError(
            f"<J_x> = {m.jx} too small for a squeezing parameter at N = {m.n_particles}"
        )


def wineland_xi2(m: MomentSet) -> float:
    """Wineland squeezing parameter N Var(J_y) / <J_x>^2."""
    _check_orientation(m)
    return m.n_particles * m.var_y / m.jx**2


def rotated_xibar2(m: MomentSet, sigma: float) -> float:
    """Prior-averaged squeezing N [Var(J_y) + sigma^2 Var(J_x)] / <J_x>^2.

    sigma is the standard deviation of the phase prior.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    _check_orientation(m)
    return m.n_particles * (m.var_y + sigma**2 * m.var_x) / m.jx**2


def min_variance_angle(m: MomentSet) -> float:
    """Angle theta* = (1/2) arctan2(<{J_y,J_z}>, <J_z^2> - <J_y^2>).

    The quadrature cos(theta*) J_y - sin(theta*) J_z has the minimal variance
    among all directions in the y-z plane; equivalently an x-rotation by
    theta* moves the squeezed direction onto J_y.
    """
    g = m.anticomm_yz
    d = m.jz2 - m.jy2
    if abs(g) <= 1e-12 * m.n_particles**2 and abs(d) <= 1e-12 * m.n_particles**2:
        warnings.warn("isotropic y-z moments; returning 0", DegeneracyWarning)
        return 0.0
    return 0.5 * float(np.arctan2(g, d))


def min_variance(m: MomentSet) -> float:
    """Minimal variance over quadratures cos(t) J_y - sin(t) J_z."""
    g = m.anticomm_yz - 2.0 * m.jy * m.jz
    return 0.5 * (m.var_y + m.var_z - np.hypot(m.var_z - m.var_y, g))


def min_xi2(m: MomentSet) -> float:
    """Squeezing parameter along the best quadrature, N V_min / <J_x>^2.

    Invariant under further x-rotations, so it is the value a preparation
    schedule would realize on J_y after its final alignment rotation.
    """
    _check_orientation(m)
    return m.n_particles * min_variance(m) / m.jx**2


def kurtosis(state: CollectiveState, axis: str) -> float:
    """Kurt[J_axis] = <(J - <J>)^4> / Var(J)^2 of the outcome distribution."""
    if axis not in ("y", "z"):
        raise ValueError(f"axis must be 'y' or 'z', got {axis!r}")
    p = measurement_distribution(state, axis)
    m = state.m_values
    mean = float(p @ m)
    centered = m - mean
    var = float(p @ centered**2)
    if var <= 1e-12 * state.n_particles:
        raise UndefinedKurtosisError(f"zero variance along {axis}")
    fourth = float(p @ centered**4)
    return fourth / var**2

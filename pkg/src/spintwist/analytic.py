"""Closed-form moment theory of twisted Gaussian states.

Covers the approximate spin moments of exp(-i chi J_z^2) acting on a
Gaussian profile of width s^2 in the J_z basis, the optimal twist angles
(unrotated and prior-averaged), the squeezing recursions, the root
equations used to fix finite-size twist angles, and the kurtosis-bounded
weakly non-Gaussian optimum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

__all__ = [
    "TwistedGaussianMoments",
    "RecursionState",
    "RegimeWarning",
    "RootBracketError",
    "tg_moments",
    "theta_alignment",
    "chi_star_unrotated",
    "solve_state1",
    "solve_state3",
    "tg_recursion",
    "s2_pattern",
    "chi_pattern",
    "weakly_ng_optimum",
    "min_variance_sinh",
    "min_variance_series",
    "var_x_series",
]


class RegimeWarning(UserWarning):
    """Inputs fall outside the asymptotic regime the closed form assumes."""


class RootBracketError(RuntimeError):
    """The root equation has no sign change on the search bracket."""


@dataclass(frozen=True)
class TwistedGaussianMoments:
    """Approximate moments of a width-s^2 Gaussian profile after a twist chi."""

    n_particles: int
    s2: float
    chi: float
    jx_mean: float
    a_coef: float
    b_coef: float
    v_plus: float
    v_minus: float
    theta_star: float
    var_x: float


def tg_moments(n: int, s2: float, chi: float) -> TwistedGaussianMoments:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if s2 <= 0:
        raise ValueError(f"s2 must be positive, got {s2}")
    sn = s2 * n
    jx_mean = (n / 2.0) * math.exp(-1.0 / (2.0 * sn) - 0.5 * chi**2 * sn)
    a = (n / 2.0) * (1.0 - math.exp(-2.0 / sn - 2.0 * chi**2 * sn)) - s2
    b = 2.0 * chi * sn * math.exp(-1.0 / (2.0 * sn) - 0.5 * chi**2 * sn)
    root = math.hypot(a, b)
    v_plus = (n / 8.0) * (2.0 * s2 + a + root)
    v_minus = (n / 8.0) * (2.0 * s2 + a - root)
    # minimum-variance direction of cos(t) J_y - sin(t) J_z; A is
    # proportional to <J_y^2> - <J_z^2>, so the second argument flips sign
    theta_star = 0.5 * math.atan2(b, -a)
    u = 1.0 / sn + chi**2 * sn
    # pre-Taylor exponential form; the expanded quadratic sits in
    # var_x_series and drifts above 5% once chi^2 s^2 N reaches ~0.1
    var_x = (n**2 / 8.0) * (1.0 + math.exp(-2.0 * u)) - (n**2 / 4.0) * math.exp(-u)
    return TwistedGaussianMoments(
        n_particles=n, s2=s2, chi=chi,
        jx_mean=jx_mean, a_coef=a, b_coef=b,
        v_plus=v_plus, v_minus=v_minus,
        theta_star=theta_star, var_x=var_x,
    )


def theta_alignment(n: int, s2: float, chi: float) -> float:
    """Rotation -(1/2) arctan2(B, A) that re-aligns the squeezed direction with J_z."""
    tg = tg_moments(n, s2, chi)
    return -0.5 * math.atan2(tg.b_coef, tg.a_coef)


def chi_star_unrotated(n: int, s2: float) -> float:
    """Optimal twist 3^{1/6} / (s^2 N)^{2/3} for minimizing the plain variance."""
    if s2 * n <= 1.0:
        warnings.warn(
            f"s2*N = {s2 * n} <= 1: outside the squeezing regime", RegimeWarning
        )
    return 3 ** (1.0 / 6.0) / (s2 * n) ** (2.0 / 3.0)


def min_variance_sinh(n: int, s2: float, chi: float) -> float:
    """Hyperbolic intermediate form of the minimal variance (pre-Taylor)."""
    u = 1.0 / (s2 * n) + chi**2 * s2 * n
    return (n / 4.0) * (s2 - chi**2 * s2**2 * n / math.sinh(u))


def min_variance_series(n: int, s2: float, chi: float) -> float:
    """Fully expanded small-u form of the minimal variance."""
    return (s2 * n / 4.0) * (
        1.0 / (chi**2 * s2**2 * n**2) + chi**4 * s2**2 * n**2 / 6.0
    )


def var_x_series(n: int, s2: float, chi: float) -> float:
    """Fully expanded form of the transverse variance, (N^2/8) u^2."""
    return (n**2 / 8.0) * (1.0 / (s2 * n) + chi**2 * s2 * n) ** 2


def _bracketed_root(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Bisection with secant acceleration on a bracketed sign change."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise RootBracketError(
            f"no sign change on bracket ({lo}, {hi}): f = ({flo}, {fhi})"
        )
    x = lo
    for it in range(300):
        if it % 2 == 0:
            # guaranteed bracket halving; plain false position stagnates on
            # strongly convex f (the hi endpoint never moves)
            x = 0.5 * (lo + hi)
        else:
            denom = fhi - flo
            x = hi - fhi * (hi - lo) / denom if denom != 0.0 else 0.5 * (lo + hi)
            if not (lo < x < hi):
                x = 0.5 * (lo + hi)
        fx = f(x)
        if abs(fx) < tol or hi - lo < 1e-16 * max(1.0, hi):
            return x
        if flo * fx < 0.0:
            hi, fhi = x, fx
        else:
            lo, flo = x, fx
    return x


def _state_equation(n: int, xi2: float, carry: float):
    sn = xi2 * n

    def f(chi: float) -> float:
        x = chi**2 * sn
        u = 1.0 / sn + x
        value = x - math.tanh(u)
        if carry != 0.0:
            # sinh(u) (e^-u - e^-2u) = (1 - e^-2u)(1 - e^-u)/2, safe for large u
            expu = math.exp(-u)
            lam = n * math.tanh(u) * (1.0 - expu**2) * (1.0 - expu) / (2.0 * xi2)
            value += carry * lam
        return value

    return f


def solve_state1(n: int, xi2_prev: float) -> float:
    """Positive root of chi^2 xi^2 N - tanh(1/(xi^2 N) + chi^2 xi^2 N) = 0."""
    if xi2_prev * n <= 1.0:
        warnings.warn(
            f"xi2*N = {xi2_prev * n} <= 1: root equation leaves its regime",
            RegimeWarning,
        )
    return _bracketed_root(_state_equation(n, xi2_prev, 0.0), 1e-12, math.pi)


def solve_state3(n: int, xi2_prev: float, carry: float) -> float:
    """Root of the state1 equation plus carry * L(chi).

    carry plays the role of the effective prior phase variance seen by the
    ensemble; carry = 0 reduces exactly to solve_state1.
    """
    if carry < 0:
        raise ValueError(f"carry must be nonnegative, got {carry}")
    if xi2_prev * n <= 1.0:
        warnings.warn(
            f"xi2*N = {xi2_prev * n} <= 1: root equation leaves its regime",
            RegimeWarning,
        )
    return _bracketed_root(_state_equation(n, xi2_prev, carry), 1e-12, math.pi)


@dataclass(frozen=True)
class RecursionState:
    """One step of the prior-averaged squeezing recursion."""

    stage: int
    s2: float
    xibar2: float
    chi_star: float


def tg_recursion(n: int, s2: float, sigma: float, stage: int = 1) -> RecursionState:
    """Apply one prior-aware optimal twist to a width-s^2 Gaussian profile.

    Returns the optimal twist angle, the post-twist prior-averaged squeezing,
    and the effective Gaussian width the next twist acts on.
    """
    if s2 * n <= 1.0:
        warnings.warn(
            f"s2*N = {s2 * n} <= 1: recursion outside its regime", RegimeWarning
        )
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    mix = s2 / 3.0 + n * sigma**2
    chi_star = (1.0 / (mix * s2**3 * n**4)) ** (1.0 / 6.0)
    xibar2 = (
        (9.0 * s2 + 27.0 * n * sigma**2) ** (1.0 / 3.0) / (2.0 * n ** (2.0 / 3.0))
        + sigma**2 / (2.0 * s2**2 * n)
        + sigma**2 / (mix ** (1.0 / 3.0) * s2 * n ** (1.0 / 3.0))
    )
    s2_next = s2 * (
        mix ** (1.0 / 3.0) / (s2 * n ** (2.0 / 3.0))
        + 1.0 / (6.0 * n ** (2.0 / 3.0) * mix ** (2.0 / 3.0))
    )
    return RecursionState(stage=stage + 1, s2=s2_next, xibar2=xibar2, chi_star=chi_star)


def s2_pattern(j: int, n: int) -> float:
    """Fixed-point width sequence (3 / (2^{3/2} N))^{1 - 3^{-(j-1)}}."""
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    return (3.0 / (2.0**1.5 * n)) ** (1.0 - 3.0 ** (-(j - 1)))


def chi_pattern(j: int, n: int) -> float:
    """Twist-angle sequence 2^{1-3^{-(j-1)}} / (3^{1/2 - 2/3^j} N^{2/3^j})."""
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    return 2.0 ** (1.0 - 3.0 ** (-(j - 1))) / (
        3.0 ** (0.5 - 2.0 / 3.0**j) * n ** (2.0 / 3.0**j)
    )


def weakly_ng_optimum(n: int, sigma: float, w_z: float) -> tuple[float, float, float]:
    """Kurtosis-bounded optimum: (Var(J_y)_opt, xi^2_opt, rotated xi^2_opt).

    w_z bounds Kurt[J_z] - 1 for the state family under consideration and is
    a free input.
    """
    if n < 1 or sigma <= 0 or w_z <= 0:
        raise ValueError("n, sigma and w_z must all be positive")
    dj2 = (n**2 * sigma**2 * w_z / 2.0) ** (1.0 / 3.0)
    xi2 = (32.0 * sigma**2 * w_z / n) ** (1.0 / 3.0)
    xibar2 = (32.0 ** (1.0 / 3.0) + (1.0 / (16.0 * 64.0**2)) ** (1.0 / 3.0)) * (
        sigma**2 * w_z / n
    ) ** (1.0 / 3.0)
    return dj2, xi2, xibar2

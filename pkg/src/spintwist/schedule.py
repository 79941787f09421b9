"""Multi-twist state-preparation schedules and scaling-exponent tables.

A schedule is an ordered list of (twist, x-rotation) pairs acting on the
x-polarized coherent state.  Twist magnitudes come from the finite-size root
equations at a recursively updated squeezing parameter; the recursion value
is measured by exact simulation of the partial schedule, not by the analytic
recursion.  All but the last twist are shrunk by a factor c with the
rotation angles recomputed at the applied magnitudes; consecutive twists
alternate sign; the last rotation is shifted by pi/2 so the squeezed
quadrature ends up on J_y.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from . import analytic, moments, spinstate
from .spinstate import CollectiveState

__all__ = [
    "ScheduleStep",
    "TwistSchedule",
    "ScalingExponents",
    "build_schedule",
    "prepare_state",
    "table_exponents",
    "kurtosis_sweep",
]


class ScheduleStep(NamedTuple):
    chi: float
    theta: float
    c_applied: float


@dataclass(frozen=True)
class TwistSchedule:
    """Ordered (chi, theta, c) steps defining a preparation circuit."""

    n_particles: int
    steps: tuple[ScheduleStep, ...]

    @property
    def depth(self) -> int:
        return len(self.steps)

    @property
    def twist_magnitude_sum(self) -> float:
        """Sum of applied |chi_k|; sets cavity contrast loss."""
        return sum(abs(s.chi) for s in self.steps)

    def to_record(self) -> str:
        return json.dumps(
            {
                "n": self.n_particles,
                "depth": self.depth,
                "steps": [[s.chi, s.theta, s.c_applied] for s in self.steps],
            }
        )

    @classmethod
    def from_record(cls, record: str) -> "TwistSchedule":
        data = json.loads(record)
        steps = tuple(ScheduleStep(*row) for row in data["steps"])
        return cls(n_particles=data["n"], steps=steps)


def _build(
    n: int,
    depth: int,
    c: float,
    carry: float | None,
    scale_last: bool,
    theta_from_unscaled: bool,
) -> tuple[TwistSchedule, CollectiveState]:
    xi2 = 1.0
    state = spinstate.coherent_x(n)
    steps: list[ScheduleStep] = []
    for k in range(1, depth + 1):
        last = k == depth
        try:
            if last and carry is not None:
                root = analytic.solve_state3(n, xi2, carry)
            else:
                root = analytic.solve_state1(n, xi2)
        except analytic.RootBracketError as exc:
            raise analytic.RootBracketError(f"step {k}: {exc}") from exc
        c_k = c if (not last or scale_last) else 1.0
        chi = c_k * root
        theta_at = root if theta_from_unscaled else chi
        theta = analytic.theta_alignment(n, xi2, theta_at)
        if last:
            theta += math.pi / 2.0
        sign = (-1.0) ** (k + 1)
        steps.append(ScheduleStep(sign * chi, sign * theta, c_k))
        state = spinstate.apply_rotation(
            spinstate.apply_twist(state, sign * chi), "x", sign * theta
        )
        if not last:
            xi2 = moments.min_xi2(moments.compute_moments(state))
    return TwistSchedule(n, tuple(steps)), state


def build_schedule(
    n: int,
    depth: int,
    c: float = 0.7,
    carry: float | None = None,
    theta_from_unscaled: bool = False,
) -> TwistSchedule:
    """Construct a depth-twist schedule for N particles.

    carry = None builds a standalone schedule (all roots from the plain
    equation); a nonnegative carry is the residual phase variance seen by
    this ensemble inside an estimation chain and shifts the last twist's
    root equation.  theta_from_unscaled evaluates the rotation angles at the
    unshrunk twist magnitudes instead of the applied ones.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if not 0.0 < c <= 1.0:
        raise ValueError(f"c must be in (0, 1], got {c}")
    schedule, _ = _build(n, depth, c, carry, False, theta_from_unscaled)
    return schedule


def prepare_state(schedule: TwistSchedule) -> CollectiveState:
    """Apply the schedule's steps (twist then rotation) to |J_x = N/2>."""
    state = spinstate.coherent_x(schedule.n_particles)
    for step in schedule.steps:
        state = spinstate.apply_twist(state, step.chi)
        state = spinstate.apply_rotation(state, "x", step.theta)
    return state


def kurtosis_sweep(
    n: int, depth: int, c_values, theta_from_unscaled: bool = False
) -> list[tuple[float, float, float]]:
    """Kurt[J_y] and Kurt[J_z] of the prepared state vs the shrink factor c.

    Unlike build_schedule, the sweep scales every twist (including the last)
    by c, which is the diagnostic that exposes the non-Gaussian turn-on.
    """
    rows = []
    for c in c_values:
        _, state = _build(n, depth, float(c), None, True, theta_from_unscaled)
        rows.append(
            (float(c), moments.kurtosis(state, "y"), moments.kurtosis(state, "z"))
        )
    return rows


class ScalingExponents:
    """Exact rational scaling exponents of the protocol family."""

    @staticmethod
    def nu(j: int) -> Fraction:
        """Estimation-error exponent with j twists in the final stage."""
        return 2 - Fraction(1, 3**j)

    @staticmethod
    def mu(k: int) -> Fraction:
        """Squeezing exponent of the k-th ensemble."""
        return 1 - Fraction(1, 3 ** (k - 1))

    @staticmethod
    def gamma(m: int) -> Fraction:
        """m-th twist-angle exponent."""
        return Fraction(2, 3**m)

    @staticmethod
    def alpha(n: int) -> Fraction:
        """n-th (non-final) rotation-angle exponent."""
        return 1 - Fraction(2, 3**n)

    @staticmethod
    def beta(k: int) -> Fraction:
        """Exponent of the shifted final rotation pi/2 - |theta|."""
        return 1 - Fraction(2, 3 ** (k - 1))


def table_exponents() -> ScalingExponents:
    return ScalingExponents()

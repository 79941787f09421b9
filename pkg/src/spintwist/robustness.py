"""Imperfection studies: particle-number spread, feedback noise, contrast loss.

Number fluctuations rerun a fixed-angle circuit at sampled sizes; feedback
noise corrupts the counter-rotations (never the recorded estimates) inside
the exact branch enumeration; cavity contrast loss rescales the squeezing
parameter by an exponential in the total applied twist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import moments as mo
from . import spinstate as ss
from .estimator import (
    EstimationResult,
    ProtocolSpec,
    _contract,
    _MomentAccumulator,
    _OutcomeEngine,
    _quadrature_leaves,
)
from .schedule import TwistSchedule

__all__ = [
    "NumberDistribution",
    "FeedbackNoise",
    "number_fluctuation_xi2",
    "feedback_error",
    "contrast_adjusted_xi2",
]

_RESAMPLE_LIMIT = 100


@dataclass(frozen=True)
class NumberDistribution:
    """Distribution of the realized particle number around a target N.

    kind "delta" always returns the target; "poisson" has mean N;
    "binomial" uses ceil(N/p) trials at success probability p so the mean
    is ~N.
    """

    kind: str
    target_n: int
    p: float = 0.98

    def __post_init__(self):
        if self.kind not in ("delta", "poisson", "binomial"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "binomial" and not 0.0 < self.p <= 1.0:
            raise ValueError(f"p must be in (0, 1], got {self.p}")

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "delta":
            return self.target_n
        for _ in range(_RESAMPLE_LIMIT):
            if self.kind == "poisson":
                n_s = int(rng.poisson(self.target_n))
            else:
                n_s = int(rng.binomial(math.ceil(self.target_n / self.p), self.p))
            if n_s >= 2:
                return n_s
        raise RuntimeError(
            f"could not draw a size >= 2 in {_RESAMPLE_LIMIT} tries from {self}"
        )


def number_fluctuation_xi2(
    n_target: int,
    dist: NumberDistribution,
    schedule_builder,
    samples: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Mean and std of xi^2 when the circuit angles are fixed for N_target.

    schedule_builder(n_target) supplies the schedule; each sampled size
    reruns exactly the same twist/rotation angles.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    schedule: TwistSchedule = schedule_builder(n_target)
    rng = np.random.Generator(np.random.Philox(seed))
    values = np.empty(samples)
    for i in range(samples):
        n_s = dist.sample(rng)
        values[i] = _xi2_at_size(schedule, n_s)
    return float(values.mean()), float(values.std(ddof=0))


def _xi2_at_size(schedule: TwistSchedule, n: int) -> float:
    state = ss.coherent_x(n)
    for step in schedule.steps:
        state = ss.apply_twist(state, step.chi)
        state = ss.apply_rotation(state, "x", step.theta)
    return mo.wineland_xi2(mo.compute_moments(state))


@dataclass(frozen=True)
class FeedbackNoise:
    """Gaussian counter-rotation noise of standard deviation sigma_fb.

    outer_samples replicas of the exact enumeration are averaged, each with
    inner_samples fresh draws per branch per counter-rotation (the hybrid
    estimator); modes "est1"/"est2" share draws across branches, "est3" is
    a single replica with per-branch draws.
    """

    sigma_fb: float
    outer_samples: int = 10
    inner_samples: int = 1
    seed: int = 0
    mode: str = "est4"

    def __post_init__(self):
        if self.sigma_fb < 0:
            raise ValueError("sigma_fb must be nonnegative")
        if self.outer_samples < 1 or self.inner_samples < 1:
            raise ValueError("outer_samples and inner_samples must be >= 1")
        if self.mode not in ("est1", "est2", "est3", "est4"):
            raise ValueError(f"unknown mode {self.mode!r}")


def _walk_noisy(engines, level, r, d, w, acc, draw, inner):
    if level == len(engines):
        acc.add(r, d, w)
        return
    eng = engines[level]
    block = eng.block_size()
    for start in range(0, r.size, block):
        stop = min(start + block, r.size)
        p = eng.distributions(r[start:stop])
        child_r = (r[None, start:stop] - eng.phihat[:, None]).T.reshape(-1)
        child_d = (d[None, start:stop] - eng.phihat[:, None]).T.reshape(-1)
        child_w = (p * w[None, start:stop]).T.reshape(-1)
        if inner > 1:
            child_r = np.repeat(child_r, inner)
            child_d = np.repeat(child_d, inner)
            child_w = np.repeat(child_w, inner) / inner
        child_r = child_r + draw(level, child_r.size)
        _walk_noisy(engines, level + 1, child_r, child_d, child_w, acc, draw, inner)


def _one_replica(protocol: ProtocolSpec, sigma_fb, inner, draw) -> float:
    engines = [_OutcomeEngine(e) for e in protocol.ensembles[:-1]]
    r0, w0 = _quadrature_leaves(protocol)
    acc = _MomentAccumulator(1)
    _walk_noisy(engines, 0, r0, r0.copy(), w0, acc, draw, inner)
    return float(_contract(acc.sums[0], protocol.ensembles[-1].state))


def feedback_error(protocol: ProtocolSpec, noise: FeedbackNoise) -> EstimationResult:
    """Estimation error with noisy counter-rotations.

    The recorded estimate stays the clean sum of the per-ensemble estimates;
    only the residuals that set later conditional distributions are shifted.
    """
    if len(protocol.ensembles) < 2:
        raise ValueError("feedback noise needs at least two ensembles")
    n_levels = len(protocol.ensembles) - 1
    sigma = noise.sigma_fb
    sequence = np.random.SeedSequence(noise.seed)

    def per_branch_draw(rng):
        def draw(level, size):
            return sigma * rng.standard_normal(size)

        return draw

    def shared_draw(scalars):
        def draw(level, size):
            return np.full(size, scalars[level])

        return draw

    if noise.mode == "est1":
        # every combination of shared per-level samples
        rng = np.random.Generator(np.random.Philox(sequence))
        table = sigma * rng.standard_normal((n_levels, noise.inner_samples))
        combos = np.stack(
            np.meshgrid(*[table[j] for j in range(n_levels)], indexing="ij"), axis=-1
        ).reshape(-1, n_levels)
        values = [
            _one_replica(protocol, sigma, 1, shared_draw(row)) for row in combos
        ]
    elif noise.mode == "est2":
        values = []
        for child in sequence.spawn(noise.outer_samples):
            rng = np.random.Generator(np.random.Philox(child))
            scalars = sigma * rng.standard_normal(n_levels)
            values.append(_one_replica(protocol, sigma, 1, shared_draw(scalars)))
    elif noise.mode == "est3":
        rng = np.random.Generator(np.random.Philox(sequence))
        values = [
            _one_replica(protocol, sigma, noise.inner_samples, per_branch_draw(rng))
        ]
    else:  # est4 hybrid
        values = []
        for child in sequence.spawn(noise.outer_samples):
            rng = np.random.Generator(np.random.Philox(child))
            values.append(
                _one_replica(protocol, sigma, noise.inner_samples, per_branch_draw(rng))
            )
    arr = np.asarray(values)
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return EstimationResult(
        delta_phi2=float(arr.mean()),
        standard_error=stderr,
        n_terms=arr.size,
        replica_values=tuple(float(v) for v in arr),
    )


def contrast_adjusted_xi2(xi2: float, schedule: TwistSchedule, gamma: float) -> float:
    """Squeezing parameter divided by the photon-scattering contrast factor.

    The contrast is exp(-2 gamma sqrt(N) sum_j |chi_j|) over the applied
    twists.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    exponent = 2.0 * gamma * math.sqrt(schedule.n_particles) * schedule.twist_magnitude_sum
    return xi2 / math.exp(-exponent)

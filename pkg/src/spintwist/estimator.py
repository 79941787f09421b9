"""Bayesian mean-squared error of multi-ensemble adaptive phase estimation.

The error is an integral over the Gaussian prior (Hermite-Gauss quadrature)
of nested sums over measurement outcomes of every ensemble, with each
ensemble counter-rotated by the estimates of its predecessors.  The sum over
the final ensemble is carried out in closed form by contracting an effective
error operator with the final probe state, so exact evaluation only
enumerates outcomes of the first M-1 ensembles.  Monte Carlo mode replaces
enumeration of the largest intermediate ensembles with sampled outcomes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtri

from . import moments as mo
from . import spinstate as ss
from .analytic import theta_alignment, tg_recursion
from .schedule import ScheduleStep, TwistSchedule, build_schedule, prepare_state
from .spinstate import CollectiveState

__all__ = [
    "AllocationError",
    "BranchBudgetError",
    "EnsembleSpec",
    "MonteCarloConfig",
    "ProtocolSpec",
    "EstimationResult",
    "OptimizedSchedule",
    "allocate_ensembles",
    "build_protocol",
    "conditional_outcome_dist",
    "error_operator",
    "error_exact",
    "error_monte_carlo",
    "optimize_last_ensemble",
]

_BLOCK_ELEMS = 6_000_000  # complex temp elements per distribution block


class AllocationError(ValueError):
    """Requested split leaves an ensemble with fewer than two particles."""


class BranchBudgetError(RuntimeError):
    """Exact enumeration would exceed the branch budget; use Monte Carlo."""


def allocate_ensembles(n_total: int, m: int) -> tuple[int, ...]:
    """Split N particles into M ensembles of exponentially increasing size."""
    if m == 1:
        sizes = (n_total,)
    elif m == 2:
        base = n_total // 5
        sizes = (base, n_total - base)
    elif m == 3:
        base = n_total // 20
        sizes = (base, 4 * base, n_total - 5 * base)
    elif m == 4:
        base = n_total // 50
        sizes = (base, 4 * base, 12 * base, n_total - 17 * base)
    else:
        raise AllocationError(f"m must be in 1..4, got {m}")
    if min(sizes) < 2:
        raise AllocationError(
            f"allocation {sizes} for N={n_total}, M={m} has an ensemble below 2"
        )
    return sizes


@dataclass(frozen=True)
class EnsembleSpec:
    """One ensemble: its size, preparation schedule (None = unsqueezed), state."""

    n_particles: int
    schedule: TwistSchedule | None
    state: CollectiveState

    @classmethod
    def unsqueezed(cls, n: int) -> "EnsembleSpec":
        return cls(n, None, ss.coherent_x(n))

    @classmethod
    def squeezed(cls, schedule: TwistSchedule) -> "EnsembleSpec":
        return cls(schedule.n_particles, schedule, prepare_state(schedule))


@dataclass(frozen=True)
class MonteCarloConfig:
    """Monte Carlo summation settings.

    Outcome sums for ensembles with index >= start_ensemble (1-based) are
    sampled, l_samples per branch at each sampled level; ensembles with
    index >= gaussian_from draw from a Gaussian with the exact conditional
    mean and variance instead of the exact distribution.
    """

    l_samples: int
    seed: int
    start_ensemble: int = 2
    gaussian_from: int | None = None


@dataclass(frozen=True)
class ProtocolSpec:
    ensembles: tuple[EnsembleSpec, ...]
    prior_sigma: float
    quadrature_nodes: int = 101
    prior_mean: float = 0.0
    mc: MonteCarloConfig | None = None
    branch_budget: float = 1e9

    def __post_init__(self):
        if not self.ensembles:
            raise ValueError("protocol needs at least one ensemble")
        sizes = [e.n_particles for e in self.ensembles]
        if any(b < a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"ensemble sizes must be nondecreasing, got {sizes}")
        if self.prior_sigma < 0:
            raise ValueError(f"prior_sigma must be nonnegative, got {self.prior_sigma}")
        if self.quadrature_nodes < 1:
            raise ValueError("quadrature_nodes must be >= 1")

    @property
    def total_n(self) -> int:
        return sum(e.n_particles for e in self.ensembles)


@dataclass(frozen=True)
class EstimationResult:
    delta_phi2: float
    standard_error: float
    n_terms: int
    replica_values: tuple[float, ...] | None = None


def build_protocol(
    n_total: int,
    n_ensembles: int,
    sigma: float,
    c: float | None = None,
    quadrature_nodes: int = 101,
    mc: MonteCarloConfig | None = None,
    branch_budget: float = 1e9,
    unsqueezed: bool = False,
) -> ProtocolSpec:
    """Assemble the standard M-ensemble protocol at total size N.

    Ensemble 1 is unsqueezed; ensemble k is prepared by a (k-1)-twist
    schedule whose last twist root carries the residual phase variance left
    by the preceding ensembles.  The residual-variance recursion starts at
    the prior variance and advances via the prior-averaged squeezing of each
    prepared state.  unsqueezed=True (single ensemble only) runs the bare
    coherent probe.
    """
    if c is None:
        c = 0.35 if n_ensembles == 3 else 0.7
    if unsqueezed and n_ensembles != 1:
        raise ValueError("unsqueezed applies to single-ensemble protocols only")
    sizes = allocate_ensembles(n_total, n_ensembles)
    if n_ensembles == 1 and unsqueezed:
        ensembles = (EnsembleSpec.unsqueezed(sizes[0]),)
    elif n_ensembles == 1:
        # single squeezed ensemble: prior-aware optimal single twist
        chi = tg_recursion(sizes[0], 1.0, sigma).chi_star
        theta = theta_alignment(sizes[0], 1.0, chi) + math.pi / 2.0
        schedule = TwistSchedule(sizes[0], (ScheduleStep(chi, theta, 1.0),))
        ensembles = (EnsembleSpec.squeezed(schedule),)
    else:
        specs: list[EnsembleSpec] = [EnsembleSpec.unsqueezed(sizes[0])]
        residual_var = sigma**2
        residual_var = (
            mo.rotated_xibar2(mo.compute_moments(specs[0].state), math.sqrt(residual_var))
            / sizes[0]
        )
        for k in range(2, n_ensembles + 1):
            schedule = build_schedule(sizes[k - 1], depth=k - 1, c=c, carry=residual_var)
            spec = EnsembleSpec.squeezed(schedule)
            specs.append(spec)
            residual_var = (
                mo.rotated_xibar2(mo.compute_moments(spec.state), math.sqrt(residual_var))
                / sizes[k - 1]
            )
        ensembles = tuple(specs)
    return ProtocolSpec(
        ensembles=ensembles,
        prior_sigma=sigma,
        quadrature_nodes=quadrature_nodes,
        mc=mc,
        branch_budget=branch_budget,
    )


class _OutcomeEngine:
    """Conditional J_y outcome distributions of one ensemble, vectorized."""

    def __init__(self, ensemble: EnsembleSpec):
        self.n = ensemble.n_particles
        cache = ss.rotation_cache(self.n)
        self.basis_t = cache.x_vectors.T
        psi = np.conj(cache.y_phase) * ensemble.state.amplitudes
        self.psi = psi
        self.m = ensemble.state.m_values
        self.phihat = 2.0 * self.m / self.n

    def block_size(self) -> int:
        return max(64, _BLOCK_ELEMS // (self.n + 1))

    def distributions(self, residuals: np.ndarray) -> np.ndarray:
        """p(m | r) columns for each residual; shape (N+1, len(residuals))."""
        phases = np.exp(np.outer(self.m, -1j * residuals))
        phases *= self.psi[:, None]
        amps = self.basis_t @ phases
        p = np.abs(amps) ** 2
        np.maximum(p, 0.0, out=p)
        return p


def conditional_outcome_dist(state: CollectiveState, residual: float) -> np.ndarray:
    """p(m | residual) for a J_y measurement after a z-rotation by residual."""
    rotated = ss.apply_rotation(state, "z", residual)
    return ss.measurement_distribution(rotated, "y")


def _raw_xy_moments(state: CollectiveState) -> tuple[float, float, float, float, float]:
    """(<J_x>, <J_y>, <J_x^2>, <J_y^2>, <{J_x,J_y}>) via operator application."""
    jx_psi = ss.apply_operator(state, "x")
    jy_psi = ss.apply_operator(state, "y")
    a = state.amplitudes
    jx = float(np.real(np.conj(a) @ jx_psi))
    jy = float(np.real(np.conj(a) @ jy_psi))
    jx2 = float(np.real(np.conj(jx_psi) @ jx_psi))
    jy2 = float(np.real(np.conj(jy_psi) @ jy_psi))
    axy = float(2.0 * np.real(np.conj(jx_psi) @ jy_psi))
    return jx, jy, jx2, jy2, axy


class _MomentAccumulator:
    """Streaming sums of the six trig moments over leaf branches, per tag."""

    def __init__(self, n_tags: int):
        self.sums = np.zeros((n_tags, 6))
        self.count = 0

    def add(self, r, d, w, tags=None):
        cos_r = np.cos(r)
        sin_r = np.sin(r)
        rows = np.stack(
            [
                w * d * d,
                w * d * cos_r,
                w * d * sin_r,
                w * cos_r * cos_r,
                w * sin_r * sin_r,
                w * sin_r * cos_r,
            ],
            axis=0,
        )
        if tags is None:
            self.sums[0] += rows.sum(axis=1)
        else:
            for i in range(6):
                self.sums[:, i] += np.bincount(
                    tags, weights=rows[i], minlength=self.sums.shape[0]
                )
        self.count += r.size


def _contract(sums: np.ndarray, state: CollectiveState) -> float:
    """Fold branch moments with the final-ensemble spin moments."""
    n = state.n_particles
    jx, jy, jx2, jy2, axy = _raw_xy_moments(state)
    s0, sc, ssn, scc, sss, scs = sums
    return (
        s0
        - (4.0 / n) * (sc * jy + ssn * jx)
        + (4.0 / n**2) * (scc * jy2 + sss * jx2 + scs * axy)
    )


def _quadrature_leaves(protocol: ProtocolSpec) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.hermite.hermgauss(protocol.quadrature_nodes)
    phi = protocol.prior_mean + math.sqrt(2.0) * protocol.prior_sigma * nodes
    w = weights / math.sqrt(math.pi)
    # counter-rotation by the known prior mean is an initial estimate
    return phi - protocol.prior_mean, w


def _exact_level_counts(protocol: ProtocolSpec) -> list[int]:
    """Cumulative branch counts after each of the first M-1 ensembles."""
    counts = []
    total = protocol.quadrature_nodes
    for ens in protocol.ensembles[:-1]:
        total *= ens.n_particles + 1
        counts.append(total)
    return counts


def _check_budget(protocol: ProtocolSpec) -> None:
    counts = _exact_level_counts(protocol)
    if counts and max(counts) > protocol.branch_budget:
        raise BranchBudgetError(
            f"exact enumeration needs {max(counts):.3g} branches, over the budget "
            f"{protocol.branch_budget:.3g}; run error_monte_carlo instead"
        )


def _walk_exact(
    engines: list[_OutcomeEngine],
    level: int,
    r: np.ndarray,
    d: np.ndarray,
    w: np.ndarray,
    offset: int,
    acc: _MomentAccumulator,
    noise
) -> None:
    """Expand branches through remaining intermediate ensembles; reduce leaves.

    offset is the global child index of this subtree's first branch at the
    current level, used to slice pre-drawn per-level noise deterministically.
    """
    if level == len(engines):
        acc.add(r, d, w)
        return
    eng = engines[level]
    n_out = eng.n + 1
    block = eng.block_size()
    for start in range(0, r.size, block):
        stop = min(start + block, r.size)
        p = eng.distributions(r[start:stop])
        child_r = r[None, start:stop] - eng.phihat[:, None]
        child_d = d[None, start:stop] - eng.phihat[:, None]
        child_w = p * w[None, start:stop]
        # children of branch b are contiguous: index = (offset+b)*n_out + j
        child_off = (offset + start) * n_out
        new_r = child_r.T.reshape(-1)
        if noise is not None:
            new_r = new_r + noise[level][child_off : child_off + new_r.size]
        _walk_exact(
            engines,
            level + 1,
            new_r,
            child_d.T.reshape(-1),
            child_w.T.reshape(-1),
            child_off,
            acc,
            noise,
        )


def _branch_moments_exact(protocol: ProtocolSpec, noise=None) -> _MomentAccumulator:
    _check_budget(protocol)
    engines = [_OutcomeEngine(e) for e in protocol.ensembles[:-1]]
    r0, w0 = _quadrature_leaves(protocol)
    acc = _MomentAccumulator(1)
    _walk_exact(engines, 0, r0, r0.copy(), w0, 0, acc, noise)
    return acc


def error_exact(protocol: ProtocolSpec) -> EstimationResult:
    """Quadrature over the prior and exact nested outcome sums."""
    acc = _branch_moments_exact(protocol)
    value = _contract(acc.sums[0], protocol.ensembles[-1].state)
    return EstimationResult(
        delta_phi2=float(value), standard_error=0.0, n_terms=acc.count
    )


def error_operator(protocol: ProtocolSpec) -> np.ndarray:
    """Dense effective error operator on the final ensemble.

    The expectation value in the final probe state equals the protocol's
    estimation error.
    """
    acc = _branch_moments_exact(protocol)
    s0, sc, ssn, scc, sss, scs = acc.sums[0]
    n = protocol.ensembles[-1].n_particles
    dim = n + 1
    jx = _dense_operator(n, "x")
    jy = _dense_operator(n, "y")
    eye = np.eye(dim, dtype=np.complex128)
    w = (
        s0 * eye
        - (4.0 / n) * (sc * jy + ssn * jx)
        + (4.0 / n**2)
        * (scc * (jy @ jy) + sss * (jx @ jx) + scs * (jx @ jy + jy @ jx))
    )
    return w


def _dense_operator(n: int, axis: str) -> np.ndarray:
    from .spinstate import _ladder_couplings

    c = _ladder_couplings(n)
    op = np.zeros((n + 1, n + 1), dtype=np.complex128)
    idx = np.arange(n)
    if axis == "x":
        op[idx + 1, idx] = 0.5 * c
        op[idx, idx + 1] = 0.5 * c
    elif axis == "y":
        op[idx + 1, idx] = -0.5j * c
        op[idx, idx + 1] = 0.5j * c
    else:
        m = np.arange(n + 1) - n / 2.0
        op[np.arange(n + 1), np.arange(n + 1)] = m
    return op


def _sample_exact_level(
    eng: _OutcomeEngine, r: np.ndarray, uniforms: np.ndarray
) -> np.ndarray:
    """Inverse-CDF samples of phi-hat; uniforms has shape (branches, L).

    Outcomes are ordered by distance from each distribution's mode before
    the cumulative sum, so the scan starts where the mass is.
    """
    n_branches = r.size
    n_out = eng.n + 1
    l_samples = uniforms.shape[1]
    out = np.empty((n_branches, l_samples))
    block = eng.block_size()
    idx_grid = np.arange(n_out)
    for start in range(0, n_branches, block):
        stop = min(start + block, n_branches)
        p = eng.distributions(r[start:stop]).T  # (B, n_out)
        modes = np.argmax(p, axis=1)
        order = np.argsort(
            np.abs(idx_grid[None, :] - modes[:, None]), axis=1, kind="stable"
        )
        cdf = np.cumsum(np.take_along_axis(p, order, axis=1), axis=1)
        total = cdf[:, -1]
        # batched searchsorted: offset each row onto a disjoint interval
        rows = p.shape[0]
        shift = 2.0 * np.arange(rows)[:, None]
        flat_cdf = (cdf / total[:, None] + shift).reshape(-1)
        targets = (uniforms[start:stop] + shift).reshape(-1)
        pos = np.searchsorted(flat_cdf, targets, side="left") - idx_grid.size * (
            np.arange(rows)[:, None].repeat(l_samples, 1).reshape(-1)
        )
        pos = np.clip(pos.reshape(rows, l_samples), 0, n_out - 1)
        picked = np.take_along_axis(order, pos, axis=1)
        out[start:stop] = eng.phihat[picked]
    return out


def _sample_gaussian_level(
    ensemble: EnsembleSpec, r: np.ndarray, uniforms: np.ndarray
) -> np.ndarray:
    """Gaussian-approximation samples with the exact conditional mean/variance."""
    jx, jy, jx2, jy2, axy = _raw_xy_moments(ensemble.state)
    sin_r = np.sin(r)
    cos_r = np.cos(r)
    mean = sin_r * jx + cos_r * jy
    second = sin_r**2 * jx2 + cos_r**2 * jy2 + sin_r * cos_r * axy
    std = np.sqrt(np.maximum(second - mean**2, 0.0))
    z = ndtri(uniforms)
    m_samples = mean[:, None] + std[:, None] * z
    return 2.0 * m_samples / ensemble.n_particles


def error_monte_carlo(protocol: ProtocolSpec) -> EstimationResult:
    """Monte Carlo summation over the large intermediate ensembles.

    Outcome sums before mc.start_ensemble and the prior quadrature stay
    exact; each sampled level draws l_samples per branch.  Replicas are
    indexed by the first sampled level's draw, giving the standard error.
    Fully reproducible for a fixed seed.
    """
    mc = protocol.mc
    if mc is None:
        raise ValueError("protocol has no MonteCarloConfig; use error_exact")
    m_total = len(protocol.ensembles)
    start = max(2, mc.start_ensemble)
    if m_total == 1 or start > m_total - 1:
        return error_exact(protocol)
    prefix = protocol.quadrature_nodes
    for ens in protocol.ensembles[: start - 1]:
        prefix *= ens.n_particles + 1
    if prefix > protocol.branch_budget:
        raise BranchBudgetError(
            f"exact prefix needs {prefix:.3g} branches, over the budget "
            f"{protocol.branch_budget:.3g}; raise mc.start_ensemble"
        )
    rng = np.random.Generator(np.random.Philox(mc.seed))
    l_samples = mc.l_samples

    r, w = _quadrature_leaves(protocol)
    d = r.copy()
    tags = None
    # exact levels
    for k in range(1, start):
        eng = _OutcomeEngine(protocol.ensembles[k - 1])
        n_out = eng.n + 1
        block = eng.block_size()
        pieces_r, pieces_d, pieces_w = [], [], []
        for s in range(0, r.size, block):
            e = min(s + block, r.size)
            p = eng.distributions(r[s:e])
            pieces_r.append((r[None, s:e] - eng.phihat[:, None]).T.reshape(-1))
            pieces_d.append((d[None, s:e] - eng.phihat[:, None]).T.reshape(-1))
            pieces_w.append((p * w[None, s:e]).T.reshape(-1))
        r = np.concatenate(pieces_r)
        d = np.concatenate(pieces_d)
        w = np.concatenate(pieces_w)
        if tags is not None:
            tags = np.repeat(tags, n_out)
    # sampled levels
    first_sampled = True
    for k in range(start, m_total):
        ensemble = protocol.ensembles[k - 1]
        uniforms = rng.random((r.size, l_samples))
        if mc.gaussian_from is not None and k >= mc.gaussian_from:
            phihat = _sample_gaussian_level(ensemble, r, uniforms)
        else:
            phihat = _sample_exact_level(_OutcomeEngine(ensemble), r, uniforms)
        r = (r[:, None] - phihat).reshape(-1)
        d = (d[:, None] - phihat).reshape(-1)
        if first_sampled:
            w = np.repeat(w, l_samples)
            tags = np.tile(np.arange(l_samples, dtype=np.intp), r.size // l_samples)
            first_sampled = False
        else:
            # deeper levels average within each replica
            w = np.repeat(w, l_samples) / l_samples
            tags = np.repeat(tags, l_samples)
    acc = _MomentAccumulator(l_samples)
    acc.add(r, d, w, tags)
    values = np.array(
        [_contract(acc.sums[t], protocol.ensembles[-1].state) for t in range(l_samples)]
    )
    estimate = float(values.mean())
    stderr = (
        float(values.std(ddof=1) / math.sqrt(l_samples)) if l_samples > 1 else 0.0
    )
    return EstimationResult(
        delta_phi2=estimate,
        standard_error=stderr,
        n_terms=acc.count,
        replica_values=tuple(float(v) for v in values),
    )


@dataclass(frozen=True)
class OptimizedSchedule:
    schedule: TwistSchedule
    objective: float
    converged: bool
    n_evaluations: int


def optimize_last_ensemble(
    protocol: ProtocolSpec,
    initial: TwistSchedule | None = None,
    max_evaluations: int = 4000,
) -> OptimizedSchedule:
    """Simplex polish of the final ensemble's twist/rotation angles.

    Minimizes the expectation of the effective error operator over the last
    ensemble's circuit parameters, stopping at 1e-15 absolute change.
    """
    last = protocol.ensembles[-1]
    if initial is None:
        if last.schedule is None:
            raise ValueError("last ensemble has no schedule to optimize")
        initial = last.schedule
    acc = _branch_moments_exact(protocol)
    sums = acc.sums[0]
    n = last.n_particles
    c_applied = [s.c_applied for s in initial.steps]

    def rebuild(params: np.ndarray) -> TwistSchedule:
        steps = tuple(
            ScheduleStep(params[2 * i], params[2 * i + 1], c_applied[i])
            for i in range(len(c_applied))
        )
        return TwistSchedule(n, steps)

    def objective(params: np.ndarray) -> float:
        return _contract(sums, prepare_state(rebuild(params)))

    x0 = np.array([v for s in initial.steps for v in (s.chi, s.theta)])
    result = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "fatol": 1e-15,
            "xatol": 1e-12,
            "maxfev": max_evaluations,
            "initial_simplex": _initial_simplex(x0),
        },
    )
    best_x, best_f = result.x, float(result.fun)
    f0 = objective(x0)
    if f0 <= best_f:
        best_x, best_f = x0, f0
    return OptimizedSchedule(
        schedule=rebuild(best_x),
        objective=best_f,
        converged=bool(result.success),
        n_evaluations=int(result.nfev),
    )


def _initial_simplex(x0: np.ndarray) -> np.ndarray:
    simplex = np.tile(x0, (x0.size + 1, 1))
    for i in range(x0.size):
        step = 0.05 * abs(x0[i]) if x0[i] != 0.0 else 0.01
        simplex[i + 1, i] += step
    return simplex

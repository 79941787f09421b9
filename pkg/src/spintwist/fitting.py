"""Power-law exponent extraction and the sigmoid-exponential kurtosis fit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PowerLawFit",
    "SigmoidExpFit",
    "powerlaw_fit",
    "sigmoid_exp_fit",
    "sigmoid_exp_model",
    "nu_vs_sigma",
]


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    log_prefactor: float
    residual_rms: float
    exponent_stderr: float


def powerlaw_fit(points) -> PowerLawFit:
    """Linear least squares on (ln x, ln y); the exponent is the slope."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need at least 3 (x, y) pairs")
    if np.any(pts <= 0.0):
        raise ValueError("all x and y must be positive")
    lx = np.log(pts[:, 0])
    ly = np.log(pts[:, 1])
    n = lx.size
    x_mean = lx.mean()
    sxx = float(np.sum((lx - x_mean) ** 2))
    if sxx == 0.0:
        raise ValueError("x values are all identical")
    slope = float(np.sum((lx - x_mean) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * x_mean)
    resid = ly - (intercept + slope * lx)
    rms = float(np.sqrt(np.mean(resid**2)))
    if n > 2:
        stderr = float(np.sqrt(np.sum(resid**2) / (n - 2) / sxx))
    else:
        stderr = 0.0
    return PowerLawFit(slope, intercept, rms, stderr)


@dataclass(frozen=True)
class SigmoidExpFit:
    p1: float
    p2: float
    p3: float
    p4: float
    converged: bool
    residual_rms: float

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.p1, self.p2, self.p3, self.p4)


def sigmoid_exp_model(c, p1, p2, p3, p4):
    """K(c) = 3 + p1 e^{p2 c} / (1 + e^{-p3 (c - p4)})."""
    c = np.asarray(c, dtype=float)
    grow = np.exp(np.clip(p2 * c, -500.0, 500.0))
    gate = 1.0 / (1.0 + np.exp(np.clip(-p3 * (c - p4), -500.0, 500.0)))
    return 3.0 + p1 * grow * gate


def _model_and_jacobian(c, params):
    p1, p2, p3, p4 = params
    grow = np.exp(np.clip(p2 * c, -500.0, 500.0))
    x = np.clip(-p3 * (c - p4), -500.0, 500.0)
    ex = np.exp(x)
    gate = 1.0 / (1.0 + ex)
    core = grow * gate
    jac = np.empty((c.size, 4))
    jac[:, 0] = core
    jac[:, 1] = p1 * c * core
    jac[:, 2] = p1 * grow * gate**2 * ex * (c - p4)
    jac[:, 3] = p1 * grow * gate**2 * ex * (-p3)
    return 3.0 + p1 * core, jac


_P4_STARTS = (0.3, 0.6, 0.9, 1.2)
_MAX_ITER = 800


def _levenberg(c, k, start, free=(True, True, True, True)):
    params = np.asarray(start, dtype=float)
    idx = np.flatnonzero(np.asarray(free, dtype=bool))
    model, jac = _model_and_jacobian(c, params)
    resid = model - k
    ssr = float(resid @ resid)
    lam = 1e-3
    converged = False
    for _ in range(_MAX_ITER):
        sub = jac[:, idx]
        jtj = sub.T @ sub
        grad = sub.T @ resid
        damped = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-12))
        try:
            step = np.linalg.solve(damped, -grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = params.copy()
        trial[idx] += step
        model, jac_trial = _model_and_jacobian(c, trial)
        trial_resid = model - k
        trial_ssr = float(trial_resid @ trial_resid)
        if trial_ssr <= ssr:
            improvement = ssr - trial_ssr
            params, resid, jac, ssr = trial, trial_resid, jac_trial, trial_ssr
            lam = max(lam / 3.0, 1e-14)
            if improvement <= 1e-11 * (ssr + 1e-300):
                converged = True
                break
        else:
            # rejected by less than float noise: no measurable descent left
            if trial_ssr - ssr <= 1e-12 * (ssr + 1e-300):
                converged = True
                break
            lam *= 3.0
            if lam > 1e12:
                break
    return params, math.sqrt(ssr / c.size), converged


def sigmoid_exp_fit(points) -> SigmoidExpFit:
    """Damped Gauss-Newton fit of the sigmoid-exponential turn-on curve.

    Deterministic multi-start over the turn-on location; returns the best
    converged start, or the best residual with converged=False if no start
    converges.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 8:
        raise ValueError("need at least 8 (c, kurtosis) pairs")
    c = pts[:, 0]
    k = pts[:, 1]
    excess = max(float(k.max() - 3.0), 0.1)
    results = []
    for p4 in _P4_STARTS:
        p2 = 1.0
        p1 = excess / math.exp(min(p2 * float(c.max()), 50.0))
        start = (p1, p2, 10.0, p4)
        params, rms, ok = _levenberg(c, k, start)
        results.append((not ok, rms, params))
    results.sort(key=lambda t: (t[0], t[1]))
    failed, rms, params = results[0]
    return SigmoidExpFit(
        p1=float(params[0]),
        p2=float(params[1]),
        p3=float(params[2]),
        p4=float(params[3]),
        converged=not failed,
        residual_rms=float(rms),
    )


def nu_vs_sigma(rows) -> list[tuple[float, float, float]]:
    """Per-sigma scaling exponents from (n, sigma, delta_phi2) records.

    Returns (sigma, nu, stderr) sorted by sigma, with nu = -slope of the
    log-log fit of the error against the system size.
    """
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValueError("rows must be (n, sigma, delta_phi2) triples")
    out = []
    for sigma in sorted(set(data[:, 1].tolist())):
        sel = data[data[:, 1] == sigma]
        if sel.shape[0] < 3:
            raise ValueError(f"need >= 3 system sizes per sigma, got {sel.shape[0]}")
        fit = powerlaw_fit(sel[:, [0, 2]])
        out.append((float(sigma), -fit.exponent, fit.exponent_stderr))
    return out

"""Batch front-end: sweeps, CSV/JSON emission, reproducibility records.

Every subcommand validates its configuration before touching numerics,
writes a results CSV whose first line carries the config hash, and drops a
<out>.meta.json reproducibility record next to it.  Identical configuration
and seed give byte-identical CSVs regardless of the worker count.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, analytic, fitting, moments, robustness, schedule, spinstate
from . import estimator as est

__all__ = ["main", "validate_config"]


def _parse_list(text, cast):
    return [cast(tok) for tok in str(text).split(",") if tok != ""]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _config_dict(args) -> dict:
    # threads and the output path are execution details: the hash must not
    # change when only they do
    skip = {"func", "config", "validate_only", "threads", "out"}
    return {
        k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None
    }


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_outputs(path, header, rows, args):
    config = _config_dict(args)
    digest = _config_hash(config)
    with open(path, "w") as fh:
        fh.write(f"# config={digest}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    meta = {
        "subcommand": args.subcommand,
        "config": config,
        "config_hash": digest,
        "version": __version__,
    }
    with open(f"{path}.meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
    return digest


def _read_csv(path):
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
            else:
                rows.append(line.split(","))
    if header is None:
        raise ValueError(f"{path}: no header line found")
    return header, rows


def _apply_config_file(args) -> None:
    """Fill unset options from a key=value file; explicit flags win."""
    if not getattr(args, "config", None):
        return
    values = {}
    with open(args.config) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SystemExit(f"{args.config}:{lineno}: expected key = value")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = val
    for key, val in values.items():
        if not hasattr(args, key):
            raise SystemExit(f"{args.config}: unknown key {key!r}")
        if getattr(args, key) is None:
            setattr(args, key, val)


# ---------------------------------------------------------------------------
# validation

def validate_config(args) -> list[str]:
    """All constraint violations for the parsed configuration; no numerics."""
    problems = []

    def want_list(field, cast, positive=True, minimum=None):
        raw = getattr(args, field, None)
        if raw is None:
            problems.append(f"{field}: required but missing")
            return None
        try:
            values = _parse_list(raw, cast)
        except ValueError:
            problems.append(f"{field}: could not parse {raw!r} as a {cast.__name__} list")
            return None
        if not values:
            problems.append(f"{field}: empty grid")
            return None
        if positive and any(v <= 0 for v in values):
            problems.append(f"{field}: entries must be positive, got {values}")
        if minimum is not None and any(v < minimum for v in values):
            problems.append(f"{field}: entries must be >= {minimum}, got {values}")
        return values

    sub = args.subcommand
    if sub == "squeeze":
        ns = want_list("n", int, minimum=2)
        depth = int(args.depth)
        if depth < 1:
            problems.append(f"depth: must be >= 1, got {depth}")
        c = float(args.c)
        if not 0.0 < c <= 1.0:
            problems.append(f"c: must be in (0, 1], got {c}")
        if args.sweep_c is not None:
            parts = str(args.sweep_c).split(":")
            if len(parts) != 3:
                problems.append("sweep_c: expected start:stop:count")
            elif ns is not None and len(ns) != 1:
                problems.append("sweep_c: kurtosis sweep needs exactly one n")
    elif sub == "estimate":
        ns = want_list("n", int, minimum=2)
        want_list("sigma", float, positive=False, minimum=0.0)
        m = int(args.ensembles)
        if m not in (1, 2, 3, 4):
            problems.append(f"ensembles: must be 1..4, got {m}")
        if args.mode not in ("exact", "mc"):
            problems.append(f"mode: must be exact or mc, got {args.mode!r}")
        if int(args.ensembles) != 1 and getattr(args, "unsqueezed", False):
            problems.append("unsqueezed: needs ensembles = 1")
        if args.mode == "mc" and args.seed is None:
            problems.append("seed: required when mode = mc")
        if args.c is not None and not 0.0 < float(args.c) <= 1.0:
            problems.append(f"c: must be in (0, 1], got {args.c}")
        if int(args.quadrature_nodes) < 1:
            problems.append("quadrature_nodes: must be >= 1")
        if ns is not None and m in (2, 3, 4):
            for n in ns:
                try:
                    est.allocate_ensembles(n, m)
                except est.AllocationError as exc:
                    problems.append(f"n: {exc}")
    elif sub == "robustness":
        if args.study not in ("number", "feedback", "contrast"):
            problems.append(f"study: must be number/feedback/contrast, got {args.study!r}")
        want_list("n", int, minimum=2)
        if args.study == "number":
            if args.dist not in ("delta", "poisson", "binomial"):
                problems.append(f"dist: unknown kind {args.dist!r}")
            if int(args.samples) < 1:
                problems.append("samples: must be >= 1")
            if args.seed is None:
                problems.append("seed: required for the number study")
        if args.study == "feedback":
            want_list("sigma_fb", float, positive=False, minimum=0.0)
            if args.seed is None:
                problems.append("seed: required for the feedback study")
        if args.study == "contrast":
            want_list("gamma", float, positive=False, minimum=0.0)
    elif sub == "fit":
        if args.kind not in ("powerlaw", "sigmoid", "nu-vs-sigma"):
            problems.append(f"kind: unknown fit {args.kind!r}")
    elif sub == "predict":
        known = ("chi-star", "s2-pattern", "chi-pattern", "recursion", "weakly-ng")
        if args.formula not in known:
            problems.append(f"formula: must be one of {known}, got {args.formula!r}")
    elif sub == "qdist":
        if int(args.polar_points) < 2 or int(args.azimuth_points) < 2:
            problems.append("polar_points/azimuth_points: need at least 2 each")
    return problems


# ---------------------------------------------------------------------------
# squeeze

def _cmd_squeeze(args) -> int:
    ns = _parse_list(args.n, int)
    depth = int(args.depth)
    c = float(args.c)
    unscaled = bool(args.theta_from_unscaled)
    if args.sweep_c is not None:
        start, stop, count = str(args.sweep_c).split(":")
        c_values = np.linspace(float(start), float(stop), int(count))
        rows = schedule.kurtosis_sweep(ns[0], depth, c_values, unscaled)
        _write_outputs(args.out, ["c", "kurt_jy", "kurt_jz"], rows, args)
        return 0
    xi2 = []
    for n in ns:
        sched = schedule.build_schedule(n, depth, c, theta_from_unscaled=unscaled)
        state = schedule.prepare_state(sched)
        xi2.append(moments.wineland_xi2(moments.compute_moments(state)))
    if len(ns) >= 3:
        mu = -fitting.powerlaw_fit(list(zip(ns, xi2))).exponent
    else:
        mu = float("nan")
    rows = [(n, x, mu) for n, x in zip(ns, xi2)]
    _write_outputs(args.out, ["n", "xi2", "mu_fit"], rows, args)
    return 0


# ---------------------------------------------------------------------------
# estimate

def _estimate_point(payload):
    (n, sigma, m, c, nodes, mode, l_samples, seed, mc_start, gaussian_from,
     budget, optimize, unsqueezed) = payload
    mc = None
    if mode == "mc":
        mc = est.MonteCarloConfig(
            l_samples=l_samples,
            seed=seed,
            start_ensemble=mc_start,
            gaussian_from=gaussian_from,
        )
    protocol = est.build_protocol(
        n, m, sigma, c=c, quadrature_nodes=nodes, mc=mc, branch_budget=budget,
        unsqueezed=unsqueezed,
    )
    if optimize:
        polished = est.optimize_last_ensemble(protocol)
        ensembles = protocol.ensembles[:-1] + (
            est.EnsembleSpec.squeezed(polished.schedule),
        )
        protocol = est.ProtocolSpec(
            ensembles=ensembles,
            prior_sigma=protocol.prior_sigma,
            quadrature_nodes=protocol.quadrature_nodes,
            mc=protocol.mc,
            branch_budget=protocol.branch_budget,
        )
    if mode == "mc":
        result = est.error_monte_carlo(protocol)
    else:
        result = est.error_exact(protocol)
    return (n, sigma, mode, result.delta_phi2, result.standard_error,
            seed if mode == "mc" else "")


def _cmd_estimate(args) -> int:
    ns = _parse_list(args.n, int)
    sigmas = _parse_list(args.sigma, float)
    m = int(args.ensembles)
    c = float(args.c) if args.c is not None else None
    nodes = int(args.quadrature_nodes)
    mode = args.mode
    seed = int(args.seed) if args.seed is not None else 0
    threads = int(args.threads)
    payloads = []
    for i, n in enumerate(ns):
        for j, sigma in enumerate(sigmas):
            point_seed = seed + 1000003 * i + j
            payloads.append(
                (n, sigma, m, c, nodes, mode, int(args.l), point_seed,
                 int(args.mc_start), args.gaussian_from and int(args.gaussian_from),
                 float(args.budget), bool(args.optimize_last),
                 bool(args.unsqueezed))
            )
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_estimate_point, payloads))
    else:
        rows = [_estimate_point(p) for p in payloads]
    _write_outputs(
        args.out,
        ["n_total", "sigma", "mode", "delta_phi2", "stderr", "seed"],
        rows,
        args,
    )
    return 0


# ---------------------------------------------------------------------------
# robustness

def _cmd_robustness(args) -> int:
    ns = _parse_list(args.n, int)
    seed = int(args.seed) if args.seed is not None else 0
    rows = []
    if args.study == "number":
        dist_kind = args.dist
        depth = int(args.depth)
        c = float(args.c)

        def builder(n_target):
            return schedule.build_schedule(n_target, depth, c)

        for i, n in enumerate(ns):
            dist = robustness.NumberDistribution(dist_kind, n, p=float(args.p))
            mean, std = robustness.number_fluctuation_xi2(
                n, dist, builder, int(args.samples), seed=seed + i
            )
            rows.append(("number", n, dist_kind, mean, std, seed + i))
    elif args.study == "feedback":
        sigma = float(args.sigma)
        sigma_fbs = _parse_list(args.sigma_fb, float)
        for i, n in enumerate(ns):
            protocol = est.build_protocol(
                n, int(args.ensembles), sigma, quadrature_nodes=int(args.quadrature_nodes)
            )
            for j, sfb in enumerate(sigma_fbs):
                noise = robustness.FeedbackNoise(
                    sigma_fb=sfb,
                    outer_samples=int(args.l_outer),
                    inner_samples=int(args.l_inner),
                    seed=seed + 1000003 * i + j,
                    mode=args.est_mode,
                )
                result = robustness.feedback_error(protocol, noise)
                rows.append(
                    ("feedback", n, sfb, result.delta_phi2, result.standard_error,
                     noise.seed)
                )
    else:  # contrast
        depth = int(args.depth)
        c = float(args.c)
        gammas = _parse_list(args.gamma, float)
        for n in ns:
            sched = schedule.build_schedule(n, depth, c)
            state = schedule.prepare_state(sched)
            xi2 = moments.wineland_xi2(moments.compute_moments(state))
            for gamma in gammas:
                adjusted = robustness.contrast_adjusted_xi2(xi2, sched, gamma)
                rows.append(("contrast", n, gamma, adjusted, 0.0, ""))
    _write_outputs(
        args.out, ["study", "n_target", "parameter", "mean", "std", "seed"], rows, args
    )
    return 0


# ---------------------------------------------------------------------------
# fit

def _cmd_fit(args) -> int:
    header, raw = _read_csv(args.input)
    cols = {name: i for i, name in enumerate(header)}

    def column(name):
        if name not in cols:
            raise SystemExit(f"{args.input}: no column {name!r} in {header}")
        return np.array([float(r[cols[name]]) for r in raw])

    if args.kind == "powerlaw":
        x = column(args.x_col)
        y = column(args.y_col)
        fit = fitting.powerlaw_fit(np.column_stack([x, y]))
        rows = [(fit.exponent, fit.log_prefactor, fit.residual_rms, fit.exponent_stderr)]
        _write_outputs(
            args.out, ["exponent", "log_prefactor", "residual_rms", "stderr"], rows, args
        )
        print(f"exponent = {fit.exponent:.6f} +- {fit.exponent_stderr:.6f}")
    elif args.kind == "sigmoid":
        x = column(args.x_col)
        y = column(args.y_col)
        fit = fitting.sigmoid_exp_fit(np.column_stack([x, y]))
        rows = [(fit.p1, fit.p2, fit.p3, fit.p4, int(fit.converged), fit.residual_rms)]
        _write_outputs(
            args.out, ["p1", "p2", "p3", "p4", "converged", "residual_rms"], rows, args
        )
        print(f"p4 = {fit.p4:.6f} (converged={fit.converged})")
    else:  # nu-vs-sigma
        n = column("n_total")
        sigma = column("sigma")
        err = column("delta_phi2")
        table = fitting.nu_vs_sigma(np.column_stack([n, sigma, err]))
        n_lo, n_hi = int(n.min()), int(n.max())
        rows = [(s, nu, se, n_lo, n_hi) for s, nu, se in table]
        _write_outputs(
            args.out, ["sigma", "nu", "stderr", "n_min", "n_max"], rows, args
        )
        for s, nu, se in table:
            print(f"sigma={s:g}: nu = {nu:.4f} +- {se:.4f}")
    return 0


# ---------------------------------------------------------------------------
# predict

def _cmd_predict(args) -> int:
    n = int(args.n)
    s2 = float(args.s2)
    if args.formula == "chi-star":
        named = [("chi_star", analytic.chi_star_unrotated(n, s2))]
    elif args.formula == "s2-pattern":
        named = [("s2", analytic.s2_pattern(int(args.j), n))]
    elif args.formula == "chi-pattern":
        named = [("chi", analytic.chi_pattern(int(args.j), n))]
    elif args.formula == "recursion":
        step = analytic.tg_recursion(n, s2, float(args.sigma))
        named = [("chi_star", step.chi_star), ("xibar2", step.xibar2), ("s2_next", step.s2)]
    else:  # weakly-ng
        dj2, xi2, xibar2 = analytic.weakly_ng_optimum(n, float(args.sigma), float(args.w_z))
        named = [("var_jy", dj2), ("xi2", xi2), ("xibar2", xibar2)]
    for name, value in named:
        print(f"{name} = {value:.6g}")
    if args.out:
        _write_outputs(args.out, [k for k, _ in named], [tuple(v for _, v in named)], args)
    return 0


# ---------------------------------------------------------------------------
# qdist

def _cmd_qdist(args) -> int:
    n = int(args.n)
    if int(args.depth) > 0:
        sched = schedule.build_schedule(n, int(args.depth), float(args.c))
        state = schedule.prepare_state(sched)
    else:
        state = spinstate.coherent_x(n)
    polar = np.linspace(0.0, math.pi, int(args.polar_points))
    azimuth = np.linspace(0.0, 2.0 * math.pi, int(args.azimuth_points), endpoint=False)
    grid = [(th, ph) for th in polar for ph in azimuth]
    q = spinstate.husimi_q(state, grid)
    rows = [(th, ph, float(v)) for (th, ph), v in zip(grid, q)]
    _write_outputs(args.out, ["polar", "azimuth", "q"], rows, args)
    return 0


# ---------------------------------------------------------------------------
# parser

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spintwist",
        description="Collective-spin squeezing and adaptive phase-estimation sweeps",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--validate-only", action="store_true", dest="validate_only")

    p = sub.add_parser("squeeze", help="squeezing-parameter sweeps and kurtosis sweeps")
    common(p)
    p.add_argument("--n", help="comma-separated system sizes")
    p.add_argument("--depth", default=1)
    p.add_argument("--c", default=0.7)
    p.add_argument("--sweep-c", dest="sweep_c", help="start:stop:count kurtosis sweep")
    p.add_argument("--theta-from-unscaled", action="store_true", dest="theta_from_unscaled")
    p.set_defaults(func=_cmd_squeeze)

    p = sub.add_parser("estimate", help="Bayesian mean-squared-error sweeps")
    common(p)
    p.add_argument("--n", help="comma-separated total particle numbers")
    p.add_argument("--sigma", help="comma-separated prior standard deviations")
    p.add_argument("--ensembles", default=2)
    p.add_argument("--c", default=None)
    p.add_argument("--mode", default="exact", choices=["exact", "mc"])
    p.add_argument("--l", default=10, help="Monte Carlo samples per branch")
    p.add_argument("--seed", default=None)
    p.add_argument("--mc-start", dest="mc_start", default=2)
    p.add_argument("--gaussian-from", dest="gaussian_from", default=None)
    p.add_argument("--quadrature-nodes", dest="quadrature_nodes", default=101)
    p.add_argument("--budget", default=1e9)
    p.add_argument("--threads", default=1)
    p.add_argument("--optimize-last", action="store_true", dest="optimize_last")
    p.add_argument("--unsqueezed", action="store_true",
                   help="bare coherent probe (single-ensemble only)")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("robustness", help="imperfection studies")
    common(p)
    p.add_argument("--study", required=True)
    p.add_argument("--n", help="target or total sizes")
    p.add_argument("--depth", default=2)
    p.add_argument("--c", default=0.7)
    p.add_argument("--dist", default="poisson")
    p.add_argument("--p", default=0.98)
    p.add_argument("--samples", default=200)
    p.add_argument("--ensembles", default=3)
    p.add_argument("--sigma", default=0.32)
    p.add_argument("--sigma-fb", dest="sigma_fb", default="0.001")
    p.add_argument("--l-outer", dest="l_outer", default=10)
    p.add_argument("--l-inner", dest="l_inner", default=1)
    p.add_argument("--est-mode", dest="est_mode", default="est4")
    p.add_argument("--gamma", default="0.1")
    p.add_argument("--quadrature-nodes", dest="quadrature_nodes", default=101)
    p.add_argument("--seed", default=None)
    p.set_defaults(func=_cmd_robustness)

    p = sub.add_parser("fit", help="fit exponents or the kurtosis turn-on")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--kind", default="nu-vs-sigma")
    p.add_argument("--x-col", dest="x_col", default="n")
    p.add_argument("--y-col", dest="y_col", default="xi2")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="closed-form predictions")
    common(p)
    p.add_argument("--formula", required=True)
    p.add_argument("--n", default=1000)
    p.add_argument("--s2", default=1.0)
    p.add_argument("--sigma", default=0.1)
    p.add_argument("--j", default=2)
    p.add_argument("--w-z", dest="w_z", default=2.0)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("qdist", help="Husimi-Q samples of a prepared state")
    common(p)
    p.add_argument("--n", default=100)
    p.add_argument("--depth", default=1)
    p.add_argument("--c", default=0.7)
    p.add_argument("--polar-points", dest="polar_points", default=41)
    p.add_argument("--azimuth-points", dest="azimuth_points", default=81)
    p.set_defaults(func=_cmd_qdist)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _apply_config_file(args)
    problems = validate_config(args)
    if args.validate_only:
        if problems:
            for item in problems:
                print(item)
            return 2
        print("ok")
        return 0
    if problems:
        for item in problems:
            print(f"invalid config: {item}", file=sys.stderr)
        return 2
    if args.subcommand != "predict" and not args.out:
        print("invalid config: out: required output path missing", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - surface which run broke and why
        config = _config_dict(args)
        print(
            f"{args.subcommand} failed: {type(exc).__name__}: {exc} (config {config})",
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())

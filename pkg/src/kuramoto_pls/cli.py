"""Command-line front end: ``kd <subcommand> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure
(a JSON error record is printed to stdout).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, bicauchy, distributions, finiten, meanfield, pls, spectral
from .errors import KuramotoError, NumericalFailure

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_FORMAT = {
    "pls": "json", "stability": "json", "norms": "json", "oa-sim": "csv",
    "sweep": "csv", "simulate": "csv", "finite-n": "csv", "bicauchy": "csv",
}
UNRESOLVED = {"func", "out", "format", "config", "workers"}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def k_range(text: str) -> list[float]:
    """``start:stop:step``, both ends included."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"K-range must be start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise UsageError("K-range needs step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9))
    return [start + i * step for i in range(n + 1)]


def workers(args) -> int:
    cap = os.environ.get("KD_THREADS")
    n = args.workers or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise UsageError(f"KD_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in UNRESOLVED}


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (complex, np.complexfloating)):
        return [_clean(x.real), _clean(x.imag)]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if not math.isfinite(x) else x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _write(text: str, out: str | None):
    if out and out != "-":
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def emit_json(args, result: dict):
    cfg = resolved(args)
    record = {"command": args.command, "version": __version__, "config": cfg, "config_hash": config_hash(cfg),
              "result": result}
    _write(json.dumps(_clean(record), indent=2, sort_keys=True) + "\n", args.out)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.16e}"
    return str(v)


def emit_csv(args, columns: list[str], rows, units: str):
    cfg = resolved(args)
    lines = [
        f"# kd {args.command} version={__version__} config_hash={config_hash(cfg)}",
        f"# config {json.dumps(_clean(cfg), sort_keys=True)}",
        f"# units: {units}",
        ",".join(columns),
    ]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    _write("\n".join(lines) + "\n", args.out)


def emit(args, result: dict, columns: list[str], rows, units: str):
    if args.format == "json":
        emit_json(args, {**result, "columns": columns, "rows": [list(r) for r in rows]})
    else:
        emit_csv(args, columns, rows, units)


def _dist(args):
    try:
        return distributions.parse(args.dist)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None


def _states(args, dist, which: str):
    states = pls.solve_rs(dist, args.K)
    if which == "largest":
        return states[:1]
    if which == "smallest":
        return states[-1:]
    return states


# ---------------------------------------------------------------------------
# subcommands


def cmd_pls(args):
    dist = _dist(args)
    states = pls.solve_rs(dist, args.K)
    cert = pls.decay_certificate(states[0], args.a, args.L)
    emit_json(args, {
        "r_s": states[0].r_s,
        "residual": states[0].residual,
        "all_r_s": [s.r_s for s in states],
        "a": args.a,
        "q": cert.q,
        "mode_norms": cert.mode_norms,
        "modes_for_1e-10": pls.modes_for_tolerance(cert.q),
    })
    return 0


def cmd_stability(args):
    dist = _dist(args)
    reports = []
    for st in _states(args, dist, args.branch):
        rep = spectral.SpectralProblem(st, delta=args.delta, method=args.method).stability_verdict()
        reports.append({"r_s": st.r_s, **rep.as_dict()})
    emit_json(args, {"K": args.K, "reports": reports})
    return 0


def _sweep_point(dist_text: str, K: float, delta: float, method: str) -> list[list]:
    dist = distributions.parse(dist_text)
    try:
        states = pls.solve_rs(dist, K)
    except NumericalFailure:
        return [[K, 0, math.nan, "NoPLS", math.nan, -1]]
    rows = []
    for i, st in enumerate(states):
        rep = spectral.SpectralProblem(st, delta=delta, method=method).stability_verdict()
        rows.append([K, i, st.r_s, rep.verdict.value, math.nan if rep.simplicity is None else rep.simplicity,
                     -1 if rep.zero_count is None else rep.zero_count])
    return rows


def cmd_sweep(args):
    dist = _dist(args)
    Ks = k_range(args.K_range)
    spec = dist.describe()
    n = workers(args)
    jobs = [(spec, K, args.delta, args.method) for K in Ks]
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            chunks = list(pool.map(_sweep_point, *zip(*jobs)))
    else:
        chunks = [_sweep_point(*j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    emit(args, {}, ["K", "root", "r_s", "verdict", "simplicity", "zero_count"], rows,
         "K coupling; root 0 = largest r_s; simplicity = |D'(0)|")
    return 0


def _sim_grid(args):
    if args.tau_min is None:
        return meanfield.relaxation_grid(args.tend, args.tau_max, args.dtau)
    return meanfield.TauGrid(args.tau_min, args.tau_max, args.dtau)


def cmd_simulate(args):
    dist = _dist(args)
    st = _states(args, dist, args.branch)[0]
    try:
        pert = meanfield.parse_perturbation(args.perturb)
        grid = _sim_grid(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    p = meanfield.NormParams(args.a, 0.0)
    L = args.L or meanfield.default_modes(st, args.a)
    cfg = meanfield.SimConfig(args.K, dist, grid, args.tend, args.record_every, L)
    res = meanfield.relaxation_experiment(st, pert, cfg, p)
    rows = [[t, d, r.real, r.imag, th] for t, d, r, th in zip(res.t, res.distance, res.r, res.theta)]
    emit(args, {"r_s": st.r_s, "L": L, "rate": res.rate, "r_squared": res.r_squared, "theta_inf": res.theta_inf,
                "boundary_weight": meanfield.boundary_weight(grid, args.a)},
         ["t", "dist_a0", "re_r", "im_r", "theta_star"], rows,
         f"t time; dist_a0 weighted distance (a={args.a}) to the rotated stationary family; "
         f"boundary weight exp(2 a tau_min)={meanfield.boundary_weight(grid, args.a):.3e}")
    return 0


def cmd_finite_n(args):
    if args.seed is None:
        raise UsageError("finite-n needs --seed")
    dist = _dist(args)
    r_s = pls.solve_rs(dist, args.K)[0].r_s if args.init == "pls" else None
    e = finiten.make_ensemble(dist, args.K, args.N, args.seed, args.sampling, args.init, r_s)
    tr = finiten.integrate(e, args.tend, record_every=args.record_every)
    rows = [[t, abs(z), math.atan2(z.imag, z.real)] for t, z in zip(tr.t, tr.Z)]
    emit(args, {"r_s": r_s}, ["t", "abs_Z", "arg_Z"], rows, "t time; Z complex order parameter")
    return 0


def cmd_bicauchy(args):
    try:
        bicauchy._check_bimodal(args.delta, args.omega0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    x_star, k_fold = bicauchy.psi_minimum(args.delta, args.omega0)
    cols = ["K", "rho_minus", "rho_plus", "r_minus", "r_plus", "verdict_minus", "verdict_plus"]
    table = bicauchy.bifurcation_diagram(args.delta, args.omega0, k_range(args.K_range))
    rows = [[row[c] if row[c] != "" else "none" for c in cols] for row in table]
    emit(args, {"x_fold": x_star, "K_fold": k_fold, "K_c": float(bicauchy.psi_map(args.delta, args.omega0, 0.0))},
         cols, rows, "K coupling; rho branch amplitude; r order parameter")
    return 0


def cmd_oa_sim(args):
    rng = np.random.default_rng(args.seed)
    noise = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    noise *= args.perturb / np.linalg.norm(noise)
    if args.branch == "incoherent":
        z0 = noise
    else:
        branches = {b.label: b for b in bicauchy.solve_branches(args.delta, args.omega0, args.K)}
        if args.branch not in branches:
            raise UsageError(f"no {args.branch} branch at K={args.K}")
        z0 = bicauchy.oa_fixed_point(args.delta, args.omega0, args.K, branches[args.branch].r) + noise
    tr = bicauchy.oa_integrate(z0, args.delta, args.omega0, args.K, args.tend, record_every=args.record_every,
                               start_label=args.branch)
    nan = np.full(tr.t.size, math.nan)
    dp = tr.dist_plus if tr.dist_plus is not None else nan
    dm = tr.dist_minus if tr.dist_minus is not None else nan
    r = tr.order_parameter
    rows = [[t, z[0].real, z[0].imag, z[1].real, z[1].imag, abs(ri), a, b]
            for t, z, ri, a, b in zip(tr.t, tr.z, r, dp, dm)]
    emit(args, {"classification": tr.classification},
         ["t", "re_z1", "im_z1", "re_z2", "im_z2", "abs_r", "dist_plus", "dist_minus"], rows,
         "t time; z1, z2 amplitudes; dist_* distance to the branch circles")
    return 0


def cmd_norms(args):
    dist = _dist(args)
    st = _states(args, dist, args.branch)[0]
    grid = meanfield.TauGrid(args.tau_min if args.tau_min is not None else -40.0, args.tau_max, args.dtau)
    L = args.L or meanfield.default_modes(st, args.a)
    f = meanfield.sample_pls_field(st, grid, L)
    p = meanfield.NormParams(args.a, args.k)
    val, err = meanfield.weighted_norm(f, p, with_error=True)
    per_mode = np.sqrt(meanfield.mode_norms_sq(f.values[: min(L, 16)], grid, args.a))
    emit_json(args, {
        "r_s": st.r_s, "L": L, "norm": val, "relative_error_estimate": err,
        "boundary_weight": meanfield.boundary_weight(grid, args.a),
        "mode_norms": per_mode, "fourier_norm_a": dist.fourier_norm_a(args.a),
    })
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p, dist=True, K=True):
    if dist:
        p.add_argument("--dist", default="cauchy:delta=1", help="cauchy:delta=..,omega0=.. | bicauchy:.. | gauss:sigma=.. | mix:w,d,o;..")
    if K:
        p.add_argument("--K", type=float, default=4.0)
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--config", default=None, help="TOML file; keys mirror the long options")
    p.add_argument("--workers", type=int, default=None)


def _grid_opts(p):
    p.add_argument("--tau-min", type=float, default=None)
    p.add_argument("--tau-max", type=float, default=40.0)
    p.add_argument("--dtau", type=float, default=0.02)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--a", type=float, default=0.25)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kd", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"kd {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pls", help="solve the self-consistency equation")
    _common(p)
    p.add_argument("--a", type=float, default=0.25)
    p.add_argument("--L", type=int, default=16)
    p.set_defaults(func=cmd_pls)

    p = sub.add_parser("stability", help="spectral stability verdict")
    _common(p)
    p.add_argument("--branch", choices=["largest", "smallest", "all"], default="largest")
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--method", choices=["auto", "poles", "contour", "quad"], default="auto")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("sweep", help="stability verdicts over a K range")
    _common(p, K=False)
    p.add_argument("--K-range", dest="K_range", default="2:12:0.5")
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--method", choices=["auto", "poles", "contour", "quad"], default="auto")
    p.add_argument("--seed", type=int, default=0, help="recorded only; the sweep is deterministic")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="mean-field relaxation experiment")
    _common(p)
    _grid_opts(p)
    p.add_argument("--perturb", default="dilate:0.02")
    p.add_argument("--tend", type=float, default=60.0)
    p.add_argument("--record-every", type=float, default=1.0)
    p.add_argument("--branch", choices=["largest", "smallest"], default="largest")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("finite-n", help="finite-N Kuramoto ensemble")
    _common(p)
    p.add_argument("--N", type=int, default=10000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tend", type=float, default=100.0)
    p.add_argument("--record-every", type=float, default=0.1)
    p.add_argument("--sampling", choices=["iid", "quantile"], default="iid")
    p.add_argument("--init", choices=["pls", "uniform"], default="pls")
    p.set_defaults(func=cmd_finite_n)

    p = sub.add_parser("bicauchy", help="bi-Cauchy branch diagram")
    _common(p, dist=False, K=False)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--omega0", type=float, default=2.0)
    p.add_argument("--K-range", dest="K_range", default="4:14:0.05")
    p.set_defaults(func=cmd_bicauchy)

    p = sub.add_parser("oa-sim", help="bi-Cauchy amplitude dynamics")
    _common(p, dist=False)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--omega0", type=float, default=2.0)
    p.add_argument("--branch", choices=["plus", "minus", "incoherent"], default="plus")
    p.add_argument("--perturb", type=float, default=1e-3)
    p.add_argument("--tend", type=float, default=200.0)
    p.add_argument("--record-every", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oa_sim)

    p = sub.add_parser("norms", help="weighted norm of the stationary field")
    _common(p)
    _grid_opts(p)
    p.add_argument("--k", type=float, default=0.0)
    p.add_argument("--branch", choices=["largest", "smallest"], default="largest")
    p.set_defaults(func=cmd_norms)

    for name, sp in sub.choices.items():
        sp.add_argument("--format", choices=["csv", "json"], default=DEFAULT_FORMAT[name])
    return ap


def _load_config(path: str, command: str, parser: argparse.ArgumentParser) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    flat.update(data.get(command, {}))
    known = {a.dest for a in parser._actions}
    out = {}
    for key, val in flat.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"unknown config key {key!r} for {command}")
        out[dest] = val
    return out


def parse_args(argv=None) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        sp = ap._subparsers._group_actions[0].choices[args.command]
        sp.set_defaults(**_load_config(args.config, args.command, sp))
        args = ap.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"kd: error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except NumericalFailure as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}, sort_keys=True))
        return 3
    except (UsageError, KuramotoError, ValueError) as exc:
        print(f"kd: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

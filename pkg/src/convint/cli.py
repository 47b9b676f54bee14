"""Command-line front end.

Usage::

    convint <subcommand> [key=value ...] [config=path]

A config file holds flat ``key=value`` lines (``#`` starts a comment);
command-line pairs override it.  Unknown keys are rejected.  Exit codes:
0 success, 1 verification failure, 2 configuration error, 3 numerical
error.  Every run writes ``summary.txt`` with the effective configuration
into ``out`` (default ``convint_out``); CSV files carry no timestamps.
"""

from __future__ import annotations

import csv
import datetime
import os
import sys
import warnings
from fractions import Fraction

import numpy as np

from .errors import ConfigError, ConvintError, DomainError, NumericalError, ScheduleError

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_REQ = object()

_COMMON = {"out": "convint_out", "config": None}

_GRID = {"n": 256, "margin": 0.5, "fd_order": 8, "grid": "extended"}

SPECS = {
    "verify-schedule": {"N": _REQ, "K": _REQ, "sigma": _REQ, "gamma": _REQ, "mu0": 1.0,
                        "sigma0": 1.0},
    "simulate-bounds": {"N": _REQ, "K": _REQ, "gamma": 0.01, "sigma": 2.0, "mu0": 1.0, "C": 1.0},
    "run-stage": {**_GRID, "n": 512, "mode": "relaxed", "N": 2, "K": 1, "gamma": 0.01,
                  "l": 0.25, "eta": None, "lam": None, "mu0": 4.0, "r1": 6.0, "r2": 6.0,
                  "freqs": None, "sigma0": 4.0, "tol": 1e-4, "precondition": "warn",
                  "save_fields": 1},
    "run": {**_GRID, "N": 2, "K": 1, "gamma": 0.01, "mu0": 7.0, "rho": 0.3, "r1": 3.0,
            "r2": 3.0, "stages": 3, "eps": 1.0, "defect_tol": 0.0, "sigma0": 4.0, "tol": 1e-4,
            "precondition": "warn"},
    "density": {**_GRID, "f": "one", "N": 2, "K": 1, "gamma": 0.01, "mu0": 7.0, "rho": 0.3,
                "r1": 3.0, "r2": 3.0, "stages": 3, "eps": 1.0, "c": None, "coarse": 0.1,
                "sigma0": 4.0, "tol": 1e-4, "precondition": "warn"},
    "export-mesh": {"snapshot": _REQ, "field": "v", "component": 1, "stride": 1,
                    "name": "mesh.obj"},
    "self-test": {},
}

_INT_KEYS = {"N", "K", "n", "fd_order", "stages", "component", "stride", "save_fields"}
_STR_KEYS = {"out", "config", "mode", "grid", "freqs", "f", "precondition", "field", "name",
             "snapshot"}


def parse_pairs(items):
    out = {}
    for it in items:
        if "=" not in it:
            raise ConfigError(f"expected key=value, got {it!r}")
        k, _, v = it.partition("=")
        k = k.strip()
        if not k:
            raise ConfigError(f"empty key in {it!r}")
        out[k] = v.strip()
    return out


def read_config_file(path):
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    items = []
    for ln in lines:
        ln = ln.split("#", 1)[0].strip()
        if ln:
            items.append(ln)
    return parse_pairs(items)


def _convert(key, raw):
    if raw is None:
        return None
    if key in _STR_KEYS:
        return raw
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key == "gamma" and "/" in str(raw):
            return float(Fraction(raw))
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None


def resolve_config(cmd, pairs):
    spec = {**_COMMON, **SPECS[cmd]}
    merged = {}
    if "config" in pairs:
        merged.update(read_config_file(pairs["config"]))
    merged.update(pairs)
    unknown = sorted(set(merged) - set(spec))
    if unknown:
        raise ConfigError(f"unknown key(s) for {cmd}: {', '.join(unknown)}")
    cfg = {}
    for k, default in spec.items():
        if k in merged:
            cfg[k] = _convert(k, merged[k])
        elif default is _REQ:
            raise ConfigError(f"missing required key: {k}")
        else:
            cfg[k] = default
    return cfg


def _fmt(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_csv(path, rows, columns=None):
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r.get(c, "")) for c in columns])


def write_summary(out, cmd, cfg, results):
    path = os.path.join(out, "summary.txt")
    with open(path, "w") as fh:
        fh.write(f"# generated={datetime.datetime.now(datetime.timezone.utc).isoformat()}\n")
        fh.write(f"command={cmd}\n")
        for k in sorted(cfg):
            fh.write(f"config.{k}={cfg[k]}\n")
        for k, v in results.items():
            fh.write(f"{k}={_fmt(v)}\n")
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_verify_schedule(cfg, out):
    from .schedule import exponent_summary, make_schedule, verify_conditions

    s = make_schedule(cfg["mu0"], cfg["sigma"], cfg["N"], cfg["K"])
    # decimal input is taken literally so margins print as short fractions
    rep = verify_conditions(s, Fraction(repr(cfg["gamma"])), cfg["sigma0"])
    rows = s.rows()
    write_csv(os.path.join(out, "schedule.csv"), rows, ["k", "lam_exp", "mu_exp", "lam_exp_pq",
                                                        "mu_exp_pq"])
    crow = [{"name": c.name, "k": c.k, "lhs": c.lhs, "rhs": c.rhs, "margin": c.margin,
             "exact": c.exact, "pass": c.passed} for c in rep.conditions]
    write_csv(os.path.join(out, "conditions.csv"), crow)
    print(f"{'k':>3} {'exp(lam_k)':>12} {'exp(mu_k)':>12}")
    for r in rows:
        print(f"{r['k']:>3} {str(r['lam_exp']):>12} {str(r['mu_exp']):>12}")
    print(f"{'condition':<16} {'k':>3} {'margin':>14} pass")
    for c in rep.conditions:
        print(f"{c.name:<16} {c.k:>3} {_fmt(c.margin):>14} {c.passed}")
    res = {"passed": rep.passed, "sigma0_max": rep.sigma0_max,
           "sigma0_max_log_sigma": rep.sigma0_max_log}
    if cfg["N"] >= 4 and cfg["K"] >= 4:
        summ = exponent_summary(cfg["N"], cfg["K"])
        print(f"r={summ['r']} alpha={summ['alpha']} gamma_max={summ['gamma_max']}")
        res.update({"r": summ["r"], "alpha": summ["alpha"], "gamma_max": summ["gamma_max"]})
    write_summary(out, "verify-schedule", cfg, res)
    if not rep.passed:
        bad = ", ".join(f"{c.name}[k={c.k}]" for c in rep.failures())
        print(f"conditions failed: {bad}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _cmd_simulate_bounds(cfg, out):
    from .stage import simulate_stage_bounds

    L = simulate_stage_bounds(cfg["N"], cfg["K"], cfg["gamma"], cfg["sigma"], cfg["mu0"], cfg["C"])
    rows = []
    for k, m in enumerate(L.Ct):
        d = m.describe(L.N)
        rows.append({"k": k, "C_power": d["C_power"], "Ct0_power": d["Ct0_power"],
                     "sigma_exp": d["sigma_power"][0], "sigma_exp_gamma": d["sigma_power"][1],
                     "mu0_exp_gamma": d["mu0_power"][1]})
    write_csv(os.path.join(out, "ledger.csv"), rows)
    print(f"decay exponent: {L.decay_exponent}")
    print(f"growth exponent: {L.growth_exponent}")
    print(f"gamma part of Ct_K: {L.gamma_part}  Lambda exponent: {L.Lambda_exponent}")
    write_summary(out, "simulate-bounds", cfg, {
        "decay_exponent": L.decay_exponent, "growth_exponent": L.growth_exponent,
        "gamma_part": L.gamma_part, "Lambda_exponent": L.Lambda_exponent,
        "gamma_bar": L.gamma_bar})
    return EXIT_OK


def _standard_problem(cfg):
    from .domains import extended_grid, unit_square
    from .grid_fields import Grid2, SymMatrixField, VectorField

    if cfg["grid"] == "extended":
        dom = unit_square()
        g = extended_grid(dom, cfg["margin"], n=cfg["n"], fd_order=cfg["fd_order"])
    elif cfg["grid"] == "periodic":
        dom = None
        g = Grid2.torus(cfg["n"], length=1.0)
    else:
        raise ConfigError("grid must be extended or periodic")
    return dom, g, VectorField.zeros(g, 3), VectorField.zeros(g, 2), SymMatrixField.identity(g)


def _parse_freqs(text):
    try:
        pairs = [p.split(":") for p in text.split(",") if p]
        return [(float(a), float(b)) for a, b in pairs]
    except ValueError:
        raise ConfigError("freqs must look like 24:144,864:5184") from None


def _cmd_run_stage(cfg, out):
    from .fieldio import save_snapshot
    from .stage import run_stage

    dom, g, v, w, A = _standard_problem(cfg)
    freqs = _parse_freqs(cfg["freqs"]) if cfg["freqs"] else None
    K = len(freqs) if freqs else cfg["K"]
    v1, w1, rep = run_stage(v, w, A, cfg["l"], cfg["lam"], N=cfg["N"], K=K, gamma=cfg["gamma"],
                            domain=dom, mode=cfg["mode"], frequencies=freqs,
                            ratios=(cfg["r1"], cfg["r2"]), mu0=cfg["mu0"], sigma0=cfg["sigma0"],
                            tol=cfg["tol"], on_precondition=cfg["precondition"], eta=cfg["eta"])
    write_csv(os.path.join(out, "steps.csv"), rep.step_rows())
    res = {}
    for key, val in rep.measured.items():
        res[f"measured.{key}"] = val
    for key, val in rep.predicted.items():
        res[f"predicted.{key}"] = val
    for key, val in rep.ratios.items():
        res[f"ratio.{key}"] = val
    res["Ct0"] = rep.Ct0
    res["mollification_constant"] = rep.mollification_constant
    for s in rep.steps:
        print(f"step {s.k}: lam={s.lam:g} mu={s.mu:g} defect {s.defect_before:.4e} -> "
              f"{s.defect_after:.4e} bookkeeping {s.bookkeeping_relative:.2e}")
    if cfg["save_fields"]:
        save_snapshot(os.path.join(out, "stage_fields.csv"), {"v": v1, "w": w1})
    write_summary(out, "run-stage", cfg, res)
    return EXIT_OK


def _nk_kwargs(cfg):
    return dict(N=cfg["N"], K=cfg["K"], gamma=cfg["gamma"], mu0=cfg["mu0"], rho=cfg["rho"],
                ratios=(cfg["r1"], cfg["r2"]), max_stages=cfg["stages"], sigma0=cfg["sigma0"],
                tol=cfg["tol"], on_precondition=cfg["precondition"])


def _cmd_run(cfg, out):
    from .driver import NashKuiperConfig, estimate_alpha, run_nash_kuiper

    dom, g, v, w, A = _standard_problem(cfg)
    nk = NashKuiperConfig(v, w, A, domain=dom, eps=cfg["eps"], defect_tol=cfg["defect_tol"],
                          **_nk_kwargs(cfg))
    status = EXIT_OK
    try:
        trace, v1, w1 = run_nash_kuiper(nk)
    except NumericalError as exc:
        trace = getattr(exc, "trace", None)
        print(f"stage {getattr(exc, 'stage', '?')}: {type(exc).__name__}: {exc}", file=sys.stderr)
        status = EXIT_NUMERIC
    res = {}
    if trace is not None:
        write_csv(os.path.join(out, "trace.csv"), trace.as_dicts())
        for r in trace.rows:
            print(f"stage {r.n}: defect {r.defect:.4e}  |v_n - v_0|_0 {r.dv_c0_total:.4e}")
        if len([r for r in trace.rows if r.n > 0]) >= 3:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est = estimate_alpha(trace)
            res.update({"alpha_hat": est.alpha, "alpha_r2_increments": est.r2_increments,
                        "alpha_r2_norms": est.r2_norms})
    write_summary(out, "run", cfg, res)
    return status


def _cmd_density(cfg, out):
    from .driver import DensityProblem, density_demo
    from .grid_fields import ScalarField, VectorField

    dom, g, _, _, _ = _standard_problem(cfg)
    if dom is None:
        raise ConfigError("the density demo needs grid=extended")
    if cfg["f"] == "one":
        f = ScalarField.constant(g, 1.0)
        anti = lambda X1, X2: 0.5 * X2**2  # noqa: E731
    elif cfg["f"] == "sine":
        f = ScalarField.from_function(g, lambda X1, X2: np.sin(np.pi * X1) * np.sin(np.pi * X2))
        anti = lambda X1, X2: -np.sin(np.pi * X1) * np.sin(np.pi * X2) / np.pi**2  # noqa: E731
    else:
        raise ConfigError("f must be one or sine")
    p = DensityProblem(f, VectorField.zeros(g, 3), cfg["eps"], c=cfg["c"], domain=dom,
                       antiderivative=anti)
    kw = _nk_kwargs(cfg)
    rep = density_demo(p, kw, coarse_scale=cfg["coarse"])
    rows = [{"n": n, "det_residual": d, "target_distance": t}
            for n, (d, t) in enumerate(zip(rep.det_residual, rep.target_distance))]
    write_csv(os.path.join(out, "density.csv"), rows)
    for r in rows:
        print(f"stage {r['n']}: coarse |det - f| {r['det_residual']:.4e}")
    write_summary(out, "density", cfg, {"c": rep.c, "curl_curl_residual": rep.cc_residual,
                                        "subsolution": rep.subsolution, "error": rep.error})
    if rep.error:
        print(rep.error, file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_export_mesh(cfg, out):
    from .fieldio import export_mesh, load_snapshot

    _, fields, _ = load_snapshot(cfg["snapshot"])
    if cfg["field"] not in fields:
        raise ConfigError(f"snapshot has no field {cfg['field']!r}")
    f = fields[cfg["field"]]
    comp = f[cfg["component"] - 1] if hasattr(f, "components") else f
    nv, nt = export_mesh(os.path.join(out, cfg["name"]), comp, cfg["stride"])
    print(f"wrote {nv} vertices and {nt} triangles")
    write_summary(out, "export-mesh", cfg, {"vertices": nv, "triangles": nt})
    return EXIT_OK


def _cmd_self_test(cfg, out):
    from .corrugation import StepParams, profile_derivatives, profiles, step_residual
    from .decomposition import decompose
    from .grid_fields import Grid2, ScalarField, SymMatrixField, VectorField, sup_norm
    from .schedule import make_schedule, verify_conditions

    checks = {}
    t = np.linspace(-10, 10, 1000)
    G, Gb, Gbb, Gt = profiles(t)
    dG, dGb, dGbb, _ = profile_derivatives(t)
    checks["profiles"] = max(np.max(np.abs(0.5 * dG**2 + dGbb - 1)),
                             np.max(np.abs(dGb + 0.5 * G * dG))) <= 1e-12
    g = Grid2.torus(64)
    X, Y = g.mesh
    v = VectorField(g, np.stack([0.1 * np.sin(X + Y), 0.2 * np.cos(X), 0.1 * np.sin(2 * Y)]))
    w = VectorField(g, np.stack([0.1 * np.cos(Y), 0.1 * np.sin(X)]))
    a = ScalarField(g, 1 + 0.2 * np.cos(X - Y))
    checks["step"] = sup_norm(step_residual(v, w, StepParams(1, 2, 4.0, a))) <= 1e-8
    D = SymMatrixField(g, np.cos(X), np.sin(X + Y), 0.5 * np.cos(2 * Y))
    checks["decomposition"] = decompose(D).residual <= 1e-6
    checks["schedule"] = verify_conditions(make_schedule(1.0, 2.0, 4, 4), Fraction(1, 30)).passed
    for k, ok in checks.items():
        print(f"{k}: {'ok' if ok else 'FAILED'}")
    write_summary(out, "self-test", cfg, {f"check.{k}": ok for k, ok in checks.items()})
    return EXIT_OK if all(checks.values()) else EXIT_VERIFY


COMMANDS = {
    "verify-schedule": _cmd_verify_schedule,
    "simulate-bounds": _cmd_simulate_bounds,
    "run-stage": _cmd_run_stage,
    "run": _cmd_run,
    "density": _cmd_density,
    "export-mesh": _cmd_export_mesh,
    "self-test": _cmd_self_test,
}


def run_cli(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help", "help"):
        print(__doc__)
        for name, spec in SPECS.items():
            keys = [k if v is not _REQ else f"{k} (required)" for k, v in spec.items()]
            print(f"{name}: {', '.join(keys) or '(no keys)'}")
        return EXIT_OK if argv else EXIT_CONFIG
    cmd = argv[0]
    if cmd not in COMMANDS:
        print(f"error: unknown subcommand {cmd!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = resolve_config(cmd, parse_pairs(argv[1:]))
        os.makedirs(cfg["out"], exist_ok=True)
        return COMMANDS[cmd](cfg, cfg["out"])
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScheduleError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except NumericalError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConvintError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    sys.exit(run_cli())

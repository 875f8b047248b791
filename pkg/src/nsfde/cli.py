"""Command-line entry point: ``nsfde validate|run|plotdata``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, load_config, map_option, measure_option
from .counterexamples import EpsilonFamily, epsilon_sweep, maxtype_witness
from .errors import (CertificationError, ConfigError, DivergenceError, InapplicableError, NSFDEError,
                     SchemaError)
from .functionals import MaxNorm, auto_mu_param, check_mao_contraction, decompose, rho0
from .growth import certify, derive_bounds, mc_moment_curve, validate_bounds
from .measures import HalfLineMeasure
from .picard import contraction_diagnostics, diagnostics_csv, sample_brownian, schedule_for, solve
from .renewal import VolterraProblem, compare, renewal_asymptote, solve_volterra

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERTIFICATION = 3
EXIT_WITNESS = 4
EXIT_DIVERGENCE = 5


def _fmt(x):
    return "%.17g" % x


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def _short(x):
    return "%.12g" % x


def validation_report(cfg: ExperimentConfig) -> tuple[str, int]:
    """Structural checks without simulation: verdict, rho0 profile and the Picard schedule."""
    prob = cfg.problem
    if prob is None:
        raise ConfigError("problem", "validate needs a problem section")
    lines = [f"D = {prob.D.describe()}"]
    mao = check_mao_contraction(prob.D)
    lines.append(f"mao_kappa = {_short(mao.kappa)}")
    profile = [(s, rho0(prob.D, s)) for s in np.linspace(0.0, prob.tau, 11)]
    lines.append("rho0_profile = " + ", ".join(f"{s:.3g}:{v:.6g}" for s, v in profile))
    code = EXIT_OK
    try:
        dec = decompose(prob.D)
    except CertificationError as err:
        lines.append("verdict = non-atomicity failure")
        lines.append(f"reason = {err}")
        return "\n".join(lines) + "\n", EXIT_CERTIFICATION
    if mao.holds:
        lines.append("verdict = exists (Mao contraction holds)")
    else:
        lines.append("verdict = exists (uniformly non-atomic, Mao contraction fails)")
    lines.append(f"delta_gap = {_short(dec.delta_gap)}")
    lines.append(f"D0 = {dec.D0.describe()}")
    lines.append(f"D1 = {dec.D1.describe()}")
    try:
        _, sched = schedule_for(prob, _mu(cfg, dec), cfg.numerics.h)
        lines += [f"T1 = {_short(sched.T1)}", f"alpha = {_short(sched.alpha)}", f"gamma = {_short(sched.gamma)}",
                  f"k = {_short(sched.k)}"]
    except CertificationError as err:
        lines.append(f"T1 = none ({err})")
    if any(isinstance(t, MaxNorm) for spec in (prob.D, prob.f, prob.g) for t in spec.terms):
        lines.append("growth_bounds = not applicable (max-type term)")
    elif prob.dim == 1:
        try:
            bounds = derive_bounds(prob.D, prob.f, prob.g)
            validate_bounds(bounds, prob.D, prob.f, prob.g, n_segments=10_000, grid_step=cfg.numerics.h,
                            seed=cfg.numerics.seed)
            lines.append("growth_bounds = validated")
        except CertificationError as err:
            lines.append(f"growth_bounds = failed ({err})")
    return "\n".join(lines) + "\n", code


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def _mu(cfg: ExperimentConfig, dec) -> float:
    return cfg.numerics.mu if cfg.numerics.mu is not None else auto_mu_param(dec.k0)


def _ensemble(cfg: ExperimentConfig):
    prob, num = cfg.problem, cfg.numerics
    bp = sample_brownian(prob.noise_dim, num.h, prob.T, num.seed, num.n_paths)
    return solve(prob, bp, tol=num.tol, max_iter=num.max_iter, mu_param=_mu(cfg, decompose(prob.D)))


def task_solve(cfg, out: Path) -> int:
    sol = _ensemble(cfg)
    sol.to_csv(out / "paths.csv")
    diagnostics_csv(out / "diagnostics.csv", sol.intervals, sol.schedule.gamma)
    return EXIT_OK


def task_picard_diagnostics(cfg, out: Path) -> int:
    sol = _ensemble(cfg)
    idx = int(cfg.options.get("diagnostics", {}).get("interval", 0))
    rep = contraction_diagnostics(sol.intervals[idx].sup_diffs, sol.schedule.gamma)
    diagnostics_csv(out / "diagnostics.csv", sol.intervals, sol.schedule.gamma)
    (out / "contraction.txt").write_text(
        f"interval = {idx}\nn_paths = {rep.n_paths}\nratio = {_fmt(rep.ratio)}\nstderr = {_fmt(rep.stderr)}\n"
        f"gamma = {_fmt(rep.gamma)}\nwithin_bound = {rep.within_bound}\n")
    return EXIT_OK if rep.within_bound else EXIT_CERTIFICATION


def task_certify(cfg, out: Path) -> int:
    prob = cfg.problem
    opts = cfg.options.get("certify", {})
    p = float(opts.get("p", 2.0))
    eps = opts.get("epsilon")
    window = tuple(opts["window"]) if opts.get("window") else None
    bounds = derive_bounds(prob.D, prob.f, prob.g)
    validate_bounds(bounds, prob.D, prob.f, prob.g, grid_step=cfg.numerics.h, seed=cfg.numerics.seed)
    sol = _ensemble(cfg)
    times = sol.forward_times
    paths = sol.forward()
    cert = certify(bounds, p, None if eps is None else float(eps), prob.history(cfg.numerics.h), prob.D,
                   paths, times, window, float(opts.get("quantile", 0.99)))
    (out / "certificate.txt").write_text(cert.to_text())
    curve = mc_moment_curve(paths, p, times, min_paths=1)
    with np.errstate(divide="ignore"):
        logm = np.log(curve.moment)
    _write_rows(out / "moments.csv", ["t", "m_p", "stderr", "log_mp"],
                [[_fmt(t), _fmt(m), _fmt(s), _fmt(lm)] for t, m, s, lm in zip(times, curve.moment, curve.stderr, logm)])
    return EXIT_OK if all(cert.checks.values()) else EXIT_CERTIFICATION


def task_counterexample(cfg, out: Path) -> int:
    opts = dict(cfg.options.get("counterexample", {}))
    kind = opts.get("kind", "maxtype")
    num = cfg.numerics
    if kind == "maxtype":
        if "kappa" not in opts:
            raise ConfigError("counterexample.kappa", "missing required field")
        kappa = float(opts["kappa"])
        delta_lb = opts.get("delta_lb")
        if delta_lb is None:
            g = cfg.problem.g if cfg.problem else None
            if g is None or g.terms:
                raise ConfigError("counterexample.delta_lb", "needed unless g is a constant")
            delta_lb = float(np.sum(g.offset ** 2))
        psi = opts.get("psi", {"constant": 0.0})
        if "constant" in psi:
            c = float(psi["constant"])
            psi_pair = (c, abs(c))
        elif "linear" in psi:
            a, b = (float(v) for v in psi["linear"])
            tau = float(opts.get("tau", 1.0))
            psi_pair = (a, max(abs(a), abs(a - b * tau)))
        else:
            raise ConfigError("counterexample.psi", "expected 'constant' or 'linear'")
        T = float(opts.get("T", cfg.problem.T if cfg.problem else 1.0))
        rep = maxtype_witness(kappa, float(delta_lb), psi_pair, T, n_paths=num.n_paths, seed=num.seed,
                              ladder=tuple(opts.get("ladder", (1, 4, 16))))
        text = f"kind = maxtype\nkappa = {_fmt(kappa)}\ndelta_lb = {_fmt(float(delta_lb))}\n" + rep.to_text()
        text += f"witness = {'bound M(t) <= A violated with growing probability' if rep.monotone else 'inconclusive'}\n"
        (out / "witness.txt").write_text(text)
        rep.to_csv(out / "witness.csv")
        return EXIT_WITNESS if rep.monotone and rep.frequency[-1] > rep.frequency[0] else EXIT_CERTIFICATION
    if kind == "epsilon":
        tau = float(opts.get("tau", 1.0))
        w = measure_option(opts.get("w", {"density": {"pieces": [[-tau, 0.0, 1.0, 0.0]]}}), tau,
                           "counterexample.w")
        fam = EpsilonFamily(w, map_option(opts.get("map", {"name": "tanh", "c": 1.0}), "counterexample.map"),
                            float(opts.get("sigma", 0.5)), None, tau)
        eps_values = opts.get("eps", [0.0])
        rows = epsilon_sweep(eps_values, fam, T=float(opts.get("T", 1.0)), h=num.h, seed=num.seed, tol=num.tol)
        lines, table, witnessed = [], [], False
        for r in rows:
            if r.eps == 0.0:
                wit = r.witness
                witnessed = witnessed or wit.holds
                lines.append(f"eps = 0 exists = False min_residual = {_fmt(wit.min_residual)} "
                             f"floor = {_fmt(wit.residual_floor)} qv_ratio = {_fmt(wit.qv.ratio)} "
                             f"qv_target = {_fmt(wit.qv.target)} verdict = {wit.qv.verdict} holds = {wit.holds}")
            else:
                lines.append(f"eps = {_fmt(r.eps)} exists = True T1 = {r.T1} residual = {r.residual} "
                             f"status = {r.witness}")
            table.append([_fmt(r.eps), r.exists] + [_fmt(v) for v in r.rho0_profile])
        (out / "witness.txt").write_text("kind = epsilon\n" + "\n".join(lines) + "\n")
        n = len(rows[0].rho0_profile) if rows else 0
        _write_rows(out / "witness.csv", ["eps", "exists"] + [f"rho0_{i}" for i in range(n)], table)
        return EXIT_WITNESS if witnessed else EXIT_OK
    raise ConfigError("counterexample.kind", f"unknown kind {kind!r}")


def task_gronwall_demo(cfg, out: Path) -> int:
    opts = cfg.options.get("gronwall", {})
    c = float(opts.get("c", 0.5))
    T = float(opts.get("T", 3.0))
    h = cfg.numerics.h
    t = h * np.arange(round(T / h) + 1)
    kernel = HalfLineMeasure.uniform_density(c, 0.0, T)
    prob = VolterraProblem(kernel, np.ones(t.size), h)
    z = solve_volterra(prob)
    x = np.ones(t.size)
    cmp_ = compare(x, prob)
    _write_rows(out / "gronwall.csv", ["t", "z", "y", "x", "violation"],
                [[_fmt(a), _fmt(b), _fmt(math.exp(c * a)), _fmt(d), _fmt(max(d - b, 0.0))]
                 for a, b, d in zip(t, z, x)])
    ren = renewal_asymptote(HalfLineMeasure.exponential_density(1.0, 1.0), 1.0, 1.0, h=h)
    (out / "gronwall.txt").write_text(
        f"c = {_fmt(c)}\nmax_error_vs_exp = {_fmt(float(np.max(np.abs(z - np.exp(c * t)))))}\n"
        f"dominated = {cmp_.dominated}\nmax_violation = {_fmt(cmp_.max_violation)}\n"
        f"renewal_limit = {_fmt(ren.limit_value)}\nkey_renewal_limit = {_fmt(ren.key_renewal_limit)}\n"
        f"renewal_upper_bound = {_fmt(ren.upper_bound)}\n")
    return EXIT_OK if cmp_.dominated else EXIT_CERTIFICATION


TASK_RUNNERS = {
    "solve": task_solve,
    "certify": task_certify,
    "picard-diagnostics": task_picard_diagnostics,
    "counterexample": task_counterexample,
    "gronwall-demo": task_gronwall_demo,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(cfg: ExperimentConfig, out: Path, status: int):
    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.txt")
    lines = [
        f"config_sha256 = {cfg.digest}",
        f"task = {cfg.task}",
        f"seed = {cfg.numerics.seed}",
        f"exit_status = {status}",
        f"nsfde = {__version__}",
        f"python = {platform.python_version()}",
        f"numpy = {np.__version__}",
        f"scipy = {scipy.__version__}",
    ]
    lines += [f"file {p.name} sha256 {_sha256(p)}" for p in files]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def run(config_path, overrides=None) -> int:
    cfg = load_config(config_path, overrides)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    status = TASK_RUNNERS[cfg.task](cfg, out)
    write_manifest(cfg, out, status)
    return status


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------

def _read_csv(path: Path, required):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
        header = rows[0].keys() if rows else []
    if not rows:
        raise SchemaError(f"{path.name} has no data rows")
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path.name} lacks columns: {', '.join(missing)}")
    return rows


def _read_kv(path: Path) -> dict:
    out = {}
    for line in path.read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k.strip()] = v.strip()
    return out


def emit_plotdata(directory) -> list[Path]:
    """Write gnuplot-ready ``(x, y, yerr)`` files for every recognised CSV in ``directory``."""
    d = Path(directory)
    written = []
    if (d / "paths.csv").exists():
        rows = _read_csv(d / "paths.csv", ["path_id", "t", "X_1"])
        lines, last = [], None
        for r in rows:
            if last is not None and r["path_id"] != last:
                lines += ["", ""]
            lines.append(f"{r['t']} {r['X_1']} 0")
            last = r["path_id"]
        (d / "plot_paths.dat").write_text("# t X_1 0\n" + "\n".join(lines) + "\n")
        written.append(d / "plot_paths.dat")
    if (d / "moments.csv").exists():
        rows = _read_csv(d / "moments.csv", ["t", "m_p", "stderr", "log_mp"])
        t = np.array([float(r["t"]) for r in rows])
        m = np.array([float(r["m_p"]) for r in rows])
        se = np.array([float(r["stderr"]) for r in rows])
        logm = np.array([float(r["log_mp"]) for r in rows])
        with np.errstate(divide="ignore", invalid="ignore"):
            logse = np.where(m > 0, se / m, 0.0)
        (d / "plot_moments.dat").write_text(
            "# t log_m_p stderr_log\n" + "".join(f"{_fmt(a)} {_fmt(b)} {_fmt(c)}\n" for a, b, c in zip(t, logm, logse)))
        written.append(d / "plot_moments.dat")
        cert = d / "certificate.txt"
        if cert.exists():
            rate = float(_read_kv(cert)["pth_mean_rate"])
            i0 = t.size // 2
            ref = logm[i0] + rate * (t - t[i0])
            (d / "plot_rate.dat").write_text(
                "# t certified_line 0\n" + "".join(f"{_fmt(a)} {_fmt(b)} 0\n" for a, b in zip(t, ref)))
            written.append(d / "plot_rate.dat")
    if (d / "diagnostics.csv").exists():
        rows = _read_csv(d / "diagnostics.csv", ["interval_index", "iteration", "sup_diff_sq_mean", "gamma_bound"])
        sel = [r for r in rows if r["interval_index"] == "0"]
        (d / "plot_picard.dat").write_text(
            "# iteration sup_diff_sq_mean gamma_reference\n"
            + "".join(f"{r['iteration']} {r['sup_diff_sq_mean']} {r['gamma_bound']}\n" for r in sel))
        written.append(d / "plot_picard.dat")
    if not written:
        raise SchemaError(f"no recognised CSV files in {d}")
    return written


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsfde", description="Neutral SFDE solver and certificate tool")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("validate", "run"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--paths", type=int, dest="n_paths")
        sp.add_argument("--grid-step", type=float, dest="h")
        sp.add_argument("--out", dest="output")
    sp = sub.add_parser("plotdata")
    sp.add_argument("directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plotdata":
            for p in emit_plotdata(args.directory):
                print(p)
            return EXIT_OK
        overrides = {"seed": args.seed, "n_paths": args.n_paths, "h": args.h, "output": args.output}
        if args.command == "validate":
            report, code = validation_report(load_config(args.config, overrides))
            sys.stdout.write(report)
            return code
        return run(args.config, overrides)
    except (ConfigError, SchemaError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as err:
        print(f"divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (CertificationError, InapplicableError) as err:
        print(f"certification failure: {err}", file=sys.stderr)
        return EXIT_CERTIFICATION
    except NSFDEError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CERTIFICATION


if __name__ == "__main__":
    sys.exit(main())

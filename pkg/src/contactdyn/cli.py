"""Command-line interface: ``contactdyn {analyze,continue,simulate,legendre}``.

Exit codes: 0 success, 1 analysis failures present, 2 config or parse
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from . import expr as ex
from . import report as rp
from .config import AnalysisConfig, Seed, load_config
from .continuation import branch_csv, events_csv, gnuplot_script, trace_branch
from .degeneracy import analyze_degeneracy
from .equilibria import find_equilibrium, spectrum_and_quadruplets
from .errors import ConfigError, ContactDynError
from .geometry import drift_residual
from .hamiltonian import HamiltonianSystem
from .legendre import extend, invariance_test, restriction, trace_chart_branch
from .simulate import equilibrium_flow_factor, integrate, monitor_drift, monitor_level, trajectory_csv

EXIT_OK, EXIT_FAILURES, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


class Outputs:
    """Collects files to write; nothing touches the disk until :meth:`flush`."""

    def __init__(self, out_dir: str | None, formats: Sequence[str]):
        self.dir = None if out_dir is None else Path(out_dir)
        self.formats = set(formats)
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str, fmt: str) -> str | None:
        if fmt not in self.formats or self.dir is None:
            return None
        self.files[name] = text
        return name

    def flush(self) -> None:
        if self.dir is None:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (self.dir / name).write_text(text)


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def grid_seeds(cfg: AnalysisConfig, sys_: HamiltonianSystem) -> list[Seed]:
    """Newton from every node of a coarse grid; returns the distinct converged points."""
    g = cfg.seed_grid
    axis = np.linspace(g.lower, g.upper, g.points)
    found: list[np.ndarray] = []
    params = cfg.param_values()
    for node in itertools.product(axis, repeat=sys_.dim):
        try:
            rec = find_equilibrium(sys_, params, np.array(node), tol=cfg.tolerance)
        except (ContactDynError, np.linalg.LinAlgError, OverflowError, ValueError):
            continue
        if not any(np.max(np.abs(rec.point - f)) < 1e-6 for f in found):
            found.append(rec.point)
    return [Seed(tuple(float(v) for v in p)) for p in found]


# -- analyze ------------------------------------------------------------

def analyze_seed(cfg: AnalysisConfig, sys_: HamiltonianSystem, seed: Seed, param: str | None) -> dict[str, Any]:
    params = cfg.param_values(seed.params)
    out: dict[str, Any] = {"seed": list(seed.point), "seed_tau": seed.tau, "params": params}
    try:
        rec = find_equilibrium(sys_, params, np.array(seed.point), seed.tau, tol=cfg.tolerance)
    except (ContactDynError, np.linalg.LinAlgError, OverflowError) as e:
        out.update(status="failed", error=f"{type(e).__name__}: {e}")
        return out
    out["status"] = "ok"
    out.update(rp.record_dict(rec))
    out["params"] = params
    q = spectrum_and_quadruplets(rec)
    out["quadruplets"] = rp.quadruplet_dict(q)
    ff, expected = equilibrium_flow_factor(sys_, rec, 1.0)
    # a direct Jacobian cross-check in the original coordinates
    M = rec.frame
    conj_err = float(np.max(np.abs(np.linalg.solve(M, rec.jacobian @ M) - rec.L)))
    out["invariants"] = {
        "trace_identity": {"pass": out["trace_identity_error"] < 1e-10, "error": out["trace_identity_error"]},
        "quadruplets": {"pass": q.ok, "error": max(q.max_negation_error, q.max_conjugation_error)},
        "linearization_vs_jacobian": {"pass": conj_err < 1e-9, "error": conj_err},
        "drift_law": {"pass": abs(drift_residual(sys_, rec.point, params)) < 1e-12,
                      "error": abs(drift_residual(sys_, rec.point, params))},
        "flow_factor": {"pass": abs(ff - expected) < 1e-8 * max(1.0, expected), "error": abs(ff - expected)},
    }
    if rec.tag.kind.degenerate:
        out["degeneracy"] = rp.degeneracy_dict(analyze_degeneracy(sys_, rec, param))
    return out


def cmd_analyze(cfg: AnalysisConfig, outputs: Outputs, jobs: int = 1, seed_grid: bool = False) -> tuple[dict, int]:
    sys_ = cfg.system()
    seeds = list(cfg.seeds)
    if seed_grid:
        seeds += grid_seeds(cfg, sys_)
    if not seeds:
        raise ConfigError("no seeds given (add a seeds list or use --seed-grid)")
    param = cfg.continuation.parameter if cfg.continuation else (next(iter(cfg.parameters), None))
    results = _map(lambda s: analyze_seed(cfg, sys_, s, param), seeds, jobs)
    rep = rp.envelope("analyze", cfg.source)
    rep["system"] = {"n": cfg.n, "expression": sys_.source(), "parameters": dict(cfg.parameters)}
    rep["equilibria"] = results
    checks = [c for r in results if r["status"] == "ok" for c in r["invariants"].values()]
    rep["invariant_summary"] = _summary(results)
    failures = sum(r["status"] != "ok" for r in results) + sum(not c["pass"] for c in checks)
    rep["failures"] = failures
    return rep, EXIT_FAILURES if failures else EXIT_OK


def _summary(results: list[dict]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for r in results:
        for name, c in r.get("invariants", {}).items():
            s = out.setdefault(name, {"pass": True, "max_error": 0.0})
            s["pass"] = s["pass"] and c["pass"]
            s["max_error"] = max(s["max_error"], c["error"])
    return out


def summarize_analyze(rep: dict) -> list[str]:
    lines = []
    for i, r in enumerate(rep["equilibria"]):
        if r["status"] != "ok":
            lines.append(f"seed {i}: FAILED {r['error']}")
            continue
        eig = ", ".join(_fmt_c(z) for z in r["eigenvalues"])
        line = f"seed {i}: x0={_fmt_v(r['point'])} tau={r['tau']:.12g} {r['classification']['kind']} eig=[{eig}]"
        d = r.get("degeneracy")
        if d and d["certificate"]:
            q = d["certificate"]["quantities"]
            line += " fold=" + str(d["certificate"]["fold"]) + "".join(
                f" {k}={v:.6g}" for k, v in q.items() if k in ("h0", "h1", "h2", "Delta1", "Delta2", "Delta2_r3"))
        lines.append(line)
    return lines


def _fmt_v(v) -> str:
    return "(" + ", ".join(f"{x:.10g}" for x in v) + ")"


def _fmt_c(z) -> str:
    re, im = z
    if abs(im) < 1e-14:
        return f"{re:.10g}"
    return f"{re:.10g}{'+' if im >= 0 else '-'}{abs(im):.10g}i"


# -- continue ------------------------------------------------------------

def cmd_continue(cfg: AnalysisConfig, outputs: Outputs, jobs: int = 1, seed_grid: bool = False) -> tuple[dict, int]:
    if cfg.continuation is None:
        raise ConfigError("config has no continuation block")
    cc = cfg.continuation
    sys_ = cfg.system()
    seeds = list(cfg.seeds)
    if seed_grid:
        seeds += grid_seeds(cfg, sys_)
    if not seeds:
        raise ConfigError("no seeds given (add a seeds list or use --seed-grid)")
    step = replace(cc.step, tol=cfg.tolerance)

    def run(seed: Seed):
        params = cfg.param_values(seed.params)
        lam0 = params[cc.parameter]
        guess = list(seed.point) + ([] if seed.tau is None else [seed.tau])
        try:
            return trace_branch(sys_, cc.parameter, (lam0, guess), cc.lam_range, step, params, cc.direction), None
        except (ContactDynError, np.linalg.LinAlgError, OverflowError, ValueError) as e:
            return None, f"{type(e).__name__}: {e}"

    results = _map(run, seeds, jobs)
    rep = rp.envelope("continue", cfg.source)
    rep["system"] = {"n": cfg.n, "expression": sys_.source(), "parameters": dict(cfg.parameters)}
    branches, files, failures, all_events = [], [], 0, []
    for k, (br, err) in enumerate(results):
        if br is None:
            branches.append({"status": "failed", "error": err, "seed": list(seeds[k].point)})
            failures += 1
            continue
        name = outputs.add(f"branch_{k}.csv", branch_csv(br), "csv")
        if name:
            files.append(name)
        d = rp.branch_dict(br, name)
        d["status"] = "ok"
        d["seed"] = list(seeds[k].point)
        branches.append(d)
        all_events += br.events
        failures += d["max_trace_identity_error"] > 1e-10
    rep["branches"] = branches
    if files:
        outputs.add("events.csv", events_csv(all_events, cfg.n), "csv")
        outputs.add("bifurcation.gp", gnuplot_script(files, cc.plot_coordinate, sys_.coords,
                                                     title=f"{sys_.source()}"), "csv")
    rep["failures"] = failures
    return rep, EXIT_FAILURES if failures else EXIT_OK


def summarize_continue(rep: dict) -> list[str]:
    lines = []
    for i, b in enumerate(rep["branches"]):
        if b["status"] != "ok":
            lines.append(f"branch {i}: FAILED {b['error']}")
            continue
        lines.append(f"branch {i}: {b['samples']} samples, lambda in [{b['lambda_min']:.6g}, {b['lambda_max']:.6g}], "
                     f"stopped: {b['termination']}")
        for e in b["events"]:
            extra = ""
            if e["crossing_speed"] is not None:
                extra = f" dRe/dlambda={e['crossing_speed']:.8g}"
            lines.append(f"  {e['kind']:<18} lambda={e['lambda']:.3e} x={_fmt_v(e['point'])}{extra}")
        for iv in b["stability_profile"]:
            lines.append(f"  lambda {iv['lambda'][0]:.6g} .. {iv['lambda'][1]:.6g}: {iv['kind']}")
    return lines


# -- simulate ------------------------------------------------------------

def cmd_simulate(cfg: AnalysisConfig, outputs: Outputs, jobs: int = 1, seed_grid: bool = False) -> tuple[dict, int]:
    if cfg.simulate is None:
        raise ConfigError("config has no simulate block")
    sc = cfg.simulate
    sys_ = cfg.system()
    params = cfg.param_values()

    def run(x0):
        return integrate(sys_, params, x0, sc.t_span, sc.rtol, sc.atol)

    trajs = _map(run, list(sc.initial_states), jobs)
    rep = rp.envelope("simulate", cfg.source)
    rep["system"] = {"n": cfg.n, "expression": sys_.source(), "parameters": dict(cfg.parameters)}
    items, failures = [], 0
    conservative = sys_.diff(("z",)) == ex.ZERO
    for k, tr in enumerate(trajs):
        name = outputs.add(f"trajectory_{k}.csv", trajectory_csv(tr, sys_.coords), "csv")
        lim = 10 * tr.rtol * tr.scale
        drift, level = monitor_drift(tr), monitor_level(tr)
        div = float(np.max(np.abs(tr.divergence_residual)))
        item = {
            "initial_state": list(sc.initial_states[k]),
            "final_state": rp.vector(tr.states[-1]),
            "t_final": float(tr.t[-1]),
            "steps": len(tr.t),
            "status": tr.status,
            "scale": tr.scale,
            "invariants": {
                "drift_law": {"pass": drift <= lim, "error": drift, "limit": lim},
                "level_law": {"pass": level <= lim, "error": level, "limit": lim},
                "divergence_law": {"pass": div < 1e-10 * tr.scale, "error": div},
            },
            "csv": name,
        }
        if conservative:
            dh = float(np.max(np.abs(tr.H - tr.H[0])))
            item["invariants"]["level_set_preserved"] = {"pass": dh <= lim, "error": dh, "limit": lim}
        bad = tr.truncated or not all(c["pass"] for c in item["invariants"].values())
        failures += bad
        items.append(item)
    rep["trajectories"] = items
    rep["failures"] = failures
    return rep, EXIT_FAILURES if failures else EXIT_OK


def summarize_simulate(rep: dict) -> list[str]:
    out = []
    for i, t in enumerate(rep["trajectories"]):
        inv = ", ".join(f"{k}={v['error']:.2e}{'' if v['pass'] else '!'}" for k, v in t["invariants"].items())
        out.append(f"trajectory {i}: {t['steps']} steps to t={t['t_final']:.6g} ({t['status']}), "
                   f"final={_fmt_v(t['final_state'])}; {inv}")
    return out


# -- legendre ------------------------------------------------------------

def cmd_legendre(cfg: AnalysisConfig, outputs: Outputs, jobs: int = 1, seed_grid: bool = False) -> tuple[dict, int]:
    chart, Y = cfg.chart()
    lg = cfg.legendre
    H = extend(chart, Y)
    params = cfg.param_values()
    ver = invariance_test(H, chart, lg.samples, params)
    rng = np.random.default_rng(0)
    rt = 0.0
    for _ in range(lg.samples):
        u = rng.uniform(-1.0, 1.0, cfg.n)
        rt = max(rt, float(np.max(np.abs(restriction(H, chart, u, params) - Y.evaluate(u, params)))))
    conservative = H.diff(("z",)) == ex.ZERO
    rep = rp.envelope("legendre", cfg.source)
    rep["chart"] = {
        "n": cfg.n,
        "index_set": list(chart.index_set),
        "generating_function": ex.to_source(chart.S),
        "embedding": dict(zip(H.coords, (ex.to_source(e) for e in chart.embedding))),
    }
    rep["hamiltonian"] = H.source()
    rep["verification"] = {
        "invariant": ver.invariant,
        "max_abs_H": ver.max_abs_H,
        "max_tangency_residual": ver.max_tangency_residual,
        "max_pullback_residual": ver.max_pullback_residual,
        "round_trip_error": rt,
        "round_trip_pass": rt < 1e-10,
        "conservative": conservative,
    }
    failures = (not ver.invariant) + (rt >= 1e-10) + (not conservative)
    if lg.continuation_seed is not None and cfg.continuation is not None:
        cc = cfg.continuation
        vals = cfg.param_values(lg.continuation_seed.params)
        br = trace_chart_branch(Y, cc.parameter, (vals[cc.parameter], lg.continuation_seed.point), cc.lam_range,
                                replace(cc.step, tol=cfg.tolerance), vals, cc.direction)
        rep["chart_branch"] = {
            "samples": len(br.curve.samples),
            "termination": br.curve.reason,
            "folds": [{"lambda": float(U[-1]), "u": rp.vector(U[:-1]), "dlambda_ds": float(t[-1])}
                      for U, t, _ in br.folds],
        }
    rep["failures"] = int(failures)
    return rep, EXIT_FAILURES if failures else EXIT_OK


def summarize_legendre(rep: dict) -> list[str]:
    v = rep["verification"]
    ok = v["invariant"] and v["round_trip_pass"] and v["conservative"]
    out = [f"H = {rep['hamiltonian']}",
           f"verification {'pass' if ok else 'FAIL'}: max|H|={v['max_abs_H']:.2e}, "
           f"tangency={v['max_tangency_residual']:.2e}, round trip={v['round_trip_error']:.2e}"]
    for f in rep.get("chart_branch", {}).get("folds", []):
        out.append(f"  chart fold at lambda={f['lambda']:.3e} u={_fmt_v(f['u'])}")
    return out


COMMANDS = {
    "analyze": (cmd_analyze, summarize_analyze),
    "continue": (cmd_continue, summarize_continue),
    "simulate": (cmd_simulate, summarize_simulate),
    "legendre": (cmd_legendre, summarize_legendre),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contactdyn", description="Analyze contact Hamiltonian vector fields.")
    ap.add_argument("--version", action="version", version=f"contactdyn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH", help="YAML configuration file")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
        p.add_argument("--tol", type=float, metavar="X", help="Newton / corrector tolerance")
        p.add_argument("--seed-grid", action="store_true", help="add Newton seeds from a coarse grid search")
        p.add_argument("--json", action="store_true", help="write the JSON report (and print it if no --out)")
        p.add_argument("--csv", action="store_true", help="write CSV series and plot scripts")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for seeds and branches")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as e:
        print(f"contactdyn: cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = load_config(text)
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol must be positive")
            cfg = replace(cfg, tolerance=args.tol)
        formats = cfg.formats
        if args.json or args.csv:
            formats = tuple(f for f, on in (("json", args.json), ("csv", args.csv)) if on)
        outputs = Outputs(args.out if args.out is not None else cfg.out_dir, formats)
        run, summarize = COMMANDS[args.command]
        rep, code = run(cfg, outputs, max(1, args.jobs), args.seed_grid)
    except ConfigError as e:
        print(f"contactdyn: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    text_out = rp.dumps(rep)
    to_stdout = "json" in outputs.formats and outputs.dir is None
    for line in summarize(rep):
        print(line, file=sys.stderr if to_stdout else sys.stdout)
    if to_stdout:
        sys.stdout.write(text_out)
    elif "json" in outputs.formats:
        outputs.files["report.json"] = text_out
    try:
        outputs.flush()
    except OSError as e:
        print(f"contactdyn: cannot write outputs: {e}", file=sys.stderr)
        return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())

"""
Command-line entry point.

Exit status is 0 on success, 1 when a check fails and 2 when a scenario
cannot be loaded or simulated (message on standard error).
"""

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .attitude import check_params, gradient_audit
from .errors import DistattError
from .formation import BPEConfig, check_bpe, inertial_bearings
from .kernels import BACKEND
from .plot import log_figures
from .scenario import load_scenario, pyramid_preset
from .system import jump_bound, simulate

INTEGRATOR = "geometric RK4 (Munthe-Kaas, body frame), fixed step; jumps checked at step boundaries"
CSV_FMT = "%.12g"


# -- output ------------------------------------------------------------------


def write_log_csv(log, path):
    np.savetxt(path, log.array(), delimiter=",", header=",".join(log.columns), comments="", fmt=CSV_FMT)


def write_jumps_csv(log, path):
    lines = ["t,j,edges,UT_before,UT_after"]
    for ev in log.events:
        edges = ";".join(str(k + 1) for k in ev.edges)
        lines.append(f"{ev.t:.12g},{ev.j},{edges},{ev.energy_before:.12g},{ev.energy_after:.12g}")
    Path(path).write_text("\n".join(lines) + "\n")


def summarize(sc, log, runtime):
    a = log.array()
    cols = log.columns
    last = a[-1]

    def group(prefix):
        return [float(last[i]) for i, c in enumerate(cols) if c.startswith(prefix) and c[len(prefix) :].isdigit()]

    U0 = float(a[0, cols.index("U_T")])
    p = sc.params
    out = {
        "scenario": sc.name,
        "observer": sc.observer,
        "backend": BACKEND,
        "integrator": INTEGRATOR,
        "dt": sc.sim.step,
        "t_end": sc.sim.t_end,
        "n_steps": sc.sim.n_steps,
        "runtime_s": runtime,
        "jumps": log.n_jumps,
        "jump_events": [
            {"t": ev.t, "j": ev.j, "edges": [k + 1 for k in ev.edges], "UT_before": ev.energy_before, "UT_after": ev.energy_after}
            for ev in log.events
        ],
        "U_T0": U0,
        "final_rbar": group("rbar_"),
        "final_xi": group("xi_"),
        "final_U_T": float(last[cols.index("U_T")]),
        "final_V_T": float(last[cols.index("V_T")]),
        "final_ptilde": group("ptilde_"),
        "e_norm0": float(a[0, cols.index("e_norm")]),
        "final_e_norm": float(last[cols.index("e_norm")]),
        "max_flow_increase": float(log.max_flow_increase),
        "flow_energy_violations": len(log.energy_flow_violations),
        "jump_energy_violations": len(log.energy_jump_violations),
        "max_orthonormality_drift": float(log.max_drift),
        "rotations_repaired": log.repairs,
    }
    if sc.observer == "hybrid":
        out["delta"] = p.delta
        out["jump_bound"] = jump_bound(U0, p.delta)
    return out


def run_and_write(sc, out_dir, plots=True):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    log, _ = simulate(sc)
    runtime = time.perf_counter() - t0
    write_log_csv(log, out_dir / "log.csv")
    write_jumps_csv(log, out_dir / "jumps.csv")
    summary = summarize(sc, log, runtime)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if plots:
        for stem, svg in log_figures(log).items():
            (out_dir / f"{stem}.svg").write_text(svg)
    return log, summary


def _override(sc, args):
    if getattr(args, "observer", None):
        sc = sc.with_observer(args.observer)
    return sc.with_sim(dt=getattr(args, "dt", None), t_end=getattr(args, "t_end", None))


def _print_summary(s, stream=None):
    rb = ", ".join(f"{v:.3g}" for v in s["final_rbar"])
    line = (
        f"[{s['scenario']}/{s['observer']}] t_end = {s['t_end']:g} s, {s['jumps']} jump(s), "
        f"final |Rbar|_I = [{rb}], |e| {s['e_norm0']:.4g} -> {s['final_e_norm']:.4g}, "
        f"{s['runtime_s']:.2f} s ({s['backend']})"
    )
    print(line, file=stream or sys.stdout)


# -- subcommands --------------------------------------------------------------------


def cmd_simulate(args):
    scenarios = [_override(load_scenario(path), args) for path in args.scenario]
    out = Path(args.out)

    def one(item):
        n, sc = item
        sub = out if len(scenarios) == 1 else out / f"{n + 1:02d}_{sc.name}"
        return run_and_write(sc, sub, plots=not args.no_plots)[1]

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as ex:
        summaries = list(ex.map(one, enumerate(scenarios)))
    for s in summaries:
        _print_summary(s)
    return 0


def cmd_replicate(args):
    base = _override(pyramid_preset(), argparse.Namespace(dt=args.dt, t_end=args.t_end))
    out = Path(args.out)
    runs = [(obs, base.with_observer(obs)) for obs in ("hybrid", "continuous")]

    def one(item):
        obs, sc = item
        return obs, run_and_write(sc, out / obs, plots=not args.no_plots)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as ex:
        results = dict(ex.map(one, runs))
    ok = True
    for obs in ("hybrid", "continuous"):
        log, s = results[obs]
        _print_summary(s)
        if obs == "hybrid":
            ev = log.events
            single = len(ev) == 1 and ev[0].t == 0.0 and len(ev[0].edges) == base.topology.n_edges
            monotone = s["flow_energy_violations"] == 0 and s["jump_energy_violations"] == 0
            print(f"  jump events: {len(ev)} (single event at t = 0 on all edges: {'yes' if single else 'no'})")
            print(f"  U_T non-increasing along flows and dropping >= delta at jumps: {'yes' if monotone else 'no'}")
            print(f"  jump count {s['jumps']} <= ceil(U_T(0)/delta) = {s['jump_bound']}")
            ok &= single and monotone and s["jumps"] <= s["jump_bound"]
    print(f"outputs written to {out}")
    return 0 if ok else 1


def cmd_check_params(args):
    sc = load_scenario(args.scenario)
    scheme = args.observer or sc.observer
    rep = check_params(sc.params, scheme=scheme)
    print(rep)
    return 0 if rep.ok else 1


def cmd_gradcheck(args):
    params = load_scenario(args.scenario).params if args.scenario else pyramid_preset().params
    audit = gradient_audit(params, args.samples, np.random.default_rng(args.seed), step=args.step)
    print(audit)
    print(f"max relative error: {audit.max_rel_error:.3e} (tolerance {args.tol:g})")
    return 0 if audit.max_rel_error < args.tol else 1


def cmd_check_bpe(args):
    sc = _override(load_scenario(args.scenario), args)
    t = np.arange(sc.sim.n_steps + 1) * sc.sim.step
    pos = sc.positions.positions(t)
    bearings = np.stack([inertial_bearings(sc.topology, p) for p in pos])
    mu = 0.0 if args.mu is None else args.mu
    rep = check_bpe(sc.topology, t, bearings, BPEConfig(args.window, mu, args.windows), certify=args.mu is None)
    print(rep)
    if args.mu is None:
        return 0 if rep.mu_max > args.min_mu else 1
    return 0 if rep.passed else 1


def cmd_write_preset(args):
    pyramid_preset().save(args.path)
    print(f"wrote {args.path}")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="distatt", description="Distributed attitude and position estimation on trees.")
    sub = ap.add_subparsers(dest="command", required=True)

    def sim_flags(p, observer=True):
        p.add_argument("--dt", type=float, help="integration step [s]")
        p.add_argument("--t-end", dest="t_end", type=float, help="horizon [s]")
        if observer:
            p.add_argument("--observer", choices=("continuous", "hybrid"))

    p = sub.add_parser("simulate", help="run one or more scenario files")
    p.add_argument("scenario", nargs="+")
    p.add_argument("--out", default="out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-plots", action="store_true")
    sim_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replicate-paper", help="five-agent rotating-pyramid run, both observers")
    p.add_argument("--out", default="out/replicate")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-plots", action="store_true")
    sim_flags(p, observer=False)
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("check-params", help="validate observer parameters of a scenario")
    p.add_argument("scenario")
    p.add_argument("--observer", choices=("continuous", "hybrid"))
    p.set_defaults(func=cmd_check_params)

    p = sub.add_parser("gradcheck", help="finite-difference audit of the potential gradients")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--scenario", help="take parameters from this scenario instead of the preset")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("check-bpe", help="windowed persistence test of the bearing Laplacian")
    p.add_argument("scenario")
    p.add_argument("--window", type=float, required=True, help="window length T [s]")
    p.add_argument("--mu", type=float, help="test this mu; omitted: certify the largest passing mu")
    p.add_argument("--windows", type=int, default=50, help="number of window start times")
    p.add_argument("--min-mu", dest="min_mu", type=float, default=1e-9)
    sim_flags(p, observer=False)
    p.set_defaults(func=cmd_check_bpe)

    p = sub.add_parser("write-preset", help="save the replication preset as a scenario file")
    p.add_argument("path")
    p.set_defaults(func=cmd_write_preset)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DistattError, OSError) as exc:
        print(f"distatt: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

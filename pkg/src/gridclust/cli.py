"""
Command-line interface.

Exit codes: 0 stable, 2 unstable (or marginal), 1 error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import SweepSpec, analyze, grid_mu_cr, run_sweep
from .boundary import mu_cr_lower_bound, mu_critical
from .errors import GridClustError, HypothesisError
from .grid_model import DEFAULT_OMEGA_C, bus_load_power, load_grid, to_per_unit
from .network import LoadMode, reduce_network
from .oracle import (
    MATCH_TOLERANCE,
    assemble_state_matrix,
    dominant_rate,
    eig_general,
    greedy_match,
    hausdorff,
    predicted_modes,
    right_half_plane_pairs,
)
from .simulation import DEFAULT_DT, Scenario, step_response
from .spectrum import DEFAULT_MEMBER_THRESHOLD

EXIT_STABLE, EXIT_ERROR, EXIT_UNSTABLE = 0, 1, 2
DEFAULT_OMEGA0 = 2 * math.pi * 50

log = logging.getLogger("gridclust")


class CliError(Exception):
    pass


def _fmt(x, nd=4):
    if x is None:
        return "-"
    return f"{x:.{nd}f}"


def _emit_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=False))


def _load(args):
    spec = load_grid(args.grid)
    if args.omega_c is not None:
        spec = dataclasses.replace(spec, omega_c_rad_s=args.omega_c)
    return spec


def _mode(args) -> LoadMode:
    return LoadMode(args.load_mode)


def _exit_for(status: str) -> int:
    return EXIT_STABLE if status == "stable" else EXIT_UNSTABLE


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------- analyze


def _analysis_dict(a) -> dict:
    sp = a.spectrum
    out = {
        "status": a.status,
        "rho": a.network.rho,
        "k": a.network.k,
        "omega_c_rad_s": a.network.omega_c,
        "load_mode": a.reduced.load_mode.value,
        "mu": [float(x) for x in sp.mu],
        "members": [list(m) for m in sp.members],
    }
    if a.verdict is not None:
        out.update(a.verdict.to_dict())
    return out


def cmd_analyze(args) -> int:
    a = analyze(_load(args), _mode(args), threshold=args.threshold, rho_tolerance=args.rho_tolerance)
    sp = a.spectrum
    spectrum_doc = {
        "mu": [float(x) for x in sp.mu],
        "psi": [[float(x) for x in sp.psi[:, i]] for i in range(sp.size)],
        "members": [list(m) for m in sp.members],
    }
    if args.spectrum_out:
        Path(args.spectrum_out).write_text(json.dumps(spectrum_doc, indent=2), encoding="utf-8")
    if args.json:
        _emit_json(_analysis_dict(a))
        return _exit_for(a.status)
    print(_render_analysis(a))
    return _exit_for(a.status)


def _render_analysis(a) -> str:
    lines = []
    net = a.network
    lines.append(f"rho = {net.rho:.4f}   k = {net.k:.4f}   omega_c = {net.omega_c:.4f} rad/s   "
                 f"load mode = {a.reduced.load_mode.value}")
    if a.verdict is None:
        lines.append("stable, no inter-inverter clusters")
        return "\n".join(lines)
    v = a.verdict
    lb = "-" if v.mu_cr_lower_bound is None else f"{v.mu_cr_lower_bound:.4f}"
    lines.append(f"mu_cr = {v.mu_cr:.4f}   (closed-form lower bound {lb})")
    lines.append("")
    lines.append(f"{'cluster':>7}  {'mu':>8}  {'margin':>8}  {'status':<9} members")
    for c in v.clusters:
        lines.append(f"{c.index + 1:>7}  {c.mu:8.4f}  {c.margin:8.4f}  {c.status:<9} {{{', '.join(c.members)}}}")
    lines.append("")
    lines.append(f"verdict: {v.status.upper()} ({v.n_unstable} unstable cluster(s))")
    if v.recommendations:
        lines.append("")
        lines.append("parameters to adjust (ranked by |p dmu/dp|):")
        for r in v.recommendations:
            m_pct = f" ({100 * r['value']:.2f} %)" if r["kind"] == "droop" else " km"
            lines.append(
                f"  cluster {r['cluster']}: {r['parameter']:<8} = {r['value']:.4g}{m_pct:<10} "
                f"dmu/dp = {r['sensitivity']:+.4g}  elasticity = {r['elasticity']:+.4f}  -> {r['action']}"
            )
    return "\n".join(lines)


# ---------------------------------------------------------------- mucr


def _parse_axis(text: str) -> tuple[str, np.ndarray]:
    name, _, rng = text.partition("=")
    parts = rng.split(":")
    if name not in ("rho", "k") or len(parts) != 3:
        raise CliError(f"bad sweep axis {text!r}; expected rho=a:b:n or k=a:b:n")
    return name, np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))


def cmd_mucr(args) -> int:
    omega_c = args.omega_c if args.omega_c is not None else DEFAULT_OMEGA_C
    tau, tau0 = 1.0 / omega_c, 1.0 / args.omega0
    if args.sweep:
        axes = dict(_parse_axis(t) for t in args.sweep.split(","))
        if set(axes) != {"rho", "k"}:
            raise CliError("--sweep needs both rho and k axes")
        pts = [(r, k) for r in axes["rho"] for k in axes["k"]]

        def one(p):
            r, k = p
            lb = mu_cr_lower_bound(r, k) if r > 0 else float("nan")
            return r, k, mu_critical(r, k, tau, tau0), lb

        with ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as pool:
            rows = list(pool.map(one, pts))
        out = args.out or "mucr_map.csv"
        _write_csv(out, ["rho", "k", "mu_cr", "mu_cr_lower_bound"], rows)
        if args.json:
            _emit_json({"out": out, "points": len(rows)})
        else:
            print(f"wrote {len(rows)} points to {out}")
        return EXIT_STABLE
    if args.rho is None or args.k is None:
        raise CliError("mucr needs --rho and --k (or --sweep)")
    mu_cr = mu_critical(args.rho, args.k, tau, tau0)
    lb = mu_cr_lower_bound(args.rho, args.k) if args.rho > 0 else None
    if args.json:
        _emit_json({"rho": args.rho, "k": args.k, "omega_c_rad_s": omega_c, "mu_cr": mu_cr, "mu_cr_lower_bound": lb})
    else:
        print(f"mu_cr = {mu_cr:.6f}")
        print(f"mu_lb = {_fmt(lb, 6)}")
    return EXIT_STABLE


# ---------------------------------------------------------------- sensitivities


def cmd_sensitivities(args) -> int:
    a = analyze(_load(args), _mode(args), threshold=args.threshold, rho_tolerance=args.rho_tolerance)
    if a.sensitivities is None:
        raise CliError("grid has no lines; no sensitivities to report")
    sp = a.spectrum
    if args.cluster == "top":
        i = int(np.argmax(sp.mu))
    else:
        i = int(args.cluster) - 1
        if not 0 <= i < sp.size:
            raise CliError(f"cluster must be 1..{sp.size} or 'top'")
    if sp.is_degenerate(i):
        raise CliError(f"cluster {i + 1} is degenerate; sensitivities are not defined")
    ranked = a.sensitivities.ranked(i, a.network)
    out = args.out or "sensitivities.csv"
    _write_csv(
        out,
        ["cluster", "mu", "parameter", "kind", "value", "sensitivity", "elasticity", "action"],
        [[i + 1, float(sp.mu[i]), r["parameter"], r["kind"], r["value"], r["sensitivity"], r["elasticity"], r["action"]]
         for r in ranked],
    )
    if args.json:
        _emit_json({"cluster": i + 1, "mu": float(sp.mu[i]), "ranked": ranked})
    else:
        print(f"cluster {i + 1}: mu = {sp.mu[i]:.4f}, members {{{', '.join(sp.members[i])}}}")
        print(f"{'parameter':<10} {'value':>10} {'dmu/dp':>12} {'elasticity':>11}  action")
        for r in ranked:
            print(f"{r['parameter']:<10} {r['value']:>10.4g} {r['sensitivity']:>+12.4g} {r['elasticity']:>+11.4f}  {r['action']}")
    return _exit_for(a.status)


# ---------------------------------------------------------------- sweep


def cmd_sweep(args) -> int:
    spec = _load(args)
    try:
        sweep = SweepSpec.parse(args.param, args.range)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    res = run_sweep(spec, sweep, _mode(args), jobs=args.jobs)
    v = res.mu_sorted.shape[1]
    out = args.out or "sweep.csv"
    header = [sweep.label, "mu_cr"] + [f"mu_{i + 1}" for i in range(v)] + [f"track_{i + 1}" for i in range(v)]
    rows = [
        [x, res.mu_cr] + list(res.mu_sorted[s]) + list(res.mu_tracked[s])
        for s, x in enumerate(res.values)
    ]
    _write_csv(out, header, rows)
    crossings = res.crossings() if res.mu_cr is not None else []
    if args.json:
        _emit_json({"out": out, "mu_cr": res.mu_cr, "crossings_of_max_mu": crossings})
    else:
        print(f"wrote {len(rows)} rows to {out}")
        print(f"mu_cr = {_fmt(res.mu_cr)}")
        if crossings:
            print("largest mu crosses mu_cr at " + ", ".join(f"{sweep.label} = {c:.4g}" for c in crossings))
        else:
            print("largest mu does not cross mu_cr in the swept range")
    return EXIT_STABLE


# ---------------------------------------------------------------- simulate


def _parse_steps(items) -> dict:
    out = {}
    for item in items or []:
        for part in item.split(","):
            bus, _, val = part.partition("=")
            if not val:
                raise CliError(f"bad step {part!r}; expected bus=value")
            bus = bus.strip()
            if bus.startswith("bus") and len(bus) > 3:
                bus = bus[3:]
            out[bus] = out.get(bus, 0.0) + float(val)
    return out


def cmd_simulate(args) -> int:
    spec = _load(args)
    net = to_per_unit(spec, rho_tolerance=args.rho_tolerance)
    red = reduce_network(net, _mode(args))
    sm = assemble_state_matrix(net, red)
    dp = _parse_steps(args.dp)
    dq = _parse_steps(args.dq)
    loads = bus_load_power(spec)
    for bus, frac in _parse_steps(args.load_step).items():
        if bus not in loads:
            raise CliError(f"bus {bus!r} has no load for --load-step")
        dp[bus] = dp.get(bus, 0.0) + frac * loads[bus].real
        dq[bus] = dq.get(bus, 0.0) + frac * loads[bus].imag
    sc = Scenario(dp=dp, dq=dq, duration=args.t, dt=args.dt, record_every=args.every)
    traj = step_response(sm, sc)
    out = args.out or "traj.csv"
    ids = traj.bus_ids
    header = ["t"] + [f"omega_{b}" for b in ids] + [f"V_{b}" for b in ids] + [f"theta_{b}" for b in ids]
    data = np.column_stack([traj.t, traj.omega, traj.V, traj.theta])
    _write_csv(out, header, data.tolist())
    if args.json:
        _emit_json({"out": out, "samples": int(traj.t.size), "dp": dp, "dq": dq})
    else:
        print(f"wrote {traj.t.size} samples to {out}")
    return EXIT_STABLE


# ---------------------------------------------------------------- oracle


def _oracle(args):
    spec = _load(args)
    net = to_per_unit(spec, rho_tolerance=args.rho_tolerance)
    red = reduce_network(net, _mode(args))
    sm = assemble_state_matrix(net, red)
    w, _ = eig_general(sm.A)
    match = None
    if net.k is not None:
        from .spectrum import network_spectrum

        sp = network_spectrum(red, net.m, args.threshold)
        pred, src = predicted_modes(sp, net)
        pair, dist = greedy_match(pred, w)
        match = (sp, pred, src, pair, dist, hausdorff(w, pred))
    return net, sm, w, match


def cmd_oracle(args) -> int:
    net, sm, w, match = _oracle(args)
    out = args.out or "eigs.csv"
    rows = []
    if match is not None:
        sp, pred, src, pair, dist, _ = match
        for p in np.argsort(-w[pair].real, kind="stable"):
            lam = w[pair[p]]
            rows.append([lam.real, lam.imag, int(src[p]) + 1, float(sp.mu[src[p]]), pred[p].real, pred[p].imag, dist[p]])
    else:
        for lam in w[np.argsort(-w.real, kind="stable")]:
            rows.append([lam.real, lam.imag, "", "", "", "", ""])
    _write_csv(out, ["re", "im", "cluster", "mu", "pred_re", "pred_im", "distance"], rows)
    n_rhp = right_half_plane_pairs(w, net.omega0)
    info = {
        "out": out,
        "n_eigenvalues": int(w.size),
        "n_right_half_plane": n_rhp,
        "dominant": [dominant_rate(w, net.omega0).real, dominant_rate(w, net.omega0).imag],
    }
    if match is not None:
        info["hausdorff"] = match[5]
        info["hausdorff_limit"] = MATCH_TOLERANCE * net.omega0
    if args.json:
        _emit_json(info)
    else:
        print(f"wrote {w.size} eigenvalues to {out}")
        print(f"right-half-plane eigenvalues: {n_rhp}")
        d = dominant_rate(w, net.omega0)
        print(f"dominant mode: {d.real:+.4f} {d.imag:+.4f}j rad/s")
        if match is not None:
            print(f"cluster-mode match: Hausdorff distance {match[5]:.3e} rad/s "
                  f"(limit {MATCH_TOLERANCE * net.omega0:.3e})")
        else:
            print("droop gains not proportional: cluster-mode match skipped")
    return EXIT_UNSTABLE if n_rhp else EXIT_STABLE


# ---------------------------------------------------------------- reduce


def cmd_reduce(args) -> int:
    spec = _load(args)
    net = to_per_unit(spec, rho_tolerance=args.rho_tolerance)
    red = reduce_network(net, _mode(args))
    out = args.out or "matrix.csv"
    _write_csv(out, list(red.bus_ids), red.B.tolist())
    if args.json:
        _emit_json({"out": out, "bus_ids": list(red.bus_ids), "eliminated": list(red.eliminated), "rho": red.rho})
    else:
        print(f"wrote {red.size}x{red.size} susceptance matrix to {out}")
        if red.eliminated:
            print("eliminated buses: " + ", ".join(red.eliminated))
    return EXIT_STABLE


# ---------------------------------------------------------------- report


def cmd_report(args) -> int:
    spec = _load(args)
    a = analyze(spec, _mode(args), threshold=args.threshold, rho_tolerance=args.rho_tolerance)
    sm = assemble_state_matrix(a.network, a.reduced)
    w, _ = eig_general(sm.A)
    n_rhp = right_half_plane_pairs(w, a.network.omega0)
    parts = [f"gridclust {__version__} stability report: {Path(args.grid).name}", "", _render_analysis(a), ""]
    parts.append("full-model oracle:")
    parts.append(f"  state dimension {w.size}, right-half-plane eigenvalues {n_rhp}")
    d = dominant_rate(w, a.network.omega0)
    parts.append(f"  dominant mode {d.real:+.4f} {d.imag:+.4f}j rad/s")
    if a.verdict is not None and a.reduced.load_mode is LoadMode.LINES_ONLY:
        sp = a.spectrum
        pred, _ = predicted_modes(sp, a.network)
        h = hausdorff(w, pred)
        parts.append(f"  cluster-mode match Hausdorff distance {h:.3e} rad/s")
    agree = (n_rhp == 0) == (a.status == "stable")
    parts.append(f"  agreement with cluster verdict: {'yes' if agree else 'NO'}")
    if args.json:
        doc = _analysis_dict(a)
        doc["oracle"] = {"n_right_half_plane": n_rhp, "dominant": [d.real, d.imag], "agrees": agree}
        _emit_json(doc)
    else:
        print("\n".join(parts))
    return _exit_for(a.status)


# ---------------------------------------------------------------- parser


def _common(defaults: bool) -> argparse.ArgumentParser:
    """Global flags, accepted before or after the subcommand."""
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--load-mode", "--mode", dest="load_mode", choices=[m.value for m in LoadMode],
                   default=d(LoadMode.LINES_ONLY.value), help="how bus loads enter the susceptance matrix")
    p.add_argument("--omega-c", type=float, default=d(None), help="override the filter cut-off (rad/s)")
    p.add_argument("--json", action="store_true", default=d(False), help="machine-readable output")
    p.add_argument("--jobs", type=int, default=d(1), help="parallel workers for sweeps")
    p.add_argument("--rho-tolerance", type=float, default=d(1e-6), help="relative R/X homogeneity tolerance")
    p.add_argument("--threshold", type=float, default=d(DEFAULT_MEMBER_THRESHOLD),
                   help="cluster membership threshold relative to the largest |psi|")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridclust",
        description="Critical-cluster stability assessment of droop-controlled inverter microgrids.",
        parents=[_common(True)],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common(False)

    p = sub.add_parser("analyze", parents=[common], help="cluster spectrum and stability verdict")
    p.add_argument("grid")
    p.add_argument("--spectrum-out", default="spectrum.json", help="spectrum JSON path ('' to skip)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("mucr", parents=[common], help="critical threshold for given rho and k")
    p.add_argument("--rho", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--omega0", type=float, default=DEFAULT_OMEGA0)
    p.add_argument("--sweep", help="e.g. rho=0.2:5:50,k=0.5:10:50")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mucr)

    p = sub.add_parser("sensitivities", parents=[common], help="ranked parameter sensitivities")
    p.add_argument("grid")
    p.add_argument("--cluster", default="top", help="'top' or a 1-based cluster index (ascending mu)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sensitivities)

    p = sub.add_parser("sweep", parents=[common], help="spectrum versus one parameter")
    p.add_argument("grid")
    p.add_argument("--param", required=True, help="line:A-B (km) or droop:BUS (fraction)")
    p.add_argument("--range", required=True, help="start:stop:count")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common], help="linear step response")
    p.add_argument("grid")
    p.add_argument("--dp", action="append", help="active power step, bus=pu (repeatable)")
    p.add_argument("--dq", action="append", help="reactive power step, bus=pu (repeatable)")
    p.add_argument("--load-step", action="append", help="load change as a fraction of the bus load, bus=frac")
    p.add_argument("--t", type=float, default=1.0, help="duration (s)")
    p.add_argument("--dt", type=float, default=DEFAULT_DT, help="time step (s)")
    p.add_argument("--every", type=int, default=1, help="record every n-th step")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", parents=[common], help="full state-matrix eigenvalues")
    p.add_argument("grid")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("reduce", parents=[common], help="Kron-reduced susceptance matrix as CSV")
    p.add_argument("grid")
    p.add_argument("--out")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("report", parents=[common], help="combined human-readable summary")
    p.add_argument("grid")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings():
            if args.json:
                warnings.simplefilter("ignore")
            return args.func(args)
    except (GridClustError, CliError, OSError, ValueError, HypothesisError) as exc:
        if args.json:
            _emit_json({"error": str(exc), "type": type(exc).__name__})
        else:
            print(f"gridclust: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

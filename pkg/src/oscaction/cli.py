"""Command-line front end.

Subcommands: ``pf``, ``eigs``, ``sweep``, ``tas``, ``simulate``,
``validate``.  Every command loads a case (``--case`` is a path or the
name of a bundled case), writes delimited tables plus rendered figures
into ``--out``, and echoes a short summary to stdout.

Exit codes: 0 success, 1 usage or I/O problem, 2 numerical
non-convergence, 3 validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, dynsim, modal, netmodel, plots, tas
from .errors import (
    CaseError,
    DegenerateDisturbance,
    DisconnectedBus,
    NonConvergence,
    OscActionError,
    UnknownBusError,
)

DEFAULT_DT = 1e-3
DEFAULT_T = 10.0
DEFAULT_FAULT_DURATION = 0.064
DEFAULT_GAIN_GRID = (0.0, 50.0, 5.0)
DEFAULT_SIM_GAIN = 5.0


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage problems, not 2
        raise _UsageError(message)


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def _write_csv(path: Path, header: list, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) for c in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_case(spec: str) -> netmodel.SystemCase:
    p = Path(spec)
    if p.exists():
        return netmodel.load_case(p)
    try:
        return netmodel.load_case(netmodel.bundled_case_path(spec))
    except FileNotFoundError:
        raise _UsageError(f"case '{spec}' is neither a file nor a bundled case")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_gain(text: str) -> tuple[int, float]:
    try:
        bus, theta = text.split("=", 1)
        return int(bus), float(theta)
    except ValueError:
        raise _UsageError(f"--gain expects BUS=THETA, got '{text}'") from None


def _parse_fault(text: str, dt: float) -> tas.FaultSpec:
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return tas.FaultSpec(bus=int(parts[0]),
                                 duration=DEFAULT_FAULT_DURATION, dt=dt)
        if len(parts) == 2:
            return tas.FaultSpec(bus=int(parts[0]), duration=float(parts[1]),
                                 dt=dt)
    except ValueError:
        pass
    raise _UsageError(f"--fault expects BUS or BUS:SECONDS, got '{text}'")


def _parse_csv_floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise _UsageError(f"expected comma-separated numbers, got '{text}'")


def _parse_csv_ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise _UsageError(f"expected comma-separated bus ids, got '{text}'")


def _disturbance(args, case, *, required: bool = True):
    have_fault = getattr(args, "fault", None) is not None
    have_domega = getattr(args, "domega", None) is not None
    if have_fault and have_domega:
        raise _UsageError("give either --fault or --domega, not both")
    if have_fault:
        return _parse_fault(args.fault, args.dt)
    if have_domega:
        dom = _parse_csv_floats(args.domega)
        if dom.size != len(case.generators):
            raise _UsageError(
                f"--domega needs {len(case.generators)} entries "
                f"(one per generator)"
            )
        return dom
    if required:
        raise _UsageError("this command needs a disturbance "
                          "(--fault BUS[:SECONDS] or --domega CSV)")
    return None


def _default_candidates(case) -> list:
    return sorted(g.bus for g in case.generators)


def _meta(case_spec: str, args, extra: dict) -> dict:
    meta = {
        "case": case_spec,
        "version": __version__,
        "defaults": {
            "dt": DEFAULT_DT,
            "T": DEFAULT_T,
            "fault_duration": DEFAULT_FAULT_DURATION,
            "gain_grid": list(DEFAULT_GAIN_GRID),
        },
    }
    meta.update(extra)
    return meta


def _trapz(y: np.ndarray, dt: float) -> float:
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        return 0.0
    return float(dt * (0.5 * (y[0] + y[-1]) + y[1:-1].sum()))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_pf(args) -> int:
    case = _load_case(args.case)
    out = _out_dir(args)
    pf = netmodel.solve_power_flow(case)
    types = {b.id: b.type for b in case.buses}
    rows = [
        (bid, types[bid], _fmt(pf.vm[k]), _fmt(pf.va[k]),
         _fmt(pf.p_inj[k]), _fmt(pf.q_inj[k]))
        for k, bid in enumerate(pf.bus_ids)
    ]
    _write_csv(out / "pf.csv",
               ["bus", "type", "vm", "va_rad", "p_inj", "q_inj"], rows)
    if args.format == "json":
        _write_json(out / "pf.json", {
            "buses": [
                {"bus": bid, "type": types[bid], "vm": pf.vm[k],
                 "va_rad": pf.va[k], "p_inj": pf.p_inj[k],
                 "q_inj": pf.q_inj[k]}
                for k, bid in enumerate(pf.bus_ids)
            ],
            "iterations": pf.iterations,
            "max_mismatch": pf.max_mismatch,
        })
    plots.save_pf_profile(out / "pf.png", pf.bus_ids, pf.vm,
                          np.degrees(pf.va))
    _write_json(out / "pf_meta.json", _meta(args.case, args, {
        "command": "pf", "iterations": pf.iterations,
        "max_mismatch": pf.max_mismatch,
    }))
    print(f"power flow converged in {pf.iterations} iterations "
          f"(max mismatch {pf.max_mismatch:.3e} pu)")
    return 0


def _eigen_rows(lam: np.ndarray) -> list:
    rows = []
    for i, v in enumerate(lam):
        mag = abs(v)
        zeta = -v.real / mag if mag > 0.0 else 0.0
        rows.append((i, _fmt(v.real), _fmt(v.imag), _fmt(abs(v.imag)),
                     _fmt(zeta)))
    return rows


def cmd_eigs(args) -> int:
    case = _load_case(args.case)
    out = _out_dir(args)
    pf = netmodel.solve_power_flow(case)
    theta = 0.0
    actuator = None
    if args.gain is not None:
        bus, theta = _parse_gain(args.gain)
        fb = netmodel.nearest_generator(case, bus)
        actuator = dynsim.Actuator(bus=bus, feedback_gen=fb, gain=theta)
        eq = netmodel.init_classical(case, pf, retained_actuator_bus=bus)
    else:
        eq = netmodel.init_classical(case, pf)
    lm = dynsim.build_linear_model(eq, actuator)
    basis = modal.eig_decompose(lm.A(theta))
    lam = basis.eigenvalues
    _write_csv(out / "eigs.csv",
               ["idx", "re", "im", "freq_rad_s", "damping_ratio"],
               _eigen_rows(lam))
    if args.format == "json":
        _write_json(out / "eigs.json", {
            "eigenvalues": [{"idx": i, "re": v.real, "im": v.imag}
                            for i, v in enumerate(lam)],
            "gain": theta,
        })
    plots.save_eig_scatter(out / "eigs.png", lam,
                           title=f"eigenvalues (gain {theta:g})")
    _write_json(out / "eigs_meta.json", _meta(args.case, args, {
        "command": "eigs", "gain": theta,
        "actuator_bus": None if actuator is None else actuator.bus,
    }))
    osc = lam[lam.imag > 1e-6]
    print(f"{lam.size} eigenvalues, {osc.size} with positive imaginary part; "
          f"max Re = {lam.real.max():.6g}")
    return 0


def cmd_sweep(args) -> int:
    case = _load_case(args.case)
    out = _out_dir(args)
    pf = netmodel.solve_power_flow(case)
    candidates = (_parse_csv_ints(args.candidates) if args.candidates
                  else _default_candidates(case))
    start, stop, step = args.sweep_from, args.sweep_to, args.step
    if step <= 0.0 or stop < start:
        raise _UsageError("need --step > 0 and --to >= --from")
    gains = np.arange(start, stop + 0.5 * step, step)
    for bus in candidates:
        fb = netmodel.nearest_generator(case, bus)
        eq = netmodel.init_classical(case, pf, retained_actuator_bus=bus)
        act = dynsim.Actuator(bus=bus, feedback_gen=fb, gain=0.0)
        sweep = dynsim.gain_sweep(eq, act, gains)
        header = ["gain"]
        for i in range(sweep.eigenvalues.shape[1]):
            header += [f"re_{i + 1}", f"im_{i + 1}"]
        rows = []
        for g, theta in enumerate(sweep.gains):
            row = [_fmt(theta)]
            for v in sweep.eigenvalues[g]:
                row += [_fmt(v.real), _fmt(v.imag)]
            rows.append(row)
        _write_csv(out / f"sweep_bus{bus}.csv", header, rows)
        if args.format == "json":
            _write_json(out / f"sweep_bus{bus}.json", {
                "bus": bus, "feedback_gen": fb,
                "gains": [float(v) for v in sweep.gains],
                "eigenvalues": [[[v.real, v.imag] for v in row]
                                for row in sweep.eigenvalues],
                "ambiguous": [[int(a), int(b)] for a, b in sweep.ambiguous],
            })
        plots.save_loci(out / f"sweep_bus{bus}.png", sweep.gains,
                        sweep.eigenvalues,
                        title=f"loci, actuator at bus {bus} (fb gen {fb})")
        flagged = f", {len(sweep.ambiguous)} ambiguous matches" \
            if sweep.ambiguous else ""
        print(f"bus {bus}: swept gains {gains[0]:g}..{gains[-1]:g} "
              f"step {step:g}{flagged}")
    _write_json(out / "sweep_meta.json", _meta(args.case, args, {
        "command": "sweep", "candidates": candidates,
        "grid": [start, stop, step],
    }))
    return 0


def cmd_tas(args) -> int:
    case = _load_case(args.case)
    out = _out_dir(args)
    disturbance = _disturbance(args, case)
    candidates = (_parse_csv_ints(args.candidates) if args.candidates
                  else _default_candidates(case))
    report = tas.rank_actuators(case, candidates, disturbance)
    rows = [
        (r.rank, r.bus, r.feedback_gen, _fmt(r.alpha), _fmt(r.beta_term),
         _fmt(r.total))
        for r in report.rows
    ]
    _write_csv(out / "ranking.csv",
               ["rank", "bus", "feedback_gen", "alpha", "beta_term", "total"],
               rows)
    _write_json(out / "ranking.json", {
        "rows": [
            {
                "rank": r.rank,
                "bus": r.bus,
                "feedback_gen": r.feedback_gen,
                "alpha": r.alpha,
                "beta_term": r.beta_term,
                "total": r.total,
                "beta": [[v.real, v.imag] for v in r.breakdown.beta],
                "dlambda": [[v.real, v.imag] for v in r.breakdown.dlam],
            }
            for r in report.rows
        ],
        "meta": _meta(args.case, args, report.meta),
    })
    plots.save_ranking_bars(out / "ranking.png",
                            [r.bus for r in report.rows],
                            [r.total for r in report.rows],
                            [r.beta_term for r in report.rows])
    _write_json(out / "ranking_meta.json", _meta(args.case, args, {
        "command": "tas", "candidates": candidates,
    }))
    print("rank  bus  fb_gen  total          beta_term")
    for r in report.rows:
        print(f"{r.rank:>4}  {r.bus:>3}  {r.feedback_gen:>6}  "
              f"{r.total: .6e}  {r.beta_term: .6e}")
    return 0


def _trajectory_rows(traj: dynsim.Trajectory, p: int):
    rows = []
    for k in range(traj.t.size):
        row = [_fmt(traj.t[k])]
        row += [_fmt(v) for v in traj.states[k, :p]]
        row += [_fmt(v) for v in traj.states[k, p:]]
        row.append(_fmt(traj.ek[k]))
        rows.append(row)
    return rows


def cmd_simulate(args) -> int:
    case = _load_case(args.case)
    out = _out_dir(args)
    pf = netmodel.solve_power_flow(case)
    disturbance = _disturbance(args, case)
    dx0 = tas.resolve_disturbance(case, pf, disturbance)
    p = len(case.generators)
    header = (["t"] + [f"delta_{i + 1}" for i in range(p)]
              + [f"domega_{i + 1}" for i in range(p)] + ["Ek"])

    runs = []
    eq0 = netmodel.init_classical(case, pf)
    base = dynsim.simulate(eq0, dx0, None, T=args.T, dt=args.dt)
    _write_csv(out / "sim_baseline.csv", header, _trajectory_rows(base, p))
    runs.append(("baseline", base))

    gain_runs = []
    if args.gain is not None:
        bus, theta = _parse_gain(args.gain)
        gain_runs.append((bus, theta))
    for bus in (_parse_csv_ints(args.candidates) if args.candidates else []):
        gain_runs.append((bus, args.theta))
    for bus, theta in gain_runs:
        fb = netmodel.nearest_generator(case, bus)
        eq = netmodel.init_classical(case, pf, retained_actuator_bus=bus)
        act = dynsim.Actuator(bus=bus, feedback_gen=fb, gain=theta)
        traj = dynsim.simulate(eq, dx0, act, T=args.T, dt=args.dt)
        _write_csv(out / f"sim_bus{bus}.csv", header,
                   _trajectory_rows(traj, p))
        runs.append((f"bus {bus} (theta={theta:g})", traj))

    if args.format == "json":
        _write_json(out / "sim_energy.json", {
            label: {"t": [float(v) for v in traj.t],
                    "ek": [float(v) for v in traj.ek]}
            for label, traj in runs
        })
    plots.save_energy_curves(out / "ek_compare.png",
                             [(label, traj.t, traj.ek)
                              for label, traj in runs])
    _write_json(out / "sim_meta.json", _meta(args.case, args, {
        "command": "simulate", "T": args.T, "dt": args.dt,
        "runs": [label for label, _ in runs],
    }))
    print("run                       integral of Ek (pu s^2)")
    for label, traj in runs:
        print(f"{label:<25} {_trapz(traj.ek, args.dt): .6e}")
    return 0


def cmd_validate(args) -> int:
    case = _load_case(args.case)
    out = _out_dir(args)
    checks = []  # (name, residual, tol, passed)

    def record(name, residual, tol):
        checks.append((name, float(residual), float(tol),
                       bool(residual <= tol)))

    failure = None
    try:
        pf = netmodel.solve_power_flow(case)
        record("power_flow_mismatch", pf.max_mismatch, 1e-8)
        disturbance = _disturbance(args, case, required=False)
        if disturbance is None:
            p = len(case.generators)
            disturbance = 0.01 * (-1.0) ** np.arange(p)
        dx0 = tas.resolve_disturbance(case, pf, disturbance)
        candidates = (_parse_csv_ints(args.candidates) if args.candidates
                      else _default_candidates(case))

        eq0 = netmodel.init_classical(case, pf)
        lm0 = dynsim.build_linear_model(eq0)
        basis0 = modal.eig_decompose(lm0.A0)
        en0 = tas.modal_energy(basis0, lm0.J, dx0)
        s_modal = tas.total_action(en0, basis0.eigenvalues)
        s_lyap = tas.total_action_lyapunov(lm0.A0, lm0.J, dx0)
        record("lyapunov_vs_modal_total_action",
               abs(s_modal - s_lyap), 1e-8 * (1.0 + abs(s_lyap)))

        h = 1e-6
        for bus in candidates:
            fb = netmodel.nearest_generator(case, bus)
            eq = netmodel.init_classical(case, pf, retained_actuator_bus=bus)
            act = dynsim.Actuator(bus=bus, feedback_gen=fb, gain=0.0)
            lm = dynsim.build_linear_model(eq, act)

            a10 = lm.A(10.0)
            resid = float(np.max(np.abs(a10 - lm.A0 - 10.0 * lm.B)))
            record(f"affinity_bus{bus}",
                   resid, 1e-9 * float(np.max(np.abs(lm.A0))))

            b_used = lm.B * (1.0 + args.perturb_b)
            basis = modal.eig_decompose(lm.A0)
            dlam = modal.eigenvalue_sensitivities(basis, b_used)
            vsens = modal.eigenvector_derivatives(lm.A0, basis, b_used, dlam)
            bd = tas.total_action_sensitivity(lm, basis, vsens, dx0)

            svals = []
            for sgn in (h, -h):
                bs = modal.eig_decompose(lm.A(sgn))
                ens = tas.modal_energy(bs, lm.J, dx0)
                svals.append(tas.total_action(ens, bs.eigenvalues))
            fd = (svals[0] - svals[1]) / (2.0 * h)
            record(f"tas_fd_bus{bus}", abs(bd.total - fd),
                   1e-4 * max(abs(fd), 1e-12))
    except OscActionError as exc:
        failure = exc

    rows = [(name, _fmt(res), _fmt(tol), "pass" if ok else "FAIL")
            for name, res, tol, ok in checks]
    _write_csv(out / "validate.csv", ["check", "residual", "tol", "status"],
               rows)
    _write_json(out / "validate_meta.json", _meta(args.case, args, {
        "command": "validate",
        "checks": [
            {"name": n, "residual": r, "tol": t, "passed": ok}
            for n, r, t, ok in checks
        ],
        "error": None if failure is None else str(failure),
    }))
    for name, res, tol, ok in checks:
        print(f"{'pass' if ok else 'FAIL'}  {name:<32} "
              f"residual {res:.3e}  tol {tol:.3e}")
    if failure is not None:
        print(f"FAIL  {type(failure).__name__}: {failure}", file=sys.stderr)
        return 3
    if not all(ok for _, _, _, ok in checks):
        return 3
    print("all validation checks passed")
    return 0


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="oscaction",
                     description="Rank damping-actuator locations by "
                                 "total-action sensitivity and validate "
                                 "with time-domain simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, disturbance=False):
        sp.add_argument("--case", required=True,
                        help="case file path or bundled name (ieee9, ieee39)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="also mirror tables to JSON when 'json'")
        sp.add_argument("--dt", type=float, default=DEFAULT_DT,
                        help="integration step (s)")
        if disturbance:
            sp.add_argument("--fault", metavar="BUS[:SECONDS]",
                            help=f"bolted fault disturbance (default "
                                 f"duration {DEFAULT_FAULT_DURATION} s)")
            sp.add_argument("--domega", metavar="CSV",
                            help="initial speed deviation per generator, pu")

    sp = sub.add_parser("pf", help="solve the AC power flow")
    common(sp)
    sp.set_defaults(func=cmd_pf)

    sp = sub.add_parser("eigs", help="closed-loop eigenvalue report")
    common(sp)
    sp.add_argument("--gain", metavar="BUS=THETA",
                    help="actuator location and gain (default: no actuator)")
    sp.set_defaults(func=cmd_eigs)

    sp = sub.add_parser("sweep", help="eigenvalue loci over a gain grid")
    common(sp)
    sp.add_argument("--candidates", metavar="CSV",
                    help="actuator buses (default: generator buses)")
    sp.add_argument("--from", dest="sweep_from", type=float,
                    default=DEFAULT_GAIN_GRID[0], help="first gain")
    sp.add_argument("--to", dest="sweep_to", type=float,
                    default=DEFAULT_GAIN_GRID[1], help="last gain")
    sp.add_argument("--step", type=float, default=DEFAULT_GAIN_GRID[2],
                    help="gain increment")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("tas", help="rank candidate actuator buses")
    common(sp, disturbance=True)
    sp.add_argument("--candidates", metavar="CSV",
                    help="actuator buses (default: generator buses)")
    sp.set_defaults(func=cmd_tas)

    sp = sub.add_parser("simulate", help="nonlinear time-domain runs")
    common(sp, disturbance=True)
    sp.add_argument("--candidates", metavar="CSV",
                    help="actuator buses to simulate besides the baseline")
    sp.add_argument("--gain", metavar="BUS=THETA",
                    help="single actuator run at an explicit gain")
    sp.add_argument("--theta", type=float, default=DEFAULT_SIM_GAIN,
                    help="gain used for --candidates runs")
    sp.add_argument("--T", dest="T", type=float, default=DEFAULT_T,
                    help="horizon (s)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("validate",
                        help="cross-check the case against independent "
                             "oracles")
    common(sp, disturbance=True)
    sp.add_argument("--candidates", metavar="CSV",
                    help="actuator buses to check (default: generator buses)")
    sp.add_argument("--perturb-b", dest="perturb_b", type=float, default=0.0,
                    help=argparse.SUPPRESS)  # fault-injection hook for tests
    sp.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CaseError, UnknownBusError, DisconnectedBus, DegenerateDisturbance,
            FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OscActionError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

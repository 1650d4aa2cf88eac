"""
Command-line front end.

All physical quantities are dimensionless: energies in units of the bath
width lambda (x = x_bar / lambda) and time as tau = lambda t.

Settings resolve as built-in defaults < config file < command-line flags.
The config file is INI-style: a ``[common]`` section plus one section per
subcommand, with keys spelled like the long flags (``omega-d = 5``).

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import configparser
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import equivalent_static_params, hf_gap, high_freq_equivalent
from .heom import HeomConfig, solve_heom, solve_heom_pair
from .integrate import IntegrationError
from .measures import (MEASURES, default_pair_family, measure_trajectory,
                       pair_scan)
from .qcore import ContractViolation, SystemParams, min_eigenvalue
from .rwa import IntegratorConfig, reduced_states, solve_g
from .sweep import (Axis, FigureOptions, SweepAborted, SweepSpec,
                    default_workers, engine_trajectory, figure_dataset, fmt,
                    run_sweep, static_max_table, static_max_values, write_csv,
                    write_metadata)

log = logging.getLogger("nmqsim")

SUBCOMMANDS = ("traj", "measure", "sweep", "figure", "pairs", "hf-check")


def _common(p):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--engine", choices=("rwa", "heom"), default="rwa")
    p.add_argument("--gamma0", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--omega-d", type=float, default=0.0)
    p.add_argument("--omega0", type=float, default=20.0)
    p.add_argument("--trunc-n", type=int, default=10)
    p.add_argument("--tau-max", type=float, default=None,
                   help="horizon (default 30)")
    p.add_argument("--dtau", type=float, default=0.005)
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default $NMQSIM_WORKERS or 1)")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--resume", action="store_true")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nmqsim",
        description="Non-Markovianity of a driven qubit in a Lorentzian bath.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("traj", help="trace-distance trajectory as CSV")
    _common(p)

    p = sub.add_parser("measure", help="BLP and LR measures of one point")
    _common(p)
    p.add_argument("--measure", choices=MEASURES + ("all",), default="all")

    p = sub.add_parser("sweep", help="grid sweep to CSV")
    _common(p)
    p.add_argument("--axis", action="append", default=None,
                   help="name=lo:hi:step or name=v1,v2,... (repeatable)")
    p.add_argument("--measure", choices=MEASURES + ("all",), default="all")
    p.add_argument("--relative", action="store_true",
                   help="also emit values relative to the best static measure")

    p = sub.add_parser("figure", help="data behind one figure")
    _common(p)
    p.add_argument("name", choices=("fig1", "fig2", "fig3", "fig4"))
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--gamma0-list", default=None,
                   help="comma-separated couplings (fig2/fig3)")

    p = sub.add_parser("pairs", help="scan antipodal initial pairs")
    _common(p)
    p.add_argument("--measure", choices=MEASURES, default="BLP")
    p.add_argument("--n-theta", type=int, default=12)
    p.add_argument("--n-phi", type=int, default=12)
    p.add_argument("--seed", type=int, default=None,
                   help="add 16 random pairs drawn with this seed")

    p = sub.add_parser("hf-check", help="high-frequency equivalence report")
    _common(p)
    p.add_argument("--ratio", type=float, default=0.8,
                   help="fixed delta/omega_d")
    p.add_argument("--omega-d-list", default="5,10,20,40")
    return parser


def _config_defaults(path, command):
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(f"config file {path} not found")
    out = {}
    for section in ("common", command):
        if cp.has_section(section):
            for k, v in cp.items(section):
                out[k.replace("-", "_")] = v
    return out


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in SUBCOMMANDS:
        try:
            defaults = _config_defaults(known.config, known.command)
        except (OSError, configparser.Error) as exc:
            parser.error(str(exc))
        subparser = parser._subparsers._group_actions[0].choices[known.command]
        valid = {a.dest for a in subparser._actions}
        unknown = set(defaults) - valid
        if unknown:
            parser.error(f"unknown config keys: {sorted(unknown)}")
        if "resume" in defaults:
            defaults["resume"] = defaults["resume"].lower() in (
                "1", "true", "yes", "on")
        if "axis" in defaults:
            defaults["axis"] = [s.strip() for s in
                                defaults["axis"].split(";") if s.strip()]
        subparser.set_defaults(**defaults)
    args = parser.parse_args(argv)
    try:
        args.params = SystemParams(args.gamma0, args.delta, args.omega_d,
                                   args.omega0)
        args.rwa_cfg = IntegratorConfig(
            dtau=args.dtau, tau_max=args.tau_max or 30.0,
            adaptive_horizon=args.tau_max is None)
        args.heom_cfg = HeomConfig(n_trunc=args.trunc_n, dtau=args.dtau,
                                   tau_max=args.tau_max or 30.0)
        if args.workers is not None and args.workers < 1:
            raise ContractViolation("--workers must be >= 1")
        if getattr(args, "axis", None):
            args.axes = tuple(Axis.parse(a) for a in args.axis)
    except (ContractViolation, ValueError) as exc:
        parser.error(str(exc))
    args.workers = args.workers or default_workers()
    return args


def _open_out(path):
    if path is None:
        return sys.stdout, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline=""), True


def cmd_traj(args):
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        if args.engine == "rwa":
            amp = solve_g(args.params, args.rwa_cfg)
            w.writerow(("tau", "D", "re_G", "im_G"))
            for t, g in zip(amp.tau, amp.g):
                w.writerow((fmt(t), fmt(abs(g)), fmt(g.real), fmt(g.imag)))
        else:
            traj, (t1, t2) = solve_heom_pair(args.params, args.heom_cfg)
            w.writerow(("tau", "D", "rho00_re", "rho01_re", "rho01_im",
                        "min_eig"))
            for k, t in enumerate(traj.tau):
                r = t1.states[k]
                me = min(min_eigenvalue(r), min_eigenvalue(t2.states[k]))
                w.writerow((fmt(t), fmt(traj.distance[k]), fmt(r[0, 0].real),
                            fmt(r[0, 1].real), fmt(r[0, 1].imag), fmt(me)))
    finally:
        if close:
            fh.close()
    return 0


def cmd_measure(args):
    traj = engine_trajectory(args.engine, args.params, args.rwa_cfg,
                             args.heom_cfg)
    res = measure_trajectory(traj)
    lines = []
    if args.measure in ("BLP", "all"):
        lines.append(f"n_blp={fmt(res.n_blp)}")
    if args.measure in ("LR", "all"):
        lines.append(f"n_lr={fmt(res.n_lr)}")
        lines.append(f"window_low={fmt(res.window[0])}")
        lines.append(f"window_high={fmt(res.window[1])}")
    lines += [f"engine={args.engine}", f"horizon={fmt(res.horizon)}",
              "pair=sigma_x_eigenstates"]
    if args.engine == "heom":
        lines.append(f"trunc_n={args.trunc_n}")
    for k, v in vars(args.params).items():
        lines.append(f"{k}={fmt(v)}")
    print("\n".join(lines))
    return 0


def _progress(done, total):
    if done == total or done % max(1, total // 20) == 0:
        print(f"[{done}/{total}]", file=sys.stderr, flush=True)


def cmd_sweep(args):
    if not getattr(args, "axis", None):
        raise SystemExit(_usage("sweep needs at least one --axis"))
    out = Path(args.out or "sweep.csv")
    measures = MEASURES if args.measure == "all" else (args.measure,)
    static = None
    if args.relative:
        gammas = next((a.values for a in args.axes if a.name == "gamma0"),
                      (args.params.gamma0,))
        table = static_max_table(MEASURES, gammas, engine=args.engine,
                                 omega0=args.omega0, rwa_config=args.rwa_cfg,
                                 heom_config=args.heom_cfg,
                                 workers=args.workers)
        static = static_max_values(table)
    spec = SweepSpec(engine=args.engine, axes=args.axes, fixed=args.params,
                     measures=measures, rwa_config=args.rwa_cfg,
                     heom_config=args.heom_cfg, static_max=static)
    recs = run_sweep(spec, workers=args.workers,
                     checkpoint=out.with_name(out.name + ".checkpoint.jsonl"),
                     resume=args.resume, progress=_progress)
    write_csv(recs, out)
    write_metadata(out.with_name(out.name + ".meta.json"),
                   spec=spec.to_dict(), fingerprint=spec.fingerprint(),
                   units="all quantities in units of the bath width lambda")
    print(f"wrote {out}", file=sys.stderr)
    return 0


def cmd_figure(args):
    gammas = None
    if args.gamma0_list:
        gammas = [float(s) for s in args.gamma0_list.split(",") if s.strip()]
    opts = FigureOptions(engine=args.engine, omega0=args.omega0,
                         resolution=args.resolution, workers=args.workers,
                         resume=args.resume, rwa_config=args.rwa_cfg,
                         heom_config=args.heom_cfg, gamma0_list=gammas,
                         progress=_progress)
    files = figure_dataset(args.name, args.out or "figures", opts)
    for f in files:
        print(f"wrote {f}", file=sys.stderr)
    return 0


def cmd_pairs(args):
    family = default_pair_family(args.n_theta, args.n_phi)
    if args.seed is not None:
        rng = np.random.default_rng(args.seed)
        for _ in range(16):
            z = rng.uniform(0.0, 1.0)
            family.append((float(math.acos(z)),
                           float(rng.uniform(0.0, 2 * math.pi))))

    if args.engine == "rwa":
        amp = solve_g(args.params, args.rwa_cfg)

        def evolve(rho0):
            return amp.tau, reduced_states(rho0, amp.g, amp.eps)
    else:
        def evolve(rho0):
            t = solve_heom(rho0, args.params, args.heom_cfg)
            return t.tau, t.states

    res = pair_scan(evolve, family, measure=args.measure)
    if args.out:
        fh, _ = _open_out(args.out)
        with fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("theta", "phi", "n_blp", "n_lr"))
            for row in res.values:
                w.writerow(tuple(fmt(x) for x in row))
        write_metadata(Path(args.out).with_name(Path(args.out).name
                                                + ".meta.json"),
                       seed=args.seed, n_theta=args.n_theta,
                       n_phi=args.n_phi, engine=args.engine,
                       params=vars(args.params))
    print(f"best_theta={fmt(res.best_angles[0])}")
    print(f"best_phi={fmt(res.best_angles[1])}")
    print(f"best_{args.measure.lower()}={fmt(res.best_value)}")
    print(f"n_pairs={len(res.values)}")
    print(f"seed={args.seed if args.seed is not None else ''}")
    return 0


def cmd_hf_check(args):
    cfg = IntegratorConfig(dtau=args.dtau, tau_max=args.tau_max or 30.0,
                           adaptive_horizon=False)
    ws = [float(s) for s in args.omega_d_list.split(",") if s.strip()]
    for w in ws:
        p = args.params.replace(delta=args.ratio * w, omega_d=w)
        hf = high_freq_equivalent(p)
        gap = hf_gap(p, cfg)
        lr_drv = measure_trajectory(engine_trajectory("rwa", p, cfg)).n_lr
        lr_eq = measure_trajectory(
            engine_trajectory("rwa", equivalent_static_params(p), cfg)).n_lr
        print(f"omega_d={fmt(w)} delta={fmt(p.delta)} beta={fmt(hf.beta)} "
              f"gamma_eff={fmt(hf.gamma_eff)} gap={fmt(gap)} "
              f"n_lr_driven={fmt(lr_drv)} n_lr_equivalent={fmt(lr_eq)}")
    return 0


COMMANDS = {"traj": cmd_traj, "measure": cmd_measure, "sweep": cmd_sweep,
            "figure": cmd_figure, "pairs": cmd_pairs, "hf-check": cmd_hf_check}


def _usage(msg):
    print(f"nmqsim: error: {msg}", file=sys.stderr)
    return 2


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (IntegrationError, SweepAborted, ContractViolation, OSError,
            ValueError) as exc:
        print(f"nmqsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

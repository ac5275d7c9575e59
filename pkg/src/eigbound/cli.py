"""Command line interface: ``eigbound run|sweep|constants|reference|selftest``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from .config import ConfigError, load_config


def _parse_N(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad N list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty N list")
    return vals


def _common(p, out=True):
    p.add_argument("-c", "--config", required=True,
                   help="config file or preset name (paper-1d, paper-2d)")
    if out:
        p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $EIGBOUND_THREADS or 1)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="eigbound",
        description="DG eigenvalue solver with a posteriori upper and lower error bounds.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline for one N")
    _common(p)
    p.add_argument("--N", type=int, help="override N")
    p.add_argument("--diagnostics", action="store_true",
                   help="use the true d^u and report identity/representation residuals")
    p.add_argument("--theorem-bounds", action="store_true",
                   help="also emit the theorem-form eigenvalue bounds")
    p.add_argument("--skip-reference", action="store_true",
                   help="estimators only; error and effectivity columns become NA")
    p.add_argument("--save-basis", action="store_true", help="write basis.npz")

    p = sub.add_parser("sweep", help="run several N and write a convergence summary")
    _common(p)
    p.add_argument("--N", type=_parse_N, help="comma separated list, e.g. 6,10")
    p.add_argument("--diagnostics", action="store_true")

    p = sub.add_parser("constants", help="basis and local constants only")
    _common(p)
    p.add_argument("--N", type=int)
    p.add_argument("--save-basis", action="store_true")

    p = sub.add_parser("reference", help="planewave reference eigenvalues only")
    _common(p)

    sub.add_parser("selftest", help="quick property checks")
    return parser


def _out_dir(args, cfg, default):
    return args.out or cfg.out or default


def cmd_run(args, cfg, threads):
    from .pipeline import run_single, setup, write_outputs

    N = args.N if args.N is not None else cfg.N_list[0]
    if args.N is None and len(cfg.N_list) > 1:
        print("config lists several N; running the first (use 'sweep' for all)", file=sys.stderr)
    st = setup(cfg)
    res = run_single(st, N, threads, diagnostics=args.diagnostics or cfg.diagnostics,
                     skip_reference=args.skip_reference or cfg.skip_reference)
    out = _out_dir(args, cfg, "eigbound-out")
    write_outputs(res, out, save_basis=args.save_basis)
    _print_table(res)
    if res.violations:
        print(f"bound violations: {res.violations}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args, cfg, threads):
    from .pipeline import (compute_reference, run_single, setup, sweep_summary,
                           write_outputs, write_summary)

    Ns = args.N if args.N is not None else cfg.N_list
    if len(Ns) < 2:
        print("sweep needs at least two values of N", file=sys.stderr)
        return 2
    st = setup(cfg)
    ref = None if cfg.skip_reference else compute_reference(st)
    out = _out_dir(args, cfg, "eigbound-sweep")
    results, status = [], 0
    for N in Ns:
        res = run_single(st, N, threads, diagnostics=args.diagnostics or cfg.diagnostics,
                         reference=ref)
        write_outputs(res, os.path.join(out, f"N{N}"))
        results.append(res)
        status |= bool(res.violations)
        print(f"N={N}")
        _print_table(res)
    write_summary(sweep_summary(results), os.path.join(out, "summary.csv"))
    return 1 if status else 0


def cmd_constants(args, cfg, threads):
    from .constants import compute_constants
    from .pipeline import build_basis, setup

    N = args.N if args.N is not None else cfg.N_list[0]
    st = setup(cfg)
    basis = build_basis(st, N, threads)
    const = compute_constants(basis, cfg.theta, cfg.gamma, threads)
    out = _out_dir(args, cfg, "eigbound-out")
    os.makedirs(out, exist_ok=True)
    sys.stdout.write(const.to_csv(os.path.join(out, "constants.csv")))
    if args.save_basis:
        basis.save(os.path.join(out, "basis.npz"))
    return 0


def cmd_reference(args, cfg, threads):
    from .pipeline import compute_reference, setup

    ref = compute_reference(setup(cfg))
    out = _out_dir(args, cfg, "eigbound-out")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "reference.csv"), "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["i", "lambda"])
        for i, lam in enumerate(ref.eigenvalues):
            writer.writerow([i + 1, repr(float(lam))])
            print(f"{i + 1:3d} {lam: .12f}")
    return 0


def _print_table(res):
    hdr = f"{'i':>3} {'lambda_dg':>16} {'err_lambda':>10} {'err_energy':>10} {'eta':>10} {'xi':>10} {'C_eta':>6} {'C_xi':>6}"
    print(hdr)
    fmt = lambda x, w, p: f"{'NA':>{w}}" if x is None else f"{x:{w}.{p}}"
    for r in res.report.rows:
        print(f"{r['i']:3d} {r['lambda_dg']:16.10f} {fmt(r['err_lambda'], 10, '2e')} "
              f"{fmt(r['err_energy'], 10, '2e')} {r['eta']:10.2e} {r['xi']:10.2e} "
              f"{fmt(r['C_eta'], 6, '2f')} {fmt(r['C_xi'], 6, '3f')}")


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "constants": cmd_constants,
            "reference": cmd_reference}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        from .selftest import run_all
        return 0 if run_all() else 1
    from .pipeline import resolve_threads
    try:
        threads = resolve_threads(args.threads)
        cfg = load_config(args.config)
        if getattr(args, "theorem_bounds", False):
            cfg.theorem_bounds = True
        return COMMANDS[args.command](args, cfg, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"eigbound {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

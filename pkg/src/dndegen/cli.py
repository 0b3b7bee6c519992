"""Command-line interface: ``dndegen <subcommand> [--config PATH] [--out DIR] ...``.

Exit codes: 0 success, 2 some sweep points failed, 1 everything failed
(or a usage / input error).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .circle import BoundaryOperator, dn_disk, operator_distance
from .collar import read_report_csv
from .errors import DNDegenError
from .experiments import (
    ExperimentConfig,
    load_config,
    load_or_compute,
    run_point,
    run_sweep,
    with_overrides,
)
from .periods import siegel_matrix
from .plotting import plot_sweep
from .spectral import extract_mu, smoothing_defect
from .theta import EVEN_CHARACTERISTICS, rosenhain, write_theta_report

log = logging.getLogger("dndegen")


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = with_overrides(cfg, out=args.out)
    if args.no_cache:
        cfg = with_overrides(cfg, cache=False)
    return cfg


def _torus_dn(cfg, eps):
    art, hit = load_or_compute(cfg, eps, cfg.cache)
    return BoundaryOperator(art["dn"], cfg.N, "dn"), art, hit


def cmd_forward(args, cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for eps in cfg.eps:
        dn, art, hit = _torus_dn(cfg, eps)
        path = out / f"dn_eps{eps!r}.txt"
        dn.save(path, {"eps": eps, "tau_lat": cfg.tau_lat, "h_target": cfg.h_target,
                       "n_triangles": int(art["n_triangles"]), "modulus": float(art["modulus"])})
        print(f"eps={eps!r} dn_distance={operator_distance(dn, dn_disk(cfg.N)):.6g} "
              f"triangles={int(art['n_triangles'])} cached={hit} -> {path}")
    return 0


def cmd_spectrum(args, cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for eps in cfg.eps:
        try:
            dn, _, _ = _torus_dn(cfg, eps)
            spec = extract_mu(dn)
            spec.save(out / f"spectrum_eps{eps!r}.txt")
            mu = "absent" if not spec.found else f"{spec.mu:.10f}"
            print(f"eps={eps!r} mu={mu} smoothing_defect={smoothing_defect(dn):.3e}")
        except DNDegenError as exc:
            failures += 1
            print(f"eps={eps!r} error: {exc}", file=sys.stderr)
    return _exit(failures, len(cfg.eps))


def cmd_periods(args, cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for key in cfg.points:
        res = run_point(cfg, key, cfg.cache)
        if res.error:
            failures += 1
            print(f"point {key!r} error: {res.error}", file=sys.stderr)
            continue
        pd = res.periods
        pd.save(out / f"periods_{key!r}.txt")
        f = res.report.flags
        print(f"point {key!r}: mu={pd.mu:.8f} Bcal={np.round(pd.Bcal, 6).tolist()} "
              f"gamma={pd.gamma:.6g} delta={pd.delta:.6g} beta={pd.beta:.6g} "
              f"oracle_error={f.get('oracle_error', 'n/a')} normalization_defect={f['normalization_defect']}")
    return _exit(failures, len(cfg.points))


def cmd_theta(args, cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.siegel:
        gamma, delta, beta = args.siegel
        B = siegel_matrix(gamma, delta, beta)
        targets = [("manual", B)]
    else:
        targets = []
        for key in cfg.points:
            res = run_point(cfg, key, cfg.cache)
            if res.error is None:
                targets.append((repr(key), res.siegel))
    for name, B in targets:
        path = out / f"theta_{name}.csv"
        write_theta_report(path, B, EVEN_CHARACTERISTICS)
        try:
            triple = rosenhain(B)
            print(f"{name}: lam1={triple.lam1:.8g} lam2={triple.lam2:.8g} lam3={triple.lam3:.8g} -> {path}")
        except DNDegenError as exc:
            print(f"{name}: {exc} -> {path}")
    return 0 if targets else 1


def cmd_sweep(args, cfg):
    result = run_sweep(cfg, workers=args.workers, use_cache=cfg.cache)
    for r in result.reports:
        status = r.flags.get("error", "ok")
        print(f"eps={r.eps!r} mu={r.mu!r} geo_bound={r.geo_bound!r} case={r.case_label} [{status}]")
    for k, v in result.trends.items():
        print(f"trend {k}: {v}")
    print(f"classification: {result.case_label}")
    print(f"wrote {result.csv_path}" + "".join(f", {p}" for p in result.plots))
    return result.exit_code


def cmd_report(args, cfg):
    out = Path(cfg.out)
    csv_path = out / "report.csv"
    if not csv_path.exists():
        return cmd_sweep(args, cfg)
    reports = read_report_csv(csv_path)
    files = plot_sweep(reports, out, x="eps" if cfg.family == "torus-hole" else "mu")
    for p in files:
        print(f"wrote {p}")
    failed = sum(r.failed for r in reports)
    return _exit(failed, len(reports))


def _exit(failures, total):
    if failures == 0:
        return 0
    return 1 if failures == total else 2


COMMANDS = {
    "forward": (cmd_forward, "assemble DN maps for the configured hole radii"),
    "spectrum": (cmd_spectrum, "extract the discrete eigenvalue mu and eigenfunction eta"),
    "periods": (cmd_periods, "auxiliary period matrix and Siegel matrix per point"),
    "theta": (cmd_theta, "theta constants and Rosenhain invariants"),
    "sweep": (cmd_sweep, "full pipeline over the sweep, CSV report and plots"),
    "report": (cmd_report, "render plots from an existing report.csv (runs the sweep if missing)"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="dndegen", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="key=value experiment configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--no-cache", action="store_true", help="recompute finite-element artifacts")
        p.add_argument("--workers", type=int, default=1, help="parallel sweep points")
        if name == "theta":
            p.add_argument("--siegel", type=float, nargs=3, metavar=("GAMMA", "DELTA", "BETA"),
                           help="evaluate at the symmetric Siegel matrix given by (gamma, delta, beta)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except (OSError, ValueError, DNDegenError) as exc:
        print(f"dndegen: configuration error: {exc}", file=sys.stderr)
        return 1
    if args.command in ("forward", "spectrum") and cfg.family != "torus-hole":
        print(f"dndegen: {args.command} needs family=torus-hole", file=sys.stderr)
        return 1
    handler, _ = COMMANDS[args.command]
    return handler(args, cfg)


if __name__ == "__main__":
    sys.exit(main())

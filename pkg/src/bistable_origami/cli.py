"""Command-line front end.

    bistable-origami optimize <config> [--seed N] [--budget N] [--workers N] [--out DIR]
    bistable-origami landscape <config> --x v1,v2,v3,v4,v5 [--tag NAME]
    bistable-origami compare <config> --designs FILE
    bistable-origami sweep-spring <config> --km K --kv K --kf K

Exit codes: 0 success, 2 config or input error, 3 no feasible point,
4 landscape evaluation failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import mads
from .engine import HiddenFailure, extract_metrics
from .model import DesignError
from .orchestrator import (ConfigError, compare_designs, compare_table,
                           emit_landscape, load_config, metrics_line, run_scenario)
from .spring import SpringModelParams, spring_energy_curve

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_LANDSCAPE = 0, 2, 3, 4

log = logging.getLogger("bistable_origami")


def _vector(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as err:
        raise ConfigError(f"cannot parse design vector {text!r}") from err
    if len(vals) != 5:
        raise ConfigError(f"a design vector needs 5 values, got {len(vals)}")
    return vals


def read_designs(path) -> list[tuple]:
    """One design per line (comma or space separated); blank lines and # comments skipped."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise ConfigError(f"cannot read designs file {path}: {err}") from err
    return [_vector(s) for s in (ln.split("#")[0].strip() for ln in lines) if s]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bistable-origami",
                                description="Bistability optimization of the waterbomb base")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("config", help="key/value config file (may be empty)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--budget", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("optimize", help="run MADS on a scenario"))
    sp = sub.add_parser("landscape", help="evaluate one design")
    common(sp)
    sp.add_argument("--x", required=True, help="th1,th2,th3,omega,h_ratio")
    sp.add_argument("--tag", default="x")
    sp = sub.add_parser("compare", help="evaluate several designs")
    common(sp)
    sp.add_argument("--designs", required=True, help="file with one design per line")
    sp = sub.add_parser("sweep-spring", help="rigid-panel spring model sweep")
    common(sp)
    sp.add_argument("--km", type=float, default=0.0)
    sp.add_argument("--kv", type=float, default=0.0)
    sp.add_argument("--kf", type=float, default=1.0)
    return p


def _optimize(cfg) -> int:
    res = run_scenario(cfg)
    sys.stdout.write(res.files["report"].read_text())
    if res.report.champion is None:
        log.error("no feasible point within the budget")
        return EXIT_INFEASIBLE
    return EXIT_OK


def _landscape(cfg, args) -> int:
    met, land, path = emit_landscape(_vector(args.x), cfg, args.tag)
    print(f"{path}: {metrics_line(met, land.norm_factor)}")
    return EXIT_OK


def _compare(cfg, args) -> int:
    rows = compare_designs(read_designs(args.designs), cfg)
    table = compare_table(rows)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "compare.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(table)
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    for r in table:
        print("  ".join(v.rjust(w) for v, w in zip(r, widths)))
    return EXIT_OK


def _sweep_spring(cfg, args) -> int:
    try:
        p = SpringModelParams(K_M=args.km, K_V=args.kv, K_f=args.kf, geometry=cfg.geometry)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    land = spring_energy_curve(p, cfg.sweep)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "landscape_spring.csv"
    land.to_csv(path)
    print(f"{path}: {metrics_line(extract_metrics(land, cfg.materials), land.norm_factor)}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, budget=args.budget, out_dir=args.out,
                          workers=args.workers)
        if args.verb == "optimize":
            return _optimize(cfg)
        if args.verb == "landscape":
            return _landscape(cfg, args)
        if args.verb == "compare":
            return _compare(cfg, args)
        return _sweep_spring(cfg, args)
    except (ConfigError, DesignError) as err:
        log.error("%s", err)
        return EXIT_CONFIG
    except mads.NoFeasiblePoint as err:
        log.error("%s", err)
        return EXIT_INFEASIBLE
    except HiddenFailure as err:
        where = f" at delta={err.delta:.4g} mm" if getattr(err, "delta", None) is not None else ""
        log.error("landscape evaluation failed%s: %s", where, err)
        return EXIT_LANDSCAPE


if __name__ == "__main__":
    sys.exit(main())

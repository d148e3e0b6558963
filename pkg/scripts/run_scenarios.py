"""Run optimization scenarios a-e and print a one-line summary per scenario."""
import argparse
import time
from pathlib import Path

from bistable_origami.orchestrator import SCENARIOS, ScenarioConfig, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenarios", default="abcde")
    ap.add_argument("--budget", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=0)
    ap.add_argument("--out", default="out")
    args = ap.parse_args()
    for name in args.scenarios:
        if name not in SCENARIOS:
            ap.error(f"unknown scenario {name!r}")
        cfg = ScenarioConfig.preset(name, budget=args.budget, seed=args.seed,
                                    workers=args.workers, out_dir=str(Path(args.out) / name))
        t0 = time.perf_counter()
        res = run_scenario(cfg)
        c = res.report.champion
        best = "no feasible point" if c is None else \
            f"phi={c.phi:.4f} sigma_ratio={c.extras['sigma_ratio']:.3f} x={tuple(round(v, 4) for v in c.x)}"
        print(f"{name}: phi(x0)={res.phi0:.4f} -> {best}; {res.report.counts}; "
              f"{time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()

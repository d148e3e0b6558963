"""Exhaustive 4^5 grid over the default box; writes grid.csv and prints the best phi."""
import argparse
import csv
import time

from bistable_origami.mads import Status
from bistable_origami.orchestrator import ScenarioConfig, grid_search


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=4)
    ap.add_argument("--scenario", default="a")
    ap.add_argument("--out", default="grid.csv")
    ap.add_argument("--workers", type=int, default=0)
    args = ap.parse_args()
    cfg = ScenarioConfig.preset(args.scenario, workers=args.workers)
    t0 = time.perf_counter()
    res = grid_search(cfg, args.points)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["th1", "th2", "th3", "omega", "h_ratio", "status", "phi", "sigma_ratio"])
        for r in res:
            w.writerow([*r.x, r.status.value, "" if r.phi is None else r.phi,
                        r.extras.get("sigma_ratio", "")])
    ok = [r for r in res if r.status is Status.VALID]
    best = max(ok, key=lambda r: r.phi) if ok else None
    print(f"{len(res)} points in {time.perf_counter() - t0:.1f} s; "
          + ", ".join(f"{s.value}={sum(r.status is s for r in res)}" for s in Status))
    print("best feasible:", "none" if best is None else f"phi={best.phi:.6f} at {best.x}")


if __name__ == "__main__":
    main()

"""Energy curves of the rigid-panel spring model for a few fold stiffness pairs."""
import argparse
from pathlib import Path

from bistable_origami.engine import extract_metrics
from bistable_origami.model import MaterialPair
from bistable_origami.spring import SpringModelParams, spring_energy_curve

CASES = {"free": (0.0, 0.0), "equal": (1.0, 1.0), "double": (2.0, 1.0)}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/spring")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for tag, (km, kv) in CASES.items():
        land = spring_energy_curve(SpringModelParams(K_M=km, K_V=kv))
        land.to_csv(out / f"landscape_{tag}.csv")
        met = extract_metrics(land, MaterialPair())
        print(f"{tag:7s} K_M={km} K_V={kv}: U_max={met.U_max:.4g} U_state2={met.U_state2:.4g} "
              f"phi={met.phi:.4f} delta_state2={met.delta_state2:.2f} mm")


if __name__ == "__main__":
    main()

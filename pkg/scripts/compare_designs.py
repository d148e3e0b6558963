"""Metrics of the three reference designs on the surrogate."""
from bistable_origami.model import DESIGN_I, DESIGN_II, DESIGN_III
from bistable_origami.orchestrator import ScenarioConfig, compare_designs, compare_table


def main():
    rows = compare_table(compare_designs([DESIGN_I, DESIGN_II, DESIGN_III], ScenarioConfig()))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for tag, r in zip(["", "I", "II", "III"], rows):
        print(tag.rjust(3), "  ".join(v.rjust(w) for v, w in zip(r, widths)))


if __name__ == "__main__":
    main()

"""Mean volatility and explosive-run fraction against hierarchy strength b.

Full protocol: 50 trials of 8e4 steps per cell. Use ``--trials 10 --steps 20000``
for a desk-scale pass.
"""

from _common import parser, show, write_rows

from hiermarket.harness import parse_config, run_experiment

B_VALUES = [0.0, 0.1, 0.25, 0.5, 1.0, 2.0]


def main():
    args = parser(__doc__, trials=50, steps=80_000).parse_args()
    rows = []
    for name in ("SET_II", "SET_III", "SET_IV"):
        cfg = parse_config({"preset": name, "steps": args.steps, "trials": args.trials,
                            "master_seed": args.seed, "sweep": {"param": "b", "values": B_VALUES}})
        for g in run_experiment(cfg, workers=args.workers).groups:
            rows.append({"preset": name, "b": g["sweep_value"],
                         "volatility_x100": 100 * g["volatility_mean"],
                         "explosive_fraction": g["explosive_fraction"]})
    show(rows)
    write_rows(f"{args.out}/hierarchy_strength.csv", rows)


if __name__ == "__main__":
    main()

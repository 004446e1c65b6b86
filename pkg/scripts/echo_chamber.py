"""Fundamental deviation F_sigma under asymmetric and symmetric echo chambers."""

from _common import parser, show, write_rows

from hiermarket.harness import parse_config, run_experiment

B_VALUES = [0.0, 0.5, 1.0, 2.0]


def main():
    p = parser(__doc__, trials=20, steps=20_000)
    p.add_argument("--E", type=float, default=2.0)
    args = p.parse_args()
    rows = []
    for mode in ("off", "asymmetric", "symmetric"):
        cfg = parse_config({"preset": "SET_II", "steps": args.steps, "trials": args.trials,
                            "master_seed": args.seed, "sweep": {"param": "b", "values": B_VALUES},
                            "scenario": {"echo": {"mode": mode, "E": args.E}}})
        for g in run_experiment(cfg, workers=args.workers).groups:
            rows.append({"mode": mode, "b": g["sweep_value"], "f_sigma": g["f_sigma_mean"],
                         "volatility": g["volatility_mean"], "explosive_fraction": g["explosive_fraction"]})
    show(rows)
    write_rows(f"{args.out}/echo_chamber.csv", rows)


if __name__ == "__main__":
    main()

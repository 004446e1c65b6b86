"""Volatility and explosiveness against network efficiency phi (SET_IV)."""

from _common import parser, show, write_rows

from hiermarket.harness import parse_config, run_experiment

PHI = [0.1, 0.25, 0.5, 1.0, 2.0, 5.0]


def main():
    args = parser(__doc__, trials=20, steps=20_000).parse_args()
    cfg = parse_config({"preset": "SET_IV", "steps": args.steps, "trials": args.trials,
                        "master_seed": args.seed, "sweep": {"param": "phi", "values": PHI}})
    rows = [{"phi": g["sweep_value"], "volatility": g["volatility_mean"],
             "explosive_fraction": g["explosive_fraction"], "f_sigma": g["f_sigma_mean"]}
            for g in run_experiment(cfg, workers=args.workers).groups]
    show(rows)
    write_rows(f"{args.out}/phi_sweep.csv", rows)


if __name__ == "__main__":
    main()

"""Pump-and-dump success rates by market class, target level and signal strength."""

from _common import parser, show, write_rows

from hiermarket.harness import parse_config, run_experiment

MARKETS = {
    "baseline": {},
    "susceptible": {"s": 0.1, "t_c": 0.05, "gamma": 0.005},
    "resilient": {"s": 1.0, "t_c": 0.005, "gamma": 0.05},
}
TARGETS = {"root": 0, "level1": 1, "level2": 6}


def main():
    p = parser(__doc__, trials=20, steps=2_000)
    p.add_argument("--T0", type=int, default=200)
    p.add_argument("--T1", type=int, default=1_200)
    p.add_argument("--S", type=float, nargs="+", default=[0.0, 2.0, 5.0])
    args = p.parse_args()
    rows = []
    for market, overrides in MARKETS.items():
        for tname, target in TARGETS.items():
            for S in args.S:
                cfg = parse_config({
                    "preset": "SET_II", "steps": args.steps, "trials": args.trials,
                    "master_seed": args.seed, "model": overrides,
                    "scenario": {"pnd": {"target": target, "T0": args.T0, "T1": args.T1, "S": S}},
                })
                g = run_experiment(cfg, workers=args.workers).groups[0]
                rows.append({"market": market, "target": tname, "S": S,
                             "success_rate": g["pnd_success_rate"], "max_price": g["max_price_mean"]})
    show(rows)
    write_rows(f"{args.out}/pump_and_dump.csv", rows)


if __name__ == "__main__":
    main()

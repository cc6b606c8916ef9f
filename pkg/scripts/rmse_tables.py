"""Run Monte-Carlo RMSE studies from config files and print one table row per config.

    python scripts/rmse_tables.py scripts/configs/table1-*.toml --out-dir results/table1
    python scripts/rmse_tables.py scripts/configs/tableS1-*.toml --replicates 100
"""
import argparse
import time

from degpd.simstudy import StudyConfig, read_config_dict, run_study


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--replicates", type=int, help="override n_replicates in every config")
    ap.add_argument("--seed", type=int, help="override the master seed")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out-dir", help="write <name>_estimates.csv and <name>_summary.json here")
    args = ap.parse_args()

    for path in args.configs:
        d = read_config_dict(path)
        if args.replicates is not None:
            d["n_replicates"] = args.replicates
        if args.seed is not None:
            d["seed"] = args.seed
        cfg = StudyConfig.from_dict(d)
        t0 = time.perf_counter()
        res = run_study(cfg, jobs=args.jobs)
        elapsed = time.perf_counter() - t0
        truth = "  ".join(f"{p}={v:g}" for p, v in cfg.truth.items())
        rmse = "  ".join(f"{p}:{v:.4g}" for p, v in res.rmse.items())
        print(f"{cfg.name:<18} {cfg.family:<9} {truth}")
        print(f"{'':<18} RMSE      {rmse}   failed={res.n_failed}  ({elapsed:.0f}s)")
        if args.out_dir:
            res.write(args.out_dir)


if __name__ == "__main__":
    main()

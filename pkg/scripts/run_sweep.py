"""Run the solar-noise sweep and print mean cost +- 95% half-width per level.

    python scripts/run_sweep.py configs/sweep.toml
"""

import argparse
import csv
import sys
import time
from collections import defaultdict
from pathlib import Path

from microgrid_bench.cli import EXIT_OK, main, read_config, run_dir

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--output")
    args = ap.parse_args()

    tic = time.perf_counter()
    code = main(["-v", "sweep", "--config", args.config, *(["--output", args.output] if args.output else [])])
    if code != EXIT_OK:
        sys.exit(f"sweep failed (exit {code})")
    cfg = read_config(args.config)
    out = run_dir(cfg) if args.output is None else Path(args.output) / cfg.run_name
    table = defaultdict(dict)
    with open(out / "sweep.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            table[float(r["sigma_T"])][r["policy"]] = (float(r["mean_cost"]), float(r["ci"]))
    policies = list(next(iter(table.values())))
    print(f"\n{'sigma_T':>8}" + "".join(f"{p:>22}" for p in policies))
    for sigma, row in sorted(table.items()):
        print(f"{sigma:>8.2f}" + "".join(f"{row[p][0]:>13.4f} +- {row[p][1]:<6.4f}" for p in policies))
    print(f"\n{time.perf_counter() - tic:.0f} s")

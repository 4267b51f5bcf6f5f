"""Generate, train and assess on each day preset, then print one summary table.

    python scripts/run_benchmark.py configs/winter.toml configs/spring.toml configs/summer.toml
"""

import argparse
import csv
import sys
from pathlib import Path

from microgrid_bench.cli import EXIT_OK, main, read_config, run_dir


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(config: str, output: str | None) -> Path:
    extra = ["--output", output] if output else []
    for cmd in ("generate", "train", "assess"):
        code = main([cmd, "--config", config, *extra])
        if code != EXIT_OK:
            sys.exit(f"{cmd} failed on {config} (exit {code})")
    cfg = read_config(config)
    return run_dir(cfg) if output is None else Path(output) / cfg.run_name


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--output", help="output root for every run")
    args = ap.parse_args()

    summary = []
    for config in args.configs:
        out = run(config, args.output)
        beats = {(r["policy_a"], r["policy_b"]): float(r["beat_fraction"]) for r in read_rows(out / "pairwise.csv")}
        for r in read_rows(out / "report.csv"):
            summary.append((out.name, r["policy"], float(r["mean_cost"]), float(r["ci"]), int(r["unserved_events"])))
        if ("sddp", "mpc") in beats:
            print(f"{out.name}: SDDP cheaper than MPC on {100 * beats['sddp', 'mpc']:.1f}% of scenarios")

    print(f"\n{'run':<10}{'policy':<12}{'mean':>10}{'ci':>10}{'unserved':>10}")
    for name, policy, mean, ci, events in summary:
        print(f"{name:<10}{policy:<12}{mean:>10.3f}{ci:>10.3f}{events:>10d}")

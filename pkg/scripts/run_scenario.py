#!/usr/bin/env python3
"""Paired with/without-transfer runs on a synthetic scenario, summarised against the acceptance thresholds.

    python scripts/run_scenario.py similar-pair --seeds 0-4 --work runs/scenarios
"""

import argparse
import json
import time
from pathlib import Path

from relbot.experiment import run_scenario, summarize
from relbot.synth import SCENARIOS


def seed_range(text: str) -> list[int]:
    if "-" in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",")]


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--seeds", type=seed_range, default=list(range(5)), help="e.g. 0-4 or 1,3,7")
    p.add_argument("--work", type=Path, default=Path("runs/scenarios"))
    p.add_argument("--rows", type=int, default=2400)
    p.add_argument("--processes", type=int, default=1)
    p.add_argument("--json", type=Path, help="also write the full summary here")
    args = p.parse_args()

    t0 = time.perf_counter()
    results = run_scenario(args.scenario, args.seeds, args.work, args.rows, args.processes)
    elapsed = time.perf_counter() - t0
    for r in results:
        print(r.row())
    s = summarize(results)
    print(f"transfer not slower: {s['transfer_not_slower']}/{s['seeds']}")
    print(f"median duration factor: {s['median_duration_factor']:.3f}")
    print(f"median warm-up variance factor: {s['median_warmup_var_factor']:.3f}")
    print(f"arms within 2*delta of the optimum: {s['converged_arms']}/{2 * s['seeds']}")
    print(f"elapsed: {elapsed:.1f} s")
    if args.json:
        args.json.write_text(json.dumps(s | {"elapsed_s": elapsed}, indent=2, default=float) + "\n")


if __name__ == "__main__":
    main()

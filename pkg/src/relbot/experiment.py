"""Paired with/without-transfer runs on synthetic scenarios, driven through the CLI pipeline.

Per seed: write the synthetic pair, train the target's emulator and the
donor's transfer model, run both arms, and read back their metrics.
"""

from __future__ import annotations

import contextlib
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cli import main
from .errors import RelbotError
from .metrics import improvement_factor


@dataclass
class ArmResult:
    warmup_duration: int
    warmup_variance: float
    mean_variance: float
    final_setpoint_mean: float


@dataclass
class SeedResult:
    scenario: str
    seed: int
    optimum: float
    setpoint_delta: float
    solo: ArmResult
    transfer: ArmResult

    @property
    def duration_factor(self) -> float:
        return improvement_factor(self.solo.warmup_duration, self.transfer.warmup_duration)

    @property
    def warmup_var_factor(self) -> float:
        return improvement_factor(self.solo.warmup_variance, self.transfer.warmup_variance)

    def converged(self, arm: ArmResult) -> bool:
        return abs(arm.final_setpoint_mean - self.optimum) <= 2 * self.setpoint_delta

    def row(self) -> str:
        s, t = self.solo, self.transfer
        return (f"{self.scenario} seed {self.seed}: optimum {self.optimum:.2f} | "
                f"solo dur {s.warmup_duration} var {s.warmup_variance:.4f} sp {s.final_setpoint_mean:.2f} | "
                f"transfer dur {t.warmup_duration} var {t.warmup_variance:.4f} sp {t.final_setpoint_mean:.2f} | "
                f"factors {self.duration_factor:.2f} / {self.warmup_var_factor:.2f}")


def _cli(*argv: str) -> None:
    with contextlib.redirect_stdout(io.StringIO()):
        code = main(list(argv))
    if code != 0:
        raise RelbotError(f"`relbot {' '.join(argv)}` exited with {code}")


def _arm(path: Path) -> ArmResult:
    doc = json.loads(path.read_text(encoding="utf-8"))
    return ArmResult(int(doc["warmup_duration"]), float(doc["warmup_variance"]), float(doc["mean_variance"]),
                     float(doc["final_setpoint_mean"]))


def run_seed(scenario: str, seed: int, workdir: str | Path, rows: int = 2400) -> SeedResult:
    root = Path(workdir) / f"{scenario}-{seed}"
    _cli("synth", "--scenario", scenario, "--seed", str(seed), "--rows", str(rows), "--out", str(root))
    cfg = str(root / "config.json")
    _cli("train-bdne", "--config", cfg, "--building", "target")
    _cli("train-transfer", "--config", cfg, "--building", "donor")
    _cli("run", "--config", cfg, "--target", "target", "--transfer", "donor")
    _cli("run", "--config", cfg, "--target", "target", "--no-transfer")
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    delta = json.loads((root / "config.json").read_text(encoding="utf-8"))["agent"]["setpoint_delta"]
    runs = root / "runs"
    return SeedResult(scenario, seed, float(manifest["true_optimum"]["target"]), float(delta),
                      _arm(runs / "target-solo" / str(seed) / "metrics.json"),
                      _arm(runs / "target-donor" / str(seed) / "metrics.json"))


def run_scenario(scenario: str, seeds: Sequence[int], workdir: str | Path, rows: int = 2400,
                 processes: int = 1) -> list[SeedResult]:
    """Seeds run independently; with ``processes > 1`` they run in a process pool."""
    if processes > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(processes) as ex:
            futs = [ex.submit(run_seed, scenario, s, workdir, rows) for s in seeds]
            return [f.result() for f in futs]
    return [run_seed(scenario, s, workdir, rows) for s in seeds]


def summarize(results: Sequence[SeedResult]) -> dict:
    return {
        "seeds": len(results),
        "transfer_not_slower": sum(r.transfer.warmup_duration <= r.solo.warmup_duration for r in results),
        "median_duration_factor": float(np.median([r.duration_factor for r in results])),
        "median_warmup_var_factor": float(np.median([r.warmup_var_factor for r in results])),
        "converged_arms": sum(r.converged(a) for r in results for a in (r.solo, r.transfer)),
        "per_seed": [asdict(r) | {"duration_factor": r.duration_factor, "warmup_var_factor": r.warmup_var_factor}
                     for r in results],
    }

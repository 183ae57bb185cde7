"""Synthetic building pairs with a known COP-optimal set point.

Each building is driven by a shared weather latent. The chiller's true COP is
a concave parabola in the chilled-water set point around a building-specific
optimum, and the sensor channels are generated so that the COP equation
evaluated on them reproduces that COP (up to sensor noise).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .data import ColumnRoleMap

SCENARIOS = ("similar-pair", "dissimilar-pair")
C_W = 4.186  # kJ/(kg K): with kW energy and m3/s flow the COP is dimensionless
RHO_W = 1000.0
FLOW = 0.02  # m3/s at full pump speed

# Agent settings the scenarios are tuned for. Set-point bounds follow the
# range the generated histories cover; outside it the emulator extrapolates.
SCENARIO_AGENT = {
    "setpoint_delta": 0.5,
    "setpoint_min": 6.0,
    "setpoint_max": 13.0,
    "init_gain": 4.0,
    "output_scale": 10.0,
    "exploration": 0.1,
    "replay_size": 2000,
    "transfer_train": "core",
    "transfer_epochs": 300,
    "transfer_learning_rate": 20.0,
    "train": {"learning_rate": 0.02, "epochs_per_step": 3},
}

BASE_ROLES = dict(timestamp_col="timestamp", setpoint_col="chw_setpoint", t_in_col="chw_return_temp",
                  t_out_col="chw_supply_temp", pump_speed_col="chw_pump_speed", energy_col="chiller_kw")


@dataclass
class BuildingParams:
    building_id: str
    optimum: float
    cop_peak: float = 5.5
    curvature: float = 0.12
    load_kw: float = 450.0
    climate_offset: float = 0.0
    setpoint_floor: float = 6.0
    setpoint_shape: float = 2.0
    setpoint_scale: float = 1.1
    noise: float = 1.0
    extra_channels: int = 0


@dataclass
class SynthPair:
    scenario: str
    seed: int
    target: BuildingParams
    transfer: BuildingParams
    rows: int = 2400
    files: dict = field(default_factory=dict)


def pair_params(scenario: str, seed: int) -> tuple[BuildingParams, BuildingParams]:
    rng = np.random.default_rng([seed, 17])
    tgt_opt = 8.5 + rng.uniform(-0.5, 0.5)
    target = BuildingParams("target", optimum=round(tgt_opt, 3), load_kw=450.0 + rng.uniform(-30, 30))
    if scenario == "similar-pair":
        transfer = BuildingParams("donor", optimum=round(tgt_opt + rng.uniform(-0.3, 0.3), 3),
                                  load_kw=target.load_kw * rng.uniform(0.9, 1.1),
                                  cop_peak=5.5 + rng.uniform(-0.2, 0.2))
    elif scenario == "dissimilar-pair":
        transfer = BuildingParams("donor", optimum=round(tgt_opt + rng.choice([-1.0, 1.0]) * rng.uniform(2.0, 2.5), 3),
                                  load_kw=target.load_kw * rng.uniform(2.5, 3.0), cop_peak=4.0,
                                  curvature=0.05, climate_offset=9.0, setpoint_floor=4.0,
                                  setpoint_shape=6.0, setpoint_scale=0.9, extra_channels=7)
    else:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    return target, transfer


def _weather(rows: int, rng) -> np.ndarray:
    h = np.arange(rows)
    diurnal = 4.5 * np.sin(2 * np.pi * (h - 9) / 24)
    seasonal = 2.5 * np.sin(2 * np.pi * h / (24 * 37) + 0.6)
    ar = np.zeros(rows)
    eps = rng.normal(0, 0.35, rows)
    for t in range(1, rows):
        ar[t] = 0.95 * ar[t - 1] + eps[t]
    return 23.0 + diurnal + seasonal + ar


def _setpoint_history(rows: int, p: BuildingParams, rng) -> np.ndarray:
    """Operator-held set points: gamma-distributed levels held for a few hours, 0.25 degC grid."""
    out = np.empty(rows)
    t = 0
    while t < rows:
        level = p.setpoint_floor + rng.gamma(p.setpoint_shape, p.setpoint_scale)
        level = min(round(level * 4) / 4, 13.0)
        hold = int(rng.integers(2, 10))
        out[t:t + hold] = level
        t += hold
    return out


def generate_building(p: BuildingParams, weather: np.ndarray, rng, rows: int) -> tuple[list[str], np.ndarray]:
    oat = weather[:rows] + p.climate_offset + rng.normal(0, 0.2 * p.noise, rows)
    humidity = np.clip(62.0 - 1.6 * (oat - 23.0 - p.climate_offset) + rng.normal(0, 2.0, rows), 15, 100)
    sp = _setpoint_history(rows, p, rng)
    load = p.load_kw * np.clip(0.5 + 0.045 * (oat - p.climate_offset - 20.0), 0.15, None)
    load *= 1.0 + rng.normal(0, 0.02 * p.noise, rows)
    cop_true = p.cop_peak - p.curvature * (sp - p.optimum) ** 2
    pump = np.clip(0.3 + 0.55 * load / (1.3 * p.load_kw), 0.2, 1.0)
    t_out = sp + 0.2 + rng.normal(0, 0.03 * p.noise, rows)
    delta_t = load / (C_W * RHO_W * FLOW * pump)
    t_in = t_out + delta_t + rng.normal(0, 0.03 * p.noise, rows)
    energy = load / cop_true * (1.0 + rng.normal(0, 0.005 * p.noise, rows))
    cols = {"outdoor_temp": oat, "humidity": humidity, "chw_setpoint": sp, "chw_return_temp": t_in,
            "chw_supply_temp": t_out, "chw_pump_speed": pump, "chiller_kw": energy}
    for k in range(p.extra_channels):
        # auxiliary plant sensors of a richer donor: condenser loop, tower fans, AHU supply temps
        cols[f"aux_{k}"] = 30.0 + 3 * k + 0.4 * (oat - p.climate_offset) + rng.gamma(1.5, 1.0, rows)
    return list(cols), np.column_stack(list(cols.values()))


def roles_for(names: list[str]) -> ColumnRoleMap:
    exo = tuple(n for n in names if n in ("outdoor_temp", "humidity") or n.startswith("aux_"))
    return ColumnRoleMap(**BASE_ROLES, exogenous_cols=exo)


def write_building_csv(path: Path, names: list[str], values: np.ndarray, start: datetime) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *names])
        for t, row in enumerate(values):
            w.writerow([(start + timedelta(hours=t)).isoformat(), *(f"{v:.6f}" for v in row)])


def synth_pair(scenario: str, seed: int, out_dir: str | Path, rows: int = 2400) -> SynthPair:
    """Write ``target.csv``, ``donor.csv``, ``manifest.json`` and a ready-to-run ``config.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target, transfer = pair_params(scenario, seed)
    weather = _weather(rows, np.random.default_rng([seed, 1]))
    pair = SynthPair(scenario, seed, target, transfer, rows)
    start = datetime(2021, 6, 1)
    buildings = []
    for k, p in enumerate((target, transfer)):
        names, values = generate_building(p, weather, np.random.default_rng([seed, 2, k]), rows)
        path = out / f"{p.building_id}.csv"
        write_building_csv(path, names, values, start)
        pair.files[p.building_id] = path.name
        buildings.append({"id": p.building_id, "source": path.name, "roles": roles_for(names).to_dict(),
                          "c_w": C_W, "rho_w": RHO_W, "flow_factor": FLOW})
    manifest = {"scenario": scenario, "seed": seed, "rows": rows,
                "buildings": {p.building_id: asdict(p) for p in (target, transfer)},
                "true_optimum": {p.building_id: p.optimum for p in (target, transfer)}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    config = {"seed": seed, "output_dir": "runs", "buildings": buildings, "agent": SCENARIO_AGENT,
              "pairs": [{"target": target.building_id, "transfer": transfer.building_id}]}
    (out / "config.json").write_text(json.dumps(config, indent=2), encoding="utf-8")
    return pair

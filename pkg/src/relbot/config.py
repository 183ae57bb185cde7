"""JSON run configuration: building registry, agent/emulator settings, output layout."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .agent import AgentConfig, CopConstants
from .bdne import EmulatorConfig
from .data import BuildingTimeSeries, ColumnRoleMap, impute, load_csv
from .errors import ConfigError
from .neural import TrainConfig


@dataclass(frozen=True)
class BuildingEntry:
    id: str
    source: Path
    roles: ColumnRoleMap
    c_w: float = 4186.0
    rho_w: float = 1000.0
    flow_factor: float = 1.0

    def constants(self, energy_floor: float = 0.05) -> CopConstants:
        return CopConstants(self.c_w, self.rho_w, self.flow_factor, energy_floor)

    def load(self) -> BuildingTimeSeries:
        return impute(load_csv(self.source, self.roles))


@dataclass
class GlobalConfig:
    buildings: dict[str, BuildingEntry]
    agent: AgentConfig = field(default_factory=AgentConfig)
    emulator: EmulatorConfig = field(default_factory=EmulatorConfig)
    window: int = 24
    output_dir: Path = Path("runs")
    seed: int = 0
    pairs: list[tuple[str, str]] = field(default_factory=list)  # (target, transfer) for batch scripts
    path: Path | None = None

    def building(self, building_id: str) -> BuildingEntry:
        try:
            return self.buildings[building_id]
        except KeyError:
            known = ", ".join(sorted(self.buildings)) or "none"
            raise ConfigError(f"unknown building id {building_id!r} (configured: {known})") from None

    # output layout
    def transfer_path(self, building_id: str, seed: int) -> Path:
        return self.output_dir / "transfer" / str(seed) / f"{building_id}.relnet.json"

    def bdne_dir(self, building_id: str) -> Path:
        return self.output_dir / "bdne" / building_id

    def run_dir(self, target: str, transfer: str | None, seed: int) -> Path:
        return self.output_dir / f"{target}-{transfer or 'solo'}" / str(seed)


def _from_mapping(cls, data: Mapping[str, Any], where: str, nested: Mapping[str, type] | None = None):
    """Build a dataclass from a mapping, rejecting unknown keys."""
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = dict(data)
    for key, sub in (nested or {}).items():
        if key in kwargs:
            kwargs[key] = _from_mapping(sub, kwargs[key], f"{where}.{key}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(doc: Mapping[str, Any], base: Path | None = None) -> GlobalConfig:
    """Validate a config document; relative paths resolve against ``base``."""
    base = Path(base) if base is not None else Path.cwd()
    if not isinstance(doc, Mapping):
        raise ConfigError("config root must be an object")
    entries = doc.get("buildings")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("config needs a non-empty 'buildings' list")
    buildings: dict[str, BuildingEntry] = {}
    for k, b in enumerate(entries):
        if not isinstance(b, Mapping):
            raise ConfigError(f"buildings[{k}] must be an object")
        try:
            bid, source, roles = str(b["id"]), b["source"], b["roles"]
        except KeyError as exc:
            raise ConfigError(f"buildings[{k}] is missing {exc.args[0]!r}") from None
        if bid in buildings:
            raise ConfigError(f"duplicate building id {bid!r}")
        extra = sorted(set(b) - {"id", "source", "roles", "c_w", "rho_w", "flow_factor"})
        if extra:
            raise ConfigError(f"buildings[{k}]: unknown keys {extra}")
        consts = {key: float(b[key]) for key in ("c_w", "rho_w", "flow_factor") if key in b}
        if any(v <= 0 for v in consts.values()):
            raise ConfigError(f"building {bid!r}: constants must be positive")
        buildings[bid] = BuildingEntry(bid, base / source, ColumnRoleMap.from_dict(roles), **consts)

    agent = _from_mapping(AgentConfig, doc.get("agent", {}), "agent", {"train": TrainConfig})
    emulator = _from_mapping(EmulatorConfig, doc.get("emulator", {}), "emulator", {"train": TrainConfig})
    metrics = doc.get("metrics", {})
    window = int(metrics.get("window", 24)) if isinstance(metrics, Mapping) else 24
    if window < 2:
        raise ConfigError(f"metrics.window must be >= 2, got {window}")
    pairs = []
    for p in doc.get("pairs", []):
        try:
            pairs.append((str(p["target"]), str(p["transfer"])))
        except (KeyError, TypeError):
            raise ConfigError(f"pairs entries need 'target' and 'transfer', got {p!r}") from None
    for t, s in pairs:
        for bid in (t, s):
            if bid not in buildings:
                raise ConfigError(f"pair references unknown building id {bid!r}")
    unknown = sorted(set(doc) - {"buildings", "agent", "emulator", "metrics", "output_dir", "seed", "pairs"})
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    return GlobalConfig(buildings, agent, emulator, window, base / doc.get("output_dir", "runs"),
                        int(doc.get("seed", 0)), pairs)


def load_config(path: str | Path) -> GlobalConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    cfg = parse_config(doc, path.parent)
    cfg.path = path
    return cfg

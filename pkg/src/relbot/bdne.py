"""Building Data Neural Emulator.

One regression net per COP factor predicts the factor at step t from the
building state at t-1 with the newly applied set point (and the current
exogenous readings) substituted in. The
emulator applies a set-point action to a state record by overwriting the
factor columns with those predictions; every other column passes through.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import BuildingTimeSeries, ColumnRoleMap
from .errors import ContractError, FormatError, InputError, TrainingError
from .neural import SegmentedNet, TrainConfig, batch_loss, forward, init_plain_net, load_net, save_net, sgd_update

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


@dataclass
class EmulatorConfig:
    train: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.3, minibatch_size=32))
    max_epochs: int = 400
    patience: int = 20
    tolerance: float = 1e-5
    energy_floor: float = 0.05
    holdout_fraction: float = 0.2


@dataclass
class EmulatorBundle:
    models: dict[str, SegmentedNet]
    feature_order: tuple[str, ...]
    roles: ColumnRoleMap
    building_id: str = ""
    flow_factor: float | None = None  # used when no flow-factor column is sensed
    energy_floor: float = 0.05
    holdout_mse: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.feature_order = tuple(self.feature_order)
        self._factor_idx = {f: self.feature_order.index(c) for f, c in self.roles.factor_roles.items()}
        self._sp_idx = self.feature_order.index(self.roles.setpoint_col)
        missing = set(self._factor_idx) - set(self.models)
        if missing:
            raise ContractError(f"emulator bundle lacks models for {sorted(missing)}")

    @property
    def factor_columns(self) -> dict[str, str]:
        return self.roles.factor_roles


def transition_pairs(series: BuildingTimeSeries) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Decision-time inputs and next-step factor targets.

    Input t is row t-1 with the set point and the exogenous columns taken from
    row t (both are known when the action is applied); targets are the factor
    values at row t.
    """
    if len(series) < 2:
        raise InputError("need at least 2 rows to form a transition")
    if series.has_missing:
        raise InputError("series has missing values; impute first")
    V = series.values
    sp = series.index(series.roles.setpoint_col)
    X = np.array(V[:-1])
    swap = [sp] + [series.index(c) for c in series.roles.exogenous_cols]
    X[:, swap] = V[1:, swap]
    Y = {f: np.array(V[1:, series.index(c)]) for f, c in series.roles.factor_roles.items()}
    return X, Y


def _scaling(a: np.ndarray):
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def fit_regressor(net: SegmentedNet, X: np.ndarray, y: np.ndarray, cfg: EmulatorConfig, seed: int) -> float:
    """Epoch-wise minibatch SGD until the best loss improves by less than ``tolerance`` (relative) over
    ``patience`` epochs. The net is left at its lowest-loss epoch; that loss is returned."""
    rng = np.random.default_rng(seed)
    Y = y.reshape(-1, 1)
    lr, bs = cfg.train.learning_rate, cfg.train.minibatch_size
    history = [batch_loss(net, X, Y)]
    best = (history[0], [(l.weights.copy(), l.bias.copy()) for l in net.layers])
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(X))
        for lo in range(0, len(X), bs):
            idx = order[lo:lo + bs]
            sgd_update(net, X[idx], Y[idx], lr)
        loss = batch_loss(net, X, Y)
        if not math.isfinite(loss):
            raise TrainingError(f"emulator training diverged at epoch {epoch}")
        history.append(loss)
        if loss < best[0]:
            best = (loss, [(l.weights.copy(), l.bias.copy()) for l in net.layers])
        if len(history) > cfg.patience:
            # SGD epoch losses are noisy: compare best-so-far across the patience window
            before = min(history[:-cfg.patience])
            recent = min(history[-cfg.patience:])
            if before <= 0 or (before - recent) / before < cfg.tolerance:
                break
    # the last epoch is one noisy SGD sample; keep the best one seen
    for layer, (w, b) in zip(net.layers, best[1]):
        layer.weights, layer.bias = w, b
    return best[0]


def train_bdne(series: BuildingTimeSeries, cfg: EmulatorConfig | None = None, building_id: str = "",
               flow_factor: float = 1.0) -> EmulatorBundle:
    cfg = cfg or EmulatorConfig()
    if len(series) < 100:
        log.warning("training emulator on only %d rows", len(series))
    X, targets = transition_pairs(series)
    n_train = max(1, int(round(len(X) * (1 - cfg.holdout_fraction))))
    x_mean, x_scale = _scaling(X[:n_train])
    models, holdout = {}, {}
    for k, (factor, y) in enumerate(targets.items()):
        net = init_plain_net(X.shape[1], seed=cfg.train.seed + k)
        net.set_input_scaling(x_mean, x_scale)
        ym, ys = _scaling(y[:n_train])
        net.y_mean, net.y_scale = float(ym), float(ys)
        fit_regressor(net, X[:n_train], y[:n_train], cfg, seed=cfg.train.seed + 100 + k)
        if n_train < len(X):
            pred = forward(net, X[n_train:])[:, 0]
            holdout[factor] = float(np.mean((pred - y[n_train:]) ** 2))
        net.meta = {"factor": factor, "column": series.roles.factor_roles[factor]}
        models[factor] = net
    return EmulatorBundle(models, series.feature_order, series.roles, building_id,
                          None if series.roles.flow_factor_col else flow_factor,
                          cfg.energy_floor, holdout)


def _as_vector(bundle: EmulatorBundle, state) -> np.ndarray:
    if isinstance(state, Mapping):
        try:
            return np.array([float(state[c]) for c in bundle.feature_order])
        except KeyError as exc:
            raise ContractError(f"state record lacks column {exc.args[0]!r}") from None
    v = np.array(state, dtype=float)
    if v.shape != (len(bundle.feature_order),):
        raise ContractError(f"state width mismatch: expected {len(bundle.feature_order)}, got {v.shape}")
    return v


def emulate_step(bundle: EmulatorBundle, prev_state, new_setpoint: float) -> np.ndarray:
    """Next state after applying ``new_setpoint`` to ``prev_state`` (vector in feature order)."""
    if not math.isfinite(new_setpoint):
        raise ContractError(f"set point must be finite, got {new_setpoint}")
    x = _as_vector(bundle, prev_state)
    x[bundle._sp_idx] = new_setpoint
    out = x.copy()
    for factor, j in bundle._factor_idx.items():
        out[j] = forward(bundle.models[factor], x)[0]
    e = bundle._factor_idx["energy"]
    out[e] = max(out[e], bundle.energy_floor)
    return out


def emulate_batch(bundle: EmulatorBundle, states: np.ndarray, setpoints: np.ndarray) -> np.ndarray:
    """Vectorised :func:`emulate_step` over rows of ``states``."""
    X = np.array(states, dtype=float)
    X[:, bundle._sp_idx] = setpoints
    out = X.copy()
    for factor, j in bundle._factor_idx.items():
        out[:, j] = forward(bundle.models[factor], X)[:, 0]
    e = bundle._factor_idx["energy"]
    out[:, e] = np.maximum(out[:, e], bundle.energy_floor)
    return out


def write_response_file(path: str | Path, series: BuildingTimeSeries, states: Sequence[Sequence[float]],
                        timestamps: Sequence[str] | None = None) -> Path:
    """CSV with the source header; one emulated state per row, fixed 6-decimal values."""
    path = Path(path)
    timestamps = series.timestamps if timestamps is None else timestamps
    header = series.header
    pos = series.ts_position
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for ts, row in zip(timestamps, states):
            cells = [f"{v:.6f}" for v in row]
            cells.insert(pos, ts)
            w.writerow(cells)
    return path


def save_bundle(bundle: EmulatorBundle, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for factor, net in bundle.models.items():
        name = f"{factor}.relnet.json"
        save_net(net, directory / name)
        files[factor] = name
    manifest = {
        "format": "bdne-manifest",
        "version": MANIFEST_VERSION,
        "building_id": bundle.building_id,
        "feature_order": list(bundle.feature_order),
        "roles": bundle.roles.to_dict(),
        "factors": files,
        "flow_factor": bundle.flow_factor,
        "energy_floor": bundle.energy_floor,
        "holdout_mse": bundle.holdout_mse,
        "scaling": {"x_mean": next(iter(bundle.models.values())).x_mean.tolist(),
                    "x_scale": next(iter(bundle.models.values())).x_scale.tolist()},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return directory


def load_bundle(directory: str | Path) -> EmulatorBundle:
    directory = Path(directory)
    mf = directory / "manifest.json"
    if not mf.exists():
        raise FormatError(f"no emulator manifest in {directory}")
    doc = json.loads(mf.read_text(encoding="utf-8"))
    if doc.get("format") != "bdne-manifest" or doc.get("version") != MANIFEST_VERSION:
        raise FormatError(f"unsupported emulator manifest in {directory}")
    models = {f: load_net(directory / name) for f, name in doc["factors"].items()}
    return EmulatorBundle(models, tuple(doc["feature_order"]), ColumnRoleMap.from_dict(doc["roles"]),
                          doc.get("building_id", ""), doc.get("flow_factor"), doc.get("energy_floor", 0.05),
                          doc.get("holdout_mse", {}))

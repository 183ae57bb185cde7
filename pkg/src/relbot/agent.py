"""Actor-critic set-point agent with optional core-segment transfer from a donor building."""

from __future__ import annotations

import csv
import enum
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bdne import EmulatorBundle, _scaling, emulate_batch, transition_pairs
from .data import BuildingTimeSeries
from .errors import ContractError, GuardError, InputError, TrainingError
from .neural import (SegmentedNet, TrainConfig, copy_segment, forward, init_net, sgd_update,
                     batch_loss)


class Action(enum.IntEnum):
    NOOP = 0
    UP = 1
    DOWN = 2


ACTIONS = (Action.NOOP, Action.UP, Action.DOWN)


@dataclass(frozen=True)
class CopInputs:
    c_w: float
    rho_w: float
    f_cps: float
    flow_factor: float
    t_in: float
    t_out: float
    e_ch: float


@dataclass(frozen=True)
class CopConstants:
    """Physical constants of the COP equation plus the fallback flow factor."""

    c_w: float = 4186.0
    rho_w: float = 1000.0
    flow_factor: float = 1.0
    energy_floor: float = 0.05

    def __post_init__(self):
        if not (self.c_w > 0 and self.rho_w > 0 and self.energy_floor > 0):
            raise ContractError("c_w, rho_w and energy_floor must be positive")


_TRANSFER_SEGMENTS = {"all": None, "core+output": ("core", "output"), "core": ("core",)}


@dataclass
class AgentConfig:
    setpoint_delta: float = 0.25
    reward_scale: float = 10.0
    setpoint_min: float = 4.0
    setpoint_max: float = 14.0
    core_width: int = 16
    transfer_enabled: bool = False
    train: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.05))
    actor_learning_rate: float = 0.05
    replay_size: int = 32
    transfer_epochs: int = 100
    transfer_learning_rate: float | None = None  # None: same as train.learning_rate
    warmup_window: int = 24
    init_gain: float = 1.0
    transfer_train: str = "all"  # segments the transfer model fits: "all", "core+output" or "core"
    output_scale: float = 1.0  # critic and transfer-model predictions are the raw net output times this
    exploration: float = 0.0  # probability of a uniformly random action in place of the critic's choice
    exploration_decay: float = 0.0  # e-folding time in steps; 0 keeps the rate constant

    def __post_init__(self):
        if not self.setpoint_min < self.setpoint_max:
            raise ContractError("setpoint_min must be below setpoint_max")
        if self.transfer_train not in _TRANSFER_SEGMENTS:
            raise ContractError(f"transfer_train must be one of {sorted(_TRANSFER_SEGMENTS)}")
        if not self.setpoint_delta > 0 or not self.reward_scale > 0:
            raise ContractError("setpoint_delta and reward_scale must be positive")


def compute_cop(inp: CopInputs, floor: float = 0.05, step: int | None = None) -> float:
    if not inp.e_ch >= floor:
        where = f" at step {step}" if step is not None else ""
        raise GuardError(f"chiller energy {inp.e_ch!r} below floor {floor}{where}")
    return inp.c_w * inp.rho_w * inp.f_cps * inp.flow_factor * (inp.t_in - inp.t_out) / inp.e_ch


def compute_reward(cop_now: float, cop_prev: float, scale: float) -> float:
    return scale * (cop_now - cop_prev)


def apply_action(setpoint: float, action: Action, cfg: AgentConfig) -> float:
    step = {Action.NOOP: 0.0, Action.UP: cfg.setpoint_delta, Action.DOWN: -cfg.setpoint_delta}[Action(action)]
    return min(max(setpoint + step, cfg.setpoint_min), cfg.setpoint_max)


def select_action(rewards: Sequence[float]) -> Action:
    """Running max over (Noop, Up, Down); strict ``>`` keeps the earliest on ties."""
    best, best_r = 0, rewards[0]
    for a in (1, 2):
        if rewards[a] > best_r:
            best, best_r = a, rewards[a]
    return Action(best)


class CopModel:
    """Evaluates the COP equation on state vectors laid out in a building's feature order."""

    def __init__(self, feature_order: Sequence[str], roles, constants: CopConstants):
        idx = {c: i for i, c in enumerate(feature_order)}
        self.i_pump = idx[roles.pump_speed_col]
        self.i_flow = idx.get(roles.flow_factor_col) if roles.flow_factor_col else None
        self.i_in = idx[roles.t_in_col]
        self.i_out = idx[roles.t_out_col]
        self.i_e = idx[roles.energy_col]
        self.const = constants

    def inputs(self, state) -> CopInputs:
        flow = state[self.i_flow] if self.i_flow is not None else self.const.flow_factor
        return CopInputs(self.const.c_w, self.const.rho_w, float(state[self.i_pump]), float(flow),
                         float(state[self.i_in]), float(state[self.i_out]), float(state[self.i_e]))

    def cop(self, state, step: int | None = None) -> float:
        return compute_cop(self.inputs(state), self.const.energy_floor, step)

    def cop_series(self, states: np.ndarray) -> np.ndarray:
        S = np.asarray(states, dtype=float)
        e = S[:, self.i_e]
        bad = np.flatnonzero(~(e >= self.const.energy_floor))
        if bad.size:
            raise GuardError(f"chiller energy below floor {self.const.energy_floor} at steps {bad[:10].tolist()}")
        flow = S[:, self.i_flow] if self.i_flow is not None else self.const.flow_factor
        return self.const.c_w * self.const.rho_w * S[:, self.i_pump] * flow * (S[:, self.i_in] - S[:, self.i_out]) / e


def candidate_states(state: np.ndarray, sp_index: int, setpoint: float, cfg: AgentConfig) -> np.ndarray:
    C = np.tile(np.asarray(state, dtype=float), (3, 1))
    for a in ACTIONS:
        C[a, sp_index] = apply_action(setpoint, a, cfg)
    return C


def predict_action_rewards(critic: SegmentedNet, state, sp_index: int, cfg: AgentConfig) -> np.ndarray:
    """Critic predictions for the three candidate set points, in (Noop, Up, Down) order."""
    state = np.asarray(state, dtype=float)
    return forward(critic, candidate_states(state, sp_index, state[sp_index], cfg))[:, 0]


def train_transfer_model(series: BuildingTimeSeries, cfg: AgentConfig, constants: CopConstants,
                         seed: int | None = None) -> SegmentedNet:
    """Offline critic-architecture regressor of the step reward on a donor building's history.

    The input at step t is the decision-time state: the record of step t-1
    with the set point applied at step t, the same layout the online critic
    scores. The label is the scaled COP change from t-1 to t.
    """
    if len(series) < 2:
        raise InputError("transfer model needs at least 2 rows")
    X, _ = transition_pairs(series)
    cops = CopModel(series.feature_order, series.roles, constants).cop_series(series.values)
    y = cfg.reward_scale * np.diff(cops)
    seed = cfg.train.seed if seed is None else seed
    net = init_net(X.shape[1], cfg.core_width, "regression", seed, cfg.init_gain)
    net.set_input_scaling(*_scaling(series.values))
    net.y_scale = cfg.output_scale
    rng = np.random.default_rng(seed + 7)
    lr = cfg.train.learning_rate if cfg.transfer_learning_rate is None else cfg.transfer_learning_rate
    bs = cfg.train.minibatch_size
    Y = y.reshape(-1, 1)
    segments = _TRANSFER_SEGMENTS[cfg.transfer_train]
    for epoch in range(cfg.transfer_epochs):
        order = rng.permutation(len(X))
        for lo in range(0, len(X), bs):
            idx = order[lo:lo + bs]
            sgd_update(net, X[idx], Y[idx], lr, segments)
    loss = batch_loss(net, X, Y)
    if not math.isfinite(loss):
        raise TrainingError("transfer model training diverged")
    net.meta = {"kind": "transfer", "final_loss": loss, "feature_order": list(series.feature_order)}
    return net


@dataclass
class RunLog:
    timestamps: list[str] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    predicted: list[float] = field(default_factory=list)
    actual: list[float] = field(default_factory=list)
    setpoints: list[float] = field(default_factory=list)
    cops: list[float] = field(default_factory=list)
    critic_loss: list[float] = field(default_factory=list)
    predictions_all: list[tuple[float, float, float]] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)

    def __len__(self):
        return len(self.actions)

    def write_predictions(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "timestamp", "action", "predicted_reward", "actual_reward", "setpoint", "cop",
                        "critic_loss"])
            for t in range(len(self)):
                w.writerow([t, self.timestamps[t], self.actions[t], f"{self.predicted[t]:.6f}",
                            f"{self.actual[t]:.6f}", f"{self.setpoints[t]:.6f}", f"{self.cops[t]:.6f}",
                            f"{self.critic_loss[t]:.6f}"])
        return path


def read_predictions(path: str | Path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InputError(f"{path}: empty predictions file")
    out = {k: np.array([float(r[k]) for r in rows]) for k in
           ("step", "action", "predicted_reward", "actual_reward", "setpoint", "cop", "critic_loss")}
    out["timestamp"] = [r["timestamp"] for r in rows]
    return out


def _replay_batch(replay: deque, sample: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Newest example plus the replayed ones: all of them while they fit in ``sample``,
    otherwise a uniform draw of ``sample`` without replacement."""
    items = list(replay)
    older = items[:-1]
    if len(older) > sample:
        older = [older[i] for i in sorted(rng.choice(len(older), sample, replace=False))]
    batch = older + items[-1:]
    return np.array([x for x, _ in batch]), np.array([[y] for _, y in batch])


def make_agent_nets(width: int, cfg: AgentConfig, seed: int, scaling) -> tuple[SegmentedNet, SegmentedNet]:
    critic = init_net(width, cfg.core_width, "regression", seed, cfg.init_gain)
    actor = init_net(width, cfg.core_width, "classification-3", seed + 1, cfg.init_gain)
    for net in (critic, actor):
        net.set_input_scaling(*scaling)
    critic.y_scale = cfg.output_scale
    return critic, actor


def apply_transfer(transfer: SegmentedNet, critic: SegmentedNet, actor: SegmentedNet, cfg: AgentConfig) -> None:
    """Seed both agent nets with the transfer model's core segment."""
    if transfer.core_width != cfg.core_width:
        raise ContractError(f"transfer core width {transfer.core_width} != configured {cfg.core_width}")
    copy_segment(transfer, critic, "core")
    copy_segment(transfer, actor, "core")


def run_episode(target: BuildingTimeSeries, bundle: EmulatorBundle, transfer: SegmentedNet | None,
                cfg: AgentConfig, constants: CopConstants, seed: int = 0,
                critic: SegmentedNet | None = None, actor: SegmentedNet | None = None) -> RunLog:
    """One pass over the target source rows with the emulator standing in for the building.

    The observation at step t is source row t with the set point and COP
    factor columns carried over from the previous emulated state (row 0 is
    taken as recorded). Passing ``critic``/``actor`` overrides the default
    initialisation.
    """
    if tuple(bundle.feature_order) != tuple(target.feature_order):
        raise ContractError("emulator feature order does not match the target series")
    if target.has_missing:
        raise InputError("target series has missing values; impute first")
    if cfg.transfer_enabled and transfer is None:
        raise ContractError("transfer enabled but no transfer model supplied")
    width = len(target.feature_order)
    sp_i = target.index(target.roles.setpoint_col)
    factor_idx = [target.index(c) for c in target.roles.factor_roles.values()]
    if critic is None or actor is None:
        critic, actor = make_agent_nets(width, cfg, seed, _scaling(target.values))
    if cfg.transfer_enabled:
        apply_transfer(transfer, critic, actor, cfg)
    copter = CopModel(target.feature_order, target.roles, constants)
    replay: deque = deque(maxlen=cfg.replay_size + 1)  # newest + replay
    log = RunLog()
    onehots = np.eye(3)
    lr = cfg.train.learning_rate
    explore_rng = np.random.default_rng([seed, 3])
    replay_rng = np.random.default_rng([seed, 4])

    prev = np.array(target.values[0])
    setpoint = float(prev[sp_i])
    cop_prev = copter.cop(prev, 0)
    for t in range(len(target)):
        obs = np.array(target.values[t])
        obs[sp_i] = setpoint
        obs[factor_idx] = prev[factor_idx]
        cands = candidate_states(obs, sp_i, setpoint, cfg)
        preds = forward(critic, cands)[:, 0]
        greedy = select_action(preds)
        a = greedy
        eps = cfg.exploration * (math.exp(-t / cfg.exploration_decay) if cfg.exploration_decay > 0 else 1.0)
        if eps > 0 and explore_rng.random() < eps:
            a = Action(int(explore_rng.integers(3)))
        new_sp = float(cands[a, sp_i])
        state = emulate_batch(bundle, obs[None, :], np.array([new_sp]))[0]
        cop = copter.cop(state, t)
        reward = compute_reward(cop, cop_prev, cfg.reward_scale)
        if not math.isfinite(reward):
            raise TrainingError(f"non-finite reward at step {t}")
        replay.append((cands[a], reward))
        try:
            for epoch in range(cfg.train.epochs_per_step):
                X, Y = _replay_batch(replay, cfg.train.minibatch_size, replay_rng)
                step_loss = sgd_update(critic, X, Y, lr)
                if epoch == 0:
                    loss = step_loss
            copy_segment(critic, actor, "all-shared")
            sgd_update(actor, obs[None, :], onehots[greedy][None, :], cfg.actor_learning_rate, ("output",))
        except TrainingError as exc:
            raise TrainingError(f"step {t}: {exc}") from None

        log.timestamps.append(target.timestamps[t])
        log.actions.append(int(a))
        log.predicted.append(float(preds[greedy]))
        log.actual.append(float(reward))
        log.setpoints.append(new_sp)
        log.cops.append(float(cop))
        log.critic_loss.append(float(loss))
        log.predictions_all.append(tuple(float(p) for p in preds))
        log.states.append(state)
        prev, setpoint, cop_prev = state, new_sp, cop
    return log

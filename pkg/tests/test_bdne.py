import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relbot.bdne import (EmulatorConfig, emulate_batch, emulate_step, load_bundle, save_bundle, train_bdne,
                         transition_pairs, write_response_file)
from relbot.data import ColumnRoleMap, load_csv
from relbot.errors import ContractError, FormatError, InputError
from relbot.neural import TrainConfig

from conftest import ROLES, make_series

SLOPE = 1.0


def linear_building(n=300, seed=0, flow=False):
    rng = np.random.default_rng(seed)
    sp = np.round(rng.uniform(6, 10, n) * 2) / 2
    oat = 25 + 4 * np.sin(np.arange(n) / 4)
    cols = {"oat": oat, "sp": sp, "t_in": sp + 5.0, "t_out": SLOPE * sp,
            "pump": np.full(n, 0.8), "kw": np.full(n, 40.0)}
    roles = ROLES
    if flow:
        cols["flow"] = np.full(n, 0.02)
        roles = ColumnRoleMap(**{**ROLES.to_dict(), "exogenous_cols": ("oat",), "flow_factor_col": "flow"})
    return make_series(cols, roles)


@pytest.fixture(scope="module")
def linear_bundle():
    s = linear_building(600)
    return s, train_bdne(s, EmulatorConfig(), "lin")


def test_linear_fixture_holdout(linear_bundle):
    _, b = linear_bundle
    assert b.holdout_mse["t_out"] < 1e-3
    assert b.holdout_mse["t_in"] < 1e-2


def test_constant_energy_learned(linear_bundle):
    s, b = linear_bundle
    X, _ = transition_pairs(s)
    pred = emulate_batch(b, X, X[:, s.index("sp")])[:, s.index("kw")]
    assert np.abs(pred - 40.0).max() < 1e-2


def test_setpoint_response_slope(linear_bundle):
    s, b = linear_bundle
    state = s.values[50].copy()
    lo = emulate_step(b, state, 7.0)[s.index("t_out")]
    hi = emulate_step(b, state, 8.0)[s.index("t_out")]
    assert hi - lo == pytest.approx(SLOPE, rel=0.1)


def test_model_count_follows_flow_role():
    cfg = EmulatorConfig(max_epochs=2)
    four = train_bdne(linear_building(120), cfg, flow_factor=1.0)
    assert sorted(four.models) == ["energy", "pump_speed", "t_in", "t_out"]
    assert four.flow_factor == 1.0
    five = train_bdne(linear_building(120, flow=True), cfg)
    assert len(five.models) == 5 and five.flow_factor is None


def test_transition_pairs_layout():
    s = linear_building(10)
    X, Y = transition_pairs(s)
    assert X.shape == (9, len(s.columns))
    sp, oat, kw = s.index("sp"), s.index("oat"), s.index("kw")
    np.testing.assert_array_equal(X[:, sp], s.values[1:, sp])
    np.testing.assert_array_equal(X[:, oat], s.values[1:, oat])
    np.testing.assert_array_equal(X[:, kw], s.values[:-1, kw])
    np.testing.assert_array_equal(Y["t_out"], s.values[1:, s.index("t_out")])


def test_unimputed_rejected():
    s = linear_building(5)
    values = s.values.copy()
    values[2, 0] = np.nan
    with pytest.raises(InputError):
        transition_pairs(s.with_values(values))


def test_emulate_step_contract(linear_bundle):
    s, b = linear_bundle
    state = s.values[10].copy()
    out = emulate_step(b, state, 9.0)
    assert out[s.index("sp")] == 9.0
    assert out[s.index("oat")] == state[s.index("oat")]
    assert np.array_equal(state, s.values[10])  # input untouched
    np.testing.assert_array_equal(emulate_step(b, s.row(10), 9.0), out)
    with pytest.raises(ContractError):
        emulate_step(b, state[:-1], 9.0)
    with pytest.raises(ContractError):
        emulate_step(b, state, float("nan"))


def test_exogenous_invariant_thousand_draws(linear_bundle):
    s, b = linear_bundle
    rng = np.random.default_rng(7)
    keep = [s.index(c) for c in s.columns if c not in s.roles.factor_roles.values() and c != "sp"]
    assert s.index("oat") in keep
    for _ in range(1000):
        state = rng.normal(0, 50, len(s.columns))
        out = emulate_step(b, state, float(rng.uniform(-20, 40)))
        assert out[keep].tobytes() == state[keep].tobytes()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=6, max_size=6), st.floats(-50, 50))
def test_emulate_deterministic_and_floored(linear_bundle, state, sp):
    s, b = linear_bundle
    a1 = emulate_step(b, np.array(state), sp)
    a2 = emulate_step(b, np.array(state), sp)
    assert a1.tobytes() == a2.tobytes()
    assert a1[s.index("kw")] >= b.energy_floor
    batch = emulate_batch(b, np.array([state]), np.array([sp]))[0]
    np.testing.assert_allclose(batch, a1, rtol=1e-12, atol=1e-12)


def test_response_file(tmp_path, linear_bundle):
    s, b = linear_bundle
    states = [emulate_step(b, s.values[t], s.values[t, s.index("sp")]) for t in range(3)]
    path = write_response_file(tmp_path / "r.csv", s, states, s.timestamps[:3])
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0].split(",") == s.header
    back = load_csv(path, s.roles)
    np.testing.assert_allclose(back.values, np.array(states), atol=1e-6)


def test_zero_action_response_differs_only_in_factors(tmp_path, linear_bundle):
    s, b = linear_bundle
    n = 20
    states = [emulate_step(b, s.values[t], s.values[t, s.index("sp")]) for t in range(n)]
    write_response_file(tmp_path / "src.csv", s, s.values[:n], s.timestamps[:n])
    write_response_file(tmp_path / "resp.csv", s, states, s.timestamps[:n])
    src = [l.split(",") for l in (tmp_path / "src.csv").read_text().splitlines()]
    resp = [l.split(",") for l in (tmp_path / "resp.csv").read_text().splitlines()]
    factors = set(s.roles.factor_roles.values())
    changed = {src[0][j] for r1, r2 in zip(src[1:], resp[1:]) for j, (a, c) in enumerate(zip(r1, r2)) if a != c}
    assert changed and changed <= factors


def test_bundle_round_trip(tmp_path, linear_bundle):
    s, b = linear_bundle
    save_bundle(b, tmp_path / "bdne")
    back = load_bundle(tmp_path / "bdne")
    assert back.feature_order == b.feature_order
    assert back.holdout_mse == b.holdout_mse
    X = s.values[:30]
    np.testing.assert_allclose(emulate_batch(back, X, X[:, 1]), emulate_batch(b, X, X[:, 1]), atol=1e-12)
    with pytest.raises(FormatError):
        load_bundle(tmp_path / "missing")


def test_training_deterministic():
    s = linear_building(120)
    cfg = EmulatorConfig(max_epochs=5, train=TrainConfig(learning_rate=0.3, seed=3))
    a, b = train_bdne(s, cfg), train_bdne(s, cfg)
    X = s.values[:10]
    assert emulate_batch(a, X, X[:, 1]).tobytes() == emulate_batch(b, X, X[:, 1]).tobytes()

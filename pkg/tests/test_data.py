import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relbot.data import (ColumnRoleMap, compute_feature_stats, impute, load_csv, moment_stats,
                         parse_timestamp)
from relbot.errors import ConfigError, InputError

from conftest import ROLES, make_series, write_csv

HEADER = ["ts", "oat", "sp", "t_in", "t_out", "pump", "kw"]


def rows(n):
    return [[f"2021-06-01T{h:02d}:00:00", 25 + h, 7.0, 12.0, 7.0, 0.8, 40.0 + h] for h in range(n)]


def test_load_three_rows(tmp_path):
    s = load_csv(write_csv(tmp_path / "b.csv", HEADER, rows(3)), ROLES)
    assert len(s) == 3
    assert s.feature_order == tuple(HEADER[1:])
    assert s.header == HEADER
    assert s.column("oat").tolist() == [25, 26, 27]


def test_timestamp_not_first(tmp_path):
    header = ["oat", "ts", "sp", "t_in", "t_out", "pump", "kw"]
    body = [[r[1], r[0], *r[2:]] for r in rows(3)]
    s = load_csv(write_csv(tmp_path / "b.csv", header, body), ROLES)
    assert s.header == header
    assert s.feature_order == ("oat", "sp", "t_in", "t_out", "pump", "kw")


def test_missing_energy_column(tmp_path):
    path = write_csv(tmp_path / "b.csv", HEADER[:-1], [r[:-1] for r in rows(3)])
    with pytest.raises(ConfigError, match="kw"):
        load_csv(path, ROLES)


def test_blank_cell_is_missing(tmp_path):
    body = rows(4)
    body[2][3] = ""
    s = load_csv(write_csv(tmp_path / "b.csv", HEADER, body), ROLES)
    assert s.has_missing
    assert np.isnan(s.values[2, s.index("t_in")])
    assert np.isnan(s.values).sum() == 1
    assert not impute(s).has_missing


def test_empty_file(tmp_path):
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(InputError, match="empty"):
        load_csv(tmp_path / "e.csv", ROLES)


def test_bad_timestamp_names_row(tmp_path):
    body = rows(3)
    body[1][0] = "yesterday"
    with pytest.raises(InputError, match="row 1"):
        load_csv(write_csv(tmp_path / "b.csv", HEADER, body), ROLES)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_csv("/nonexistent/b.csv", ROLES)


def test_parse_timestamp_forms():
    assert parse_timestamp("3600") == 3600.0
    assert parse_timestamp("1970-01-01T01:00:00Z") == 3600.0
    assert parse_timestamp("1970-01-01T01:00:00") == 3600.0


def test_role_map_round_trip():
    assert ColumnRoleMap.from_dict(ROLES.to_dict()) == ROLES
    with pytest.raises(ConfigError):
        ColumnRoleMap.from_dict({"timestamp_col": "ts"})
    with pytest.raises(ConfigError):
        ColumnRoleMap("ts", "sp", "sp", "t_out", "pump", "kw")


def _series_with(col):
    n = len(col)
    return make_series({"oat": col, "sp": np.full(n, 7.0), "t_in": np.full(n, 12.0), "t_out": np.full(n, 7.0),
                        "pump": np.ones(n), "kw": np.full(n, 40.0)})


def test_forward_fill():
    assert impute(_series_with([1.0, math.nan, 3.0])).column("oat").tolist() == [1.0, 1.0, 3.0]


def test_backward_fill_head():
    assert impute(_series_with([math.nan, 2.0])).column("oat").tolist() == [2.0, 2.0]


def test_all_missing_extra_column_dropped():
    s = _series_with([1.0, 2, 3, 4, 5])
    s = make_series({**{c: s.column(c) for c in s.columns}, "junk": [math.nan] * 5})
    out = impute(s)
    assert "junk" not in out.columns
    assert out.dropped == ("junk",)
    assert len(out.columns) == len(s.columns) - 1


def test_all_missing_role_column_rejected():
    s = _series_with([1.0, 2.0, 3.0])
    cols = {c: s.column(c) for c in s.columns}
    cols["t_in"] = [math.nan] * 3
    with pytest.raises(InputError, match="t_in"):
        impute(make_series(cols))


def test_all_missing_exogenous_dropped_from_roles():
    s = _series_with([math.nan, math.nan])
    out = impute(s)
    assert "oat" not in out.columns
    assert out.roles.exogenous_cols == ()


@given(st.lists(st.one_of(st.none(), st.floats(-1e3, 1e3)), min_size=2, max_size=30)
       .filter(lambda xs: any(x is not None for x in xs)))
def test_impute_idempotent_and_complete(xs):
    col = [math.nan if x is None else x for x in xs]
    once = impute(_series_with(col))
    twice = impute(once)
    assert not once.has_missing
    assert len(once) == len(xs)
    assert once.timestamps == twice.timestamps
    np.testing.assert_array_equal(once.values, twice.values)


def test_stats_constant():
    st_ = moment_stats([1, 1, 1, 1])
    assert (st_.mean, st_.std, st_.skew, st_.kurtosis) == (1, 0, 0, 0)


def test_stats_symmetric():
    st_ = moment_stats([-1, 0, 1])
    assert st_.mean == 0 and st_.skew == 0


def test_stats_hand_moments():
    st_ = moment_stats([0, 0, 0, 4])
    assert st_.mean == 1
    assert st_.std**2 == pytest.approx(3)
    assert st_.skew == pytest.approx(6 / 3**1.5)
    assert st_.skew == pytest.approx(1.1547, abs=1e-4)
    # m4 = (3*1 + 81)/4 = 21
    assert st_.kurtosis == pytest.approx(21 / 9 - 3)


def test_stats_need_imputed_column():
    with pytest.raises(InputError):
        compute_feature_stats(_series_with([1.0, math.nan, 2.0]), "oat")


@settings(max_examples=60)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=40),
       st.floats(0.01, 100), st.floats(-100, 100))
def test_shape_moments_affine_invariant(xs, a, b):
    x = np.array(xs)
    if np.ptp(x) < 1e-3:
        return
    s1, s2 = moment_stats(x), moment_stats(a * x + b)
    assert s2.skew == pytest.approx(s1.skew, abs=1e-9)
    assert s2.kurtosis == pytest.approx(s1.kurtosis, abs=1e-9)


def test_feature_vector_width(toy_plant):
    for t in (0, len(toy_plant) - 1):
        assert len(toy_plant.values[t]) == len(toy_plant.feature_order)

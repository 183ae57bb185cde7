import json

import numpy as np
import pytest

from relbot.agent import CopModel
from relbot.config import load_config
from relbot.similarity import building_similarity
from relbot.synth import SCENARIOS, pair_params, synth_pair


def _pair(tmp_path, scenario, seed=0, rows=600):
    synth_pair(scenario, seed, tmp_path, rows=rows)
    cfg = load_config(tmp_path / "config.json")
    return cfg, cfg.building("target"), cfg.building("donor")


@pytest.mark.parametrize("seed", [0, 1])
def test_similar_pair_scores_high(tmp_path, seed):
    _, target, donor = _pair(tmp_path, "similar-pair", seed)
    assert building_similarity(donor.load(), target.load()).score >= 0.5


@pytest.mark.parametrize("seed", [0, 1])
def test_dissimilar_pair_scores_low(tmp_path, seed):
    _, target, donor = _pair(tmp_path, "dissimilar-pair", seed)
    assert building_similarity(donor.load(), target.load()).score <= 0.1


def test_same_seed_same_files(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    synth_pair("similar-pair", 3, a, rows=200)
    synth_pair("similar-pair", 3, b, rows=200)
    for name in ("target.csv", "donor.csv", "manifest.json", "config.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    synth_pair("similar-pair", 4, b, rows=200)
    assert (a / "target.csv").read_bytes() != (b / "target.csv").read_bytes()


def test_manifest_records_optima(tmp_path):
    synth_pair("dissimilar-pair", 1, tmp_path, rows=100)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    target, donor = pair_params("dissimilar-pair", 1)
    assert doc["true_optimum"] == {"target": target.optimum, "donor": donor.optimum}
    assert 2.0 <= abs(target.optimum - donor.optimum) <= 2.5


def test_sensor_cop_peaks_near_optimum(tmp_path):
    # COP computed from the written channels follows the generator's parabola
    cfg, target, _ = _pair(tmp_path, "similar-pair", 2, rows=2400)
    s = target.load()
    vals = CopModel(s.feature_order, s.roles, target.constants()).cop_series(s.values)
    sp = s.column(s.roles.setpoint_col)
    a, b, _ = np.polyfit(sp, vals, 2)
    assert a < 0
    opt = json.loads((tmp_path / "manifest.json").read_text())["true_optimum"]["target"]
    assert -b / (2 * a) == pytest.approx(opt, abs=0.3)


def test_unknown_scenario():
    with pytest.raises(ValueError):
        pair_params("nope", 0)
    assert SCENARIOS == ("similar-pair", "dissimilar-pair")

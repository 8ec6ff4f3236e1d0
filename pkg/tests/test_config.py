import json

import numpy as np
import pytest

from meta_learners.exceptions import InvalidInput
from meta_learners.experiment_config import (ColumnMap, ExperimentConfig, ExperimentProfiles,
                                             load_column_map)
from meta_learners.forest_config import ForestConfig, ForestParams


############################################################
# Forest
############################################################
def test_forest_params_defaults():
    params = ForestParams()
    assert (params.n_trees, params.mtry, params.min_leaf) == (1000, None, 5)
    assert params.resolve_mtry(100) == 10
    assert params.resolve_mtry(101) == 11
    assert params.validate(50, 4) == 2


@pytest.mark.parametrize("overrides", [
    {"n_trees": 0},
    {"min_leaf": 0},
    {"mtry": 5},
    {"forced_feature": 4},
    {"case_weights": np.zeros(10)},
    {"case_weights": np.array([1.0] * 9 + [-1.0])},
    {"case_weights": np.ones(9)},
])
def test_forest_params_invalid(overrides):
    with pytest.raises(InvalidInput):
        ForestParams(**overrides).validate(10, 4)


def test_forest_config_round_trip(tmp_path):
    config = ForestConfig()
    config.config_file = str(tmp_path / "forest.json")
    assert not config.load_config()
    saved = json.loads((tmp_path / "forest.json").read_text(encoding="utf-8"))
    assert saved["n_trees"] == 1000
    assert "last_updated" in saved

    config.update_from_dict({"n_trees": 50, "mtry": 0, "min_leaf": -3, "unknown": 1})
    assert (config.n_trees, config.mtry, config.min_leaf) == (50, 1, 1)
    assert config.save_config()

    reloaded = ForestConfig()
    reloaded.config_file = config.config_file
    assert reloaded.load_config()
    assert reloaded.to_dict() == config.to_dict()


def test_forest_config_broken_file(tmp_path):
    path = tmp_path / "forest.json"
    path.write_text("{not json", encoding="utf-8")
    config = ForestConfig()
    config.config_file = str(path)
    assert not config.load_config()
    assert config.n_trees == 1000


def test_forest_config_to_params():
    config = ForestConfig()
    config.update_from_dict({"n_trees": 20, "min_leaf": 3})
    params = config.to_params(n_trees=None, mtry=4)
    assert (params.n_trees, params.mtry, params.min_leaf) == (20, 4, 3)


############################################################
# Profiles and experiment config
############################################################
def test_profiles(tmp_path):
    profiles = ExperimentProfiles()
    profiles.config_file = str(tmp_path / "profiles.json")
    assert "paper" in profiles.names()
    assert profiles.get("paper")["replications"] == [2000, 1000, 500, 250]
    with pytest.raises(InvalidInput):
        profiles.get("huge")

    profiles.update_from_dict({"tiny": {"n_trees": 5, "n_train": [40], "replications": [0],
                                        "n_validation": 30}})
    assert profiles.get("tiny")["replications"] == [1]
    assert profiles.save_config()

    reloaded = ExperimentProfiles()
    reloaded.config_file = profiles.config_file
    assert reloaded.load_config()
    assert reloaded.get("tiny")["n_train"] == [40]


def test_experiment_config_defaults():
    config = ExperimentConfig().validate()
    assert config.schedule == [(500, 2000), (2000, 1000), (8000, 500), (32000, 250)]
    assert config.n_validation == 10000
    assert config.learners == ("S", "SW", "T", "X", "DR", "R")
    assert config.procedures == ("full", "split", "crossfit")
    assert not config.semisynthetic


def test_experiment_config_normalizes_ids():
    config = ExperimentConfig(learners=("dr", "S-W"), procedures=("CrossFit",))
    assert config.learners == ("DR", "SW")
    assert config.procedures == ("crossfit",)
    with pytest.raises(InvalidInput):
        ExperimentConfig(learners=("Q",))


@pytest.mark.parametrize("overrides", [
    {"n_train": (100, 200), "replications": (5,)},
    {"replications": (0, 1, 1, 1)},
    {"n_validation": 0},
    {"design_id": None},
    {"mtry": 0},
    {"augment_p": -1},
    {"learners": ()},
])
def test_experiment_config_invalid(overrides):
    with pytest.raises(InvalidInput):
        ExperimentConfig(**overrides).validate()


def test_paper_profiles():
    config = ExperimentConfig.from_profile("paper", ExperimentProfiles())
    assert config.n_trees == 1000
    assert config.schedule[-1] == (32000, 250)
    semisynth = ExperimentProfiles().get("semisynth-paper")
    assert semisynth["n_train"] == [500, 2000, 8000]


def test_from_profile_with_overrides():
    config = ExperimentConfig.from_profile("desk", n_trees=None, master_seed=9, learners=("T",))
    assert config.n_trees == 200
    assert config.master_seed == 9
    assert config.learners == ("T",)
    assert config.schedule == [(500, 100), (2000, 50)]
    assert config.with_overrides(design_id=None) is config


def test_column_map(tmp_path):
    assert ColumnMap().to_dict()["W"] == "W"
    path = tmp_path / "colmap.json"
    path.write_text(json.dumps({"W": "Z", "bogus": "B", "Y": ""}), encoding="utf-8")
    colmap = load_column_map(str(path))
    assert colmap["W"] == "Z"
    assert colmap["Y"] == "Y"
    assert "bogus" not in colmap
    assert load_column_map(str(tmp_path / "missing.json"))["W"] == "W"
    assert not (tmp_path / "missing.json").exists()

"""
Tests for configuration resolution, run-config files and experiment helpers.
"""
import numpy as np
import pytest

from config.config_manager import ConfigManager, RunConfig, config, parse_config_text
from evaluation.evaluator import report_from_ranks
from training.experiments import VariantResult, format_variant_table, grid_points, run_grid, summarize_seeds
from utils.constants import HORIZON_GRID, LAMBDA_GRID, TAU_GRID
from utils.exceptions import ConfigError
from utils.logger import get_logger

logger = get_logger()

SECTIONED = """
[FutureSup]
horizon = 3
tau = 2.0

[ContrastiveLearning]
lambda_fc = 0.2

[Train]
use_ug = false
"""

FLAT = """
horizon = 3
tau = 2.0
lambda_fc = 0.2
use_ug = false
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(SECTIONED, encoding="utf-8")
    return path


# ============================
# Defaults and precedence
# ============================

@pytest.mark.smoke
def test_defaults_come_from_config_ini():
    cfg = RunConfig.resolve()
    assert cfg.backbone.hidden_dim == config.getint("Backbone", "hidden_dim")
    assert cfg.future_sup.horizon == 2
    assert cfg.future_sup.tau == 3.0
    assert cfg.contrastive.lambda_fc == 0.1
    assert cfg.train.lr == pytest.approx(0.001)
    assert cfg.train.use_fs and cfg.train.use_ug and cfg.train.use_fc
    assert cfg.seed_list == [cfg.train.seed]


def test_config_manager_is_a_singleton():
    assert ConfigManager() is config
    assert (config.root_dir / "requirements.txt").exists()


@pytest.mark.regression
def test_overrides_beat_file_beat_defaults(config_file):
    from_file = RunConfig.resolve(config_file)
    assert from_file.future_sup.horizon == 3
    assert from_file.train.use_ug is False
    assert from_file.backbone.hidden_dim == RunConfig.resolve().backbone.hidden_dim

    overridden = RunConfig.resolve(config_file, {"tau": "4", "use_ug": "true"})
    assert overridden.future_sup.tau == 4.0
    assert overridden.train.use_ug is True
    assert overridden.contrastive.lambda_fc == 0.2


def test_flat_and_sectioned_files_agree(tmp_path, config_file):
    flat = tmp_path / "flat.ini"
    flat.write_text(FLAT, encoding="utf-8")
    assert RunConfig.resolve(flat) == RunConfig.resolve(config_file)


# ============================
# Rejections
# ============================

@pytest.mark.sanity
def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="hiden_dim"):
        RunConfig.resolve(overrides={"hiden_dim": 32})


def test_unknown_section_is_rejected():
    with pytest.raises(ConfigError, match="Optimizer"):
        parse_config_text("[Optimizer]\nlr = 0.1\n")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.resolve(tmp_path / "absent.ini")


@pytest.mark.parametrize("key, value", [("hidden_dim", "abc"), ("tau", "high"), ("use_fs", "maybe")])
def test_type_coercion_errors(key, value):
    with pytest.raises(ConfigError, match=key):
        RunConfig().with_overrides({key: value})


@pytest.mark.parametrize("overrides", [
    {"hidden_dim": 10, "num_heads": 3},
    {"dropout_rate": 1.0},
    {"batch_size": 1},
    {"fs_reduction": "sum"},
    {"early_stop_metric": "mrr@10"},
    {"lambda_fc": -0.1, "allow_offgrid": True},
])
def test_structural_violations(overrides):
    with pytest.raises(ConfigError):
        RunConfig.resolve(overrides=overrides)


@pytest.mark.regression
@pytest.mark.parametrize("key, value", [("horizon", 7), ("tau", 2.5), ("lambda_fc", 0.3)])
def test_off_grid_values_need_explicit_permission(key, value):
    with pytest.raises(ConfigError, match="off-grid"):
        RunConfig.resolve(overrides={key: value})
    assert RunConfig.resolve(overrides={key: value}, allow_offgrid=True).flat()[key] == value


# ============================
# Serialization
# ============================

def test_resolved_config_text_is_a_fixed_point(config_file):
    cfg = RunConfig.resolve(config_file, {"num_items": 57, "seeds": "1,2"})
    text = cfg.to_ini()
    again = RunConfig.from_ini(text)
    assert again == cfg
    assert again.to_ini() == text
    assert "[Backbone]" in text and "num_items = 57" in text


def test_seed_list():
    assert RunConfig().with_overrides({"seeds": "1, 2,3"}).seed_list == [1, 2, 3]
    with pytest.raises(ConfigError, match="seeds"):
        _ = RunConfig().with_overrides({"seeds": "1,two"}).seed_list


# ============================
# Experiment helpers
# ============================

def test_grid_points_enumerate_the_product():
    points = grid_points({"horizon": (2, 3), "tau": (1.0, 3.0, 5.0)})
    assert len(points) == 6
    assert points[0] == {"horizon": 2, "tau": 1.0}
    assert points[-1] == {"horizon": 3, "tau": 5.0}


@pytest.mark.sanity
def test_off_grid_sweep_fails_before_training(tiny_corpus, micro_cfg):
    base = micro_cfg.with_overrides({"tau": 3.0, "lambda_fc": 0.1})
    with pytest.raises(ConfigError, match="off-grid"):
        run_grid(tiny_corpus, base, {"horizon": (2, 7)})


def test_seed_summary_is_mean_and_sample_std():
    reports = [report_from_ranks("test", np.array(ranks)) for ranks in ([1, 50], [1, 1], [50, 50])]
    summary = summarize_seeds(reports)
    mean, std = summary["hr@10"]
    assert mean == pytest.approx(0.5)
    assert std == pytest.approx(0.5)
    assert summarize_seeds(reports[:1])["hr@10"] == (0.5, 0.0)


def test_variant_table_has_metric_rows_and_variant_columns():
    results = [
        VariantResult("full", {}, [0], [], [report_from_ranks("test", np.array([1, 2]))]),
        VariantResult("w/o-fc", {"use_fc": False}, [0], [], [report_from_ranks("test", np.array([30, 40]))]),
    ]
    lines = format_variant_table(results).splitlines()
    assert lines[0].split() == ["Metric", "full", "w/o-fc"]
    assert [line.split()[0] for line in lines[1:]] == ["HR@10", "NDCG@10", "HR@20", "NDCG@20"]
    assert lines[1].split()[1:] == ["1.0000", "0.0000"]


@pytest.mark.regression
def test_grids_match_reference_values(reference_data):
    grids = reference_data["hyperparameter_grids"]
    assert tuple(grids["horizon"]) == HORIZON_GRID
    assert tuple(grids["tau"]) == TAU_GRID
    assert tuple(grids["lambda_fc"]) == LAMBDA_GRID
    for key, values in grids.items():
        for value in values:
            assert RunConfig.resolve(overrides={key: value}).flat()[key] == value

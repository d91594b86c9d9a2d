"""
Pytest configuration and fixtures.
Contains shared fixtures and hooks for the test framework.
"""
import datetime

import numpy as np
import pytest

from config.config_manager import ConfigManager, RunConfig
from dataset.batching import collate
from dataset.corpus import corpus_from_sequences
from dataset.instances import TrainingInstance
from models.ufrec_model import UFRecModel
from utils.constants import EPOCH_LOG_FILENAME
from utils.helpers import load_reference_data
from utils.logger import get_logger

logger = get_logger()

MICRO_OVERRIDES = {
    "hidden_dim": 8,
    "num_layers": 1,
    "num_heads": 2,
    "max_len": 4,
    "dropout_rate": 0.0,
    "num_items": 20,
    "horizon": 3,
    "tau": 2.0,
    "lambda_fc": 0.5,
    "batch_size": 4,
    "seed": 0,
}


# ============================
# Random generators
# ============================

@pytest.fixture
def rng():
    """Fresh seeded generator per test."""
    return np.random.default_rng(1234)


# ============================
# Micro model
# ============================

@pytest.fixture
def micro_cfg():
    """d=8, V=20, L=1, K=3, window 4, no dropout."""
    return RunConfig().with_overrides(MICRO_OVERRIDES)


@pytest.fixture
def micro_model(micro_cfg):
    return UFRecModel(micro_cfg, np.random.default_rng(0))


def make_instance(prefix, next_target, future=(), user_index=0):
    valid = len(future) > 0
    return TrainingInstance(user_index, tuple(prefix), next_target, tuple(future), valid, valid)


@pytest.fixture
def micro_batch():
    """
    Four rows with prefix lengths 1..5 (the last one truncated to the window)
    and one row whose future horizon runs past the sequence end.
    """
    instances = [
        make_instance([3], 7, (11, 2), user_index=0),
        make_instance([5, 9], 14, (1, 20), user_index=1),
        make_instance([8, 8, 12], 6, (), user_index=2),
        make_instance([4, 17, 2, 19, 10], 13, (15, 5), user_index=3),
    ]
    return collate(instances, max_len=4, horizon=3, batch_id=0)


@pytest.fixture
def invalid_horizon_batch():
    """No row has a full future horizon."""
    instances = [make_instance([i, i + 1], i + 2, (), user_index=i) for i in range(1, 5)]
    return collate(instances, max_len=4, horizon=3, batch_id=1)


# ============================
# Corpora and runs
# ============================

@pytest.fixture
def tiny_corpus():
    """Three users over 12 items, no filtering."""
    return corpus_from_sequences(
        [
            [1, 2, 3, 4, 5, 6],
            [7, 8, 9, 10, 11],
            [12, 1, 3, 5, 7, 9, 11],
        ],
        num_items=12,
    )


@pytest.fixture
def run_dir(tmp_path):
    """Per-test run directory."""
    path = tmp_path / "run"
    logger.debug(f"Run directory for test: {path}")
    return path


@pytest.fixture(scope="session")
def reference_data():
    return load_reference_data()


# ============================
# Pytest Configuration
# ============================

def pytest_configure(config):
    """
    Configure pytest settings.
    Places the HTML report under reports/ when no path was given.
    """
    if hasattr(config.option, "htmlpath") and not config.option.htmlpath:
        timestamp = datetime.datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
        report_file = ConfigManager().root_dir / "reports" / f"report_{timestamp}.html"
        config.option.htmlpath = str(report_file)
        logger.info(f"HTML report will be generated at: {report_file}")


# ============================
# Pytest Hooks
# ============================

@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """
    Attach the epoch log of a failed training test to the HTML report.
    """
    outcome = yield
    report = outcome.get_result()
    extra = getattr(report, "extra", [])

    if report.when == "call" and report.failed and "run_dir" in item.fixturenames:
        run_path = item.funcargs.get("run_dir")
        epoch_log = run_path / EPOCH_LOG_FILENAME if run_path is not None else None
        if epoch_log is not None and epoch_log.exists():
            _add_text_to_report(item, extra, epoch_log.read_text(encoding="utf-8"))

    report.extra = extra


def _add_text_to_report(item, extra, text):
    try:
        html = item.config.pluginmanager.getplugin("html")
        if html:
            extra.append(html.extras.text(text, name="epoch_log"))
    except Exception as e:
        logger.warning(f"Failed to add epoch log to report: {e}")


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_setup(item):
    """
    Log test setup information.
    """
    logger.info(f"Starting test: {item.nodeid}")
    yield


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_teardown(item):
    """
    Log test teardown information.
    """
    yield
    logger.info(f"Completed test: {item.nodeid}")

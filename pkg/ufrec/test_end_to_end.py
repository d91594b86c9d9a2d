"""
End-to-end training runs on synthetic Markov corpora.

These fit full models and take minutes; select them with `-m e2e`
or skip them with `-m "not slow"`.
"""
import pytest

from config.config_manager import RunConfig
from dataset.synth import synth_markov
from training.experiments import (
    format_variant_table,
    run_ablation_suite,
    run_future_supervision_study,
)
from training.trainer import fit
from utils.constants import ABLATION_ORDER, CHECKPOINT_FILENAME
from utils.logger import get_logger

logger = get_logger()

E2E_OVERRIDES = {
    "hidden_dim": 32,
    "num_layers": 2,
    "num_heads": 2,
    "max_len": 20,
    "dropout_rate": 0.2,
    "lr": 0.005,
    "batch_size": 128,
    "max_epochs": 100,
    "patience": 10,
    "seed": 7,
}


@pytest.fixture(scope="module")
def markov_corpus():
    return synth_markov(200, 50, 20, transition_seed=7)


@pytest.fixture(scope="module")
def noisy_corpus():
    return synth_markov(200, 50, 20, transition_seed=7, noise_rate=0.3)


@pytest.fixture(scope="module")
def e2e_cfg():
    return RunConfig.resolve(overrides={**E2E_OVERRIDES, "horizon": 2, "tau": 3.0, "lambda_fc": 0.1})


@pytest.fixture(scope="module")
def backbone_only(markov_corpus, e2e_cfg):
    return fit(markov_corpus, e2e_cfg.with_overrides({"use_fs": False, "use_fc": False}))


@pytest.mark.e2e
@pytest.mark.slow
def test_backbone_learns_the_markov_chain(backbone_only):
    hr10 = backbone_only.valid_report.hr[10]
    logger.info(f"Backbone-only: best epoch {backbone_only.best_epoch}, valid HR@10 {hr10:.4f}")
    assert backbone_only.best_epoch <= 100
    assert hr10 >= 0.8


@pytest.mark.e2e
@pytest.mark.slow
def test_full_model_keeps_up_with_the_backbone(markov_corpus, e2e_cfg, backbone_only, run_dir):
    full = fit(markov_corpus, e2e_cfg, run_dir)
    logger.info(f"Full model valid HR@10 {full.valid_report.hr[10]:.4f}, "
                f"backbone-only {backbone_only.valid_report.hr[10]:.4f}")
    assert full.valid_report.hr[10] >= backbone_only.valid_report.hr[10] - 0.01
    assert (run_dir / CHECKPOINT_FILENAME).exists()


@pytest.mark.e2e
@pytest.mark.slow
def test_ablation_suite_on_noisy_corpus(noisy_corpus, e2e_cfg, tmp_path):
    results = run_ablation_suite(noisy_corpus, e2e_cfg, seeds=[7], run_root=tmp_path)
    table = format_variant_table(results, "test")
    logger.info(f"Ablation suite, noise rate 0.3:\n{table}")
    assert [r.name for r in results] == list(ABLATION_ORDER)
    for result in results:
        assert result.test_reports[0].num_evaluated == noisy_corpus.num_users
        assert (tmp_path / result.name.replace("/", "_") / "seed7" / CHECKPOINT_FILENAME).exists()


@pytest.mark.e2e
@pytest.mark.slow
def test_future_supervision_study_on_noisy_corpus(noisy_corpus, e2e_cfg):
    results = run_future_supervision_study(noisy_corpus, e2e_cfg, seeds=[7])
    summary = {r.name: r.summary("test")["hr@10"][0] for r in results}
    logger.info(f"Future supervision study, noise rate 0.3: {summary}")
    assert set(summary) == {"backbone", "backbone+fs", "backbone+ug-fs"}
    assert all(0.0 <= value <= 1.0 for value in summary.values())

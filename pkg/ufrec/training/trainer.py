"""
Composite objective L = L_M + L_FS + lambda * L_FC, one optimization step,
and the epoch loop with validation-based early stopping.
"""
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from config.config_manager import RunConfig
from dataset.batching import Batch, make_batches
from dataset.corpus import InteractionCorpus, SplitView, split_leave_one_out
from dataset.instances import expand_instances
from evaluation.evaluator import EvalReport, evaluate
from models.backbone import Backbone, main_loss
from models.encoder import EncoderFactory
from models.futurecl import horizon_pool, infonce, similarity_stats
from models.futuresup import confidence_weight, entropy, future_loss
from models.ufrec_model import UFRecModel
from numcore import ops
from numcore.tensor import Tape, Tensor
from training.checkpoint import save_checkpoint
from training.optimizer import Adam
from utils.constants import (
    CHECKPOINT_FILENAME,
    DIAGNOSTICS_FILENAME,
    ENTROPY_EPS,
    EPOCH_LOG_COLUMNS,
    EPOCH_LOG_FILENAME,
    REPORT_FILENAME,
    RESOLVED_CONFIG_FILENAME,
)
from utils.exceptions import NumericAbort, NumericError
from utils.logger import get_logger

logger = get_logger()


@dataclass
class LossTerms:
    """Graph outputs of one forward pass plus numeric diagnostics."""

    total: Tensor
    main: Tensor
    fs: Tensor
    fc: Tensor
    omega: np.ndarray
    step_ce: List[float] = field(default_factory=list)
    fc_rows: int = 0
    fc_gap: float = 0.0


@dataclass
class StepReport:
    """Scalars of one training step."""

    loss_main: float
    loss_fs: float
    loss_fc: float
    loss_total: float
    mean_omega: float
    min_omega: float
    max_omega: float
    fs_valid_fraction: float
    fc_valid_fraction: float
    step_ce: List[float] = field(default_factory=list)
    fc_similarity_gap: float = 0.0
    grad_norm: float = 0.0


@dataclass
class EpochRecord:
    """One line of the epoch log."""

    epoch: int
    loss_main: float
    loss_fs: float
    loss_fc: float
    mean_omega: float
    valid_hr10: float
    valid_ndcg10: float
    elapsed_seconds: float
    diagnostics: Dict[str, object] = field(default_factory=dict)

    def tsv(self) -> str:
        values = (self.epoch, self.loss_main, self.loss_fs, self.loss_fc, self.mean_omega,
                  self.valid_hr10, self.valid_ndcg10, self.elapsed_seconds)
        return "\t".join(str(v) if isinstance(v, int) else f"{v:.6f}" for v in values)


@dataclass
class FitResult:
    """Best model and everything needed to reproduce the summary."""

    model: UFRecModel
    best_epoch: int
    best_metric: float
    history: List[EpochRecord]
    valid_report: EvalReport
    test_report: EvalReport
    run_dir: Optional[Path] = None


def _numeric_omega(probs: np.ndarray, tau: float) -> np.ndarray:
    safe = np.where(probs >= ENTROPY_EPS, probs, 1.0)
    ent = -np.sum(np.where(probs >= ENTROPY_EPS, safe * np.log(safe), 0.0), axis=-1)
    return np.exp(-ent / tau)


def compute_losses(model: UFRecModel, batch: Batch, run_cfg: RunConfig,
                   rng: Optional[np.random.Generator] = None, detach_omega: bool = True) -> LossTerms:
    """
    Forward pass of the full objective.

    Ablation switches: use_fs=False drops L_FS, use_ug=False replaces omega by 1,
    use_fc=False drops L_FC.
    """
    tr, fs_cfg, cl_cfg = run_cfg.train, run_cfg.future_sup, run_cfg.contrastive
    backbone = model.backbone
    h = backbone.forward(batch.prefixes, batch.lengths, rng)
    logits, probs = backbone.predict(h)
    loss_main = main_loss(logits, batch.next_targets)

    omega_values = _numeric_omega(probs.data, fs_cfg.tau)
    loss_fs: Tensor = Tensor(0.0)
    step_ce: List[float] = []
    if tr.use_fs and model.future_sup is not None:
        if tr.use_ug:
            omega = confidence_weight(entropy(probs), fs_cfg.tau, detach=detach_omega)
        else:
            omega = Tensor(np.ones(len(batch)))
        omega_values = omega.data
        future_logits = model.future_sup.future_logits(h, backbone.item_emb)
        loss_fs = future_loss(future_logits, batch.future_targets, batch.fs_valid, omega, fs_cfg.fs_reduction)
        valid = batch.fs_valid
        if valid.any():
            shifted = future_logits.data[valid] - future_logits.data[valid].max(axis=-1, keepdims=True)
            log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
            picked = np.take_along_axis(log_probs, batch.future_targets[valid][..., None], axis=-1)[..., 0]
            step_ce = [float(v) for v in -picked.mean(axis=0)]

    loss_fc: Tensor = Tensor(0.0)
    fc_rows, fc_gap = 0, 0.0
    if tr.use_fc and model.contrastive is not None:
        valid = np.flatnonzero(batch.fc_valid)
        fc_rows = int(valid.size)
        if valid.size >= 2:
            hz = model.contrastive.project_state(ops.gather_rows(h, valid))
            z = horizon_pool(batch.horizon_items[valid], backbone.item_emb)
            loss_fc = infonce(hz, z, np.ones(valid.size, dtype=bool), cl_cfg.fc_temperature)
            fc_gap = similarity_stats(hz.data, z.data).similarity_gap
        else:
            logger.warning(f"Batch {batch.batch_id}: {valid.size} fc_valid row(s), L_FC set to 0")

    total = ops.add(ops.add(loss_main, loss_fs), ops.scalar_mul(loss_fc, cl_cfg.lambda_fc))
    return LossTerms(total, loss_main, loss_fs, loss_fc, omega_values, step_ce, fc_rows, fc_gap)


def train_step(model: UFRecModel, optimizer: Adam, batch: Batch, run_cfg: RunConfig,
               rng: Optional[np.random.Generator] = None) -> StepReport:
    """
    Forward, backward and one Adam update.

    Raises:
        NumericAbort: Any loss component is non-finite (parameters untouched)
    """
    with Tape() as tape:
        try:
            terms = compute_losses(model, batch, run_cfg, rng)
        except NumericError as e:
            logger.error(f"Numeric failure at batch {batch.batch_id}: {e}")
            raise NumericAbort(batch.batch_id, {"error": str(e)}) from e

    components = {
        "L_M": terms.main.item(),
        "L_FS": terms.fs.item(),
        "L_FC": terms.fc.item(),
        "L_total": terms.total.item(),
    }
    if not all(math.isfinite(v) for v in components.values()):
        logger.error(f"Non-finite loss at batch {batch.batch_id}: {components}")
        raise NumericAbort(batch.batch_id, components)

    optimizer.zero_grad()
    tape.backward(terms.total)
    grad_norm = optimizer.step()

    valid_omega = terms.omega[batch.fs_valid] if batch.fs_valid.any() else terms.omega
    n = len(batch)
    return StepReport(
        loss_main=components["L_M"],
        loss_fs=components["L_FS"],
        loss_fc=components["L_FC"],
        loss_total=components["L_total"],
        mean_omega=float(valid_omega.mean()),
        min_omega=float(valid_omega.min()),
        max_omega=float(valid_omega.max()),
        fs_valid_fraction=float(batch.fs_valid.sum() / n),
        fc_valid_fraction=float(batch.fc_valid.sum() / n),
        step_ce=terms.step_ce,
        fc_similarity_gap=terms.fc_gap,
        grad_norm=grad_norm,
    )


def build_optimizer(model: UFRecModel, run_cfg: RunConfig) -> Adam:
    tr = run_cfg.train
    return Adam(model.parameters(), lr=tr.lr, beta1=tr.beta1, beta2=tr.beta2, eps=tr.adam_eps,
                grad_clip=tr.grad_clip)


def build_model(run_cfg: RunConfig, encoder_factory: EncoderFactory = Backbone) -> UFRecModel:
    """Model initialized from the train seed."""
    return UFRecModel(run_cfg, np.random.default_rng(run_cfg.train.seed), encoder_factory)


def _summarize_epoch(epoch: int, reports: List[StepReport], valid: EvalReport, elapsed: float) -> EpochRecord:
    def avg(attr):
        return float(np.mean([getattr(r, attr) for r in reports])) if reports else 0.0

    step_ce = [r.step_ce for r in reports if r.step_ce]
    diagnostics = {
        "epoch": epoch,
        "omega_mean": avg("mean_omega"),
        "omega_min": float(min((r.min_omega for r in reports), default=0.0)),
        "omega_max": float(max((r.max_omega for r in reports), default=0.0)),
        "fs_valid_fraction": avg("fs_valid_fraction"),
        "fc_valid_fraction": avg("fc_valid_fraction"),
        "fc_similarity_gap": avg("fc_similarity_gap"),
        "step_ce": [float(v) for v in np.mean(step_ce, axis=0)] if step_ce else [],
        "grad_norm": avg("grad_norm"),
        "valid": {f"hr@{m}": valid.hr[m] for m in valid.hr} | {f"ndcg@{m}": valid.ndcg[m] for m in valid.ndcg},
    }
    return EpochRecord(epoch, avg("loss_main"), avg("loss_fs"), avg("loss_fc"), avg("mean_omega"),
                       valid.hr.get(10, 0.0), valid.ndcg.get(10, 0.0), elapsed, diagnostics)


def _prepare_run_dir(run_dir: Path, run_cfg: RunConfig) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / RESOLVED_CONFIG_FILENAME).write_text(run_cfg.to_ini(), encoding="utf-8")
    (run_dir / EPOCH_LOG_FILENAME).write_text("\t".join(EPOCH_LOG_COLUMNS) + "\n", encoding="utf-8")
    (run_dir / DIAGNOSTICS_FILENAME).write_text("", encoding="utf-8")
    return run_dir


def fit(corpus: InteractionCorpus, run_cfg: RunConfig, run_dir: Optional[Path] = None,
        evaluate_fn: Callable[[SplitView, object], EvalReport] = None,
        encoder_factory: EncoderFactory = Backbone) -> FitResult:
    """
    Train with early stopping on the validation metric.

    Args:
        corpus: Filtered corpus; split internally with leave-one-out
        run_cfg: Resolved configuration (backbone.num_items must match the corpus)
        run_dir: When given, receives config, epoch log, diagnostics, best checkpoint and report
        evaluate_fn: Validation hook, defaults to evaluate(view, backbone)
        encoder_factory: Sequence encoder to train, the Transformer backbone by default

    Returns:
        FitResult holding the model restored to its best validation epoch
    """
    tr = run_cfg.train
    if run_cfg.backbone.num_items != corpus.num_items:
        run_cfg = run_cfg.with_overrides({"num_items": corpus.num_items})
    if evaluate_fn is None:
        def evaluate_fn(view, backbone):
            return evaluate(view, backbone, tr.eval_batch_size)

    train_view, valid_view, test_view = split_leave_one_out(corpus)
    horizon = run_cfg.future_sup.horizon
    instances = expand_instances(train_view, horizon)
    model = build_model(run_cfg, encoder_factory)
    optimizer = build_optimizer(model, run_cfg)
    dropout_rng = np.random.default_rng([tr.seed, 2])
    if run_dir is not None:
        run_dir = _prepare_run_dir(run_dir, run_cfg)

    logger.info(f"Training on {len(instances)} instances, {corpus.num_users} users, "
                f"{model.num_parameters()} parameters (use_fs={tr.use_fs}, use_ug={tr.use_ug}, use_fc={tr.use_fc})")

    best_metric, best_epoch, best_state, bad_epochs = -math.inf, 0, model.state_dict(), 0
    history: List[EpochRecord] = []
    start = time.perf_counter()
    for epoch in range(1, tr.max_epochs + 1):
        model.train()
        batches = make_batches(instances, tr.batch_size, run_cfg.backbone.max_len,
                               shuffle_seed=tr.seed * 100003 + epoch, horizon=horizon)
        if tr.progress_bar:
            batches = tqdm(batches, total=math.ceil(len(instances) / tr.batch_size), desc=f"epoch {epoch}")
        reports = [train_step(model, optimizer, batch, run_cfg, dropout_rng) for batch in batches]

        model.eval()
        valid_report = evaluate_fn(valid_view, model.backbone)
        record = _summarize_epoch(epoch, reports, valid_report, time.perf_counter() - start)
        history.append(record)
        metric = valid_report.metric(tr.early_stop_metric)
        logger.info(f"Epoch {epoch}: L_M={record.loss_main:.4f} L_FS={record.loss_fs:.4f} "
                    f"L_FC={record.loss_fc:.4f} omega={record.mean_omega:.4f} "
                    f"valid {tr.early_stop_metric}={metric:.4f}")

        if metric > best_metric:
            best_metric, best_epoch, best_state, bad_epochs = metric, epoch, model.state_dict(), 0
            if run_dir is not None:
                save_checkpoint(run_dir / CHECKPOINT_FILENAME, best_state, run_cfg)
        else:
            bad_epochs += 1

        if run_dir is not None:
            with open(run_dir / EPOCH_LOG_FILENAME, "a", encoding="utf-8") as f:
                f.write(record.tsv() + "\n")
            with open(run_dir / DIAGNOSTICS_FILENAME, "a", encoding="utf-8") as f:
                f.write(json.dumps(record.diagnostics) + "\n")

        if bad_epochs >= tr.patience:
            logger.info(f"Early stopping after epoch {epoch}; best epoch {best_epoch} "
                        f"({tr.early_stop_metric}={best_metric:.4f})")
            break

    model.load_state_dict(best_state)
    model.eval()
    valid_report = evaluate(valid_view, model.backbone, tr.eval_batch_size)
    test_report = evaluate(test_view, model.backbone, tr.eval_batch_size)
    if run_dir is not None:
        write_final_report(run_dir / REPORT_FILENAME, [valid_report, test_report], tr.seed,
                           {"best_epoch": best_epoch, "best_metric": best_metric})
    return FitResult(model, best_epoch, best_metric, history, valid_report, test_report, run_dir)


def write_final_report(path: Path, reports: List[EvalReport], seed: int, extra: Dict[str, object]) -> None:
    """Human-readable tables followed by machine lines."""
    lines = [f"# {key}: {value}" for key, value in extra.items()]
    for report in reports:
        lines.append(report.format_table())
    lines.append("# metric\tm\tvalue\tsplit\tseed")
    for report in reports:
        lines.extend(report.to_lines(seed))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote final report to {path}")

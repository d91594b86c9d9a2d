"""
Experiment drivers: ablation variants, the unweighted vs uncertainty-guided
future supervision study, hyperparameter grids and multi-seed summaries.

Every variant of one experiment shares seeds, so all of them see identical
initial backbones and identical batch streams.
"""
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config.config_manager import RunConfig
from dataset.corpus import InteractionCorpus
from evaluation.evaluator import EvalReport
from training.trainer import fit
from utils.constants import ABLATION_ORDER, ABLATIONS, EVAL_CUTOFFS, FUTURE_SUPERVISION_STUDY
from utils.logger import get_logger

logger = get_logger()


@dataclass
class VariantResult:
    """Reports of one variant over all seeds."""

    name: str
    overrides: Dict[str, object]
    seeds: List[int] = field(default_factory=list)
    valid_reports: List[EvalReport] = field(default_factory=list)
    test_reports: List[EvalReport] = field(default_factory=list)

    def summary(self, split: str = "test") -> Dict[str, Tuple[float, float]]:
        reports = self.test_reports if split == "test" else self.valid_reports
        return summarize_seeds(reports)


def summarize_seeds(reports: Sequence[EvalReport]) -> Dict[str, Tuple[float, float]]:
    """metric name -> (mean, sample std) over seed runs; std is 0 for a single run."""
    out = {}
    if not reports:
        return out
    for m in sorted(reports[0].hr):
        for kind in ("hr", "ndcg"):
            values = np.array([r.metric(f"{kind}@{m}") for r in reports])
            std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
            out[f"{kind}@{m}"] = (float(values.mean()), std)
    return out


def run_variants(corpus: InteractionCorpus, base_cfg: RunConfig, variants: Mapping[str, Mapping[str, object]],
                 seeds: Optional[Sequence[int]] = None, run_root: Optional[Path] = None) -> List[VariantResult]:
    """Train every variant under every seed."""
    seeds = list(seeds or base_cfg.seed_list)
    results = []
    for name, overrides in variants.items():
        result = VariantResult(name, dict(overrides))
        for seed in seeds:
            cfg = base_cfg.with_overrides({**overrides, "seed": seed})
            run_dir = None
            if run_root is not None:
                run_dir = Path(run_root) / name.replace("/", "_") / f"seed{seed}"
            logger.info(f"Variant {name} seed {seed}")
            fitted = fit(corpus, cfg, run_dir)
            result.seeds.append(seed)
            result.valid_reports.append(fitted.valid_report)
            result.test_reports.append(fitted.test_report)
        results.append(result)
    return results


def run_ablation_suite(corpus: InteractionCorpus, base_cfg: RunConfig, seeds: Optional[Sequence[int]] = None,
                       run_root: Optional[Path] = None) -> List[VariantResult]:
    """Full model, w/o L_FS, w/o UG, w/o L_FC and backbone-only."""
    variants = {name: ABLATIONS[name] for name in ABLATION_ORDER}
    return run_variants(corpus, base_cfg, variants, seeds, run_root)


def run_future_supervision_study(corpus: InteractionCorpus, base_cfg: RunConfig,
                                 seeds: Optional[Sequence[int]] = None,
                                 run_root: Optional[Path] = None) -> List[VariantResult]:
    """Backbone vs backbone + unweighted FS vs backbone + uncertainty-guided FS."""
    return run_variants(corpus, base_cfg, FUTURE_SUPERVISION_STUDY, seeds, run_root)


def grid_points(grid: Mapping[str, Iterable[object]]) -> List[Dict[str, object]]:
    keys = list(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(list(grid[k]) for k in keys))]


def run_grid(corpus: InteractionCorpus, base_cfg: RunConfig, grid: Mapping[str, Iterable[object]],
             seeds: Optional[Sequence[int]] = None, run_root: Optional[Path] = None) -> List[VariantResult]:
    """
    Enumerate a hyperparameter grid, e.g. {"horizon": (2, 3), "tau": (3.0,), "lambda_fc": (0.1, 0.2)}.

    Each point is validated against the supported grids unless the base
    config allows off-grid values.
    """
    variants = {}
    for point in grid_points(grid):
        base_cfg.with_overrides(point).validate()
        variants[",".join(f"{k}={v}" for k, v in point.items())] = point
    return run_variants(corpus, base_cfg, variants, seeds, run_root)


def format_variant_table(results: Sequence[VariantResult], split: str = "test",
                         cutoffs: Sequence[int] = EVAL_CUTOFFS) -> str:
    """Metrics as rows, variants as columns (mean over seeds)."""
    summaries = [r.summary(split) for r in results]
    width = max([12] + [len(r.name) + 2 for r in results])
    lines = [f"{'Metric':<10}" + "".join(f"{r.name:>{width}}" for r in results)]
    for m in cutoffs:
        for kind in ("hr", "ndcg"):
            key = f"{kind}@{m}"
            label = f"{kind.upper()}@{m}"
            lines.append(f"{label:<10}" + "".join(f"{s[key][0]:>{width}.4f}" for s in summaries))
    return "\n".join(lines)

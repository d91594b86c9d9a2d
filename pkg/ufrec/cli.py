"""
Command-line entry point.

    python ufrec/cli.py prepare RAW --out DIR
    python ufrec/cli.py train [--config FILE] [--set key=value ...] [--seeds 1,2,3] [--ablate w/o-ug]
    python ufrec/cli.py eval --checkpoint FILE [--split test] [--dump-ranks]
    python ufrec/cli.py ablate [--study fs]
    python ufrec/cli.py synth --out FILE
    python ufrec/cli.py sweep --horizon 2,3 --tau 1,3 --lambda 0.1,0.2

Exit codes: 0 success, 1 config error, 2 data error, 3 numeric abort.
"""
import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

if __package__ in (None, ""):
    sys.path.insert(0, str(Path(__file__).resolve().parent))

from config.config_manager import RunConfig, RunSection, config  # noqa: E402
from dataset.corpus import InteractionCorpus, load_corpus, split_leave_one_out, write_corpus  # noqa: E402
from dataset.synth import synth_markov  # noqa: E402
from evaluation.evaluator import evaluate, evaluate_by_length_group  # noqa: E402
from training.checkpoint import backbone_from_state, read_checkpoint  # noqa: E402
from training.experiments import (  # noqa: E402
    VariantResult,
    format_variant_table,
    run_ablation_suite,
    run_future_supervision_study,
    run_grid,
    summarize_seeds,
)
from training.trainer import fit  # noqa: E402
from utils.constants import (  # noqa: E402
    ABLATIONS,
    EXIT_CONFIG_ERROR,
    EXIT_DATA_ERROR,
    EXIT_NUMERIC_ABORT,
    EXIT_OK,
)
from utils.exceptions import CheckpointError, ConfigError, DataError, NumericAbort, UFRecError  # noqa: E402
from utils.helpers import get_run_dir  # noqa: E402
from utils.logger import get_logger  # noqa: E402

logger = get_logger()

CORPUS_FILENAME = "corpus.txt"
ITEM_MAP_FILENAME = "item_map.tsv"
USER_MAP_FILENAME = "user_map.tsv"
STATS_FILENAME = "stats.txt"


# ============================
# Argument helpers
# ============================

def parse_overrides(pairs: Optional[Sequence[str]]) -> Dict[str, str]:
    """
    Turn ["key=value", ...] into a dict.

    Raises:
        ConfigError: A pair without '='
    """
    overrides = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"expected key=value, got {pair!r}")
        overrides[key.strip()] = value.strip()
    return overrides


def _csv(text: Optional[str], kind=float) -> List:
    if not text:
        return []
    try:
        return [kind(token) for token in text.split(",") if token.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list, got {text!r}") from None


def resolve_config(args) -> RunConfig:
    """Config file + --set overrides + the dedicated flags, in that precedence order."""
    overrides: Dict[str, object] = parse_overrides(getattr(args, "set", None))
    ablate = getattr(args, "ablate", None)
    if ablate:
        overrides.update(ABLATIONS[ablate])
    if getattr(args, "seeds", None):
        overrides["seeds"] = args.seeds
    if getattr(args, "corpus", None):
        overrides["corpus_path"] = args.corpus
    if getattr(args, "run_dir", None):
        overrides["run_dir"] = args.run_dir
    allow_offgrid = True if getattr(args, "allow_offgrid", False) else None
    return RunConfig.resolve(args.config, overrides, allow_offgrid)


def _resolve_path(raw: str) -> Path:
    path = Path(raw)
    if path.is_absolute() or path.exists():
        return path
    return config.root_dir / path


def _run_root(run_cfg: RunConfig, name: str) -> Path:
    """Timestamped directory under runs/ unless a run_dir was configured."""
    if run_cfg.run.run_dir == RunSection.run_dir:
        return get_run_dir(name)
    return _resolve_path(run_cfg.run.run_dir)


def load_run_corpus(run_cfg: RunConfig) -> InteractionCorpus:
    data = run_cfg.data
    return load_corpus(_resolve_path(data.corpus_path), data.min_core, data.fixpoint_filter)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Wrote {path}")


def _format_summary(summary: Dict[str, tuple], seeds: Sequence[int]) -> str:
    lines = [f"# seeds: {','.join(str(s) for s in seeds)}"]
    for key, (mean, std) in summary.items():
        lines.append(f"{key.upper():<10}{mean:.4f} ± {std:.4f}")
    return "\n".join(lines)


# ============================
# Subcommands
# ============================

def cmd_prepare(args) -> int:
    """Filter a raw corpus and write corpus, id maps and the stats line."""
    corpus = load_corpus(Path(args.raw), args.min_core, not args.single_pass)
    out_dir = Path(args.out)
    write_corpus(corpus, out_dir / CORPUS_FILENAME)
    _write_text(out_dir / ITEM_MAP_FILENAME,
                "".join(f"{token}\t{index}\n" for token, index in corpus.item_map.items()))
    _write_text(out_dir / USER_MAP_FILENAME,
                "".join(f"{token}\t{index}\n" for token, index in corpus.user_map.items()))
    stats_line = corpus.stats().format_line(args.name or Path(args.raw).stem)
    _write_text(out_dir / STATS_FILENAME, stats_line + "\n")
    print(stats_line)
    return EXIT_OK


def cmd_train(args) -> int:
    """One fit per seed; a mean ± std summary when several seeds run."""
    run_cfg = resolve_config(args)
    corpus = load_run_corpus(run_cfg)
    seeds = run_cfg.seed_list
    run_root = _run_root(run_cfg, args.command)
    test_reports = []
    for seed in seeds:
        seed_cfg = run_cfg.with_overrides({"seed": seed})
        run_dir = run_root if len(seeds) == 1 else run_root / f"seed{seed}"
        result = fit(corpus, seed_cfg, run_dir)
        print(f"seed {seed}: best epoch {result.best_epoch}")
        print(result.test_report.format_table())
        test_reports.append(result.test_report)
    if len(seeds) > 1:
        summary = _format_summary(summarize_seeds(test_reports), seeds)
        _write_text(run_root / "summary.txt", summary + "\n")
        print(summary)
    return EXIT_OK


def cmd_eval(args) -> int:
    """Evaluate a checkpoint on one split; table to stdout, machine lines to file."""
    state, stored_cfg = read_checkpoint(Path(args.checkpoint))
    run_cfg = stored_cfg
    if args.config or args.set:
        run_cfg = RunConfig.resolve(args.config, parse_overrides(args.set), allow_offgrid=True)
        run_cfg = run_cfg.with_overrides({"num_items": stored_cfg.backbone.num_items})
    if args.corpus:
        run_cfg = run_cfg.with_overrides({"corpus_path": args.corpus})
    corpus = load_run_corpus(run_cfg)
    if corpus.num_items != run_cfg.backbone.num_items:
        raise CheckpointError(f"checkpoint has {run_cfg.backbone.num_items} items, "
                              f"corpus has {corpus.num_items}")
    backbone = backbone_from_state(state, run_cfg)

    _, valid_view, test_view = split_leave_one_out(corpus)
    view = valid_view if args.split == "valid" else test_view
    report = evaluate(view, backbone, run_cfg.train.eval_batch_size)
    print(report.format_table())

    out = Path(args.out) if args.out else Path(args.checkpoint).parent / f"eval_{args.split}.txt"
    lines = ["# metric\tm\tvalue\tsplit\tseed"] + report.to_lines(run_cfg.train.seed)

    if args.by_length:
        lengths = [len(user) for user in corpus.users]
        sequences = [user.items for user in corpus.users]
        for group in evaluate_by_length_group(view, backbone, lengths, sequences,
                                              batch_size=run_cfg.train.eval_batch_size):
            print(group.stats.format_line(f"|S_u| {group.label}"))
            print(group.report.format_table())
            lines.extend(group.report.to_lines(run_cfg.train.seed))
    _write_text(out, "\n".join(lines) + "\n")

    if args.dump_ranks:
        users = corpus.users
        rows = [f"{users[u].user_id}\t{target}\t{rank}"
                for u, target, rank in zip(view.user_indices, view.targets, report.ranks)]
        _write_text(out.with_name(f"ranks_{args.split}.tsv"), "user\ttarget\trank\n" + "\n".join(rows) + "\n")
    return EXIT_OK


def _print_variants(results: List[VariantResult], run_root: Path, filename: str) -> None:
    table = "\n\n".join(f"[{split}]\n{format_variant_table(results, split)}" for split in ("valid", "test"))
    _write_text(run_root / filename, table + "\n")
    print(table)


def cmd_ablate(args) -> int:
    """Ablation variants (or the future-supervision study) under shared seeds."""
    run_cfg = resolve_config(args)
    corpus = load_run_corpus(run_cfg)
    run_root = _run_root(run_cfg, args.command)
    if args.study == "fs":
        results = run_future_supervision_study(corpus, run_cfg, run_root=run_root)
    else:
        results = run_ablation_suite(corpus, run_cfg, run_root=run_root)
    _print_variants(results, run_root, f"{args.study}_table.txt")
    return EXIT_OK


def cmd_sweep(args) -> int:
    """Train every point of a K / tau / lambda grid."""
    run_cfg = resolve_config(args)
    grid = {}
    if args.horizon:
        grid["horizon"] = _csv(args.horizon, int)
    if args.tau:
        grid["tau"] = _csv(args.tau, float)
    if args.lambda_fc:
        grid["lambda_fc"] = _csv(args.lambda_fc, float)
    if not grid:
        raise ConfigError("sweep needs at least one of --horizon, --tau, --lambda")
    corpus = load_run_corpus(run_cfg)
    run_root = _run_root(run_cfg, args.command)
    results = run_grid(corpus, run_cfg, grid, run_root=run_root)
    _print_variants(results, run_root, "sweep_table.txt")
    return EXIT_OK


def cmd_synth(args) -> int:
    """Write a synthetic Markov corpus in the input text format."""
    if not 0.0 <= args.noise_rate < 1.0:
        raise ConfigError(f"noise_rate must be in [0, 1), got {args.noise_rate}")
    try:
        corpus = synth_markov(args.users, args.items, args.length, args.seed, args.noise_rate)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    write_corpus(corpus, Path(args.out))
    print(corpus.stats().format_line(Path(args.out).stem))
    return EXIT_OK


# ============================
# Parser
# ============================

def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="Run-config file (INI or key = value lines)")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override one config key")
    parser.add_argument("--seeds", default=None, help="Comma-separated seeds, e.g. 1,2,3")
    parser.add_argument("--corpus", default=None, help="Prepared corpus file")
    parser.add_argument("--run-dir", default=None, help="Directory receiving run artifacts")
    parser.add_argument("--allow-offgrid", action="store_true", help="Accept K, tau, lambda outside the supported grids")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ufrec", description="Uncertainty-guided future supervision for sequential recommendation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="k-core filter and remap a raw corpus")
    p.add_argument("raw", help="Raw `user item item ...` text file")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--min-core", type=int, default=config.getint("Data", "min_core", 5))
    p.add_argument("--single-pass", action="store_true", help="Filter users then items once instead of to a fixpoint")
    p.add_argument("--name", default=None, help="Dataset name in the stats line")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="Train one configuration")
    _add_run_options(p)
    p.add_argument("--ablate", choices=sorted(ABLATIONS), default=None, help="Apply an ablation variant")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--corpus", default=None)
    p.add_argument("--out", default=None, help="Machine-readable report file")
    p.add_argument("--dump-ranks", action="store_true", help="Write the rank of every target")
    p.add_argument("--by-length", action="store_true", help="Also report per user-length group")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="Run every ablation variant under shared seeds")
    _add_run_options(p)
    p.add_argument("--study", choices=("ablation", "fs"), default="ablation")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="Hyperparameter grid")
    _add_run_options(p)
    p.add_argument("--horizon", default=None, help="K values, e.g. 2,3,4,5")
    p.add_argument("--tau", default=None, help="tau values, e.g. 1,2,3")
    p.add_argument("--lambda", dest="lambda_fc", default=None, help="lambda values, e.g. 0.05,0.1")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="Generate a synthetic Markov corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=50)
    p.add_argument("--length", type=int, default=20)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--noise-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR
    except DataError as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA_ERROR
    except NumericAbort as e:
        logger.error(f"Training aborted: {e}")
        return EXIT_NUMERIC_ABORT
    except UFRecError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""
Constants file for the UFRec framework.
Contains reserved ids, numeric tolerances, supported hyperparameter grids and exit codes.
"""

# Item id reserved for left padding; real items live in [1, V]
PAD_ID = 0

# Numeric Constants
MASK_VALUE = -1e9
ENTROPY_EPS = 1e-12
ROW_SUM_TOLERANCE = 1e-4

# Evaluation cutoffs reported for every split
EVAL_CUTOFFS = (10, 20)
EARLY_STOP_METRICS = ("hr@10", "hr@20", "ndcg@10", "ndcg@20")

# Supported hyperparameter grids
HORIZON_GRID = (2, 3, 4, 5)
TAU_GRID = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
LAMBDA_GRID = (0.01, 0.05, 0.1, 0.2, 0.5, 1.0)

FS_REDUCTIONS = ("valid_mean", "batch_mean")

# Ablation variants: name -> TrainConfig overrides
ABLATIONS = {
    "full": {},
    "w/o-fs": {"use_fs": False},
    "w/o-ug": {"use_ug": False},
    "w/o-fc": {"use_fc": False},
    "backbone": {"use_fs": False, "use_fc": False},
}
ABLATION_ORDER = ("full", "w/o-fs", "w/o-ug", "w/o-fc", "backbone")

# Backbone vs unweighted / uncertainty-guided future supervision
FUTURE_SUPERVISION_STUDY = {
    "backbone": {"use_fs": False, "use_fc": False},
    "backbone+fs": {"use_fs": True, "use_ug": False, "use_fc": False},
    "backbone+ug-fs": {"use_fs": True, "use_ug": True, "use_fc": False},
}

# User history length groups (inclusive bounds, None = unbounded)
LENGTH_GROUPS = ((5, 5), (6, 8), (9, None))

# Checkpoint format
CHECKPOINT_FORMAT_VERSION = 1
CHECKPOINT_FILENAME = "best_checkpoint.npz"
RESOLVED_CONFIG_FILENAME = "resolved_config.ini"
EPOCH_LOG_FILENAME = "epoch_log.tsv"
DIAGNOSTICS_FILENAME = "diagnostics.jsonl"
REPORT_FILENAME = "final_report.txt"

EPOCH_LOG_COLUMNS = (
    "epoch",
    "loss_main",
    "loss_fs",
    "loss_fc",
    "mean_omega",
    "valid_hr@10",
    "valid_ndcg@10",
    "elapsed_seconds",
)

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_DATA_ERROR = 2
EXIT_NUMERIC_ABORT = 3

"""
Configuration Manager for the UFRec framework.
Reads defaults from config.ini and resolves run configurations on top of them.
"""
import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from utils.constants import (
    EARLY_STOP_METRICS,
    FS_REDUCTIONS,
    HORIZON_GRID,
    LAMBDA_GRID,
    TAU_GRID,
)
from utils.exceptions import ConfigError


class ConfigManager:
    """Manages the default settings shipped in config.ini."""

    _instance = None
    _config = None

    def __new__(cls):
        """Singleton pattern to ensure single configuration instance."""
        if cls._instance is None:
            cls._instance = super(ConfigManager, cls).__new__(cls)
            cls._instance._load_config()
        return cls._instance

    def _load_config(self):
        """Load configuration from config.ini file."""
        parser = configparser.ConfigParser()
        config_file = Path(__file__).parent / "config.ini"

        if not config_file.exists():
            raise FileNotFoundError(f"Configuration file not found: {config_file}")

        parser.read(config_file, encoding="utf-8")
        self._config = parser

    @property
    def root_dir(self) -> Path:
        """Repository root (the directory holding requirements.txt)."""
        return Path(__file__).parent.parent.parent

    def get(self, section, option, fallback=None):
        """Get configuration value from specified section and option."""
        return self._config.get(section, option, fallback=fallback)

    def getint(self, section, option, fallback=None):
        """Get integer configuration value."""
        return self._config.getint(section, option, fallback=fallback)

    def getfloat(self, section, option, fallback=None):
        """Get float configuration value."""
        return self._config.getfloat(section, option, fallback=fallback)

    def getboolean(self, section, option, fallback=None):
        """Get boolean configuration value."""
        return self._config.getboolean(section, option, fallback=fallback)

    def section(self, name) -> Dict[str, str]:
        """Raw string values of one section."""
        if not self._config.has_section(name):
            return {}
        return dict(self._config.items(name))

    def _dir(self, option, fallback):
        full_path = self.root_dir / self.get("Paths", option, fallback)
        full_path.mkdir(parents=True, exist_ok=True)
        return full_path

    @property
    def runs_path(self) -> Path:
        """Get run directory root."""
        return self._dir("runs_path", "runs")

    @property
    def logs_path(self) -> Path:
        """Get application log directory."""
        return self._dir("logs_path", "ufrec/logs")

    @property
    def reference_data_path(self) -> Path:
        """Get reference values file path."""
        return self.root_dir / self.get("Paths", "reference_data_path", "data/reference_values.json")


# Global configuration instance
config = ConfigManager()


@dataclass(frozen=True)
class BackboneConfig:
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 2
    max_len: int = 50
    dropout_rate: float = 0.2
    ffn_multiplier: int = 4
    layer_norm_eps: float = 1e-8
    init_std: float = 0.02
    num_items: int = 0


@dataclass(frozen=True)
class FutureSupConfig:
    horizon: int = 2
    tau: float = 3.0
    fs_reduction: str = "valid_mean"


@dataclass(frozen=True)
class ContrastiveConfig:
    lambda_fc: float = 0.1
    fc_temperature: float = 1.0


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    seed: int = 42
    use_fs: bool = True
    use_ug: bool = True
    use_fc: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 0.0
    early_stop_metric: str = "hr@10"
    eval_batch_size: int = 512
    progress_bar: bool = False


@dataclass(frozen=True)
class DataConfig:
    corpus_path: str = "data/sample_interactions.txt"
    min_core: int = 5
    fixpoint_filter: bool = True


@dataclass(frozen=True)
class RunSection:
    run_dir: str = "runs/default"
    seeds: str = ""
    allow_offgrid: bool = False


# INI section name -> (RunConfig attribute, dataclass)
SECTIONS: Tuple[Tuple[str, str, type], ...] = (
    ("Backbone", "backbone", BackboneConfig),
    ("FutureSup", "future_sup", FutureSupConfig),
    ("ContrastiveLearning", "contrastive", ContrastiveConfig),
    ("Train", "train", TrainConfig),
    ("Data", "data", DataConfig),
    ("Run", "run", RunSection),
)

_FLAT_SECTION = "__flat__"


def _key_index() -> Dict[str, Tuple[str, str, dataclasses.Field]]:
    index = {}
    for section, attr, cls in SECTIONS:
        for f in dataclasses.fields(cls):
            index[f.name] = (section, attr, f)
    return index


def _coerce(key: str, raw, f: dataclasses.Field):
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    if not isinstance(raw, str):
        raw_str = str(raw)
    else:
        raw_str = raw.strip()
    try:
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            lowered = raw_str.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw_str)
        if kind == "int":
            return int(raw_str)
        if kind == "float":
            return float(raw_str)
        return raw_str
    except ValueError:
        raise ConfigError(f"config key '{key}' expects {kind}, got {raw!r}") from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration of one training run."""

    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    future_sup: FutureSupConfig = field(default_factory=FutureSupConfig)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    run: RunSection = field(default_factory=RunSection)

    # ----------------------------
    # Construction
    # ----------------------------

    @classmethod
    def from_defaults(cls) -> "RunConfig":
        """Config built from config.ini alone."""
        values = {}
        for section, _, cls_ in SECTIONS:
            names = {f.name for f in dataclasses.fields(cls_)}
            for key, raw in config.section(section).items():
                if key in names:
                    values[key] = raw
        return cls().with_overrides(values)

    @classmethod
    def resolve(cls, path: Optional[Path] = None, overrides: Optional[Mapping[str, object]] = None,
                allow_offgrid: Optional[bool] = None) -> "RunConfig":
        """
        Resolve a run configuration.

        Precedence: CLI overrides > run-config file > config.ini defaults.

        Args:
            path: Optional INI (or flat key = value) file
            overrides: Flat key -> value mapping, typically from the command line
            allow_offgrid: Overrides the file's allow_offgrid when not None

        Returns:
            Validated RunConfig

        Raises:
            ConfigError: Unknown key, bad value, or off-grid hyperparameter
        """
        resolved = cls.from_defaults()
        if path is not None:
            resolved = resolved.with_overrides(read_config_file(path))
        if overrides:
            resolved = resolved.with_overrides(
                {key: value for key, value in overrides.items() if value is not None}
            )
        if allow_offgrid is not None:
            resolved = resolved.with_overrides({"allow_offgrid": allow_offgrid})
        resolved.validate()
        return resolved

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        """Parse text produced by to_ini (or any run-config file body)."""
        return cls().with_overrides(parse_config_text(text))

    def with_overrides(self, values: Mapping[str, object]) -> "RunConfig":
        """Return a copy with flat keys replaced; unknown keys raise ConfigError."""
        index = _key_index()
        grouped: Dict[str, Dict[str, object]] = {}
        for key, raw in values.items():
            if key not in index:
                raise ConfigError(f"unknown config key '{key}'")
            _, attr, f = index[key]
            grouped.setdefault(attr, {})[key] = _coerce(key, raw, f)
        updated = {attr: dataclasses.replace(getattr(self, attr), **changes)
                   for attr, changes in grouped.items()}
        return dataclasses.replace(self, **updated)

    # ----------------------------
    # Serialization
    # ----------------------------

    def to_ini(self) -> str:
        """Serialize every field explicitly, one section per dataclass."""
        lines: List[str] = []
        for section, attr, _ in SECTIONS:
            lines.append(f"[{section}]")
            for f in dataclasses.fields(getattr(self, attr)):
                lines.append(f"{f.name} = {_format(getattr(getattr(self, attr), f.name))}")
            lines.append("")
        return "\n".join(lines)

    def flat(self) -> Dict[str, object]:
        """Flat key -> value view."""
        out = {}
        for _, attr, _ in SECTIONS:
            out.update(dataclasses.asdict(getattr(self, attr)))
        return out

    # ----------------------------
    # Validation
    # ----------------------------

    @property
    def seed_list(self) -> List[int]:
        """Seeds to run; falls back to the single train seed."""
        raw = self.run.seeds.strip()
        if not raw:
            return [self.train.seed]
        try:
            return [int(token) for token in raw.split(",") if token.strip()]
        except ValueError:
            raise ConfigError(f"config key 'seeds' expects comma-separated integers, got {raw!r}") from None

    def validate(self) -> None:
        """Check structural invariants and the supported grids."""
        b, fs, cl, tr = self.backbone, self.future_sup, self.contrastive, self.train
        if b.hidden_dim < 1 or b.num_heads < 1 or b.hidden_dim % b.num_heads != 0:
            raise ConfigError(f"hidden_dim {b.hidden_dim} must be divisible by num_heads {b.num_heads}")
        if b.max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {b.max_len}")
        if b.num_layers < 0:
            raise ConfigError(f"num_layers must be >= 0, got {b.num_layers}")
        if not 0.0 <= b.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {b.dropout_rate}")
        if b.layer_norm_eps <= 0:
            raise ConfigError(f"layer_norm_eps must be > 0, got {b.layer_norm_eps}")
        if fs.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {fs.horizon}")
        if fs.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {fs.tau}")
        if fs.fs_reduction not in FS_REDUCTIONS:
            raise ConfigError(f"fs_reduction must be one of {FS_REDUCTIONS}, got {fs.fs_reduction!r}")
        if cl.lambda_fc < 0:
            raise ConfigError(f"lambda_fc must be >= 0, got {cl.lambda_fc}")
        if cl.fc_temperature <= 0:
            raise ConfigError(f"fc_temperature must be > 0, got {cl.fc_temperature}")
        if tr.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {tr.patience}")
        if tr.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {tr.batch_size}")
        if tr.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {tr.lr}")
        if tr.early_stop_metric not in EARLY_STOP_METRICS:
            raise ConfigError(f"early_stop_metric must be one of {EARLY_STOP_METRICS}, got {tr.early_stop_metric!r}")
        if self.data.min_core < 1:
            raise ConfigError(f"min_core must be >= 1, got {self.data.min_core}")
        if not self.seed_list:
            raise ConfigError("config key 'seeds' lists no seed")

        if self.run.allow_offgrid:
            return
        if fs.horizon not in HORIZON_GRID:
            raise ConfigError(f"horizon {fs.horizon} is off-grid {HORIZON_GRID}; pass --allow-offgrid")
        if fs.tau not in TAU_GRID:
            raise ConfigError(f"tau {fs.tau} is off-grid {TAU_GRID}; pass --allow-offgrid")
        if cl.lambda_fc not in LAMBDA_GRID:
            raise ConfigError(f"lambda_fc {cl.lambda_fc} is off-grid {LAMBDA_GRID}; pass --allow-offgrid")


def parse_config_text(text: str) -> Dict[str, str]:
    """
    Parse run-config text into a flat key -> raw string mapping.

    Section headers are optional; keys must be unique across sections.
    """
    body = text if text.lstrip().startswith("[") else f"[{_FLAT_SECTION}]\n{text}"
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(body)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    known_sections = {name for name, _, _ in SECTIONS} | {_FLAT_SECTION}
    values: Dict[str, str] = {}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown config section '{section}'")
        for key, raw in parser.items(section):
            values[key] = raw
    return values


def read_config_file(path: Path) -> Dict[str, str]:
    """Read a run-config file from disk."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"))

"""
Checkpoint files.

Format (numpy .npz, loaded with allow_pickle=False):
    meta/format_version   int64 scalar, currently 1
    meta/config           str scalar, RunConfig.to_ini() of the run
    param/<name>          float64 array per parameter, e.g. param/backbone.item_emb

Shapes are the array headers. A checkpoint without any non-backbone
parameters is a valid inference checkpoint.
"""
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from config.config_manager import RunConfig
from models.backbone import Backbone
from models.encoder import EncoderFactory, SequenceEncoder
from utils.constants import CHECKPOINT_FORMAT_VERSION
from utils.exceptions import CheckpointError, ConfigError
from utils.logger import get_logger

logger = get_logger()

BACKBONE_PREFIX = "backbone."


def save_checkpoint(path: Path, state: Mapping[str, np.ndarray], run_cfg: RunConfig) -> Path:
    """Write parameters and the resolved config to path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"param/{name}": np.asarray(value, dtype=np.float64) for name, value in state.items()}
    arrays["meta/format_version"] = np.array(CHECKPOINT_FORMAT_VERSION, dtype=np.int64)
    arrays["meta/config"] = np.array(run_cfg.to_ini())
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.info(f"Saved checkpoint with {len(state)} parameters to {path}")
    return path


def read_checkpoint(path: Path) -> Tuple[Dict[str, np.ndarray], RunConfig]:
    """
    Read every parameter array and the stored config.

    Raises:
        CheckpointError: Missing file, unknown version or malformed content
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            version = int(archive["meta/format_version"])
            config_text = str(archive["meta/config"].item())
            state = {key[len("param/"):]: archive[key].astype(np.float64)
                     for key in archive.files if key.startswith("param/")}
    except (KeyError, ValueError, OSError) as e:
        raise CheckpointError(f"malformed checkpoint {path}: {e}") from e
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported")
    try:
        run_cfg = RunConfig.from_ini(config_text)
    except ConfigError as e:
        raise CheckpointError(f"checkpoint {path} carries an invalid config: {e}") from e
    return state, run_cfg


def strip_auxiliary(state: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """Keep only the parameters inference needs."""
    return {name: value for name, value in state.items() if name.startswith(BACKBONE_PREFIX)}


def backbone_from_state(state: Mapping[str, np.ndarray], run_cfg: RunConfig,
                        encoder_factory: EncoderFactory = Backbone) -> SequenceEncoder:
    """Build an encoder shaped by run_cfg and load the backbone.* arrays into it."""
    backbone = encoder_factory(run_cfg.backbone, np.random.default_rng(0))
    backbone.load_state_dict({name[len(BACKBONE_PREFIX):]: value
                              for name, value in state.items() if name.startswith(BACKBONE_PREFIX)})
    backbone.eval()
    return backbone


def load_backbone(path: Path, run_cfg: Optional[RunConfig] = None,
                  encoder_factory: EncoderFactory = Backbone) -> SequenceEncoder:
    """
    Load the inference model from a checkpoint.

    Args:
        path: Checkpoint file
        run_cfg: Config to shape the model; the stored config when omitted
        encoder_factory: Encoder class the checkpoint was trained with

    Raises:
        CheckpointError: Shapes in the file disagree with run_cfg
    """
    state, stored_cfg = read_checkpoint(path)
    backbone = backbone_from_state(state, run_cfg or stored_cfg, encoder_factory)
    logger.info(f"Loaded backbone ({backbone.num_parameters()} parameters) from {path}")
    return backbone

"""
Helper utilities for the UFRec framework.
Contains reusable helper functions for reference data, run directories and gradient checks.
"""
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List

import numpy as np

from config.config_manager import config
from utils.logger import get_logger

logger = get_logger()


def load_reference_data(file_path: Path = None) -> Dict[str, Any]:
    """
    Load reference values from JSON file.

    Args:
        file_path: Path to JSON file (defaults to config path)

    Returns:
        Dictionary of reference tables

    Raises:
        FileNotFoundError: If reference data file doesn't exist
        json.JSONDecodeError: If JSON is invalid
    """
    if file_path is None:
        file_path = config.reference_data_path

    if not file_path.exists():
        raise FileNotFoundError(f"Reference data file not found: {file_path}")

    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            data = json.load(f)
            logger.info(f"Loaded {len(data)} reference tables from {file_path}")
            return data
    except json.JSONDecodeError as e:
        logger.error(f"Invalid JSON in reference data file: {e}")
        raise


def validate_reference_data(entry: Dict[str, Any], required_keys: List[str]) -> bool:
    """
    Validate that a reference entry contains all required keys.

    Args:
        entry: Reference entry dictionary
        required_keys: List of required key names

    Returns:
        True if all keys present, False otherwise
    """
    missing_keys = [key for key in required_keys if key not in entry]
    if missing_keys:
        logger.warning(f"Missing required keys in reference entry: {missing_keys}")
        return False
    return True


def get_run_dir(name: str) -> Path:
    """
    Generate a timestamped run directory path under the configured runs root.

    Args:
        name: Run name

    Returns:
        Path object for the run directory (not created)
    """
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    safe_name = name.replace("/", "_").replace("\\", "_").replace(" ", "_")
    return config.runs_path / f"{safe_name}_{timestamp}"


def numerical_gradient(loss_fn: Callable[[], float], array: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """
    Central finite differences of loss_fn with respect to array, perturbed in place.

    Args:
        loss_fn: Recomputes the scalar loss from the current array contents
        array: Parameter values (restored after each perturbation)
        step: Perturbation size

    Returns:
        Array of the same shape as array
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = loss_fn()
        flat[i] = original - step
        minus = loss_fn()
        flat[i] = original
        grad_flat[i] = (plus - minus) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """
    Largest entry-wise deviation, relative to the largest gradient magnitude of the array.

    A None analytic gradient is treated as all zeros.
    """
    numeric = np.asarray(numeric, dtype=np.float64)
    analytic = np.zeros_like(numeric) if analytic is None else np.asarray(analytic, dtype=np.float64)
    if numeric.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), floor)
    return float(np.max(np.abs(analytic - numeric))) / scale

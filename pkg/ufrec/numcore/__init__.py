"""Dense float64 tensors with a reverse-mode tape."""
from numcore.tensor import Tape, Tensor, backward, current_tape, no_tape

__all__ = ["Tape", "Tensor", "backward", "current_tape", "no_tape"]

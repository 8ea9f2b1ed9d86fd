"""Imitation trainer for the lifelong MAPF engine."""

from .model import PolicyNet, reference_forward
from .train import Checkpoint, TrainConfig, train

__all__ = ["Checkpoint", "PolicyNet", "TrainConfig", "reference_forward", "train"]
__version__ = "0.1.0"

"""
Twin occupancy decoders, latent codes and checkpoints.
"""
from models.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from models.decoder import (
    OccupancyDecoder,
    OccupancyPrediction,
    RestorationModel,
    compose,
    init_model,
    param_groups,
)
from models.latents import LatentPair, init_latents

__all__ = [
    "Checkpoint",
    "LatentPair",
    "OccupancyDecoder",
    "OccupancyPrediction",
    "RestorationModel",
    "compose",
    "init_latents",
    "init_model",
    "load_checkpoint",
    "param_groups",
    "save_checkpoint",
]

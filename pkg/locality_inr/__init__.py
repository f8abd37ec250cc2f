"""
Locality-Aware Generalizable INR Package
"""

from .layers import DecoderConfig, EncoderConfig
from .inr_model import GeneralizableINR
from .training import INRTrainer, TrainConfig, psnr, tto_full, tto_latents

__all__ = [
    'DecoderConfig',
    'EncoderConfig',
    'GeneralizableINR',
    'INRTrainer',
    'TrainConfig',
    'psnr',
    'tto_full',
    'tto_latents',
]

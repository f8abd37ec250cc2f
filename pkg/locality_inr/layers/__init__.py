"""
locality_inr/layers: network building blocks
=============================================
modules.py : Module, Linear, LayerNorm, FeedForward, MultiHeadAttention
encoder.py : patchify + Transformer encoder -> latent tokens
decoder.py : locality-aware decoder (cross-attention + multi-band modulation) and its variants
"""

from locality_inr.layers.modules import Module, Linear, LayerNorm, FeedForward, MultiHeadAttention
from locality_inr.layers.encoder import EncoderConfig, TransformerEncoder, patchify, unpatchify
from locality_inr.layers.decoder import DecoderConfig, LocalityAwareDecoder, VARIANTS

__all__ = [
    'Module', 'Linear', 'LayerNorm', 'FeedForward', 'MultiHeadAttention',
    'EncoderConfig', 'TransformerEncoder', 'patchify', 'unpatchify',
    'DecoderConfig', 'LocalityAwareDecoder', 'VARIANTS',
]

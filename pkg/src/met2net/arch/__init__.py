"""Per-variable encoders/decoders, variable-attention translator and momentum shadows."""

from .config import ConfigError, ModelConfig
from .model import (ModuleSet, decode_all, encode_all, forward_end_to_end, forward_inference,
                    probe_activations, translate, variable_attention)
from .translator import SpatioTemporalBlock, Translator, VariableAttention, attention_matrix

__all__ = [
    "ConfigError", "ModelConfig", "ModuleSet", "SpatioTemporalBlock", "Translator", "VariableAttention",
    "attention_matrix", "decode_all", "encode_all", "forward_end_to_end", "forward_inference",
    "probe_activations", "translate", "variable_attention",
]

from signbart.model.checkpoint import load_checkpoint, save_checkpoint
from signbart.model.config import ModelConfig, count_parameters, parameter_shapes
from signbart.model.network import (
    NEG_INF,
    SignBart,
    causal_mask,
    classify,
    combine_masks,
    decoder_forward,
    decoder_states,
    encoder_forward,
    forward,
    forward_logits,
    init_params,
    multi_head_attention,
    padding_mask,
    pool_logits,
    positional_encoding,
    project_coordinates,
)

__all__ = [
    "ModelConfig", "NEG_INF", "SignBart", "causal_mask", "classify", "combine_masks",
    "count_parameters", "decoder_forward", "decoder_states", "encoder_forward", "forward",
    "forward_logits", "init_params", "load_checkpoint", "multi_head_attention", "padding_mask",
    "parameter_shapes", "pool_logits", "positional_encoding", "project_coordinates",
    "save_checkpoint",
]

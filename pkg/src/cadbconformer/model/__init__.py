"""The channel-aware dual-branch conformer network."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ABLATIONS, ConfigError, ModelConfig
from .layers import (
    band_branch_forward,
    cfb_forward,
    conformer_forward,
    conv_forward_block,
    decoder_forward,
    decoders_forward,
    dilated_dense_forward,
    encoder_forward,
    self_channel_attention,
)
from .network import cadb_block_forward, identity_forward, model_forward, prepare_input, reconstruct
from .params import (
    ModelParameters,
    ParamSpec,
    count_parameters,
    init_parameters,
    parameter_breakdown,
    parameter_layout,
)

__all__ = [name for name in dir() if not name.startswith("_")]

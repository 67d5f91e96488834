"""Transformer and graph feature aggregation for video object detection."""

from .blender import blend, blend_state, init_blender
from .config import PipelineConfig, load_config, parse_config
from .errors import (ConfigError, ContractError, DegenerateGraphError, DimensionError, EmptyInputError,
                     StageError, TGBError, TzrError)
from .pipeline import forward, init_model, run_pipeline, run_sweep, synth_sequence
from .stgm import init_stgm, stgm_forward
from .sttm import init_sttm, sttm_forward
from .tensor import Tape, Tensor, backward
from .tokenizer import positional_encoding, token_frames, tokenize

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractError", "DegenerateGraphError", "DimensionError", "EmptyInputError",
    "PipelineConfig", "StageError", "TGBError", "Tape", "Tensor", "TzrError", "backward", "blend",
    "blend_state", "forward", "init_blender", "init_model", "init_stgm", "init_sttm", "load_config",
    "parse_config", "positional_encoding", "run_pipeline", "run_sweep", "stgm_forward", "sttm_forward",
    "synth_sequence", "token_frames", "tokenize",
]

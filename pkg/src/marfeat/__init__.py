"""Multi-channel MAR spectrogram features for far-field speech recognition."""

__version__ = "0.1.0"

from .config import PipelineConfig
from .features import (
    MarSpectrogram,
    assemble_context,
    extract,
    extract_bf_mb,
    extract_fbank,
    extract_mc_mar,
)
from .wave_io import MultiChannelWave, read_wave

__all__ = [
    "MarSpectrogram",
    "MultiChannelWave",
    "PipelineConfig",
    "assemble_context",
    "extract",
    "extract_bf_mb",
    "extract_fbank",
    "extract_mc_mar",
    "read_wave",
]

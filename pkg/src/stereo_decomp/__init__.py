"""Stereo matching by decomposition: dense search at a fixed coarse
resolution plus sparse search on the details each downsampling step loses."""
from .errors import FormatError, InvalidConfigError, InvalidInputError, StereoError
from .pipeline import PipelineConfig, PipelineResult, run

__all__ = ["FormatError", "InvalidConfigError", "InvalidInputError", "PipelineConfig",
           "PipelineResult", "StereoError", "run"]
__version__ = "0.1.0"

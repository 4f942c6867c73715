"""Motion-search complexity descriptors and bitrate prediction."""

from .descriptors import SequenceFeatures, accumulate, analyze_sequence
from .frameio import LumaFrame, VideoMeta, open_raw_yuv, open_y4m, write_y4m
from .motion import (
    AnalysisConfig,
    BlockRecord,
    FrameStats,
    MotionVector,
    analyze_frame,
    bitsize,
    block_variance,
    motion_search,
    spatial_mse,
)

__version__ = "0.1.0"

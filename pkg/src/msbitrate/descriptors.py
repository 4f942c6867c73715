"""Sequence-level complexity descriptors aggregated from per-frame statistics."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable

from .errors import EmptySequence
from .frameio import LumaFrame
from .motion import AnalysisConfig, FrameAnalysis, FrameStats, analyze_frames


@dataclass(frozen=True)
class SequenceFeatures:
    mse_ms: float
    bpp_ms: float
    ip_ratio: float
    n_frames: int
    width: int = 0
    height: int = 0
    analysis_wall_time: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def accumulate(
    stats_stream: Iterable[FrameStats],
    width: int = 0,
    height: int = 0,
    analysis_wall_time: float = 0.0,
) -> SequenceFeatures:
    """Fold frame statistics into per-pixel, per-frame descriptors.

    Both MSE and bit totals are divided by the analyzed (block-aligned) pixel
    count summed over frames, so frames cropped to whole blocks are not
    penalised. ``ip_ratio`` is the fraction of I-blocks over all blocks of all
    frames, I-frames included.
    """
    mse_total = Fraction(0)
    bits_total = 0
    pixels_total = 0
    i_blocks = 0
    blocks = 0
    n_frames = 0
    for stats in stats_stream:
        # mse_sum is a dyadic rational, so the Fraction conversion is exact
        mse_total += Fraction(stats.mse_sum)
        bits_total += stats.bits_sum
        pixels_total += stats.analyzed_pixels
        i_blocks += stats.i_block_count
        blocks += stats.i_block_count + stats.p_block_count
        n_frames += 1
    if n_frames == 0:
        raise EmptySequence("no frame statistics to accumulate")
    return SequenceFeatures(
        mse_ms=float(mse_total / pixels_total),
        bpp_ms=float(Fraction(bits_total, pixels_total)),
        ip_ratio=float(Fraction(i_blocks, blocks)),
        n_frames=n_frames,
        width=width,
        height=height,
        analysis_wall_time=analysis_wall_time,
    )


def analyze_sequence(
    frames: Iterable[LumaFrame],
    framerate,
    config: AnalysisConfig = AnalysisConfig(),
    keep_blocks: bool = False,
) -> tuple[SequenceFeatures, list[FrameAnalysis]]:
    """Analyze a whole shot. Returns the descriptors and the per-frame
    analyses (with block records only when ``keep_blocks`` is set)."""
    start = time.perf_counter()
    dims = [0, 0]

    def tracked():
        for frame in frames:
            dims[:] = frame.width, frame.height
            yield frame

    analyses = []
    for analysis in analyze_frames(tracked(), framerate, config):
        if not keep_blocks:
            analysis.blocks = []
        analyses.append(analysis)
    elapsed = time.perf_counter() - start
    features = accumulate((a.stats for a in analyses), dims[0], dims[1], elapsed)
    return features, analyses

"""Block variances, spatial search, full-search motion estimation and block
classification on 16x16 luma blocks.

Variances are sums of squared deviations, ``sum(I^2) - sum(I)^2 / n``. They
are computed on integers scaled by 256 so that the 8x8 (n=64) and 16x16
(n=256) terms are both exact; every value handed back to callers is that
integer divided by 256, which float64 represents exactly.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionMismatch, OutOfBounds
from .frameio import LumaFrame

BLOCK = 16
SUB = 8
SCALE = 256


class BlockKind(str, enum.Enum):
    I = "I"
    P = "P"


class FrameType(str, enum.Enum):
    I = "I"
    P = "P"


class MotionVector(NamedTuple):
    """Integer-pel displacement of a block from the reference to the current
    frame: ``current[y, x] ~ reference[y - dy, x - dx]``."""

    dx: int
    dy: int


BITSIZE_SOURCES = ("block", "intra")


@dataclass(frozen=True)
class AnalysisConfig:
    """``bitsize_from`` selects which error feeds the per-block bit estimate:
    the final block error ("block") or the spatial error alone ("intra")."""

    search_range: int = 16
    gop_length_seconds: float = 5.0
    block_size: int = BLOCK
    bitsize_from: str = "block"

    def __post_init__(self):
        if self.bitsize_from not in BITSIZE_SOURCES:
            raise ValueError(f"bitsize_from must be one of {BITSIZE_SOURCES}")
        if self.search_range < 1:
            raise ValueError("search_range must be >= 1")
        if not self.gop_length_seconds > 0:
            raise ValueError("gop_length_seconds must be > 0")
        if self.block_size != BLOCK:
            raise ValueError("block_size is fixed at 16")

    def gop_length(self, framerate) -> int:
        """Frames per GOP: round(gop_length_seconds * framerate), half up, min 1."""
        frames = Fraction(self.gop_length_seconds).limit_denominator(10**6) * Fraction(framerate)
        return max(1, int(frames + Fraction(1, 2)))


@dataclass(frozen=True)
class BlockRecord:
    block_x: int
    block_y: int
    kind: BlockKind
    mse_block: float
    mse_intra: float
    mse_mv: float | None
    bitsize: int
    mv: MotionVector | None


@dataclass
class FrameStats:
    frame_index: int
    frame_type: FrameType
    mse_sum: float
    bits_sum: int
    i_block_count: int
    p_block_count: int
    analyzed_pixels: int


@dataclass
class FrameAnalysis:
    stats: FrameStats
    blocks: list[BlockRecord] = field(default_factory=list)


# ---------------------------------------------------------------- kernels

def _scaled_variance(sums, sq_sums, n):
    """256 * (sum(I^2) - sum(I)^2 / n) for n in {64, 256}, exact in int64."""
    return (SCALE // n) * (n * sq_sums - sums * sums)


def _scaled_block_scores(blocks: np.ndarray) -> np.ndarray:
    """min(sum of four 8x8 quadrant variances, 16x16 variance), scaled by 256.

    ``blocks`` has shape (..., 16, 16) with an integer dtype.
    """
    blocks = blocks.astype(np.int64, copy=False)
    lead = blocks.shape[:-2]
    quads = blocks.reshape(lead + (2, SUB, 2, SUB))
    q_sum = quads.sum(axis=(-3, -1))
    q_sq = (quads * quads).sum(axis=(-3, -1))
    quad_total = _scaled_variance(q_sum, q_sq, SUB * SUB).sum(axis=(-2, -1))
    whole = _scaled_variance(q_sum.sum(axis=(-2, -1)), q_sq.sum(axis=(-2, -1)), BLOCK * BLOCK)
    return np.minimum(quad_total, whole)


def _samples(frame) -> np.ndarray:
    return frame.samples if isinstance(frame, LumaFrame) else np.asarray(frame)


def _block(samples: np.ndarray, origin, side: int) -> np.ndarray:
    x, y = origin
    height, width = samples.shape
    if x < 0 or y < 0 or x + side > width or y + side > height:
        raise OutOfBounds(f"{side}x{side} block at ({x}, {y}) exceeds {width}x{height} frame")
    return samples[y : y + side, x : x + side].astype(np.int64)


def block_variance(frame, origin, side: int) -> float:
    """Sum of squared deviations of the side x side block at origin=(x, y)."""
    if side not in (SUB, BLOCK):
        raise ValueError("side must be 8 or 16")
    block = _block(_samples(frame), origin, side)
    n = side * side
    return int(_scaled_variance(block.sum(), (block * block).sum(), n)) / SCALE


def spatial_mse(frame, origin) -> float:
    """Intra error of a 16x16 block: the smaller of its quadrant-variance sum
    and its whole-block variance."""
    block = _block(_samples(frame), origin, BLOCK)
    return int(_scaled_block_scores(block)) / SCALE


def bitsize_scaled(scaled_mse: int) -> int:
    # ceil(log2(s / 256)) == ceil(log2(s)) - 8 for integer s > 256
    if scaled_mse <= SCALE:
        return 0
    return (int(scaled_mse) - 1).bit_length() - 8


def bitsize(mse_block) -> int:
    """Estimated bits for a block: 0 when mse <= 1, else ceil(log2(mse))."""
    if mse_block < 0:
        raise ValueError("mse_block must be >= 0")
    value = Fraction(mse_block)
    if value <= 1:
        return 0
    # ceil(log2(p/q)): smallest k with p <= q * 2^k
    p, q = value.numerator, value.denominator
    k = (p // q).bit_length() - 1
    while (q << k) < p:
        k += 1
    return k


def _search_window(x0, y0, width, height, search_range):
    # reference window origin is (x0 - dx, y0 - dy); keep it inside the frame
    dx_lo = max(-search_range, x0 + BLOCK - width)
    dx_hi = min(search_range, x0)
    dy_lo = max(-search_range, y0 + BLOCK - height)
    dy_hi = min(search_range, y0)
    return dx_lo, dx_hi, dy_lo, dy_hi


def _motion_search_scaled(cur: np.ndarray, ref: np.ndarray, x0: int, y0: int, search_range: int):
    height, width = ref.shape
    dx_lo, dx_hi, dy_lo, dy_hi = _search_window(x0, y0, width, height, search_range)
    region = ref[y0 - dy_hi : y0 - dy_lo + BLOCK, x0 - dx_hi : x0 - dx_lo + BLOCK]
    windows = sliding_window_view(region, (BLOCK, BLOCK))
    block = cur[y0 : y0 + BLOCK, x0 : x0 + BLOCK].astype(np.int64)
    scores = _scaled_block_scores(block - windows.astype(np.int64))
    # window row i corresponds to dy = dy_hi - i, column j to dx = dx_hi - j
    dys = dy_hi - np.arange(scores.shape[0])
    dxs = dx_hi - np.arange(scores.shape[1])
    dy_grid, dx_grid = np.meshgrid(dys, dxs, indexing="ij")
    cost = np.abs(dx_grid) + np.abs(dy_grid)
    best = np.lexsort(
        (dx_grid.ravel(), dy_grid.ravel(), cost.ravel(), scores.ravel())
    )[0]
    return MotionVector(int(dx_grid.flat[best]), int(dy_grid.flat[best])), int(scores.flat[best])


def motion_search(current, reference, origin, search_range: int = 16):
    """Exhaustive integer-pel search for the 16x16 block at origin=(x, y).

    Returns ``(MotionVector, mse_mv)``. Ties on the residual score go to the
    smaller |dx| + |dy|, then to raster order of (dy, dx).
    """
    cur = _samples(current)
    ref = _samples(reference)
    if cur.shape != ref.shape:
        raise DimensionMismatch(f"current {cur.shape} vs reference {ref.shape}")
    if search_range < 1:
        raise ValueError("search_range must be >= 1")
    x0, y0 = origin
    _block(cur, origin, BLOCK)
    mv, scaled = _motion_search_scaled(cur, ref, x0, y0, search_range)
    return mv, scaled / SCALE


# ---------------------------------------------------------------- frames

def block_grid(width: int, height: int) -> tuple[int, int]:
    return width // BLOCK, height // BLOCK


def _intra_scaled(samples: np.ndarray) -> np.ndarray:
    cols, rows = block_grid(samples.shape[1], samples.shape[0])
    crop = samples[: rows * BLOCK, : cols * BLOCK].astype(np.int64)
    blocks = crop.reshape(rows, BLOCK, cols, BLOCK).swapaxes(1, 2)
    return _scaled_block_scores(blocks)


def analyze_frame(
    current, reference=None, config: AnalysisConfig = AnalysisConfig(), frame_index=None
) -> FrameAnalysis:
    """Classify every full 16x16 block of ``current`` in raster order.

    With no reference the frame is treated as an I-frame and each block's
    error is its spatial error; otherwise each block is also motion searched
    against ``reference`` and becomes a P-block unless the motion-compensated
    error exceeds the spatial one.
    """
    cur = _samples(current)
    if frame_index is None:
        frame_index = current.index if isinstance(current, LumaFrame) else 0
    ref = None
    if reference is not None:
        ref = _samples(reference)
        if ref.shape != cur.shape:
            raise DimensionMismatch(f"current {cur.shape} vs reference {ref.shape}")
    height, width = cur.shape
    cols, rows = block_grid(width, height)
    intra = _intra_scaled(cur)

    blocks = []
    mse_scaled_sum = 0
    bits_sum = 0
    i_count = p_count = 0
    for by in range(rows):
        for bx in range(cols):
            s_intra = int(intra[by, bx])
            mv = None
            s_mv = None
            kind = BlockKind.I
            s_block = s_intra
            if ref is not None:
                mv, s_mv = _motion_search_scaled(cur, ref, bx * BLOCK, by * BLOCK, config.search_range)
                if s_mv <= s_intra:
                    kind = BlockKind.P
                    s_block = s_mv
            bits = bitsize_scaled(s_block if config.bitsize_from == "block" else s_intra)
            if kind is BlockKind.P:
                p_count += 1
            else:
                i_count += 1
            mse_scaled_sum += s_block
            bits_sum += bits
            blocks.append(
                BlockRecord(
                    block_x=bx,
                    block_y=by,
                    kind=kind,
                    mse_block=s_block / SCALE,
                    mse_intra=s_intra / SCALE,
                    mse_mv=None if s_mv is None else s_mv / SCALE,
                    bitsize=bits,
                    mv=mv,
                )
            )
    stats = FrameStats(
        frame_index=frame_index,
        frame_type=FrameType.I if ref is None else FrameType.P,
        mse_sum=mse_scaled_sum / SCALE,
        bits_sum=bits_sum,
        i_block_count=i_count,
        p_block_count=p_count,
        analyzed_pixels=rows * cols * BLOCK * BLOCK,
    )
    return FrameAnalysis(stats, blocks)


def analyze_frames(
    frames: Iterable[LumaFrame], framerate, config: AnalysisConfig = AnalysisConfig()
) -> Iterator[FrameAnalysis]:
    """Run the I/P schedule over a frame stream: the first frame of every GOP
    is an I-frame, every other frame is predicted from its predecessor."""
    gop = config.gop_length(framerate)
    previous = None
    for position, frame in enumerate(frames):
        reference = None if position % gop == 0 else previous
        yield analyze_frame(frame, reference, config, frame_index=position)
        previous = frame


BLOCK_DUMP_FIELDS = (
    "frame_index", "block_x", "block_y", "kind", "mse_intra", "mse_mv",
    "mse_block", "bitsize", "dx", "dy",
)


def write_block_dump(stream, analyses: Iterable[FrameAnalysis]) -> None:
    """One CSV row per block record, for debugging the classifier."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(BLOCK_DUMP_FIELDS)
    for analysis in analyses:
        for rec in analysis.blocks:
            writer.writerow([
                analysis.stats.frame_index, rec.block_x, rec.block_y, rec.kind.value,
                repr(rec.mse_intra), "" if rec.mse_mv is None else repr(rec.mse_mv),
                repr(rec.mse_block), rec.bitsize,
                "" if rec.mv is None else rec.mv.dx, "" if rec.mv is None else rec.mv.dy,
            ])

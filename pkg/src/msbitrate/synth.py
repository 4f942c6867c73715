"""Synthetic test content: luma sequences with known structure, and
feature-level datasets whose targets follow the power-law model."""

from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.ndimage import gaussian_filter

from .dataset import CRF_GRID, DatasetRow
from .polymodel import power_law

KINDS = ("flat", "noise", "texture", "scene-cut")

# per-CRF parameters for pseudo targets; preset 10 spends ~10% more bits
PSEUDO_THETAS = {
    32: (4.0, 1.0, 0.010, 0.7),
    43: (2.0, 1.0, 0.005, 0.7),
    55: (0.9, 1.0, 0.0022, 0.7),
    63: (0.4, 1.0, 0.0010, 0.7),
}
PRESET_SCALE = {5: 1.0, 10: 1.1}
TARGET_FLOOR_BPP = 0.002
CORPUS_SIZES = ((64, 64), (96, 64), (80, 48), (128, 72))


def texture(rng: np.random.Generator, height: int, width: int, sigma: float = 1.5, amplitude: float = 60.0) -> np.ndarray:
    """Smoothed noise centred on mid-grey, as uint8."""
    field = gaussian_filter(rng.normal(size=(height, width)), sigma, mode="wrap")
    field /= field.std() or 1.0
    return np.clip(np.rint(128 + amplitude * field), 0, 255).astype(np.uint8)


def flat_sequence(width, height, n_frames, level=128, grain=0, rng=None):
    rng = rng or np.random.default_rng(0)
    frames = []
    for _ in range(n_frames):
        frame = np.full((height, width), level, dtype=np.int16)
        if grain:
            frame += rng.integers(-grain, grain + 1, size=frame.shape, dtype=np.int16)
        frames.append(np.clip(frame, 0, 255).astype(np.uint8))
    return frames


def noise_sequence(width, height, n_frames, rng, amplitude=40.0):
    return [
        np.clip(np.rint(128 + amplitude * rng.normal(size=(height, width))), 0, 255).astype(np.uint8)
        for _ in range(n_frames)
    ]


def translating_sequence(width, height, n_frames, rng, velocity=(2, 1), sigma=1.5, amplitude=60.0, canvas=None):
    """Crops of one texture canvas such that frame t equals frame t-1 moved by
    ``velocity`` = (dx, dy) pixels, exactly, away from the borders."""
    dx, dy = velocity
    pad_x = abs(dx) * n_frames
    pad_y = abs(dy) * n_frames
    if canvas is None:
        canvas = texture(rng, height + 2 * pad_y, width + 2 * pad_x, sigma, amplitude)
    frames = []
    for t in range(n_frames):
        x0 = pad_x - t * dx
        y0 = pad_y - t * dy
        frames.append(canvas[y0 : y0 + height, x0 : x0 + width].copy())
    return frames


def scene_cut_sequence(width, height, n_frames, rng, velocity=(1, 0), cut=None):
    cut = n_frames // 2 if cut is None else cut
    first = translating_sequence(width, height, cut, rng, velocity)
    second = translating_sequence(width, height, n_frames - cut, rng, velocity, sigma=0.8, amplitude=50.0)
    return first + second


@dataclass(frozen=True)
class SyntheticClip:
    sequence_id: str
    kind: str
    width: int
    height: int
    framerate: Fraction
    frames: list
    spatial_level: float
    motion_level: float


def make_clip(index: int, seed: int, n_frames: int = 12) -> SyntheticClip:
    """Deterministic clip ``index`` of the synthetic corpus."""
    rng = np.random.default_rng([seed, index])
    kind = KINDS[index % len(KINDS)]
    width, height = CORPUS_SIZES[(index // len(KINDS)) % len(CORPUS_SIZES)]
    framerate = Fraction(30 if index % 2 else 24)
    amplitude = float(rng.uniform(15, 70))
    sigma = float(rng.uniform(0.6, 3.0))
    velocity = (int(rng.integers(-4, 5)), int(rng.integers(-3, 4)))
    if kind == "flat":
        frames = flat_sequence(width, height, n_frames, int(rng.integers(40, 200)), grain=int(rng.integers(1, 4)), rng=rng)
        spatial, motion = 0.5, 0.1
    elif kind == "noise":
        frames = noise_sequence(width, height, n_frames, rng, amplitude)
        spatial, motion = amplitude, amplitude
    elif kind == "texture":
        frames = translating_sequence(width, height, n_frames, rng, velocity, sigma, amplitude)
        spatial, motion = amplitude / sigma, float(np.hypot(*velocity))
    else:
        frames = scene_cut_sequence(width, height, n_frames, rng, velocity)
        spatial, motion = 40.0, float(np.hypot(*velocity)) + 20.0
    return SyntheticClip(f"syn{index:03d}", kind, width, height, framerate, frames, spatial, motion)


def pseudo_target_bpp(bpp_ms, mse_ms, crf, preset=5, rng=None, noise=0.05) -> float:
    """Encoded bpp drawn from the power law plus multiplicative log-normal noise."""
    value = float(power_law(PSEUDO_THETAS[crf], bpp_ms, mse_ms)) * PRESET_SCALE[preset]
    if rng is not None and noise:
        value *= float(np.exp(rng.normal(0.0, noise)))
    return value + TARGET_FLOOR_BPP


def synthetic_rows(
    n_sequences: int,
    seed: int = 0,
    noise: float = 0.05,
    thetas=None,
    crfs=CRF_GRID,
    preset: int = 5,
    width: int = 1920,
    height: int = 1080,
    frame_count: int = 120,
    vca: bool = True,
) -> list[DatasetRow]:
    """Feature-level dataset: descriptors drawn over realistic ranges, targets
    from the power law (``thetas`` maps CRF to parameters) with
    multiplicative noise. VCA-like columns are noisy functions of the
    descriptors."""
    rng = np.random.default_rng(seed)
    thetas = thetas or PSEUDO_THETAS
    rows = []
    pixels = width * height * frame_count
    for s in range(n_sequences):
        bpp_ms = float(np.exp(rng.uniform(np.log(0.005), np.log(0.09))))
        mse_ms = float(np.exp(rng.uniform(np.log(1.0), np.log(2000.0))))
        ip_ratio = float(rng.uniform(0.0, 1.0))
        spatial = temporal = None
        if vca:
            spatial = float(bpp_ms * 400 * np.exp(rng.normal(0, 0.3)))
            temporal = float(np.sqrt(mse_ms) * np.exp(rng.normal(0, 0.3)))
        for crf in crfs:
            bpp = float(power_law(thetas[crf], bpp_ms, mse_ms))
            if noise:
                bpp *= float(np.exp(rng.normal(0.0, noise)))
            rows.append(DatasetRow(
                sequence_id=f"seq{s:04d}", preset=preset, crf=crf, width=width,
                height=height, frame_count=frame_count, target_bits=bpp * pixels,
                target_bpp=bpp, bpp_ms=bpp_ms, mse_ms=mse_ms, ip_ratio=ip_ratio,
                vca_spatial=spatial, vca_temporal=temporal,
            ))
    return rows


def clip_path(directory, clip: SyntheticClip) -> str:
    return os.path.join(directory, f"{clip.sequence_id}.y4m")

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msbitrate.descriptors import accumulate, analyze_sequence
from msbitrate.errors import EmptySequence
from msbitrate.frameio import LumaFrame
from msbitrate.motion import AnalysisConfig, FrameStats, FrameType, analyze_frame
from msbitrate.synth import noise_sequence


def frames_of(arrays):
    return [LumaFrame(a, i) for i, a in enumerate(arrays)]


def test_single_flat_frame():
    features, _ = analyze_sequence(frames_of([np.full((32, 32), 9, np.uint8)]), 30)
    assert (features.mse_ms, features.bpp_ms, features.ip_ratio) == (0, 0, 1)
    assert features.n_frames == 1 and (features.width, features.height) == (32, 32)


def test_static_sequence_closed_form(rng):
    still = rng.integers(0, 256, (48, 64), dtype=np.uint8)
    intra = analyze_frame(LumaFrame(still)).stats
    ten, _ = analyze_sequence(frames_of([still] * 10), 30)
    twenty, _ = analyze_sequence(frames_of([still] * 20), 30)
    assert ten.mse_ms == float(Fraction(intra.mse_sum) / (64 * 48 * 10))
    assert twenty.mse_ms == ten.mse_ms / 2
    assert ten.bpp_ms == intra.bits_sum / (64 * 48 * 10)
    assert ten.ip_ratio == pytest.approx(12 / 120)


def test_resolution_independence(rng):
    small = noise_sequence(64, 64, 4, rng)
    large = [np.tile(f, (2, 2)) for f in small]
    a, _ = analyze_sequence(frames_of(small), 30, AnalysisConfig(search_range=4))
    b, _ = analyze_sequence(frames_of(large), 30, AnalysisConfig(search_range=4))
    assert b.mse_ms == pytest.approx(a.mse_ms, rel=0.05)
    assert b.bpp_ms == pytest.approx(a.bpp_ms, rel=0.05)


def test_empty_sequence():
    with pytest.raises(EmptySequence):
        accumulate([])


def test_all_intra_ratio(rng):
    config = AnalysisConfig(gop_length_seconds=0.01)
    features, analyses = analyze_sequence(frames_of(noise_sequence(32, 32, 3, rng)), 30, config)
    assert all(a.stats.frame_type is FrameType.I for a in analyses)
    assert features.ip_ratio == 1


def _stats(draw_int):
    return FrameStats(
        frame_index=0, frame_type=FrameType.P, mse_sum=draw_int[0] / 256, bits_sum=draw_int[1],
        i_block_count=draw_int[2], p_block_count=4 - draw_int[2], analyzed_pixels=4 * 256,
    )


stats_lists = st.lists(
    st.tuples(st.integers(0, 10**9), st.integers(0, 100), st.integers(0, 4)).map(_stats), min_size=1, max_size=8
)


@given(stats_lists, stats_lists)
def test_additivity(first, second):
    a, b, ab = accumulate(first), accumulate(second), accumulate(first + second)
    na, nb = a.n_frames, b.n_frames
    assert ab.n_frames == na + nb
    assert ab.mse_ms == pytest.approx((na * a.mse_ms + nb * b.mse_ms) / (na + nb), rel=1e-12, abs=1e-300)
    assert ab.bpp_ms == pytest.approx((na * a.bpp_ms + nb * b.bpp_ms) / (na + nb), rel=1e-12, abs=1e-300)
    assert ab.ip_ratio == pytest.approx((na * a.ip_ratio + nb * b.ip_ratio) / (na + nb), rel=1e-12)


@given(stats_lists)
def test_descriptor_bounds(stats):
    f = accumulate(stats)
    assert f.mse_ms >= 0 and f.bpp_ms >= 0 and 0 <= f.ip_ratio <= 1
    max_bits = max(s.bits_sum for s in stats)
    assert f.bpp_ms <= max_bits / (4 * 256)


def test_self_concatenation_invariance(rng):
    clip = noise_sequence(32, 32, 3, rng)
    # a 3-frame GOP keeps the I/P pattern aligned when the clip is repeated
    config = AnalysisConfig(gop_length_seconds=1.0)
    once, _ = analyze_sequence(frames_of(clip), 3, config)
    twice, _ = analyze_sequence(frames_of(clip + clip), 3, config)
    assert twice.mse_ms == once.mse_ms and twice.bpp_ms == once.bpp_ms

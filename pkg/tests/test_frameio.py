import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msbitrate.errors import MalformedHeader, TruncatedFrame, UnsupportedFormat, ZeroDimension
from msbitrate.frameio import (
    LumaFrame,
    frame_payload_size,
    open_raw_yuv,
    open_y4m,
    write_y4m,
)


def y4m_bytes(frames, header="YUV4MPEG2 W64 H48 F30:1 Ip A1:1 C420jpeg", chroma=128):
    out = io.BytesIO()
    out.write(header.encode() + b"\n")
    for luma in frames:
        h, w = luma.shape
        out.write(b"FRAME\n")
        out.write(luma.tobytes())
        out.write(bytes([chroma]) * (2 * ((w + 1) // 2) * ((h + 1) // 2)))
    return out.getvalue()


def test_header_parsed():
    meta, frames = open_y4m(y4m_bytes([]))
    assert (meta.width, meta.height, meta.framerate) == (64, 48, Fraction(30, 1))
    assert meta.color_format == "yuv420p-8bit"
    assert list(frames) == []


def test_bad_magic():
    with pytest.raises(MalformedHeader):
        open_y4m(b"YUV4MPEG3 W64 H48 F30:1\n")


def test_missing_dimension():
    with pytest.raises(MalformedHeader):
        open_y4m(b"YUV4MPEG2 W64 F30:1\n")


@pytest.mark.parametrize("cs", ["C422", "C444", "C420p10", "Cmono"])
def test_unsupported_colorspace(cs):
    with pytest.raises(UnsupportedFormat):
        open_y4m(f"YUV4MPEG2 W64 H48 F30:1 {cs}\n".encode())


def test_two_frames_by_byte_count(rng):
    luma = [rng.integers(0, 256, (48, 64), dtype=np.uint8) for _ in range(2)]
    data = y4m_bytes(luma)
    header_len = len(b"YUV4MPEG2 W64 H48 F30:1 Ip A1:1 C420jpeg\n")
    # payload per frame is 64*48 + 2*32*24 bytes, each after a 6-byte marker
    assert len(data) == header_len + 2 * (6 + 64 * 48 + 2 * 32 * 24)
    meta, frames = open_y4m(io.BytesIO(data))
    got = list(frames)
    assert len(got) == 2 and meta.frame_count == 2
    assert [f.index for f in got] == [0, 1]
    for f, want in zip(got, luma):
        np.testing.assert_array_equal(f.samples, want)


def test_truncated_payload(rng):
    data = y4m_bytes([rng.integers(0, 256, (48, 64), dtype=np.uint8)])
    meta, frames = open_y4m(data[:-10])
    with pytest.raises(TruncatedFrame):
        list(frames)


def test_truncated_luma(rng):
    data = y4m_bytes([rng.integers(0, 256, (48, 64), dtype=np.uint8)])
    _, frames = open_y4m(data[:200])
    with pytest.raises(TruncatedFrame):
        list(frames)


def test_raw_single_frame():
    meta, frames = open_raw_yuv(bytes(frame_payload_size(64, 48)), 64, 48, "30")
    got = list(frames)
    assert len(got) == 1 and meta.frame_count == 1
    assert not got[0].samples.any()


def test_raw_partial_frame():
    size = frame_payload_size(64, 48)
    _, frames = open_raw_yuv(bytes(size + size // 2), 64, 48)
    with pytest.raises(TruncatedFrame):
        list(frames)


@pytest.mark.parametrize("w,h", [(0, 48), (64, 0), (8, 48)])
def test_raw_bad_dimensions(w, h):
    with pytest.raises(ZeroDimension):
        open_raw_yuv(b"", w, h)


def test_luma_frame_is_immutable(rng):
    frame = LumaFrame(rng.integers(0, 256, (16, 16), dtype=np.uint8))
    with pytest.raises(ValueError):
        frame.samples[0, 0] = 1


def test_frame_too_small():
    with pytest.raises(ZeroDimension):
        LumaFrame(np.zeros((15, 32), np.uint8))


@settings(max_examples=25, deadline=None)
@given(
    w=st.integers(16, 40), h=st.integers(16, 40), n=st.integers(1, 3), seed=st.integers(0, 2**16)
)
def test_y4m_round_trip(w, h, n, seed):
    rng = np.random.default_rng(seed)
    luma = [rng.integers(0, 256, (h, w), dtype=np.uint8) for _ in range(n)]
    buf = io.BytesIO()
    write_y4m(buf, luma, Fraction(24000, 1001))
    buf.seek(0)
    meta, frames = open_y4m(buf)
    got = [f.samples for f in frames]
    assert meta.framerate == Fraction(24000, 1001)
    assert len(got) == n
    for a, b in zip(got, luma):
        np.testing.assert_array_equal(a, b)


def test_chroma_is_ignored(rng):
    luma = [rng.integers(0, 256, (32, 48), dtype=np.uint8) for _ in range(2)]
    header = "YUV4MPEG2 W48 H32 F25:1"
    _, a = open_y4m(y4m_bytes(luma, header, chroma=0))
    _, b = open_y4m(y4m_bytes(luma, header, chroma=255))
    for fa, fb in zip(a, b):
        np.testing.assert_array_equal(fa.samples, fb.samples)

"""Luma-plane readers for Y4M and headerless planar YUV 4:2:0 files.

Both readers are single-pass: frames are pulled from the byte stream one at a
time and the chroma planes are skipped without being decoded.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .errors import MalformedHeader, TruncatedFrame, UnsupportedFormat, ZeroDimension

Y4M_MAGIC = b"YUV4MPEG2"
FRAME_MARKER = b"FRAME"
MIN_SIDE = 16

# 8-bit 4:2:0 variants accepted in the Y4M C token; absent C means 420jpeg
_Y4M_420 = {"420", "420jpeg", "420paldv", "420mpeg2"}


@dataclass(frozen=True)
class LumaFrame:
    """One frame's luma plane as a read-only (height, width) uint8 array."""

    samples: np.ndarray
    index: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 2:
            raise ValueError(f"luma samples must be 2-D, got shape {samples.shape}")
        if samples.dtype != np.uint8:
            if samples.size and (samples.min() < 0 or samples.max() > 255):
                raise UnsupportedFormat("luma samples must fit in 8 bits")
            samples = samples.astype(np.uint8)
        height, width = samples.shape
        if width < MIN_SIDE or height < MIN_SIDE:
            raise ZeroDimension(
                f"frame {width}x{height} is smaller than one {MIN_SIDE}x{MIN_SIDE} block"
            )
        if self.index < 0:
            raise ValueError("frame index must be >= 0")
        if samples.flags.writeable:
            samples = samples.copy()
            samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


@dataclass
class VideoMeta:
    """Stream-level properties.

    ``frame_count`` is ``None`` until the frame iterator has been exhausted,
    at which point the reader fills in the number of frames it yielded.
    """

    width: int
    height: int
    framerate: Fraction
    frame_count: int | None = None
    color_format: str = "yuv420p-8bit"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.framerate.numerator <= 0 or self.framerate.denominator <= 0:
            raise MalformedHeader(f"invalid framerate {self.framerate}")


def chroma_plane_size(width: int, height: int) -> int:
    return ((width + 1) // 2) * ((height + 1) // 2)


def frame_payload_size(width: int, height: int) -> int:
    return width * height + 2 * chroma_plane_size(width, height)


def parse_framerate(text: str | Fraction | float | int) -> Fraction:
    if isinstance(text, Fraction):
        rate = text
    elif isinstance(text, str) and ":" in text:
        num, den = text.split(":", 1)
        if int(den) == 0:
            raise MalformedHeader(f"invalid framerate {text!r}")
        rate = Fraction(int(num), int(den))
    elif isinstance(text, str) and "/" in text:
        num, den = text.split("/", 1)
        if int(den) == 0:
            raise MalformedHeader(f"invalid framerate {text!r}")
        rate = Fraction(int(num), int(den))
    else:
        rate = Fraction(text).limit_denominator(1001)
    if rate <= 0:
        raise MalformedHeader(f"invalid framerate {text!r}")
    return rate


def _read_exact(stream: BinaryIO, size: int) -> bytes:
    chunks = []
    remaining = size
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def _read_line(stream: BinaryIO, limit: int = 4096) -> bytes:
    buf = bytearray()
    while len(buf) < limit:
        ch = stream.read(1)
        if not ch:
            break
        if ch == b"\n":
            return bytes(buf) + b"\n"
        buf += ch
    return bytes(buf)


def _as_stream(source) -> BinaryIO:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return io.BytesIO(bytes(source))
    return source


def parse_y4m_header(line: bytes) -> VideoMeta:
    if not line.endswith(b"\n"):
        raise MalformedHeader("Y4M header line is not newline-terminated")
    tokens = line[:-1].split(b" ")
    if tokens[0] != Y4M_MAGIC:
        raise MalformedHeader(f"bad Y4M signature {tokens[0][:16]!r}")
    width = height = None
    framerate = Fraction(25, 1)
    colorspace = "420jpeg"
    extra = {}
    for raw in tokens[1:]:
        if not raw:
            continue
        tok = raw.decode("ascii", errors="replace")
        key, value = tok[0], tok[1:]
        try:
            if key == "W":
                width = int(value)
            elif key == "H":
                height = int(value)
            elif key == "F":
                framerate = parse_framerate(value)
            elif key == "C":
                colorspace = value
            else:
                extra[key] = value
        except ValueError as exc:
            raise MalformedHeader(f"bad Y4M header token {tok!r}") from exc
    if width is None or height is None:
        raise MalformedHeader("Y4M header lacks W or H")
    if width <= 0 or height <= 0:
        raise ZeroDimension(f"invalid dimensions {width}x{height}")
    if colorspace not in _Y4M_420:
        raise UnsupportedFormat(f"unsupported Y4M colorspace C{colorspace}")
    return VideoMeta(width, height, framerate, extra=extra)


def _check_dims(width: int, height: int) -> None:
    if width <= 0 or height <= 0:
        raise ZeroDimension(f"invalid dimensions {width}x{height}")
    if width < MIN_SIDE or height < MIN_SIDE:
        raise ZeroDimension(
            f"{width}x{height} is smaller than one {MIN_SIDE}x{MIN_SIDE} block"
        )


def _y4m_frames(stream: BinaryIO, meta: VideoMeta) -> Iterator[LumaFrame]:
    luma_size = meta.width * meta.height
    chroma_size = 2 * chroma_plane_size(meta.width, meta.height)
    index = 0
    while True:
        line = _read_line(stream)
        if not line:
            break
        if not line.startswith(FRAME_MARKER) or not line.endswith(b"\n"):
            raise TruncatedFrame(f"frame {index}: missing or damaged FRAME marker")
        luma = _read_exact(stream, luma_size)
        if len(luma) < luma_size:
            raise TruncatedFrame(f"frame {index}: luma plane has {len(luma)} of {luma_size} bytes")
        chroma = _read_exact(stream, chroma_size)
        if len(chroma) < chroma_size:
            raise TruncatedFrame(
                f"frame {index}: chroma planes have {len(chroma)} of {chroma_size} bytes"
            )
        samples = np.frombuffer(luma, dtype=np.uint8).reshape(meta.height, meta.width)
        yield LumaFrame(samples, index)
        index += 1
    meta.frame_count = index


def open_y4m(source) -> tuple[VideoMeta, Iterator[LumaFrame]]:
    """Parse a Y4M header and return its metadata plus a lazy luma-frame iterator."""
    stream = _as_stream(source)
    meta = parse_y4m_header(_read_line(stream))
    _check_dims(meta.width, meta.height)
    return meta, _y4m_frames(stream, meta)


def _raw_frames(stream: BinaryIO, meta: VideoMeta) -> Iterator[LumaFrame]:
    luma_size = meta.width * meta.height
    frame_size = frame_payload_size(meta.width, meta.height)
    index = 0
    while True:
        payload = _read_exact(stream, frame_size)
        if not payload:
            break
        if len(payload) < frame_size:
            raise TruncatedFrame(
                f"frame {index}: trailing partial frame of {len(payload)} of {frame_size} bytes"
            )
        samples = np.frombuffer(payload[:luma_size], dtype=np.uint8)
        yield LumaFrame(samples.reshape(meta.height, meta.width), index)
        index += 1
    meta.frame_count = index


def open_raw_yuv(source, width: int, height: int, framerate=Fraction(30, 1)):
    """Open a headerless planar 8-bit YUV 4:2:0 stream of known dimensions."""
    if width <= 0 or height <= 0:
        raise ZeroDimension(f"invalid dimensions {width}x{height}")
    _check_dims(width, height)
    meta = VideoMeta(width, height, parse_framerate(framerate))
    return meta, _raw_frames(_as_stream(source), meta)


def write_y4m(
    stream: BinaryIO,
    frames: Iterable[np.ndarray | LumaFrame],
    framerate=Fraction(30, 1),
    chroma: int | Iterable[tuple[np.ndarray, np.ndarray]] = 128,
) -> int:
    """Write frames as 8-bit 4:2:0 Y4M. Returns the number of frames written.

    ``chroma`` is either a constant fill value or an iterable of (U, V) planes
    matched to the frames.
    """
    rate = parse_framerate(framerate)
    chroma_iter = None if isinstance(chroma, int) else iter(chroma)
    count = 0
    for frame in frames:
        luma = frame.samples if isinstance(frame, LumaFrame) else np.asarray(frame, np.uint8)
        height, width = luma.shape
        if count == 0:
            header = f"YUV4MPEG2 W{width} H{height} F{rate.numerator}:{rate.denominator} Ip A1:1 C420jpeg\n"
            stream.write(header.encode("ascii"))
        stream.write(FRAME_MARKER + b"\n")
        stream.write(np.ascontiguousarray(luma, dtype=np.uint8).tobytes())
        csize = chroma_plane_size(width, height)
        if chroma_iter is None:
            stream.write(bytes([chroma]) * (2 * csize))
        else:
            u, v = next(chroma_iter)
            stream.write(np.asarray(u, np.uint8).tobytes())
            stream.write(np.asarray(v, np.uint8).tobytes())
        count += 1
    return count


def open_video(path, width=None, height=None, framerate=None):
    """Open a file as Y4M if it carries the signature, otherwise as raw YUV."""
    stream = open(path, "rb")
    head = stream.read(len(Y4M_MAGIC))
    stream.seek(0)
    if head == Y4M_MAGIC or width is None or height is None:
        return stream, open_y4m(stream)
    return stream, open_raw_yuv(stream, width, height, framerate or Fraction(30, 1))

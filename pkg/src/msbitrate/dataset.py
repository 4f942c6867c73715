"""Dataset rows, feature vectors and the versioned CSV formats exchanged
between pipeline stages."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

from .errors import MissingFeatureColumn, SchemaMismatch

SCHEMA_VERSION = 1
CRF_GRID = (32, 43, 55, 63)
PRESETS = (5, 10)

FEATURE_SETS: dict[str, tuple[str, ...]] = {
    "VCA": ("crf", "vca_spatial", "vca_temporal"),
    "MS": ("crf", "bpp_ms", "mse_ms", "ip_ratio"),
    "MS-VCA": ("crf", "bpp_ms", "mse_ms", "ip_ratio", "vca_spatial", "vca_temporal"),
}


@dataclass(frozen=True)
class FeatureVector:
    crf: int
    bpp_ms: float | None = None
    mse_ms: float | None = None
    ip_ratio: float | None = None
    vca_spatial: float | None = None
    vca_temporal: float | None = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None and not (math.isfinite(value) and value >= 0):
                raise ValueError(f"feature {f.name}={value!r} must be finite and >= 0")

    def values(self, names: Sequence[str]) -> list[float]:
        out = []
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise MissingFeatureColumn(f"feature {name!r} is missing")
            out.append(float(value))
        return out


@dataclass(frozen=True)
class DatasetRow:
    """One (sequence, preset, CRF) observation: descriptors plus the encoded size."""

    sequence_id: str
    preset: int
    crf: int
    width: int
    height: int
    frame_count: int
    target_bits: float
    target_bpp: float
    bpp_ms: float | None = None
    mse_ms: float | None = None
    ip_ratio: float | None = None
    vca_spatial: float | None = None
    vca_temporal: float | None = None

    @property
    def features(self) -> FeatureVector:
        return FeatureVector(
            crf=self.crf, bpp_ms=self.bpp_ms, mse_ms=self.mse_ms, ip_ratio=self.ip_ratio,
            vca_spatial=self.vca_spatial, vca_temporal=self.vca_temporal,
        )

    @property
    def pixel_count(self) -> int:
        return self.width * self.height * self.frame_count


def as_features(item) -> FeatureVector:
    return item.features if isinstance(item, DatasetRow) else item


def feature_matrix(items: Iterable, names: Sequence[str]) -> list[list[float]]:
    return [as_features(item).values(names) for item in items]


def require_columns(rows: Sequence[DatasetRow], feature_set: str) -> tuple[str, ...]:
    try:
        names = FEATURE_SETS[feature_set]
    except KeyError:
        raise ValueError(f"unknown feature set {feature_set!r}") from None
    for row in rows:
        for name in names:
            if getattr(row.features, name) is None:
                raise MissingFeatureColumn(
                    f"row {getattr(row, 'sequence_id', '?')} lacks {name!r} needed by {feature_set}"
                )
    return names


# ---------------------------------------------------------------- CSV I/O

DATASET_FIELDS = (
    "sequence_id", "preset", "crf", "width", "height", "frame_count",
    "bpp_ms", "mse_ms", "ip_ratio", "vca_spatial", "vca_temporal",
    "target_bits", "target_bpp",
)

_INT_FIELDS = {"preset", "crf", "width", "height", "frame_count"}


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(stream, kind: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a CSV whose first line is a ``# msbitrate <kind> v<N>`` schema tag."""
    stream.write(f"# msbitrate {kind} v{SCHEMA_VERSION}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])


def read_table(stream, kind: str | None = None, required: Sequence[str] = ()) -> list[dict]:
    """Read a CSV written by :func:`write_table` or supplied externally.

    A schema tag is optional for externally produced files, but when present it
    must name ``kind`` and a known version.
    """
    text = stream.read()
    lines = text.splitlines(keepends=True)
    if lines and lines[0].startswith("#"):
        tag = lines[0][1:].split()
        if len(tag) != 3 or tag[0] != "msbitrate":
            raise SchemaMismatch(f"unrecognised schema line {lines[0].strip()!r}")
        if kind is not None and tag[1] != kind:
            raise SchemaMismatch(f"expected a {kind} table, got {tag[1]}")
        if tag[2] != f"v{SCHEMA_VERSION}":
            raise SchemaMismatch(f"unsupported schema version {tag[2]}")
        lines = lines[1:]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    header = reader.fieldnames or []
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaMismatch(f"missing columns {missing}")
    return list(reader)


def _opt_float(text: str | None) -> float | None:
    if text is None or text == "":
        return None
    return float(text)


def row_from_record(record: dict) -> DatasetRow:
    kwargs = {}
    for name in DATASET_FIELDS:
        raw = record.get(name)
        if name == "sequence_id":
            kwargs[name] = raw
        elif name in _INT_FIELDS:
            kwargs[name] = int(raw)
        elif name in ("target_bits", "target_bpp"):
            kwargs[name] = float(raw)
        else:
            kwargs[name] = _opt_float(raw)
    return DatasetRow(**kwargs)


def row_to_record(row: DatasetRow) -> list:
    return [getattr(row, name) for name in DATASET_FIELDS]


def read_dataset(stream) -> list[DatasetRow]:
    records = read_table(stream, "dataset", required=DATASET_FIELDS)
    return [row_from_record(r) for r in records]


def write_dataset(stream, rows: Iterable[DatasetRow]) -> None:
    write_table(stream, "dataset", DATASET_FIELDS, (row_to_record(r) for r in rows))

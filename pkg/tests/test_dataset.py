import io

import pytest

from msbitrate.dataset import (
    DatasetRow,
    FeatureVector,
    read_dataset,
    read_table,
    write_dataset,
    write_table,
)
from msbitrate.errors import MissingFeatureColumn, SchemaMismatch
from msbitrate.synth import synthetic_rows


def test_dataset_round_trip():
    rows = synthetic_rows(5, seed=1) + synthetic_rows(2, seed=2, vca=False)
    buf = io.StringIO()
    write_dataset(buf, rows)
    assert buf.getvalue().startswith("# msbitrate dataset v1\n")
    buf.seek(0)
    assert read_dataset(buf) == rows


def test_unknown_version_rejected():
    with pytest.raises(SchemaMismatch):
        read_table(io.StringIO("# msbitrate dataset v9\na,b\n1,2\n"), "dataset")


def test_wrong_kind_rejected():
    buf = io.StringIO()
    write_table(buf, "features", ["a"], [[1]])
    buf.seek(0)
    with pytest.raises(SchemaMismatch):
        read_table(buf, "dataset")


def test_untagged_external_table():
    records = read_table(io.StringIO("sequence_id,bits\nx,5\n"), "encodings", required=["bits"])
    assert records == [{"sequence_id": "x", "bits": "5"}]
    with pytest.raises(SchemaMismatch):
        read_table(io.StringIO("sequence_id\nx\n"), "encodings", required=["bits"])


def test_feature_vector_validation():
    with pytest.raises(ValueError):
        FeatureVector(32, bpp_ms=-1.0)
    with pytest.raises(MissingFeatureColumn):
        FeatureVector(32).values(["bpp_ms"])


def test_pixel_count():
    row = DatasetRow("a", 5, 32, 64, 48, 100, 1e6, 1e6 / 307200)
    assert row.pixel_count == 307200

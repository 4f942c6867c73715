import json
from dataclasses import replace

import numpy as np
import pytest

from msbitrate import models
from msbitrate.cli import join_tables, main
from msbitrate.dataset import read_dataset, read_table, write_dataset
from msbitrate.errors import EmptyJoin, MissingFeatureColumn
from msbitrate.frameio import write_y4m
from msbitrate.synth import synthetic_rows


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--out-dir", str(out), "--sequences", "6", "--frames", "4", "--raw-every", "3"]) == 0
    return out


def test_synth_outputs(corpus):
    names = sorted(p.name for p in corpus.iterdir())
    assert "manifest.csv" in names and "encodings.csv" in names and "vca.csv" in names
    assert sum(n.endswith(".yuv") for n in names) == 2
    with open(corpus / "encodings.csv") as fh:
        assert len(read_table(fh, "encodings")) == 6 * 2 * 4


def test_analyze_manifest_is_deterministic(corpus, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["analyze", "--manifest", str(corpus / "manifest.csv"), "-o", str(a)]) == 0
    assert main(["analyze", "--manifest", str(corpus / "manifest.csv"), "-o", str(b), "--threads", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    with open(a) as fh:
        records = read_table(fh, "features")
    assert len(records) == 6 and all(not r["error"] for r in records)
    assert {"sequence_id", "mse_ms", "bpp_ms", "ip_ratio"} <= set(records[0])


def test_analyze_partial_failure(tmp_path, rng):
    for name in ("a", "b"):
        with open(tmp_path / f"{name}.y4m", "wb") as fh:
            write_y4m(fh, [rng.integers(0, 256, (32, 32), dtype=np.uint8)] * 2)
    (tmp_path / "c.y4m").write_bytes(b"YUV4MPEG2 W32 H32 F30:1\nFRAME\n" + bytes(100))
    out = tmp_path / "features.csv"
    paths = [str(tmp_path / f"{n}.y4m") for n in "abc"]
    assert main(["analyze", *paths, "-o", str(out), "--timing"]) == 2
    with open(out) as fh:
        records = read_table(fh, "features")
    assert [bool(r["error"]) for r in records] == [False, False, True]
    assert "TruncatedFrame" in records[2]["error"]
    assert float(records[0]["analysis_wall_time"]) > 0


def test_analyze_without_inputs():
    assert main(["analyze"]) == 1


def test_analyze_raw_with_dimensions(tmp_path, rng):
    frame = rng.integers(0, 256, (32, 48), dtype=np.uint8)
    (tmp_path / "clip.yuv").write_bytes((frame.tobytes() + bytes(2 * 24 * 16)) * 3)
    out = tmp_path / "f.csv"
    assert main(["analyze", str(tmp_path / "clip.yuv"), "--width", "48", "--height", "32",
                 "--framerate", "25", "--block-dump", str(tmp_path / "dump"), "-o", str(out)]) == 0
    with open(out) as fh:
        rec = read_table(fh, "features")[0]
    assert rec["n_frames"] == "3" and rec["framerate"] == "25/1"
    assert (tmp_path / "dump" / "clip.blocks.csv").exists()


def _features(n):
    return [{"sequence_id": f"s{i}", "width": "64", "height": "48", "mse_ms": "10.0",
             "bpp_ms": "0.05", "ip_ratio": "0.5", "error": ""} for i in range(n)]


def test_join_counts_and_rejects():
    encodings = [{"sequence_id": f"s{i}", "preset": p, "crf": c, "bits": "1000000", "frame_count": "100"}
                 for i in range(10) for p in (5, 10) for c in (32, 43, 55, 63)]
    encodings.append({"sequence_id": "ghost", "preset": 5, "crf": 32, "bits": "1", "frame_count": "1"})
    rows, rejects = join_tables(_features(10), encodings)
    assert len(rows) == 80
    assert [r[1] for r in rejects] == ["ghost"]
    assert rows[0].target_bpp == pytest.approx(1e6 / 307200, rel=1e-15)
    assert rows[0].vca_spatial is None


def test_join_empty():
    with pytest.raises(EmptyJoin):
        join_tables(_features(2), [{"sequence_id": "x", "preset": 5, "crf": 32, "bits": "1", "frame_count": "1"}])


def test_join_cli_schema_mismatch(tmp_path):
    (tmp_path / "f.csv").write_text("sequence_id,width\na,1\n")
    (tmp_path / "e.csv").write_text("sequence_id,preset,crf,bits,frame_count\n")
    assert main(["join", "--features", str(tmp_path / "f.csv"), "--encodings", str(tmp_path / "e.csv"),
                 "-o", str(tmp_path / "d.csv")]) == 1


@pytest.fixture
def dataset_file(tmp_path):
    path = tmp_path / "dataset.csv"
    rows = synthetic_rows(30, seed=3) + synthetic_rows(30, seed=4, preset=10)
    with open(path, "w") as fh:
        write_dataset(fh, rows)
    return path


def test_fit_polynomial_structure(dataset_file, tmp_path):
    out = tmp_path / "poly.json"
    assert main(["fit", "--dataset", str(dataset_file), "--model", "Polynomial", "--preset", "5", "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["kind"] == "polynomial" and data["preset"] == 5
    assert sorted(data["thetas"]) == ["32", "43", "55", "63"]
    assert all(len(v) == 4 for v in data["thetas"].values())


def test_predict_appends_columns(dataset_file, tmp_path):
    model = tmp_path / "ms.json"
    pred = tmp_path / "pred.csv"
    assert main(["fit", "--dataset", str(dataset_file), "--model", "MS", "--preset", "10", "-o", str(model)]) == 0
    assert main(["predict", "--dataset", str(dataset_file), "--model-file", str(model), "-o", str(pred)]) == 0
    with open(pred) as fh:
        records = read_table(fh, "predictions")
    assert len(records) == 120 and {r["preset"] for r in records} == {"10"}
    assert all(float(r["predicted_bpp"]) > 0 for r in records)


def test_predict_missing_column(dataset_file, tmp_path):
    with open(dataset_file) as fh:
        rows = read_dataset(fh)
    model = models.fit_model([r for r in rows if r.preset == 5], "MS", seed=0, preset=5)
    stripped = [replace(r, ip_ratio=None) for r in rows]
    with pytest.raises(MissingFeatureColumn):
        model.predict_many(stripped)
    bad = tmp_path / "bad.csv"
    with open(bad, "w") as fh:
        write_dataset(fh, stripped)
    models.save(model, tmp_path / "m.json")
    assert main(["predict", "--dataset", str(bad), "--model-file", str(tmp_path / "m.json"), "-o", "-"]) == 1


def test_predict_unknown_model_file(dataset_file, tmp_path):
    (tmp_path / "junk.json").write_text('{"format": "other"}')
    assert main(["predict", "--dataset", str(dataset_file), "--model-file", str(tmp_path / "junk.json")]) == 1
    assert main(["predict", "--dataset", str(dataset_file), "--model-file", str(tmp_path / "none.json")]) == 1


def test_evaluate_and_correlation(dataset_file, tmp_path):
    out = tmp_path / "eval"
    assert main(["evaluate", "--dataset", str(dataset_file), "--preset", "5", "--model", "MS", "Polynomial",
                 "--seed", "1", "--out-dir", str(out)]) == 0
    reports = json.loads((out / "eval_report_p5.json").read_text())
    assert [r["model_name"] for r in reports] == ["MS", "Polynomial"]
    assert all(len(r["per_fold"]) == 5 for r in reports)
    with open(out / "scatter_MS_p5.csv") as fh:
        assert len(read_table(fh, "scatter")) == 120
    corr = tmp_path / "corr.csv"
    assert main(["report-correlation", "--dataset", str(dataset_file), "--preset", "5", "-o", str(corr)]) == 0
    with open(corr) as fh:
        records = read_table(fh, "correlation")
    assert len(records) == 4 * 5


def test_evaluate_ln_bpp_convention_rejects_small_bpp(dataset_file, tmp_path):
    # synthetic bpp values are below 1, so their natural logs are negative
    assert main(["evaluate", "--dataset", str(dataset_file), "--preset", "5", "--model", "MS",
                 "--log-convention", "ln-bpp", "--out-dir", str(tmp_path / "e")]) == 1


def test_stdout_output(corpus, capsys):
    assert main(["analyze", str(corpus / "syn000.y4m")]) == 0
    assert capsys.readouterr().out.startswith("# msbitrate features v1")

"""Command-line entry point: ``msbitrate <subcommand> ...``."""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import models
from .dataset import (
    CRF_GRID,
    DATASET_FIELDS,
    DatasetRow,
    FEATURE_SETS,
    read_dataset,
    read_table,
    row_to_record,
    write_dataset,
    write_table,
)
from .descriptors import analyze_sequence
from .errors import EmptyJoin, MsBitrateError, NoInputs, PresetMismatch
from .evaluation import (
    LOG_CONVENTIONS,
    SCATTER_FIELDS,
    EvalReport,
    correlation_report,
    cross_validate,
)
from .frameio import LumaFrame, open_raw_yuv, open_y4m, parse_framerate, write_y4m
from .motion import AnalysisConfig, write_block_dump
from .synth import make_clip, pseudo_target_bpp

log = logging.getLogger("msbitrate")

EXIT_OK, EXIT_FAIL, EXIT_PARTIAL = 0, 1, 2

FEATURE_FIELDS = (
    "sequence_id", "path", "width", "height", "framerate", "n_frames",
    "mse_ms", "bpp_ms", "ip_ratio", "analysis_wall_time", "error",
)
ENCODING_FIELDS = ("sequence_id", "preset", "crf", "bits", "frame_count")
VCA_FIELDS = ("sequence_id", "vca_spatial", "vca_temporal")
REJECT_FIELDS = ("source", "sequence_id", "preset", "crf", "reason")
PREDICTION_FIELDS = DATASET_FIELDS + ("predicted_bpp", "relative_error")
CORRELATION_FIELDS = ("preset", "crf", "descriptor", "n", "pcc")


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    return open(path, "w", newline="")


def _config(args) -> AnalysisConfig:
    return AnalysisConfig(
        search_range=args.search_range, gop_length_seconds=args.gop_seconds, bitsize_from=args.bitsize_from
    )


# ---------------------------------------------------------------- analyze

def _read_manifest(path):
    with open(path, newline="") as fh:
        records = read_table(fh, "manifest", required=("path",))
    base = os.path.dirname(os.path.abspath(path))
    jobs = []
    for rec in records:
        rel = rec["path"]
        jobs.append({
            "path": rel,
            "resolved": rel if os.path.isabs(rel) else os.path.join(base, rel),
            "sequence_id": rec.get("sequence_id") or os.path.splitext(os.path.basename(rel))[0],
            "width": int(rec["width"]) if rec.get("width") else None,
            "height": int(rec["height"]) if rec.get("height") else None,
            "framerate": rec.get("framerate") or None,
        })
    return jobs


def _analyze_one(job, config, timing, block_dump_dir):
    row = {k: None for k in FEATURE_FIELDS}
    row["sequence_id"] = job["sequence_id"]
    row["path"] = job["path"]
    try:
        with open(job["resolved"], "rb") as fh:
            head = fh.read(9)
            fh.seek(0)
            if head == b"YUV4MPEG2" or job["width"] is None:
                meta, frames = open_y4m(fh)
            else:
                meta, frames = open_raw_yuv(
                    fh, job["width"], job["height"], parse_framerate(job["framerate"] or "30")
                )
            features, analyses = analyze_sequence(frames, meta.framerate, config, keep_blocks=bool(block_dump_dir))
    except (MsBitrateError, OSError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        log.warning("%s: %s", job["path"], row["error"])
        return row
    if block_dump_dir:
        os.makedirs(block_dump_dir, exist_ok=True)
        with open(os.path.join(block_dump_dir, f"{job['sequence_id']}.blocks.csv"), "w", newline="") as out:
            write_block_dump(out, analyses)
    rate = meta.framerate
    row.update(
        width=features.width, height=features.height,
        framerate=f"{rate.numerator}/{rate.denominator}", n_frames=features.n_frames,
        mse_ms=features.mse_ms, bpp_ms=features.bpp_ms, ip_ratio=features.ip_ratio,
        analysis_wall_time=round(features.analysis_wall_time, 6) if timing else None,
    )
    return row


def analyze_inputs(jobs, config, threads=1, timing=False, block_dump_dir=None):
    if not jobs:
        raise NoInputs("no input files given")
    work = lambda job: _analyze_one(job, config, timing, block_dump_dir)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(work, jobs))
    return [work(job) for job in jobs]


def cmd_analyze(args) -> int:
    jobs = []
    if args.manifest:
        jobs.extend(_read_manifest(args.manifest))
    for path in args.inputs:
        jobs.append({
            "path": path, "resolved": path,
            "sequence_id": os.path.splitext(os.path.basename(path))[0],
            "width": args.width, "height": args.height, "framerate": args.framerate,
        })
    rows = analyze_inputs(jobs, _config(args), args.threads, args.timing, args.block_dump)
    with _open_out(args.out) as fh:
        write_table(fh, "features", FEATURE_FIELDS, ([r[k] for k in FEATURE_FIELDS] for r in rows))
    failed = sum(1 for r in rows if r["error"])
    if failed == len(rows):
        return EXIT_FAIL
    return EXIT_PARTIAL if failed else EXIT_OK


# ---------------------------------------------------------------- join

def join_tables(features, encodings, vca=None):
    """Pair every encoding measurement with its sequence's descriptors.

    Returns ``(dataset_rows, rejects)``.
    """
    feats = {}
    rejects = []
    for rec in features:
        if rec.get("error"):
            rejects.append(["features", rec["sequence_id"], "", "", "analysis failed: " + rec["error"]])
            continue
        feats[rec["sequence_id"]] = rec
    vca_map = {rec["sequence_id"]: rec for rec in (vca or [])}
    rows = {}
    matched = set()
    for rec in encodings:
        sid = rec["sequence_id"]
        key = (sid, int(rec["preset"]), int(rec["crf"]))
        if sid not in feats:
            rejects.append(["encodings", sid, key[1], key[2], "no features for sequence"])
            continue
        if key in rows:
            rejects.append(["encodings", sid, key[1], key[2], "duplicate (sequence_id, preset, crf)"])
            continue
        f = feats[sid]
        width, height = int(f["width"]), int(f["height"])
        frame_count = int(rec["frame_count"])
        bits = float(rec["bits"])
        if bits <= 0 or frame_count <= 0:
            rejects.append(["encodings", sid, key[1], key[2], "non-positive bits or frame_count"])
            continue
        v = vca_map.get(sid, {})
        rows[key] = DatasetRow(
            sequence_id=sid, preset=key[1], crf=key[2], width=width, height=height,
            frame_count=frame_count, target_bits=bits,
            target_bpp=bits / (width * height * frame_count),
            bpp_ms=float(f["bpp_ms"]), mse_ms=float(f["mse_ms"]), ip_ratio=float(f["ip_ratio"]),
            vca_spatial=float(v["vca_spatial"]) if v.get("vca_spatial") else None,
            vca_temporal=float(v["vca_temporal"]) if v.get("vca_temporal") else None,
        )
        matched.add(sid)
    for sid in sorted(set(feats) - matched):
        rejects.append(["features", sid, "", "", "no encodings for sequence"])
    if not rows:
        raise EmptyJoin("no encoding rows matched any analyzed sequence")
    return [rows[k] for k in sorted(rows)], rejects


def cmd_join(args) -> int:
    with open(args.features, newline="") as fh:
        features = read_table(fh, "features", required=("sequence_id", "width", "height", "mse_ms", "bpp_ms", "ip_ratio"))
    with open(args.encodings, newline="") as fh:
        encodings = read_table(fh, "encodings", required=ENCODING_FIELDS)
    vca = None
    if args.vca:
        with open(args.vca, newline="") as fh:
            vca = read_table(fh, "vca", required=VCA_FIELDS)
    rows, rejects = join_tables(features, encodings, vca)
    with _open_out(args.out) as fh:
        write_dataset(fh, rows)
    rejects_path = args.rejects or (os.path.splitext(args.out)[0] + ".rejects.csv" if args.out not in (None, "-") else None)
    if rejects_path:
        with _open_out(rejects_path) as fh:
            write_table(fh, "rejects", REJECT_FIELDS, rejects)
    if rejects:
        log.warning("%d rows rejected during join", len(rejects))
    return EXIT_OK


# ---------------------------------------------------------------- models

def _load_rows(path, preset=None):
    with open(path, newline="") as fh:
        rows = read_dataset(fh)
    if preset is not None:
        rows = [r for r in rows if r.preset == preset]
        if not rows:
            raise PresetMismatch(f"dataset has no rows for preset {preset}")
    return rows


def _forest_params(args) -> dict:
    params = {}
    if getattr(args, "mtry", None):
        params["mtry"] = args.mtry
    if getattr(args, "min_node_size", None):
        params["min_node_size"] = args.min_node_size
    return params


def cmd_fit(args) -> int:
    rows = _load_rows(args.dataset, args.preset)
    model = models.fit_model(rows, args.model, seed=args.seed, preset=args.preset,
                             n_jobs=args.threads, **_forest_params(args))
    with _open_out(args.out) as fh:
        fh.write(models.dumps(model))
    return EXIT_OK


def cmd_predict(args) -> int:
    model = models.load(args.model_file)
    rows = _load_rows(args.dataset)
    if model.preset is not None:
        rows = [r for r in rows if r.preset == model.preset]
        if not rows:
            raise PresetMismatch(f"model was fitted for preset {model.preset}; dataset has no such rows")
    predicted = model.predict_many(rows)
    out_rows = []
    for row, value in zip(rows, predicted):
        value = float(value)
        out_rows.append(row_to_record(row) + [value, abs(value - row.target_bpp) / row.target_bpp])
    with _open_out(args.out) as fh:
        write_table(fh, "predictions", PREDICTION_FIELDS, out_rows)
    return EXIT_OK


def _runnable_models(rows, requested):
    if requested != ["all"]:
        return requested
    names = ["Polynomial"]
    for name, cols in FEATURE_SETS.items():
        if all(getattr(r, c) is not None for r in rows for c in cols):
            names.append(name)
        else:
            log.info("skipping %s: dataset lacks its columns", name)
    return [n for n in models.MODEL_NAMES if n in names]


def cmd_evaluate(args) -> int:
    rows = _load_rows(args.dataset, args.preset)
    reports: list[EvalReport] = []
    os.makedirs(args.out_dir, exist_ok=True)
    for name in _runnable_models(rows, args.model):
        report, scatter = cross_validate(rows, name, seed=args.seed, log_convention=args.log_convention,
                                         n_jobs=args.threads, **_forest_params(args))
        reports.append(report)
        with _open_out(os.path.join(args.out_dir, f"scatter_{name}_p{args.preset}.csv")) as fh:
            write_table(fh, "scatter", SCATTER_FIELDS, scatter)
        pcc = "n/a" if report.pcc is None else f"{report.pcc:.4f}"
        log.info("%s preset %s: MAPE %.4f PCC %s", name, args.preset, report.mape, pcc)
    with _open_out(os.path.join(args.out_dir, f"eval_report_p{args.preset}.json")) as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=1)
        fh.write("\n")
    with _open_out(os.path.join(args.out_dir, f"eval_report_p{args.preset}.csv")) as fh:
        write_table(fh, "eval-report", EvalReport.CSV_FIELDS, [r.csv_row() for r in reports])
    return EXIT_OK


def cmd_report_correlation(args) -> int:
    rows = _load_rows(args.dataset, args.preset)
    groups = sorted({(r.preset, r.crf) for r in rows})
    if args.crf is not None:
        groups = [g for g in groups if g[1] == args.crf]
    table = []
    for preset, crf in groups:
        subset = [r for r in rows if r.preset == preset and r.crf == crf]
        for name, n, value in correlation_report(subset):
            table.append([preset, crf, name, n, value])
    with _open_out(args.out) as fh:
        write_table(fh, "correlation", CORRELATION_FIELDS, table)
    return EXIT_OK


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    """Write a synthetic corpus plus pseudo encodings and pseudo VCA columns."""
    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    config = _config(args)
    manifest, encodings, vca = [], [], []
    for index in range(args.sequences):
        clip = make_clip(index, args.seed, args.frames)
        rate = clip.framerate
        if args.raw_every and index % args.raw_every == args.raw_every - 1:
            name = f"{clip.sequence_id}.yuv"
            with open(os.path.join(out, name), "wb") as fh:
                for frame in clip.frames:
                    fh.write(frame.tobytes())
                    fh.write(bytes([128]) * (2 * ((clip.width + 1) // 2) * ((clip.height + 1) // 2)))
            manifest.append([name, clip.sequence_id, clip.width, clip.height, f"{rate.numerator}/{rate.denominator}"])
        else:
            name = f"{clip.sequence_id}.y4m"
            with open(os.path.join(out, name), "wb") as fh:
                write_y4m(fh, clip.frames, rate)
            manifest.append([name, clip.sequence_id, None, None, None])
        features, _ = analyze_sequence(
            (LumaFrame(f, i) for i, f in enumerate(clip.frames)), rate, config
        )
        rng = np.random.default_rng([args.seed, index, 1])
        for preset in args.presets:
            for crf in CRF_GRID:
                bpp = pseudo_target_bpp(features.bpp_ms, features.mse_ms, crf, preset, rng, args.noise)
                bits = round(bpp * clip.width * clip.height * len(clip.frames))
                encodings.append([clip.sequence_id, preset, crf, bits, len(clip.frames)])
        vca.append([
            clip.sequence_id,
            round(clip.spatial_level * float(np.exp(rng.normal(0, 0.1))), 6),
            round(clip.motion_level * float(np.exp(rng.normal(0, 0.1))), 6),
        ])
    with _open_out(os.path.join(out, "manifest.csv")) as fh:
        write_table(fh, "manifest", ("path", "sequence_id", "width", "height", "framerate"), manifest)
    with _open_out(os.path.join(out, "encodings.csv")) as fh:
        write_table(fh, "encodings", ENCODING_FIELDS, encodings)
    with _open_out(os.path.join(out, "vca.csv")) as fh:
        write_table(fh, "vca", VCA_FIELDS, vca)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_threads(p):
    p.add_argument("--threads", type=int, default=1, help="worker threads; output is identical for any value")


def _add_analysis_flags(p):
    p.add_argument("--search-range", type=int, default=16, help="motion search range in pixels")
    p.add_argument("--gop-seconds", type=float, default=5.0, help="seconds between I-frames")
    p.add_argument("--bitsize-from", choices=("block", "intra"), default="block",
                   help="error used for per-block bit estimates")


def _add_model_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mtry", type=int, default=None, help="features tried per split (default p // 3)")
    p.add_argument("--min-node-size", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msbitrate", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="extract motion-search descriptors from video files")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--manifest", help="CSV with columns path[,sequence_id,width,height,framerate]")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--framerate", default=None, help="e.g. 30 or 30000/1001, for raw inputs")
    p.add_argument("--timing", action="store_true", help="record analysis wall time per file")
    p.add_argument("--block-dump", metavar="DIR", help="write per-block CSVs into DIR")
    p.add_argument("-o", "--out", default="-")
    _add_analysis_flags(p)
    _add_threads(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("join", help="pair features with measured encodings")
    p.add_argument("--features", required=True)
    p.add_argument("--encodings", required=True)
    p.add_argument("--vca", help="optional CSV sequence_id,vca_spatial,vca_temporal")
    p.add_argument("--rejects")
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_join)

    p = sub.add_parser("fit", help="fit one bitrate model on one preset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True, choices=models.MODEL_NAMES)
    p.add_argument("--preset", type=int, required=True)
    p.add_argument("-o", "--out", default="-")
    _add_model_flags(p)
    _add_threads(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="apply a fitted model to a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model-file", required=True)
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="5-fold cross-validation of model variants")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", nargs="+", default=["all"], choices=models.MODEL_NAMES + ("all",))
    p.add_argument("--preset", type=int, required=True)
    p.add_argument("--log-convention", choices=LOG_CONVENTIONS, default="ln-bits")
    p.add_argument("--out-dir", required=True)
    _add_model_flags(p)
    _add_threads(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report-correlation", help="PCC of each descriptor against encoded bpp")
    p.add_argument("--dataset", required=True)
    p.add_argument("--preset", type=int)
    p.add_argument("--crf", type=int)
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_report_correlation)

    p = sub.add_parser("synth", help="write a synthetic corpus with pseudo encodings")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sequences", type=int, default=20)
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--presets", type=int, nargs="+", default=[5, 10])
    p.add_argument("--noise", type=float, default=0.05, help="log-normal sigma of pseudo targets")
    p.add_argument("--raw-every", type=int, default=5, help="store every Nth clip as raw .yuv (0: never)")
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

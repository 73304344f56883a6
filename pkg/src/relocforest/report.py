"""Metric report rendering: text, csv, and json-lines.

All three formats share one row schema per frame:
frame, trans_err_m, rot_err_deg, inliers, correct, runtime_ms.
Failed frames carry nan errors and correct=0. With include_runtime=False
runtime columns are written as 0 so reports from identical configs are
byte-identical across machines.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .pipeline import RelocalizationResult, SequenceMetrics

CSV_HEADER = "frame,trans_err_m,rot_err_deg,inliers,correct,runtime_ms"
REPORT_FORMATS = ("text", "csv", "jsonl")


def build_rows(results: list[RelocalizationResult], metrics: SequenceMetrics,
               include_runtime: bool = True) -> list[dict]:
    if len(results) != metrics.frame_count:
        raise InvalidInputError("results do not match metrics")
    rows = []
    for i, result in enumerate(results):
        rows.append({
            "frame": i,
            "trans_err_m": float(metrics.translational_errors[i]),
            "rot_err_deg": float(metrics.rotational_errors[i]),
            "inliers": int(result.inlier_count),
            "correct": int(bool(metrics.correct[i])),
            "runtime_ms": float(result.runtime_ms) if include_runtime else 0.0,
        })
    return rows


def summary_row(n_max: int, results: list[RelocalizationResult],
                metrics: SequenceMetrics, include_runtime: bool = True) -> dict:
    runtimes = [r.runtime_ms for r in results]
    mean_runtime = float(np.mean(runtimes)) if runtimes else 0.0
    return {
        "n_max": int(n_max),
        "frames": metrics.frame_count,
        "failures": int(np.count_nonzero(~metrics.succeeded)),
        "percent_correct": float(metrics.percent_correct),
        "median_trans_m": float(metrics.median_translational),
        "median_rot_deg": float(metrics.median_rotational),
        "mean_runtime_ms": mean_runtime if include_runtime else 0.0,
    }


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_csv(rows: list[dict]) -> str:
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join(_csv_cell(row[k]) for k in CSV_HEADER.split(",")))
    return "\n".join(lines) + "\n"


def format_jsonl(rows: list[dict]) -> str:
    return "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows)


def parse_jsonl(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def format_text(rows: list[dict], summary: dict | None = None) -> str:
    lines = [
        f"{'frame':>6} {'trans_m':>10} {'rot_deg':>10} {'inliers':>8} "
        f"{'ok':>3} {'ms':>9}"
    ]
    for row in rows:
        lines.append(
            f"{row['frame']:>6d} {row['trans_err_m']:>10.4f} "
            f"{row['rot_err_deg']:>10.3f} {row['inliers']:>8d} "
            f"{row['correct']:>3d} {row['runtime_ms']:>9.1f}"
        )
    if summary is not None:
        lines.append("")
        lines.append(format_summary_text([summary]).rstrip("\n"))
    return "\n".join(lines) + "\n"


def format_summary_text(summaries: list[dict]) -> str:
    lines = []
    for s in summaries:
        lines.append(
            f"n_max={s['n_max']}: correct {100.0 * s['percent_correct']:.1f}% "
            f"of {s['frames']} frames ({s['failures']} failed), "
            f"median {s['median_trans_m']:.4f} m / {s['median_rot_deg']:.3f} deg, "
            f"mean {s['mean_runtime_ms']:.1f} ms/frame"
        )
    return "\n".join(lines) + "\n"


def format_summary_csv(summaries: list[dict]) -> str:
    keys = ["n_max", "frames", "failures", "percent_correct",
            "median_trans_m", "median_rot_deg", "mean_runtime_ms"]
    lines = [",".join(keys)]
    for s in summaries:
        lines.append(",".join(_csv_cell(s[k]) for k in keys))
    return "\n".join(lines) + "\n"


def format_report(fmt: str, rows: list[dict],
                  summary: dict | None = None) -> str:
    if fmt == "csv":
        return format_csv(rows)
    if fmt == "jsonl":
        body = format_jsonl(rows)
        if summary is not None:
            body += json.dumps({"summary": summary}, sort_keys=True) + "\n"
        return body
    if fmt == "text":
        return format_text(rows, summary)
    raise InvalidInputError(f"unknown report format: {fmt}")


def write_report(path: str | Path, fmt: str, rows: list[dict],
                 summary: dict | None = None) -> None:
    Path(path).write_text(format_report(fmt, rows, summary))


def format_pose_dump(results: list[RelocalizationResult],
                     gt_poses: list[np.ndarray]) -> str:
    """Pairs of estimated and ground-truth poses for external plotting.

    One line per frame: index, then 16 row-major values of the estimate
    (nan on failure), then 16 of the ground truth.
    """
    lines = ["# frame est[16] gt[16]"]
    for i, (result, gt) in enumerate(zip(results, gt_poses)):
        est = result.pose if result.succeeded else np.full((4, 4), np.nan)
        values = [repr(float(v)) for v in np.asarray(est).ravel()]
        values += [repr(float(v)) for v in np.asarray(gt).ravel()]
        lines.append(" ".join([str(i)] + values))
    return "\n".join(lines) + "\n"

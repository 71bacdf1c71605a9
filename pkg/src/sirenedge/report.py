"""Session-log evaluation pipeline and report rendering.

``evaluate_clips`` aggregates frame-wise, event-based, and false-positive
metrics across a set of logged clips against CSV annotations, optionally
with FTP filtering. Reports render as pretty text, canonical JSON (byte
stable for golden tests), a flat key/value CSV, and matplotlib figures.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import metrics as M
from .core import read_annotations, read_session_log
from .errors import ParseError, UndefinedRate


@dataclass
class ClipLog:
    clip_id: str
    records: list
    events: list
    duration_s: float
    sample_rate_hz: int


def load_clip_log(path, clip_id: str | None = None) -> ClipLog:
    """One JSONL session log as a clip; duration comes from the meta line
    when present, otherwise from the extent of records and events."""
    records, events, meta = read_session_log(path)
    meta = meta or {}
    cid = clip_id or meta.get("clip_id") or Path(path).stem
    rate = int(meta.get("sample_rate_hz", 32000))
    if "duration_s" in meta:
        duration = float(meta["duration_s"])
    else:
        spans = [r.t_start_s + r.frame_len_samples / rate for r in records]
        spans += [e.offset_s for e in events]
        duration = max(spans) if spans else 0.0
    return ClipLog(cid, records, events, duration, rate)


def load_clip_logs(path) -> list[ClipLog]:
    """A single .jsonl file or a directory of them (clip_id = file stem)."""
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.jsonl"))
        if not files:
            raise ParseError(f"{path}: no .jsonl logs found")
        return [load_clip_log(f) for f in files]
    return [load_clip_log(p)]


@dataclass
class EvalParams:
    resolution_s: float = M.DEFAULT_RESOLUTION_S
    onset_collar_s: float = M.DEFAULT_ONSET_COLLAR_S
    offset_ratio: float = M.DEFAULT_OFFSET_RATIO
    fp_threshold: float = M.DEFAULT_FP_THRESHOLD
    min_run: int = M.DEFAULT_MIN_RUN
    eval_threshold: float = 0.5


def _evaluate_subset(clips: list[ClipLog], refs, params: EvalParams) -> dict:
    refs_by_clip: dict[str, list] = {}
    for ev in refs:
        refs_by_clip.setdefault(ev.clip_id, []).append(ev)

    pred_cells = []
    ref_cells = []
    tp = fp = fn = 0
    per_clip_records = {}
    for clip in clips:
        clip_refs = sorted(refs_by_clip.get(clip.clip_id, []), key=lambda e: e.onset_s)
        pred_grid = M.discretize(clip.records, clip.duration_s, params.resolution_s,
                                 threshold=params.eval_threshold,
                                 sample_rate_hz=clip.sample_rate_hz)
        ref_grid = M.discretize(clip_refs, clip.duration_s, params.resolution_s)
        pred_cells.append(pred_grid.activations)
        ref_cells.append(ref_grid.activations)
        pred_events = sorted(clip.events, key=lambda e: e.onset_s)
        c_tp, c_fp, c_fn = M.match_events(pred_events, clip_refs,
                                          params.onset_collar_s, params.offset_ratio)
        tp, fp, fn = tp + c_tp, fp + c_fp, fn + c_fn
        per_clip_records[clip.clip_id] = clip.records

    if pred_cells:
        pooled_pred = M.FrameGrid(params.resolution_s, np.concatenate(pred_cells))
        pooled_ref = M.FrameGrid(params.resolution_s, np.concatenate(ref_cells))
        frame = asdict(M.frame_metrics(pooled_pred, pooled_ref))
    else:
        frame = {k: 0.0 for k in ("precision", "recall", "f1", "accuracy",
                                  "specificity", "balanced_accuracy", "error_rate")}

    event: dict = {"tp": tp, "fp": fp, "fn": fn}
    try:
        event.update(asdict(M.event_metrics(tp, fp, fn)))
        event["undefined_rate"] = False
    except UndefinedRate as exc:
        event["undefined_rate"] = True
        event["reason"] = str(exc)

    rate = clips[0].sample_rate_hz if clips else 32000
    fp_stats = M.fp_analysis(per_clip_records, refs, params.fp_threshold,
                             params.min_run, sample_rate_hz=rate)
    return {
        "n_clips": len(clips),
        "n_reference_events": len(refs),
        "n_predicted_events": int(sum(len(c.events) for c in clips)),
        "frame": frame,
        "event": event,
        "fp": asdict(fp_stats),
    }


def evaluate_clips(clips: list[ClipLog], refs, params: EvalParams,
                   ftp_filter: bool = False) -> dict:
    """Full report dict; adds an ftp_filtered section when requested."""
    known = {c.clip_id for c in clips}
    used_refs = [ev for ev in refs if ev.clip_id in known]
    report = {
        "params": asdict(params) | {"ftp_filter": ftp_filter},
        "ignored_reference_events": len(refs) - len(used_refs),
        "unfiltered": _evaluate_subset(clips, used_refs, params),
    }
    if ftp_filter:
        dropped = M.ftp_clip_ids(used_refs)
        kept_clips = [c for c in clips if c.clip_id not in dropped]
        kept_refs = M.filter_ftp(used_refs)
        report["ftp_filtered"] = _evaluate_subset(kept_clips, kept_refs, params)
        report["ftp_filtered"]["dropped_clips"] = sorted(dropped)
    return report


def report_json(report: dict) -> str:
    """Canonical serialization: stable key order, trailing newline."""
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _flatten(obj, prefix="") -> list[tuple[str, object]]:
    rows = []
    if isinstance(obj, dict):
        for key in sorted(obj):
            rows.extend(_flatten(obj[key], f"{prefix}{key}."))
    elif isinstance(obj, list):
        rows.append((prefix.rstrip("."), ";".join(str(v) for v in obj)))
    else:
        rows.append((prefix.rstrip("."), obj))
    return rows


def write_report_csv(report: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        for key, value in _flatten(report):
            writer.writerow([key, value])


def report_text(report: dict) -> str:
    lines = []
    for section in ("unfiltered", "ftp_filtered"):
        if section not in report:
            continue
        sub = report[section]
        lines.append(f"== {section} ({sub['n_clips']} clips, "
                     f"{sub['n_reference_events']} ref events, "
                     f"{sub['n_predicted_events']} predicted) ==")
        lines.append("frame-wise:")
        for key, value in sub["frame"].items():
            lines.append(f"  {key:18s} {value:.4f}")
        lines.append("event-based:")
        for key, value in sub["event"].items():
            if isinstance(value, float):
                lines.append(f"  {key:18s} {value:.4f}")
            else:
                lines.append(f"  {key:18s} {value}")
        lines.append("false positives:")
        for key, value in sub["fp"].items():
            if isinstance(value, float):
                lines.append(f"  {key:18s} {value:.4f}")
            else:
                lines.append(f"  {key:18s} {value}")
        lines.append("")
    return "\n".join(lines)


def render_figures(clips: list[ClipLog], refs, params: EvalParams, outdir,
                   max_timeline_clips: int = 4) -> list[Path]:
    """Probability timelines and FP run-length histogram as PNG files."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    refs_by_clip: dict[str, list] = {}
    for ev in refs:
        refs_by_clip.setdefault(ev.clip_id, []).append(ev)

    shown = [c for c in clips if c.records][:max_timeline_clips]
    if shown:
        fig, axes = plt.subplots(len(shown), 1, figsize=(9, 2.4 * len(shown)),
                                 squeeze=False, sharex=False)
        for ax, clip in zip(axes[:, 0], shown):
            t = [r.t_start_s for r in clip.records]
            ax.plot(t, [r.raw_p for r in clip.records], lw=0.8, label="raw p")
            ax.plot(t, [r.smoothed_p for r in clip.records], lw=1.2, label="smoothed")
            ax.axhline(params.eval_threshold, color="k", ls=":", lw=0.8)
            for ev in clip.events:
                ax.axvspan(ev.onset_s, ev.offset_s, color="tab:orange", alpha=0.25)
            for ev in refs_by_clip.get(clip.clip_id, []):
                ax.axvspan(ev.onset_s, ev.offset_s, color="tab:green", alpha=0.15,
                           hatch="//")
            ax.set_ylim(-0.05, 1.05)
            ax.set_ylabel("p")
            ax.set_title(clip.clip_id, fontsize=9)
        axes[-1, 0].set_xlabel("time [s]")
        axes[0, 0].legend(loc="upper right", fontsize=8)
        fig.tight_layout()
        path = outdir / "timeline.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    run_lengths = []
    for clip in clips:
        flags = M.fp_flags(clip.records, refs_by_clip.get(clip.clip_id, []),
                           params.fp_threshold, sample_rate_hz=clip.sample_rate_hz)
        run = 0
        for flag in flags + [False]:
            if flag:
                run += 1
            else:
                if run >= params.min_run:
                    run_lengths.append(run)
                run = 0
    fig, ax = plt.subplots(figsize=(5, 3))
    if run_lengths:
        bins = np.arange(params.min_run - 0.5, max(run_lengths) + 1.5)
        ax.hist(run_lengths, bins=bins, color="tab:red", alpha=0.8)
    ax.set_xlabel("FP run length [frames]")
    ax.set_ylabel("count")
    ax.set_title(f"FP events (runs >= {params.min_run})", fontsize=9)
    fig.tight_layout()
    path = outdir / "fp_runs.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)
    return written


def evaluate_paths(log_path, ref_path, params: EvalParams, ftp_filter: bool = False):
    """Convenience: file inputs to (clips, refs, report)."""
    clips = load_clip_logs(log_path)
    refs = read_annotations(ref_path)
    return clips, refs, evaluate_clips(clips, refs, params, ftp_filter=ftp_filter)

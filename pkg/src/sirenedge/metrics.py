"""Frame-wise and event-based detection metrics with false-positive analysis.

Evaluation follows the standard SED recipe: activity is discretized onto a
fixed-resolution binary grid for frame-wise scoring, while events are
matched one-to-one under an onset collar and a duration-proportional offset
tolerance. Single-class event error rate decomposes exactly into
deletion rate + insertion rate (unmatched references / unmatched
predictions, both divided by the reference count).

False-positive analysis mirrors the over-threshold convention: a frame is a
false positive when its raw probability exceeds ``fp_threshold`` while its
span overlaps no reference event; runs of at least ``min_run`` consecutive
FP frames count as FP events.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GroundTruthEvent, InferenceRecord
from .errors import GridMismatch, OrderViolation, UndefinedRate

DEFAULT_RESOLUTION_S = 0.1
DEFAULT_ONSET_COLLAR_S = 0.2
DEFAULT_OFFSET_RATIO = 0.5
DEFAULT_FP_THRESHOLD = 0.6
DEFAULT_MIN_RUN = 3


@dataclass
class FrameGrid:
    resolution_s: float
    activations: np.ndarray  # uint8 0/1

    def __post_init__(self):
        if self.resolution_s <= 0:
            raise ValueError("resolution_s must be positive")
        self.activations = np.asarray(self.activations, dtype=np.uint8)


@dataclass
class FrameMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    specificity: float
    balanced_accuracy: float
    error_rate: float


@dataclass
class EventMetrics:
    f_measure: float
    precision: float
    recall: float
    error_rate: float
    deletion_rate: float
    insertion_rate: float


@dataclass
class FpStats:
    afps: float          # mean FP frames per clip
    afpsp: float         # mean per-clip percentage of FP frames
    ac_frames: float     # mean confidence over all FP frames
    fp_event_count: int  # runs of >= min_run consecutive FP frames
    ac_events: float     # mean of per-run mean confidences
    mrl: int             # maximum run length among FP events
    arl: float           # average run length among FP events


def record_span(record: InferenceRecord, sample_rate_hz: int) -> tuple[float, float]:
    """Time span a scored frame claims on the evaluation axis."""
    return record.t_start_s, record.t_start_s + record.frame_len_samples / sample_rate_hz


def discretize(items, clip_duration_s: float, resolution_s: float = DEFAULT_RESOLUTION_S,
               *, threshold: float = 0.5, sample_rate_hz: int = 32000) -> FrameGrid:
    """Binary activity grid over [0, clip_duration_s).

    Accepts detection/ground-truth events (interval overlap) or inference
    records (a cell is active when any covering frame scored at or above
    the threshold). Cell i covers [i*r, (i+1)*r); the grid has
    ceil(duration / r) cells.
    """
    if resolution_s <= 0:
        raise ValueError("resolution_s must be positive")
    n_cells = int(np.ceil(clip_duration_s / resolution_s))
    grid = np.zeros(n_cells, dtype=np.uint8)
    for item in items:
        if isinstance(item, InferenceRecord):
            if item.raw_p < threshold:
                continue
            start, stop = record_span(item, sample_rate_hz)
        else:
            start, stop = item.onset_s, item.offset_s
        first = max(0, int(np.floor(start / resolution_s)))
        last = min(n_cells, int(np.ceil(stop / resolution_s)))
        if stop > start:
            grid[first:last] = 1
    return FrameGrid(resolution_s, grid)


def frame_metrics(pred: FrameGrid, ref: FrameGrid) -> FrameMetrics:
    """Confusion-count metrics between equal-shaped binary grids.

    Zero-denominator conventions: precision 0 when nothing was predicted,
    recall 0 when no reference frames exist, specificity 0 when no negative
    reference frames exist, f1 0 when precision + recall is 0.
    """
    if len(pred.activations) != len(ref.activations):
        raise GridMismatch(
            f"grid lengths differ: {len(pred.activations)} vs {len(ref.activations)}"
        )
    if pred.resolution_s != ref.resolution_s:
        raise GridMismatch("grid resolutions differ")
    p = pred.activations.astype(bool)
    r = ref.activations.astype(bool)
    tp = int(np.sum(p & r))
    fp = int(np.sum(p & ~r))
    fn = int(np.sum(~p & r))
    tn = int(np.sum(~p & ~r))
    total = tp + fp + fn + tn

    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    accuracy = (tp + tn) / total if total > 0 else 0.0
    specificity = tn / (tn + fp) if tn + fp > 0 else 0.0
    balanced = (recall + specificity) / 2.0
    error_rate = (fp + fn) / total if total > 0 else 0.0
    return FrameMetrics(precision, recall, f1, accuracy, specificity, balanced, error_rate)


def _check_sorted(events, label: str) -> None:
    onsets = [e.onset_s for e in events]
    if any(b < a for a, b in zip(onsets, onsets[1:])):
        raise OrderViolation(f"{label} events must be sorted by onset")


def match_events(pred, ref, onset_collar_s: float = DEFAULT_ONSET_COLLAR_S,
                 offset_ratio: float = DEFAULT_OFFSET_RATIO) -> tuple[int, int, int]:
    """Greedy one-to-one event matching in onset order; returns (tp, fp, fn).

    A prediction matches a reference when the onsets differ by at most the
    collar and the offsets by at most max(collar, offset_ratio * reference
    duration). Each reference is consumed by at most one prediction.
    """
    if onset_collar_s <= 0:
        raise ValueError("onset_collar_s must be positive")
    _check_sorted(pred, "predicted")
    _check_sorted(ref, "reference")
    matched = [False] * len(ref)
    tp = 0
    for ev in pred:
        for j, gt in enumerate(ref):
            if matched[j]:
                continue
            if abs(ev.onset_s - gt.onset_s) > onset_collar_s:
                continue
            offset_tol = max(onset_collar_s, offset_ratio * (gt.offset_s - gt.onset_s))
            if abs(ev.offset_s - gt.offset_s) > offset_tol:
                continue
            matched[j] = True
            tp += 1
            break
    fp = len(pred) - tp
    fn = len(ref) - tp
    return tp, fp, fn


def event_metrics(tp: int, fp: int, fn: int) -> EventMetrics:
    """Event-level scores from match counts.

    Deletion and insertion rates are normalized by the reference event
    count N = tp + fn, so error_rate = deletion_rate + insertion_rate holds
    exactly. N = 0 with predictions present has no defined rate.
    """
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    n_ref = tp + fn
    if n_ref == 0 and fp > 0:
        raise UndefinedRate("insertion rate undefined: no reference events but fp > 0")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / n_ref if n_ref > 0 else 0.0
    f_measure = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    deletion = fn / n_ref if n_ref > 0 else 0.0
    insertion = fp / n_ref if n_ref > 0 else 0.0
    return EventMetrics(f_measure, precision, recall,
                        deletion + insertion, deletion, insertion)


def filter_ftp(refs) -> list[GroundTruthEvent]:
    """Drop reference events flagged as suspected mis-annotations."""
    return [ev for ev in refs if not ev.ftp]


def ftp_clip_ids(refs) -> set[str]:
    """Clips whose every reference event is FTP-flagged.

    These clips leave the evaluation denominator entirely when filtering is
    on; clips that retain at least one valid event stay.
    """
    flagged = {ev.clip_id for ev in refs if ev.ftp}
    kept = {ev.clip_id for ev in refs if not ev.ftp}
    return flagged - kept


def fp_flags(records, clip_refs, fp_threshold: float = DEFAULT_FP_THRESHOLD,
             *, sample_rate_hz: int = 32000) -> list[bool]:
    """Per-record false-positive flags for one clip."""
    flags = []
    for rec in records:
        is_fp = False
        if rec.raw_p > fp_threshold:
            start, stop = record_span(rec, sample_rate_hz)
            overlaps = any(
                start < ev.offset_s and stop > ev.onset_s for ev in clip_refs
            )
            is_fp = not overlaps
        flags.append(is_fp)
    return flags


def fp_analysis(per_clip_records: dict[str, list[InferenceRecord]], refs,
                fp_threshold: float = DEFAULT_FP_THRESHOLD,
                min_run: int = DEFAULT_MIN_RUN, *,
                sample_rate_hz: int = 32000) -> FpStats:
    """False-positive frame and run statistics across clips.

    AFPS / AFPSP average per clip; frame confidence pools all FP frames.
    FP events are maximal runs of at least ``min_run`` consecutive FP
    frames within one clip.
    """
    refs_by_clip: dict[str, list] = {}
    for ev in refs:
        refs_by_clip.setdefault(ev.clip_id, []).append(ev)

    per_clip_fp_counts: list[int] = []
    per_clip_fp_pct: list[float] = []
    fp_confidences: list[float] = []
    run_lengths: list[int] = []
    run_confidences: list[float] = []

    for clip_id, records in per_clip_records.items():
        clip_refs = refs_by_clip.get(clip_id, [])
        flags = fp_flags(records, clip_refs, fp_threshold, sample_rate_hz=sample_rate_hz)
        for rec, flag in zip(records, flags):
            if flag:
                fp_confidences.append(rec.raw_p)
        per_clip_fp_counts.append(sum(flags))
        per_clip_fp_pct.append(100.0 * sum(flags) / len(flags) if flags else 0.0)

        run = 0
        run_sum = 0.0
        for flag, rec in zip(flags + [False], list(records) + [None]):
            if flag:
                run += 1
                run_sum += rec.raw_p
            else:
                if run >= min_run:
                    run_lengths.append(run)
                    run_confidences.append(run_sum / run)
                run = 0
                run_sum = 0.0

    n_clips = len(per_clip_records)
    return FpStats(
        afps=sum(per_clip_fp_counts) / n_clips if n_clips else 0.0,
        afpsp=sum(per_clip_fp_pct) / n_clips if n_clips else 0.0,
        ac_frames=sum(fp_confidences) / len(fp_confidences) if fp_confidences else 0.0,
        fp_event_count=len(run_lengths),
        ac_events=sum(run_confidences) / len(run_confidences) if run_confidences else 0.0,
        mrl=max(run_lengths) if run_lengths else 0,
        arl=sum(run_lengths) / len(run_lengths) if run_lengths else 0.0,
    )

"""Evaluation sweeps over track sets, aggregation, and report emission."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .audio import AudioBuffer, read_wav
from .listening import MosSummary
from .metrics import (
    METRIC_NAMES,
    SeparationMetrics,
    evaluate_track,
)
from .separation import StemPair

__all__ = [
    "EvalTrack",
    "EvalSet",
    "EvalRow",
    "TrackError",
    "UnsupportedEvaluationError",
    "AggregateEntry",
    "AggregateReport",
    "load_eval_set",
    "save_eval_set",
    "run_evaluation",
    "aggregate",
    "emit_report",
    "write_errors_json",
    "MIXTURE_BASELINE_SYSTEM",
    "format_db",
    "format_mos",
]

log = logging.getLogger(__name__)

MIXTURE_BASELINE_SYSTEM = "mixture"

_TRIM_WARN_FRACTION = 0.001

_METRIC_LABELS = {"sdr": "SDR", "sir": "SIR", "sar": "SAR", "si_sdr": "SI-SDR"}
_MOS_METRICS = ("OVRL", "SIG", "BAK")


class UnsupportedEvaluationError(Exception):
    """Objective evaluation requested for a set without reference stems."""


@dataclass(frozen=True)
class EvalTrack:
    track_id: str
    mixture: str
    speech_ref: str | None = None
    music_ref: str | None = None
    speech_est: str | None = None
    music_est: str | None = None

    @property
    def has_references(self) -> bool:
        return self.speech_ref is not None and self.music_ref is not None


@dataclass(frozen=True)
class EvalSet:
    """A named list of tracks; paths are relative to ``root``."""

    name: str
    tracks: tuple[EvalTrack, ...]
    root: Path

    def __post_init__(self) -> None:
        object.__setattr__(self, "root", Path(self.root))
        seen = set()
        for t in self.tracks:
            if t.track_id in seen:
                raise ValueError(f"duplicate track_id {t.track_id!r}")
            seen.add(t.track_id)


@dataclass(frozen=True)
class EvalRow:
    """One metrics row annotated with its evaluation set and system."""

    set_name: str
    system: str
    metrics: SeparationMetrics


@dataclass(frozen=True)
class TrackError:
    track_id: str
    stage: str
    message: str


@dataclass(frozen=True)
class AggregateEntry:
    """Mean/std over finite rows of one (set, system, source, metric) group."""

    mean: float | None
    std: float | None
    count: int
    infinite_count: int


@dataclass(frozen=True)
class AggregateReport:
    entries: Mapping[tuple[str, str, str, str], AggregateEntry]

    def sorted_items(self):
        return sorted(self.entries.items())

    def systems(self) -> tuple[str, ...]:
        return tuple(sorted({k[1] for k in self.entries}))


def load_eval_set(path) -> EvalSet:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    tracks = tuple(
        EvalTrack(
            track_id=t["track_id"],
            mixture=t["mixture"],
            speech_ref=t.get("speech_ref"),
            music_ref=t.get("music_ref"),
            speech_est=t.get("speech_est"),
            music_est=t.get("music_est"),
        )
        for t in doc["tracks"]
    )
    return EvalSet(name=doc["name"], tracks=tracks, root=path.parent)


def save_eval_set(eval_set: EvalSet, path) -> None:
    doc = {
        "name": eval_set.name,
        "tracks": [
            {
                k: v
                for k, v in {
                    "track_id": t.track_id,
                    "mixture": t.mixture,
                    "speech_ref": t.speech_ref,
                    "music_ref": t.music_ref,
                    "speech_est": t.speech_est,
                    "music_est": t.music_est,
                }.items()
                if v is not None
            }
            for t in eval_set.tracks
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _load_aligned(eval_set: EvalSet, track: EvalTrack) -> tuple[AudioBuffer, StemPair, StemPair]:
    def load(rel: str) -> AudioBuffer:
        return read_wav(eval_set.root / rel)

    mixture = load(track.mixture)
    speech_ref = load(track.speech_ref)
    music_ref = load(track.music_ref)
    speech_est = load(track.speech_est)
    music_est = load(track.music_est)

    buffers = [mixture, speech_ref, music_ref, speech_est, music_est]
    lengths = [b.num_samples for b in buffers]
    n = min(lengths)
    if n == 0:
        raise ValueError("empty signal in track")
    worst_trim = max(length - n for length in lengths)
    if worst_trim / max(lengths) > _TRIM_WARN_FRACTION:
        log.warning(
            "track %s: trimming up to %d samples (>%.1f%%) to align lengths",
            track.track_id, worst_trim, 100 * _TRIM_WARN_FRACTION,
        )

    def cut(buffer: AudioBuffer) -> AudioBuffer:
        if buffer.num_samples == n:
            return buffer
        return AudioBuffer(buffer.samples[:, :n], buffer.sample_rate)

    mixture, speech_ref, music_ref, speech_est, music_est = (cut(b) for b in buffers)
    return (
        mixture,
        StemPair(speech=speech_est, music=music_est),
        StemPair(speech=speech_ref, music=music_ref),
    )


def _evaluate_one_track(
    eval_set: EvalSet,
    track: EvalTrack,
    system_name: str,
    filter_length: int,
    include_baseline: bool,
) -> tuple[list[EvalRow], list[TrackError]]:
    if track.speech_est is None or track.music_est is None:
        return [], [TrackError(track.track_id, "load", "missing estimate paths")]
    try:
        mixture, estimates, references = _load_aligned(eval_set, track)
    except Exception as exc:
        return [], [TrackError(track.track_id, "load", str(exc))]
    try:
        result = evaluate_track(mixture, estimates, references, filter_length, track.track_id)
    except Exception as exc:
        return [], [TrackError(track.track_id, "evaluate", str(exc))]
    rows = [EvalRow(eval_set.name, system_name, m) for m in result.estimate]
    if include_baseline:
        rows.extend(EvalRow(eval_set.name, MIXTURE_BASELINE_SYSTEM, m) for m in result.mixture_baseline)
    return rows, []


def run_evaluation(
    eval_set: EvalSet,
    system_name: str,
    filter_length: int = 512,
    include_baseline: bool = True,
    workers: int = 1,
) -> tuple[list[EvalRow], list[TrackError]]:
    """Evaluate every track; failures are collected per track, not fatal.

    Tracks are processed in track_id order (in parallel when ``workers`` > 1)
    and the per-track results are concatenated in that same order, so rows,
    aggregates, and reports are identical for any worker count.
    """
    if any(not t.has_references for t in eval_set.tracks):
        raise UnsupportedEvaluationError(
            f"evaluation set {eval_set.name!r} has tracks without reference stems; "
            "objective metrics need references - run the subjective listening test "
            "(serve-test) for no-reference sets"
        )
    ordered = sorted(eval_set.tracks, key=lambda t: t.track_id)

    def job(track: EvalTrack):
        return _evaluate_one_track(eval_set, track, system_name, filter_length, include_baseline)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, ordered))
    else:
        results = [job(track) for track in ordered]

    rows: list[EvalRow] = []
    errors: list[TrackError] = []
    for track_rows, track_errors in results:
        rows.extend(track_rows)
        errors.extend(track_errors)
    return rows, errors


def aggregate(rows: Sequence[EvalRow]) -> AggregateReport:
    """Mean and population std per (set, system, source, metric) over finite
    values; non-finite rows are counted separately and never averaged."""
    if not rows:
        raise ValueError("no rows to aggregate")
    groups: dict[tuple[str, str, str, str], list[float]] = {}
    infinite: dict[tuple[str, str, str, str], int] = {}
    for row in rows:
        for metric in METRIC_NAMES:
            key = (row.set_name, row.system, row.metrics.source, metric)
            value = getattr(row.metrics, metric)
            if math.isfinite(value):
                groups.setdefault(key, []).append(value)
                infinite.setdefault(key, 0)
            else:
                infinite[key] = infinite.get(key, 0) + 1
                groups.setdefault(key, [])
    entries = {}
    for key, values in groups.items():
        if values:
            arr = np.asarray(values)
            entry = AggregateEntry(
                mean=float(arr.mean()),
                std=float(arr.std()),
                count=len(values),
                infinite_count=infinite[key],
            )
        else:
            entry = AggregateEntry(mean=None, std=None, count=0, infinite_count=infinite[key])
        entries[key] = entry
    return AggregateReport(entries=entries)


def format_db(value: float) -> str:
    if value is None or not math.isfinite(value):
        return "inf dB" if value == math.inf else ("-inf dB" if value == -math.inf else "-")
    return f"{value:.1f} dB"


def format_mos(mean: float, std: float) -> str:
    return f"{mean:.2f}±{std:.2f}"


def _mos_lookup(mos: MosSummary | None):
    table: dict[tuple[str, str, str], tuple[float, float]] = {}
    if mos is not None:
        for g in mos.groups:
            table[(g.condition, g.metric, g.source_type)] = (g.mean, g.std)
    return table


def _emit_markdown(report: AggregateReport, mos: MosSummary | None) -> str:
    mos_table = _mos_lookup(mos)
    sections: dict[tuple[str, str], dict[str, dict[str, AggregateEntry]]] = {}
    for (set_name, system, source, metric), entry in report.sorted_items():
        sections.setdefault((set_name, source), {}).setdefault(system, {})[metric] = entry

    mos_metrics = tuple(m for m in _MOS_METRICS if any(k[1] == m for k in mos_table))
    lines = ["# Separation benchmark report", ""]
    flagged: list[str] = []
    for (set_name, source), by_system in sorted(sections.items()):
        lines.append(f"## {set_name} / {source}")
        lines.append("")
        header = ["system"] + [f"{_METRIC_LABELS[m]} (↑)" for m in METRIC_NAMES]
        header += [f"{m} (↑)" for m in mos_metrics]
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|" + "---|" * len(header))
        for system in sorted(by_system):
            cells = [system]
            for metric in METRIC_NAMES:
                entry = by_system[system].get(metric)
                if entry is None:
                    cells.append("-")
                elif entry.mean is None:
                    cells.append("-")
                    flagged.append(f"{set_name}/{system}/{source}/{metric}: all rows non-finite")
                else:
                    cells.append(format_db(entry.mean))
            for metric in mos_metrics:
                found = mos_table.get((system, metric, source))
                cells.append(format_mos(*found) if found else "-")
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
    if flagged:
        lines.append("Notes:")
        lines.extend(f"- {note} (mean omitted)" for note in flagged)
        lines.append("")
    return "\n".join(lines)


def _emit_csv(report: AggregateReport, mos: MosSummary | None) -> str:
    lines = ["set,system,source,metric,mean,std,count,infinite_count"]
    for (set_name, system, source, metric), e in report.sorted_items():
        mean = "" if e.mean is None else repr(e.mean)
        std = "" if e.std is None else repr(e.std)
        lines.append(f"{set_name},{system},{source},{metric},{mean},{std},{e.count},{e.infinite_count}")
    if mos is not None:
        for g in sorted(mos.groups, key=lambda g: (g.condition, g.source_type, g.metric)):
            lines.append(f"mos,{g.condition},{g.source_type},{g.metric},{g.mean!r},{g.std!r},{g.n},0")
    return "\n".join(lines) + "\n"


def _emit_json(report: AggregateReport, mos: MosSummary | None) -> str:
    entries = [
        {
            "set": set_name,
            "system": system,
            "source": source,
            "metric": metric,
            "mean": e.mean,
            "std": e.std,
            "count": e.count,
            "infinite_count": e.infinite_count,
        }
        for (set_name, system, source, metric), e in report.sorted_items()
    ]
    doc: dict = {"entries": entries}
    if mos is not None:
        doc["mos"] = [
            {
                "condition": g.condition,
                "metric": g.metric,
                "source_type": g.source_type,
                "mean": g.mean,
                "std": g.std,
                "n": g.n,
            }
            for g in sorted(mos.groups, key=lambda g: (g.condition, g.source_type, g.metric))
        ]
    return json.dumps(doc, indent=2) + "\n"


def emit_report(report: AggregateReport, fmt: str = "markdown", mos: MosSummary | None = None) -> str:
    """Render an aggregate report as ``markdown``, ``csv``, or ``json``.

    Markdown mirrors the benchmark table layout: dB values at one decimal
    ("12.2 dB"), opinion scores as mean±std at two decimals ("3.84±0.88").
    MOS columns appear only when a summary is supplied.
    """
    if fmt == "markdown":
        return _emit_markdown(report, mos)
    if fmt == "csv":
        return _emit_csv(report, mos)
    if fmt == "json":
        return _emit_json(report, mos)
    raise ValueError(f"unknown report format {fmt!r}")


def write_errors_json(errors: Sequence[TrackError], path) -> None:
    doc = [{"track_id": e.track_id, "stage": e.stage, "message": e.message} for e in errors]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

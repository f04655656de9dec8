"""Two-part subjective listening test: sessions, rating storage, MOS math.

Part 1 collects overall quality (OVRL); part 2 collects signal distortion
(SIG) and background intrusiveness (BAK).  All ratings are integers on a
1..5 scale with P.835-style anchor wording.  Every session presents the
training excerpt first and then the scored excerpts in seeded-random order,
with conditions anonymized behind opaque stimulus tokens; ratings are
de-anonymized when stored, and the training excerpt never enters the mean
opinion scores.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .rng import SplitMix64

__all__ = [
    "ListeningTestError",
    "ConfigError",
    "UnknownSessionError",
    "RatingValidationError",
    "ExcerptSpec",
    "TestConfig",
    "Session",
    "SessionTask",
    "RatingRecord",
    "RatingStore",
    "MosGroup",
    "MosSummary",
    "load_test_config",
    "create_session",
    "record_ratings",
    "compute_mos",
    "PART_METRICS",
    "DEFAULT_ANCHORS",
]

PART_METRICS: dict[int, tuple[str, ...]] = {1: ("OVRL",), 2: ("SIG", "BAK")}

DEFAULT_ANCHORS: dict[str, dict[str, str]] = {
    "OVRL": {"5": "Excellent", "4": "Good", "3": "Fair", "2": "Poor", "1": "Bad"},
    "SIG": {
        "5": "Not distorted",
        "4": "Slightly distorted",
        "3": "Somewhat distorted",
        "2": "Fairly distorted",
        "1": "Very distorted",
    },
    "BAK": {
        "5": "Not noticeable",
        "4": "Slightly noticeable",
        "3": "Noticeable but not intrusive",
        "2": "Somewhat intrusive",
        "1": "Very intrusive",
    },
}

MIXTURE_STIMULUS_ID = "mix"


class ListeningTestError(Exception):
    pass


class ConfigError(ListeningTestError):
    pass


class UnknownSessionError(ListeningTestError):
    """Ratings posted against a session id the service does not know."""


class RatingValidationError(ListeningTestError):
    def __init__(self, message: str, offenders: list | None = None):
        super().__init__(message)
        self.offenders = offenders or []


@dataclass(frozen=True)
class ExcerptSpec:
    excerpt_id: str
    mixture: str
    estimates: Mapping[str, str]
    source_type: str = "speech"


@dataclass(frozen=True)
class TestConfig:
    excerpts: tuple[ExcerptSpec, ...]
    conditions: tuple[str, ...]
    training_excerpt_id: str
    root: Path = Path(".")
    parts: Mapping[int, tuple[str, ...]] = field(default_factory=lambda: dict(PART_METRICS))
    scale: tuple[int, int] = (1, 5)
    anchors: Mapping[str, Mapping[str, str]] = field(default_factory=lambda: DEFAULT_ANCHORS)

    def __post_init__(self) -> None:
        if not self.conditions:
            raise ConfigError("at least one condition is required")
        ids = [e.excerpt_id for e in self.excerpts]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate excerpt ids")
        if self.training_excerpt_id not in ids:
            raise ConfigError(f"training excerpt {self.training_excerpt_id!r} not in excerpts")
        for e in self.excerpts:
            missing = [c for c in self.conditions if c not in e.estimates]
            if missing:
                raise ConfigError(f"excerpt {e.excerpt_id!r} lacks estimates for {missing}")
        lo, hi = self.scale
        if not (lo < hi):
            raise ConfigError(f"bad rating scale {self.scale}")
        object.__setattr__(self, "root", Path(self.root))

    def excerpt(self, excerpt_id: str) -> ExcerptSpec:
        for e in self.excerpts:
            if e.excerpt_id == excerpt_id:
                return e
        raise KeyError(excerpt_id)

    def scored_excerpts(self) -> tuple[ExcerptSpec, ...]:
        return tuple(e for e in self.excerpts if e.excerpt_id != self.training_excerpt_id)


def load_test_config(path) -> TestConfig:
    """Read a test config JSON; audio paths are relative to the file."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    excerpts = tuple(
        ExcerptSpec(
            excerpt_id=e["excerpt_id"],
            mixture=e["mixture"],
            estimates=dict(e["estimates"]),
            source_type=e.get("source_type", doc.get("source_type", "speech")),
        )
        for e in doc["excerpts"]
    )
    parts = {int(k): tuple(v) for k, v in doc.get("parts", {}).items()} or dict(PART_METRICS)
    return TestConfig(
        excerpts=excerpts,
        conditions=tuple(doc["conditions"]),
        training_excerpt_id=doc["training_excerpt_id"],
        root=path.parent,
        parts=parts,
        scale=tuple(doc.get("scale", (1, 5))),
        anchors=doc.get("anchors", DEFAULT_ANCHORS),
    )


@dataclass(frozen=True)
class SessionTask:
    excerpt_id: str
    training: bool
    stimuli: tuple[tuple[str, str], ...]  # (stimulus_id, condition); condition stays server-side


@dataclass(frozen=True)
class Session:
    session_id: str
    part: int
    seed: int
    participant: str
    metrics: tuple[str, ...]
    tasks: tuple[SessionTask, ...]
    scale: tuple[int, int]
    anchors: Mapping[str, Mapping[str, str]]

    def task_for(self, excerpt_id: str) -> SessionTask:
        for t in self.tasks:
            if t.excerpt_id == excerpt_id:
                return t
        raise KeyError(excerpt_id)

    def condition_for(self, excerpt_id: str, stimulus_id: str) -> str:
        for sid, condition in self.task_for(excerpt_id).stimuli:
            if sid == stimulus_id:
                return condition
        raise KeyError(stimulus_id)

    def descriptor(self) -> dict:
        """Public JSON view; never exposes condition names."""
        return {
            "session_id": self.session_id,
            "part": self.part,
            "metrics": list(self.metrics),
            "scale": {"min": self.scale[0], "max": self.scale[1]},
            "anchors": {m: dict(self.anchors.get(m, {})) for m in self.metrics},
            "tasks": [
                {
                    "excerpt_id": t.excerpt_id,
                    "training": t.training,
                    "mixture_url": f"/api/audio/{t.excerpt_id}/{MIXTURE_STIMULUS_ID}",
                    "stimuli": [
                        {"stimulus_id": sid, "url": f"/api/audio/{t.excerpt_id}/{sid}"}
                        for sid, _ in t.stimuli
                    ],
                }
                for t in self.tasks
            ],
        }


def stimulus_token(seed: int, excerpt_id: str, condition: str) -> str:
    """Opaque, deterministic-per-seed label hiding the condition name."""
    digest = hashlib.sha256(f"{seed}:{excerpt_id}:{condition}".encode()).hexdigest()
    return f"s{digest[:12]}"


def create_session(
    config: TestConfig,
    part: int,
    seed: int,
    participant: str = "anon",
) -> Session:
    """Build a session: training excerpt first, scored excerpts and their
    stimuli in seeded-random order, conditions anonymized per excerpt."""
    if part not in config.parts:
        raise ConfigError(f"unknown part {part}; configured parts: {sorted(config.parts)}")
    rng = SplitMix64(seed)
    scored = list(config.scored_excerpts())
    rng.shuffle(scored)
    ordered = [config.excerpt(config.training_excerpt_id)] + scored

    tasks = []
    for excerpt in ordered:
        conditions = list(config.conditions)
        rng.shuffle(conditions)
        stimuli = tuple((stimulus_token(seed, excerpt.excerpt_id, c), c) for c in conditions)
        if len({sid for sid, _ in stimuli}) != len(stimuli):
            raise ConfigError(f"stimulus token collision on excerpt {excerpt.excerpt_id!r}")
        tasks.append(
            SessionTask(
                excerpt_id=excerpt.excerpt_id,
                training=excerpt.excerpt_id == config.training_excerpt_id,
                stimuli=stimuli,
            )
        )
    return Session(
        session_id=f"p{part}-{uuid.uuid4().hex[:12]}",
        part=part,
        seed=seed,
        participant=participant,
        metrics=tuple(config.parts[part]),
        tasks=tuple(tasks),
        scale=config.scale,
        anchors=config.anchors,
    )


@dataclass(frozen=True)
class RatingRecord:
    session_id: str
    participant: str
    excerpt_id: str
    condition: str
    metric: str
    value: int
    scored: bool
    source_type: str
    timestamp: float

    def key(self) -> tuple[str, str, str, str]:
        return (self.session_id, self.excerpt_id, self.condition, self.metric)


class RatingStore:
    """Append-only JSON-lines store with last-write-wins per rating key.

    Appends are serialized with a lock; reads parse the whole file, so a
    fresh process sees exactly what earlier ones wrote.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, records: Iterable[RatingRecord]) -> int:
        lines = [json.dumps(vars(r).copy(), sort_keys=True) for r in records]
        if not lines:
            return 0
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + "\n")
        return len(lines)

    def load(self) -> list[RatingRecord]:
        if not self.path.exists():
            return []
        records = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            records.append(RatingRecord(**doc))
        return records

    def latest(self) -> dict[tuple[str, str, str, str], RatingRecord]:
        """Effective ratings after overwrites, keyed by
        (session, excerpt, condition, metric)."""
        out: dict[tuple[str, str, str, str], RatingRecord] = {}
        for record in self.load():
            out[record.key()] = record
        return out


def record_ratings(
    store: RatingStore,
    session: Session,
    excerpt_id: str,
    ratings: Sequence[Mapping],
    config: TestConfig,
) -> int:
    """Validate and persist one page of ratings; resubmission overwrites.

    Every (stimulus, metric) pair of the page must be present exactly once
    with an integer value on the configured scale.
    """
    try:
        task = session.task_for(excerpt_id)
    except KeyError:
        raise RatingValidationError(f"excerpt {excerpt_id!r} is not part of this session") from None

    lo, hi = session.scale
    offenders = []
    seen: set[tuple[str, str]] = set()
    for r in ratings:
        sid = r.get("stimulus_id")
        metric = r.get("metric")
        value = r.get("value")
        if metric not in session.metrics:
            offenders.append(f"unknown metric {metric!r}")
            continue
        try:
            session.condition_for(excerpt_id, sid)
        except KeyError:
            offenders.append(f"unknown stimulus {sid!r}")
            continue
        if not isinstance(value, int) or isinstance(value, bool) or not (lo <= value <= hi):
            offenders.append(f"{sid}/{metric}: value {value!r} not an integer in [{lo}, {hi}]")
        if (sid, metric) in seen:
            offenders.append(f"{sid}/{metric}: duplicated on page")
        seen.add((sid, metric))
    expected = {(sid, m) for sid, _ in task.stimuli for m in session.metrics}
    missing = sorted(expected - seen)
    if missing:
        offenders.extend(f"missing rating for {sid}/{m}" for sid, m in missing)
    if offenders:
        raise RatingValidationError(
            f"invalid ratings page for excerpt {excerpt_id!r}", offenders
        )

    source_type = config.excerpt(excerpt_id).source_type
    now = time.time()
    records = [
        RatingRecord(
            session_id=session.session_id,
            participant=session.participant,
            excerpt_id=excerpt_id,
            condition=session.condition_for(excerpt_id, r["stimulus_id"]),
            metric=r["metric"],
            value=int(r["value"]),
            scored=not task.training,
            source_type=source_type,
            timestamp=now,
        )
        for r in ratings
    ]
    return store.append(records)


@dataclass(frozen=True)
class MosGroup:
    condition: str
    metric: str
    source_type: str
    mean: float
    std: float
    n: int

    def formatted(self) -> str:
        return f"{self.mean:.2f}±{self.std:.2f}"


@dataclass(frozen=True)
class MosSummary:
    groups: tuple[MosGroup, ...]
    notes: tuple[str, ...] = ()

    def group(self, condition: str, metric: str, source_type: str = "speech") -> MosGroup:
        for g in self.groups:
            if (g.condition, g.metric, g.source_type) == (condition, metric, source_type):
                return g
        raise KeyError((condition, metric, source_type))

    def to_json(self) -> str:
        doc = {
            "groups": [vars(g).copy() for g in self.groups],
            "notes": list(self.notes),
        }
        return json.dumps(doc, indent=2) + "\n"


def compute_mos(store: RatingStore, config: TestConfig) -> MosSummary:
    """Mean opinion scores (mean, population std, n) per condition/metric/
    source-type over effective scored ratings; training pages excluded."""
    values: dict[tuple[str, str, str], list[int]] = {}
    for record in store.latest().values():
        if not record.scored:
            continue
        values.setdefault((record.condition, record.metric, record.source_type), []).append(
            record.value
        )
    groups = []
    notes = []
    metrics_order = [m for part in sorted(config.parts) for m in config.parts[part]]
    source_types = sorted({e.source_type for e in config.excerpts})
    for condition in config.conditions:
        for source_type in source_types:
            for metric in metrics_order:
                got = values.get((condition, metric, source_type))
                if not got:
                    notes.append(f"no scored ratings for {condition}/{metric}/{source_type}")
                    continue
                n = len(got)
                mean = sum(got) / n
                variance = sum((v - mean) ** 2 for v in got) / n
                groups.append(
                    MosGroup(
                        condition=condition,
                        metric=metric,
                        source_type=source_type,
                        mean=mean,
                        std=variance**0.5,
                        n=n,
                    )
                )
    return MosSummary(groups=tuple(groups), notes=tuple(notes))

"""Source manifests: CSV-backed lists of speech/music files with group-disjoint partitions."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

from .rng import SplitMix64

__all__ = [
    "ManifestEntry",
    "SourceManifest",
    "ManifestError",
    "CannotPartitionError",
    "load_manifest",
    "save_manifest",
    "partition_manifest",
    "PARTITIONS",
]

PARTITIONS = ("train", "validation", "test")

_CSV_HEADER = ["id", "path", "group_id", "duration_s", "partition"]


class ManifestError(Exception):
    """Malformed or inconsistent source manifest."""


class CannotPartitionError(ManifestError):
    """Too few groups to fill every partition."""


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    group_id: str
    duration_s: float
    partition: str = ""


@dataclass(frozen=True)
class SourceManifest:
    """A validated set of source files of one kind ('speech' or 'music').

    ``path`` fields are relative to ``root``.  All entries of a group
    (speaker or artist) must carry the same partition label.
    """

    kind: str
    entries: tuple[ManifestEntry, ...]
    root: Path

    def __post_init__(self) -> None:
        if self.kind not in ("speech", "music"):
            raise ManifestError(f"kind must be 'speech' or 'music', got {self.kind!r}")
        seen: set[str] = set()
        group_partition: dict[str, str] = {}
        for e in self.entries:
            if e.id in seen:
                raise ManifestError(f"duplicate entry id {e.id!r}")
            seen.add(e.id)
            if e.duration_s <= 0:
                raise ManifestError(f"entry {e.id!r} has non-positive duration {e.duration_s}")
            prev = group_partition.setdefault(e.group_id, e.partition)
            if prev != e.partition:
                raise ManifestError(
                    f"group {e.group_id!r} spans partitions {prev!r} and {e.partition!r}"
                )
        object.__setattr__(self, "root", Path(self.root))
        object.__setattr__(self, "entries", tuple(self.entries))

    def group_ids(self) -> tuple[str, ...]:
        return tuple(sorted({e.group_id for e in self.entries}))

    def entries_for_group(self, group_id: str) -> tuple[ManifestEntry, ...]:
        return tuple(sorted((e for e in self.entries if e.group_id == group_id), key=lambda e: e.id))

    def entry_by_id(self, entry_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise KeyError(entry_id)

    def partition_view(self, partition: str) -> "SourceManifest":
        """Entries of one partition, as a manifest sharing this root."""
        subset = tuple(e for e in self.entries if e.partition == partition)
        return SourceManifest(self.kind, subset, self.root)

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path


def load_manifest(path, kind: str, root=None) -> SourceManifest:
    """Load a manifest CSV (header ``id,path,group_id,duration_s,partition``)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        if header != _CSV_HEADER:
            raise ManifestError(f"{path}: expected header {','.join(_CSV_HEADER)}, got {','.join(header)}")
        entries = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_CSV_HEADER):
                raise ManifestError(f"{path}:{lineno}: expected {len(_CSV_HEADER)} fields, got {len(row)}")
            entry_id, rel, group, dur, part = row
            try:
                duration_s = float(dur)
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: bad duration {dur!r}") from None
            entries.append(ManifestEntry(entry_id, rel, group, duration_s, part))
    return SourceManifest(kind, tuple(entries), Path(root) if root is not None else path.parent)


def save_manifest(manifest: SourceManifest, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for e in manifest.entries:
            writer.writerow([e.id, e.path, e.group_id, f"{e.duration_s:g}", e.partition])


def partition_manifest(
    manifest: SourceManifest,
    fractions: Mapping[str, float],
    rng: SplitMix64,
) -> SourceManifest:
    """Assign whole groups to partitions, targeting the given count fractions.

    Groups are shuffled, then greedily placed in whichever partition has the
    largest remaining deficit of entries (ties resolved in train, validation,
    test order), so realized fractions track the targets as closely as whole
    groups allow.
    """
    missing = [p for p in PARTITIONS if p not in fractions]
    if missing:
        raise ValueError(f"fractions missing {missing}")
    total_fraction = sum(fractions[p] for p in PARTITIONS)
    if abs(total_fraction - 1.0) > 1e-6:
        raise ValueError(f"fractions must sum to 1, got {total_fraction}")

    groups = list(manifest.group_ids())
    if len(groups) < len(PARTITIONS):
        raise CannotPartitionError(
            f"need at least {len(PARTITIONS)} groups to partition, got {len(groups)}"
        )
    counts = {g: len(manifest.entries_for_group(g)) for g in groups}
    total = sum(counts.values())

    rng.shuffle(groups)
    targets = {p: fractions[p] * total for p in PARTITIONS}
    assigned = {p: 0 for p in PARTITIONS}
    placement: dict[str, str] = {}
    for g in groups:
        deficits = [(targets[p] - assigned[p], -i, p) for i, p in enumerate(PARTITIONS)]
        _, _, best = max(deficits)
        placement[g] = best
        assigned[best] += counts[g]

    entries = tuple(replace(e, partition=placement[e.group_id]) for e in manifest.entries)
    return SourceManifest(manifest.kind, entries, manifest.root)


def realized_fractions(manifest: SourceManifest) -> dict[str, float]:
    """Fraction of entries in each partition (diagnostic helper)."""
    total = len(manifest.entries)
    if total == 0:
        return {p: 0.0 for p in PARTITIONS}
    out = {}
    for p in PARTITIONS:
        out[p] = sum(1 for e in manifest.entries if e.partition == p) / total
    return out

"""Shared fixtures: synthetic speech/music source banks written as WAV files."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from podbench.audio import AudioBuffer, write_wav
from podbench.manifest import SourceManifest, load_manifest

SR = 44100

SPEECH_PARTITION = {"sp0": "train", "sp1": "train", "sp2": "train", "sp3": "train",
                    "sp4": "validation", "sp5": "test"}
MUSIC_PARTITION = {"art0": "train", "art1": "train", "art2": "validation", "art3": "test"}


def speechlike(rng: np.random.Generator, n: int) -> np.ndarray:
    """Syllabic bursts of low-passed noise, roughly speech-shaped."""
    t = np.arange(n) / SR
    rate = 2.0 + 2.0 * rng.random()
    envelope = np.clip(np.sin(2 * np.pi * rate * t + rng.random() * np.pi), 0.0, None) ** 0.7
    noise = rng.standard_normal(n + 8)
    smooth = np.convolve(noise, np.ones(8) / 8.0, mode="valid")[:n]
    return 0.35 * envelope * smooth


def musiclike(rng: np.random.Generator, n: int, stereo: bool = True) -> np.ndarray:
    """Sustained harmonic chord with vibrato and a soft noise floor."""
    t = np.arange(n) / SR
    base = 110.0 * 2 ** rng.integers(0, 3)
    out = np.zeros(n)
    for ratio in (1.0, 1.5, 2.0, 2.52):
        vibrato = 1.0 + 0.002 * np.sin(2 * np.pi * 5.0 * t + rng.random())
        out += np.sin(2 * np.pi * base * ratio * vibrato * t + rng.random() * np.pi)
    out = 0.12 * out + 0.005 * rng.standard_normal(n)
    if not stereo:
        return out
    right = np.roll(out, 7) * 0.9
    return np.stack([out, right])


def _write_manifest(path: Path, rows: list[list]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "path", "group_id", "duration_s", "partition"])
        writer.writerows(rows)


@pytest.fixture(scope="session")
def source_bank(tmp_path_factory) -> dict:
    """Speech bank (6 speakers x 5 utterances) and music bank (4 artists x 2
    stereo tracks), with partitioned manifests."""
    root = tmp_path_factory.mktemp("bank")
    rng = np.random.default_rng(20240817)

    speech_rows = []
    (root / "speech").mkdir()
    for s, speaker in enumerate(sorted(SPEECH_PARTITION)):
        for u in range(5):
            n = int(SR * (0.35 + 0.55 * rng.random()))
            entry_id = f"{speaker}_u{u}"
            rel = f"speech/{entry_id}.wav"
            write_wav(root / rel, AudioBuffer.mono(speechlike(rng, n), SR), "float32")
            speech_rows.append([entry_id, rel, speaker, f"{n / SR:.6f}", SPEECH_PARTITION[speaker]])
    _write_manifest(root / "speech_manifest.csv", speech_rows)

    music_rows = []
    (root / "music").mkdir()
    for artist in sorted(MUSIC_PARTITION):
        for track in range(2):
            n = int(SR * (2.5 + 2.0 * rng.random()))
            entry_id = f"{artist}_t{track}"
            rel = f"music/{entry_id}.wav"
            write_wav(root / rel, AudioBuffer(musiclike(rng, n), SR), "float32")
            music_rows.append([entry_id, rel, artist, f"{n / SR:.6f}", MUSIC_PARTITION[artist]])
    _write_manifest(root / "music_manifest.csv", music_rows)

    return {
        "root": root,
        "speech": load_manifest(root / "speech_manifest.csv", "speech"),
        "music": load_manifest(root / "music_manifest.csv", "music"),
    }


@pytest.fixture()
def speech_manifest(source_bank) -> SourceManifest:
    return source_bank["speech"]


@pytest.fixture()
def music_manifest(source_bank) -> SourceManifest:
    return source_bank["music"]

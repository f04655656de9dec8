"""Recipe-driven synthesis of podcast-style speech+music mixtures.

The mixing model is ``mixture = speech + g_r * g_m * music`` where
``g_r = loudness(speech) / loudness(music)`` equalizes the music to the
speech level and the music gain ``g_m`` is drawn uniformly from (0.01, 1),
so the speech track is always the louder stem.  ``loudness`` is the square
root of the sum of squared samples (an energy norm, not perceptual
loudness).

Every stochastic choice for record ``i`` comes from its own SplitMix64
stream seeded with ``derive_stream_seed(master_seed, i)``, in this fixed
order: music gain, overlap flag, speaker index, speech file picks
(left-to-right fill), overlap speaker/file/position (when drawn), then
music entry and offset picks.  This makes generation order- and
parallelism-independent and reproducible from the recipe alone.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np

from .audio import AudioBuffer, downmix_to_mono, read_wav, rms_dbfs, write_wav
from .manifest import ManifestEntry, SourceManifest
from .rng import SplitMix64, derive_stream_seed

__all__ = [
    "MixSynthError",
    "SilentSourceError",
    "ShapeMismatchError",
    "NoSourceError",
    "OverlapUnavailableError",
    "NoFragmentError",
    "AllSilentError",
    "ResolutionError",
    "RecordGenerationError",
    "SpeechSegment",
    "OverlapSegment",
    "MusicFragment",
    "MixRecipe",
    "MixParams",
    "MixResult",
    "GenerateConfig",
    "loudness",
    "gain_ratio",
    "draw_mix_params",
    "build_speech_track",
    "sample_music_fragment",
    "mix",
    "generate_dataset",
    "render_recipe",
    "write_record",
]

DEFAULT_SILENCE_THRESHOLD_DBFS = -40.0
OVERLAP_PROBABILITY = 0.1

_MAX_ENTRY_ATTEMPTS = 100
_MAX_OFFSET_ATTEMPTS = 100


class MixSynthError(Exception):
    """Base class for mixture synthesis failures."""


class SilentSourceError(MixSynthError):
    """Music source has zero loudness where a gain ratio is required."""


class ShapeMismatchError(MixSynthError):
    """Buffers disagree in length or sample rate."""


class NoSourceError(MixSynthError):
    """A speaker has no entries to draw from."""


class OverlapUnavailableError(MixSynthError):
    """Overlap requested but no second speaker exists in the partition."""


class NoFragmentError(MixSynthError):
    """No music entry is long enough for the requested fragment."""


class AllSilentError(MixSynthError):
    """Every sampled music fragment fell below the silence threshold."""


class ResolutionError(MixSynthError):
    """A recipe references an entry id or file that cannot be resolved."""


class RecordGenerationError(MixSynthError):
    """Failure while generating one record, annotated with its id."""

    def __init__(self, record_id: str, cause: Exception):
        super().__init__(f"record {record_id}: {cause}")
        self.record_id = record_id
        self.cause = cause


@dataclass(frozen=True)
class SpeechSegment:
    entry_id: str
    source_offset: int
    length: int
    dest_position: int


@dataclass(frozen=True)
class OverlapSegment:
    entry_id: str
    source_offset: int
    length: int
    dest_position: int
    group_id: str


@dataclass(frozen=True)
class MusicFragment:
    entry_id: str
    source_offset: int
    length: int


@dataclass(frozen=True)
class MixParams:
    g_m: float
    overlap: bool


@dataclass(frozen=True)
class MixResult:
    mixture: AudioBuffer
    speech_stem: AudioBuffer
    music_stem: AudioBuffer
    g_r: float


@dataclass(frozen=True)
class MixRecipe:
    """Full provenance of one synthetic mixture; enough to re-render it bit-exactly."""

    record_id: str
    master_seed: int
    speech_segments: tuple[SpeechSegment, ...]
    overlap_segment: OverlapSegment | None
    music_fragment: MusicFragment
    g_m: float
    g_r: float
    duration: int

    def __post_init__(self) -> None:
        if not (0.01 < self.g_m < 1.0):
            raise ValueError(f"g_m must lie in (0.01, 1), got {self.g_m}")
        if self.g_r < 0:
            raise ValueError(f"g_r must be non-negative, got {self.g_r}")
        for seg in self.speech_segments:
            if seg.dest_position + seg.length > self.duration:
                raise ValueError(f"segment {seg.entry_id} overruns the {self.duration}-sample buffer")
        if self.overlap_segment is not None:
            o = self.overlap_segment
            if o.dest_position + o.length > self.duration:
                raise ValueError(f"overlap segment {o.entry_id} overruns the buffer")

    def to_json(self) -> str:
        """Serialize with ``master_seed`` as a decimal string (64-bit safe)."""
        doc = {
            "record_id": self.record_id,
            "master_seed": str(self.master_seed),
            "speech_segments": [vars(s).copy() for s in self.speech_segments],
            "overlap_segment": None if self.overlap_segment is None else vars(self.overlap_segment).copy(),
            "music_fragment": vars(self.music_fragment).copy(),
            "g_m": self.g_m,
            "g_r": self.g_r,
            "duration": self.duration,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MixRecipe":
        doc = json.loads(text)
        overlap = None
        if doc.get("overlap_segment") is not None:
            overlap = OverlapSegment(**doc["overlap_segment"])
        return cls(
            record_id=doc["record_id"],
            master_seed=int(doc["master_seed"]),
            speech_segments=tuple(SpeechSegment(**s) for s in doc["speech_segments"]),
            overlap_segment=overlap,
            music_fragment=MusicFragment(**doc["music_fragment"]),
            g_m=float(doc["g_m"]),
            g_r=float(doc["g_r"]),
            duration=int(doc["duration"]),
        )


@dataclass(frozen=True)
class GenerateConfig:
    """Dataset generation settings.

    ``count`` is either one integer applied to every partition in
    ``partitions`` or a mapping partition -> count.  ``duration_s`` defaults
    to 18 s, the excerpt length used by the bundled no-reference evaluation
    material; the synthesis itself accepts any length.
    """

    count: int | Mapping[str, int] = 10
    duration_s: float = 18.0
    silence_threshold_dbfs: float = DEFAULT_SILENCE_THRESHOLD_DBFS
    partitions: tuple[str, ...] = ("train", "validation", "test")
    sample_rate: int = 44100

    def count_for(self, partition: str) -> int:
        if isinstance(self.count, Mapping):
            return int(self.count.get(partition, 0))
        return int(self.count)

    @property
    def duration_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate))


def loudness(signal) -> float:
    """Square root of the sum of squared samples (0 for an empty signal)."""
    if isinstance(signal, AudioBuffer):
        x = signal.mono_samples
    else:
        x = np.asarray(signal, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError(f"loudness expects a mono signal, got shape {x.shape}")
    if x.size == 0:
        return 0.0
    return float(np.sqrt(np.sum(np.square(x))))


def gain_ratio(speech: AudioBuffer, music: AudioBuffer) -> float:
    """Loudness ratio speech/music; the scale that levels music to speech."""
    music_loudness = loudness(music)
    if music_loudness == 0.0:
        raise SilentSourceError("music source is silent; sample a non-silent fragment first")
    return loudness(speech) / music_loudness


def draw_mix_params(rng: SplitMix64) -> MixParams:
    """Draw the music gain from U(0.01, 1) and the 10% speaker-overlap flag."""
    g_m = rng.uniform_open(0.01, 1.0)
    overlap = rng.next_float() < OVERLAP_PROBABILITY
    return MixParams(g_m=g_m, overlap=overlap)


@lru_cache(maxsize=128)
def _load_source_cached(abs_path: str) -> AudioBuffer:
    return read_wav(abs_path)


def _load_entry(manifest: SourceManifest, entry: ManifestEntry) -> AudioBuffer:
    path = manifest.resolve(entry)
    try:
        return _load_source_cached(str(path))
    except FileNotFoundError:
        raise ResolutionError(f"entry {entry.id!r}: file not found: {path}") from None


def _entry_mono(manifest: SourceManifest, entry: ManifestEntry) -> AudioBuffer:
    return downmix_to_mono(_load_entry(manifest, entry))


def build_speech_track(
    manifest: SourceManifest,
    speaker: str,
    duration: int,
    rng: SplitMix64,
    overlap: bool = False,
) -> tuple[AudioBuffer, tuple[SpeechSegment, ...], OverlapSegment | None]:
    """Fill ``duration`` samples with whole utterances from one speaker.

    Files are drawn uniformly with replacement and laid end to end; the last
    one is truncated to fit.  With ``overlap`` set, one utterance from a
    uniformly chosen different speaker is summed in at a uniform position
    (truncated at the buffer end) to simulate overlapping speakers.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    entries = manifest.entries_for_group(speaker)
    if not entries:
        raise NoSourceError(f"speaker {speaker!r} has no entries")

    buf = np.zeros(duration, dtype=np.float64)
    sample_rate: int | None = None
    segments: list[SpeechSegment] = []
    pos = 0
    while pos < duration:
        entry = entries[rng.next_below(len(entries))]
        src = _entry_mono(manifest, entry)
        if sample_rate is None:
            sample_rate = src.sample_rate
        elif src.sample_rate != sample_rate:
            raise ShapeMismatchError(
                f"speech source {entry.id!r} at {src.sample_rate} Hz, expected {sample_rate} Hz"
            )
        if src.num_samples == 0:
            raise NoSourceError(f"speech source {entry.id!r} is empty")
        take = min(src.num_samples, duration - pos)
        buf[pos : pos + take] = src.mono_samples[:take]
        segments.append(SpeechSegment(entry.id, 0, take, pos))
        pos += take

    overlap_segment: OverlapSegment | None = None
    if overlap:
        others = [g for g in manifest.group_ids() if g != speaker]
        if not others:
            raise OverlapUnavailableError(
                f"overlap drawn but {speaker!r} is the only speaker in this partition"
            )
        other = others[rng.next_below(len(others))]
        other_entries = manifest.entries_for_group(other)
        entry = other_entries[rng.next_below(len(other_entries))]
        position = rng.next_below(duration)
        src = _entry_mono(manifest, entry)
        take = min(src.num_samples, duration - position)
        buf[position : position + take] += src.mono_samples[:take]
        overlap_segment = OverlapSegment(entry.id, 0, take, position, other)

    return AudioBuffer.mono(buf, sample_rate or 44100), tuple(segments), overlap_segment


def sample_music_fragment(
    manifest: SourceManifest,
    duration: int,
    rng: SplitMix64,
    silence_threshold_dbfs: float = DEFAULT_SILENCE_THRESHOLD_DBFS,
    nominal_rate: int = 44100,
) -> tuple[AudioBuffer, MusicFragment]:
    """Draw a non-silent mono fragment of ``duration`` samples from the music set.

    Picks a uniform entry among those declared long enough, then a uniform
    offset; the fragment (downmixed to mono when stereo) is accepted when its
    RMS level meets the threshold, with up to 100 offsets per entry and 100
    entry picks before giving up.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    eligible = tuple(
        e
        for e in sorted(manifest.entries, key=lambda e: e.id)
        if e.duration_s * nominal_rate >= duration
    )
    if not eligible:
        raise NoFragmentError(f"no music entry of at least {duration} samples")

    for _ in range(_MAX_ENTRY_ATTEMPTS):
        entry = eligible[rng.next_below(len(eligible))]
        src = _load_entry(manifest, entry)
        if src.num_samples < duration:
            continue  # declared duration was optimistic; counts as one entry attempt
        for _ in range(_MAX_OFFSET_ATTEMPTS):
            offset = rng.next_below(src.num_samples - duration + 1)
            fragment = downmix_to_mono(
                AudioBuffer(src.samples[:, offset : offset + duration], src.sample_rate)
            )
            if rms_dbfs(fragment) >= silence_threshold_dbfs:
                return fragment, MusicFragment(entry.id, offset, duration)
    raise AllSilentError(
        f"no fragment above {silence_threshold_dbfs} dBFS after "
        f"{_MAX_ENTRY_ATTEMPTS}x{_MAX_OFFSET_ATTEMPTS} attempts"
    )


def mix(speech: AudioBuffer, music: AudioBuffer, music_gain: float) -> MixResult:
    """Combine aligned mono stems: mixture = speech + g_r * music_gain * music.

    The returned stems satisfy ``mixture == speech_stem + music_stem``
    sample-wise, with no clipping or limiting applied, and the music stem's
    loudness is exactly ``music_gain`` times the speech stem's.
    """
    if not (0.01 < music_gain < 1.0):
        raise ValueError(f"music_gain must lie in (0.01, 1), got {music_gain}")
    if speech.num_samples != music.num_samples:
        raise ShapeMismatchError(
            f"length mismatch: speech {speech.num_samples}, music {music.num_samples}"
        )
    if speech.sample_rate != music.sample_rate:
        raise ShapeMismatchError(
            f"sample rate mismatch: speech {speech.sample_rate}, music {music.sample_rate}"
        )
    g_r = gain_ratio(speech, music)
    speech_samples = speech.mono_samples
    music_samples = g_r * music_gain * music.mono_samples
    mixture = speech_samples + music_samples
    rate = speech.sample_rate
    return MixResult(
        mixture=AudioBuffer.mono(mixture, rate),
        speech_stem=AudioBuffer.mono(speech_samples, rate),
        music_stem=AudioBuffer.mono(music_samples, rate),
        g_r=g_r,
    )


def write_record(out_dir, record_id: str, result: MixResult) -> dict[str, Path]:
    """Write the float32 WAV triplet for one record.

    The stems are rounded to float32 first and the stored mixture is their
    float32 sum, so ``mix == speech + music`` holds exactly on the files as
    read back.
    """
    out_dir = Path(out_dir)
    speech32 = result.speech_stem.mono_samples.astype(np.float32)
    music32 = result.music_stem.mono_samples.astype(np.float32)
    mixture32 = speech32 + music32
    rate = result.mixture.sample_rate
    paths = {
        "mixture": out_dir / f"{record_id}_mix.wav",
        "speech": out_dir / f"{record_id}_speech.wav",
        "music": out_dir / f"{record_id}_music.wav",
    }
    write_wav(paths["mixture"], AudioBuffer.mono(mixture32, rate), "float32")
    write_wav(paths["speech"], AudioBuffer.mono(speech32, rate), "float32")
    write_wav(paths["music"], AudioBuffer.mono(music32, rate), "float32")
    return paths


def _generate_one(
    index: int,
    partition: str,
    record_id: str,
    speech_manifest: SourceManifest,
    music_manifest: SourceManifest,
    config: GenerateConfig,
    master_seed: int,
    out_dir: Path | None,
) -> MixRecipe:
    stream = SplitMix64(derive_stream_seed(master_seed, index))
    params = draw_mix_params(stream)

    speech_part = speech_manifest.partition_view(partition)
    speakers = speech_part.group_ids()
    if not speakers:
        raise NoSourceError(f"speech manifest has no entries in partition {partition!r}")
    speaker = speakers[stream.next_below(len(speakers))]

    duration = config.duration_samples
    track, segments, overlap_segment = build_speech_track(
        speech_part, speaker, duration, stream, overlap=params.overlap
    )
    music_part = music_manifest.partition_view(partition)
    fragment, fragment_spec = sample_music_fragment(
        music_part, duration, stream, config.silence_threshold_dbfs, config.sample_rate
    )
    result = mix(track, fragment, params.g_m)

    recipe = MixRecipe(
        record_id=record_id,
        master_seed=master_seed,
        speech_segments=segments,
        overlap_segment=overlap_segment,
        music_fragment=fragment_spec,
        g_m=params.g_m,
        g_r=result.g_r,
        duration=duration,
    )
    if out_dir is not None:
        write_record(out_dir, record_id, result)
        (out_dir / f"{record_id}_recipe.json").write_text(recipe.to_json(), encoding="utf-8")
    return recipe


def generate_dataset(
    speech_manifest: SourceManifest,
    music_manifest: SourceManifest,
    config: GenerateConfig,
    master_seed: int,
    out_dir=None,
    workers: int = 1,
) -> list[MixRecipe]:
    """Generate mixture records per partition; returns recipes in record order.

    With ``out_dir`` set, each record writes ``{id}_mix.wav``,
    ``{id}_speech.wav``, ``{id}_music.wav`` and ``{id}_recipe.json``.  Output
    is byte-identical for a given (manifests, config, master_seed) regardless
    of ``workers``; every record draws only from its own derived stream.
    """
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    jobs: list[tuple[int, str, str]] = []
    index = 0
    for partition in config.partitions:
        for k in range(config.count_for(partition)):
            jobs.append((index, partition, f"{partition}_{k:06d}"))
            index += 1

    def run(job: tuple[int, str, str]) -> MixRecipe:
        idx, partition, record_id = job
        try:
            return _generate_one(
                idx, partition, record_id, speech_manifest, music_manifest,
                config, master_seed, out_dir,
            )
        except RecordGenerationError:
            raise
        except Exception as exc:
            raise RecordGenerationError(record_id, exc) from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, jobs))
    return [run(job) for job in jobs]


def render_recipe(
    recipe: MixRecipe,
    speech_manifest: SourceManifest,
    music_manifest: SourceManifest,
) -> MixResult:
    """Re-render a recipe's audio, bit-identical to the original generation."""

    def lookup(manifest: SourceManifest, entry_id: str) -> ManifestEntry:
        try:
            return manifest.entry_by_id(entry_id)
        except KeyError:
            raise ResolutionError(f"entry {entry_id!r} not found in {manifest.kind} manifest") from None

    buf = np.zeros(recipe.duration, dtype=np.float64)
    sample_rate: int | None = None
    for seg in recipe.speech_segments:
        src = _entry_mono(speech_manifest, lookup(speech_manifest, seg.entry_id))
        sample_rate = sample_rate or src.sample_rate
        buf[seg.dest_position : seg.dest_position + seg.length] = src.mono_samples[
            seg.source_offset : seg.source_offset + seg.length
        ]
    if recipe.overlap_segment is not None:
        o = recipe.overlap_segment
        src = _entry_mono(speech_manifest, lookup(speech_manifest, o.entry_id))
        buf[o.dest_position : o.dest_position + o.length] += src.mono_samples[
            o.source_offset : o.source_offset + o.length
        ]
    speech = AudioBuffer.mono(buf, sample_rate or 44100)

    frag_spec = recipe.music_fragment
    src = _load_entry(music_manifest, lookup(music_manifest, frag_spec.entry_id))
    if frag_spec.source_offset + frag_spec.length > src.num_samples:
        raise ResolutionError(
            f"entry {frag_spec.entry_id!r}: fragment "
            f"[{frag_spec.source_offset}, {frag_spec.source_offset + frag_spec.length}) "
            f"outside the {src.num_samples}-sample file"
        )
    fragment = downmix_to_mono(
        AudioBuffer(
            src.samples[:, frag_spec.source_offset : frag_spec.source_offset + frag_spec.length],
            src.sample_rate,
        )
    )
    return mix(speech, fragment, recipe.g_m)

"""Oracle spectral masks, mask combination, input normalization, and the logL2 loss.

These stand in for a trained separator: ideal ratio/binary masks are built
from reference stem magnitudes and applied to the mixture spectrogram with
the mixture's phase, which exercises the whole separation pipeline without
a neural model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer
from .spectral import DEFAULT_HOP, DEFAULT_WINDOW_SIZE, apply_mask_with_mixture_phase, stft

__all__ = [
    "StemPair",
    "SeparationError",
    "AlignmentError",
    "ideal_ratio_masks",
    "ideal_binary_masks",
    "combine_masks",
    "oracle_separate",
    "adaptive_normalize",
    "denormalize",
    "log_l2_loss",
    "MASK_KINDS",
]

MASK_KINDS = ("irm", "ibm")

_DEFAULT_EPS = 1e-8
_STD_FLOOR = 1e-8


class SeparationError(Exception):
    pass


class AlignmentError(SeparationError):
    """Mixture and references disagree in length or rate."""


@dataclass(frozen=True, eq=False)
class StemPair:
    """Aligned speech and music signals (estimates or references)."""

    speech: AudioBuffer
    music: AudioBuffer

    def __post_init__(self) -> None:
        if self.speech.num_samples != self.music.num_samples:
            raise AlignmentError(
                f"stem length mismatch: speech {self.speech.num_samples}, music {self.music.num_samples}"
            )
        if self.speech.sample_rate != self.music.sample_rate:
            raise AlignmentError(
                f"stem sample rate mismatch: {self.speech.sample_rate} vs {self.music.sample_rate}"
            )


def _check_magnitudes(speech_mag: np.ndarray, music_mag: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(speech_mag, dtype=np.float64)
    m = np.asarray(music_mag, dtype=np.float64)
    if s.shape != m.shape:
        raise SeparationError(f"magnitude shapes differ: {s.shape} vs {m.shape}")
    if np.any(s < 0) or np.any(m < 0):
        raise SeparationError("magnitudes must be non-negative")
    return s, m


def ideal_ratio_masks(
    speech_mag: np.ndarray, music_mag: np.ndarray, eps: float = _DEFAULT_EPS
) -> tuple[np.ndarray, np.ndarray]:
    """Soft masks speech/(speech+music) and music/(speech+music), eps-guarded."""
    s, m = _check_magnitudes(speech_mag, music_mag)
    denom = s + m + eps
    return s / denom, m / denom


def ideal_binary_masks(
    speech_mag: np.ndarray, music_mag: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Hard masks: each bin goes to the louder source, ties to speech."""
    s, m = _check_magnitudes(speech_mag, music_mag)
    mask_speech = (s >= m).astype(np.float64)
    return mask_speech, 1.0 - mask_speech


def combine_masks(
    mask_speech: np.ndarray,
    mask_music: np.ndarray,
    eps: float = _DEFAULT_EPS,
    complementary_music_mask: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Merge two independently predicted masks into the pair used for filtering.

    The speech mask is renormalized to ``m_s / (m_s + m_m)``; the music mask
    is ``1 - m_s`` (the raw speech mask).  That asymmetric form is the
    default contract; ``complementary_music_mask`` switches the music side
    to ``1 - m_s'`` so the pair sums to one exactly.
    """
    m_s = np.asarray(mask_speech, dtype=np.float64)
    m_m = np.asarray(mask_music, dtype=np.float64)
    if m_s.shape != m_m.shape:
        raise SeparationError(f"mask shapes differ: {m_s.shape} vs {m_m.shape}")
    for name, arr in (("speech", m_s), ("music", m_m)):
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise SeparationError(f"{name} mask values must lie in [0, 1]")
    combined_speech = m_s / (m_s + m_m + eps)
    if complementary_music_mask:
        combined_music = 1.0 - combined_speech
    else:
        combined_music = 1.0 - m_s
    return combined_speech, combined_music


def oracle_separate(
    mixture: AudioBuffer,
    references: StemPair,
    mask_kind: str = "irm",
    combine: bool = False,
    complementary_music_mask: bool = False,
    window_size: int = DEFAULT_WINDOW_SIZE,
    hop: int = DEFAULT_HOP,
) -> StemPair:
    """Separate a mixture with oracle masks built from reference magnitudes.

    Masks are applied to the mixture spectrogram and resynthesized with the
    mixture phase; ``combine`` routes them through :func:`combine_masks`
    first, as a mask-predicting separator would.
    """
    if mask_kind not in MASK_KINDS:
        raise ValueError(f"mask_kind must be one of {MASK_KINDS}, got {mask_kind!r}")
    if mixture.num_samples != references.speech.num_samples:
        raise AlignmentError(
            f"mixture has {mixture.num_samples} samples, references {references.speech.num_samples}"
        )
    if mixture.sample_rate != references.speech.sample_rate:
        raise AlignmentError(
            f"mixture at {mixture.sample_rate} Hz, references at {references.speech.sample_rate} Hz"
        )

    mixture_spec = stft(mixture, window_size, hop)
    speech_mag = stft(references.speech, window_size, hop).magnitude
    music_mag = stft(references.music, window_size, hop).magnitude

    if mask_kind == "irm":
        mask_speech, mask_music = ideal_ratio_masks(speech_mag, music_mag)
    else:
        mask_speech, mask_music = ideal_binary_masks(speech_mag, music_mag)
    if combine:
        mask_speech, mask_music = combine_masks(
            mask_speech, mask_music, complementary_music_mask=complementary_music_mask
        )

    return StemPair(
        speech=apply_mask_with_mixture_phase(mixture_spec, mask_speech),
        music=apply_mask_with_mixture_phase(mixture_spec, mask_music),
    )


def adaptive_normalize(buffer: AudioBuffer) -> tuple[AudioBuffer, float, float]:
    """Subtract the mean and divide by the (floored) population std.

    Returns the normalized buffer plus (mean, std) so the scaling can be
    undone at the output with :func:`denormalize`.
    """
    x = buffer.mono_samples
    if x.size < 2:
        raise ValueError(f"need at least 2 samples to normalize, got {x.size}")
    mean = float(np.mean(x))
    std = float(np.std(x))
    if std < _STD_FLOOR:
        std = _STD_FLOOR
    return AudioBuffer.mono((x - mean) / std, buffer.sample_rate), mean, std


def denormalize(buffer: AudioBuffer, mean: float, std: float) -> AudioBuffer:
    """Undo :func:`adaptive_normalize`: returns std * x + mean."""
    if std <= 0:
        raise ValueError(f"std must be positive, got {std}")
    return AudioBuffer.mono(std * buffer.mono_samples + mean, buffer.sample_rate)


def log_l2_loss(
    estimates: StemPair,
    references: StemPair,
    eps: float = _DEFAULT_EPS,
    squared_differences: bool = False,
) -> float:
    """Time-domain reconstruction loss summed over the two sources.

    Per source: ``(10 / T) * log10(sum_t |est - ref| + eps)``.  The absolute
    (not squared) difference is the default contract;
    ``squared_differences`` switches the summand to ``|est - ref|**2``.
    Perfect estimates bottom out at ``(10 / T) * log10(eps)`` per source.
    """
    t = estimates.speech.num_samples
    if t == 0:
        raise ValueError("empty signals")
    if references.speech.num_samples != t:
        raise SeparationError(
            f"length mismatch: estimates {t}, references {references.speech.num_samples}"
        )

    def term(est: AudioBuffer, ref: AudioBuffer) -> float:
        diff = np.abs(est.mono_samples - ref.mono_samples)
        if squared_differences:
            diff = np.square(diff)
        return (10.0 / t) * float(np.log10(np.sum(diff) + eps))

    return term(estimates.speech, references.speech) + term(estimates.music, references.music)

"""Audio sample containers, WAV file I/O, channel downmix, and level measurement."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "AudioBuffer",
    "AudioError",
    "WavFormatError",
    "UnsupportedEncodingError",
    "BoundsError",
    "read_wav",
    "write_wav",
    "downmix_to_mono",
    "rms_dbfs",
]

PCM16_FULL_SCALE = 32768.0

_FORMAT_PCM = 1
_FORMAT_IEEE_FLOAT = 3
_FORMAT_EXTENSIBLE = 0xFFFE


class AudioError(Exception):
    """Base class for audio container and WAV I/O failures."""


class WavFormatError(AudioError):
    """File is not a well-formed RIFF/WAVE stream."""


class UnsupportedEncodingError(AudioError):
    """WAV encoding other than 16-bit PCM or 32-bit IEEE float."""


class BoundsError(AudioError):
    """Requested sample window falls outside the buffer."""


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Immutable PCM samples with a sample rate.

    ``samples`` is a float64 array of shape ``(channels, num_samples)`` with
    amplitudes nominally in [-1, 1].  A 1-D array is accepted and treated as a
    single channel.  The array is copied and marked read-only, so buffers are
    safe to share between threads.
    """

    samples: np.ndarray
    sample_rate: int = 44100

    def __post_init__(self) -> None:
        arr = np.array(self.samples, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError(
                f"samples must be 1-D or (channels, n) with channels >= 1, got shape {np.shape(self.samples)}"
            )
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @classmethod
    def mono(cls, samples: np.ndarray, sample_rate: int = 44100) -> "AudioBuffer":
        arr = np.asarray(samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"mono() expects a 1-D array, got shape {arr.shape}")
        return cls(arr, sample_rate)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_seconds(self) -> float:
        return self.num_samples / self.sample_rate

    @property
    def mono_samples(self) -> np.ndarray:
        """The single channel of a mono buffer as a 1-D array."""
        if self.channels != 1:
            raise ValueError(f"buffer has {self.channels} channels, expected mono")
        return self.samples[0]


def read_wav(path) -> AudioBuffer:
    """Read a RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float samples.

    16-bit integers are scaled by 1/32768 so -32768 maps exactly to -1.0.
    Chunks other than ``fmt `` and ``data`` are ignored.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are padded to even length

    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")
    if len(fmt) < 16:
        raise WavFormatError(f"{path}: fmt chunk shorter than 16 bytes")

    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if channels < 1:
        raise WavFormatError(f"{path}: channel count {channels}")
    if rate <= 0:
        raise WavFormatError(f"{path}: sample rate {rate}")

    if tag == _FORMAT_PCM:
        if bits != 16:
            raise UnsupportedEncodingError(f"{path}: {bits}-bit PCM is not supported (16-bit only)")
        dtype = np.dtype("<i2")
    elif tag == _FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise UnsupportedEncodingError(f"{path}: {bits}-bit IEEE float is not supported (32-bit only)")
        dtype = np.dtype("<f4")
    elif tag == _FORMAT_EXTENSIBLE:
        raise UnsupportedEncodingError(f"{path}: WAVE_FORMAT_EXTENSIBLE (0xfffe) is not supported")
    else:
        raise UnsupportedEncodingError(f"{path}: format tag {tag} (e.g. mu-law, ADPCM) is not supported")

    frame_bytes = channels * dtype.itemsize
    if block_align not in (0, frame_bytes):
        raise WavFormatError(f"{path}: block align {block_align} inconsistent with {frame_bytes}-byte frames")
    if len(data) % frame_bytes != 0:
        raise WavFormatError(f"{path}: data chunk is not a whole number of frames")

    flat = np.frombuffer(data, dtype=dtype)
    if tag == _FORMAT_PCM:
        flat = flat.astype(np.float64) / PCM16_FULL_SCALE
    else:
        flat = flat.astype(np.float64)
    return AudioBuffer(flat.reshape(-1, channels).T, sample_rate=int(rate))


def write_wav(path, buffer: AudioBuffer, encoding: str = "float32") -> None:
    """Write ``buffer`` as a WAV file, ``encoding`` one of ``pcm16`` / ``float32``.

    pcm16 clamps to [-1, 1] and rounds half-away-from-zero; an amplitude of
    exactly 1.0 stores 32767.  float32 stores samples verbatim.
    """
    if buffer.num_samples == 0:
        raise ValueError("refusing to write an empty buffer")

    if encoding == "pcm16":
        y = np.clip(buffer.samples, -1.0, 1.0) * PCM16_FULL_SCALE
        y = np.where(y >= 0, np.floor(y + 0.5), np.ceil(y - 0.5))
        payload = np.clip(y, -32768, 32767).astype("<i2").T.tobytes()
        tag, bits = _FORMAT_PCM, 16
    elif encoding == "float32":
        payload = buffer.samples.astype("<f4").T.tobytes()
        tag, bits = _FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r} (expected 'pcm16' or 'float32')")

    channels = buffer.channels
    block_align = channels * bits // 8
    byte_rate = buffer.sample_rate * block_align
    fmt = struct.pack("<HHIIHH", tag, channels, buffer.sample_rate, byte_rate, block_align, bits)
    chunks = [b"fmt ", struct.pack("<I", len(fmt)), fmt]
    if tag == _FORMAT_IEEE_FLOAT:
        # non-PCM streams carry a fact chunk with the frame count
        chunks += [b"fact", struct.pack("<I", 4), struct.pack("<I", buffer.num_samples)]
    chunks += [b"data", struct.pack("<I", len(payload)), payload]
    if len(payload) & 1:
        chunks.append(b"\x00")
    body = b"".join(chunks)
    blob = b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body
    Path(path).write_bytes(blob)


def downmix_to_mono(buffer: AudioBuffer) -> AudioBuffer:
    """Average all channels into one; mono input is returned unchanged."""
    if buffer.channels == 1:
        return buffer
    return AudioBuffer.mono(buffer.samples.mean(axis=0), buffer.sample_rate)


def rms_dbfs(buffer: AudioBuffer, start: int = 0, length: int | None = None) -> float:
    """RMS level of a sample window in dBFS; an all-zero window gives -inf.

    The window is ``[start, start + length)`` and applies to every channel.
    """
    if length is None:
        length = buffer.num_samples - start
    if length <= 0:
        raise BoundsError(f"window length must be positive, got {length}")
    if start < 0 or start + length > buffer.num_samples:
        raise BoundsError(
            f"window [{start}, {start + length}) outside buffer of {buffer.num_samples} samples"
        )
    window = buffer.samples[:, start : start + length]
    mean_square = float(np.mean(np.square(window)))
    if mean_square == 0.0:
        return float("-inf")
    return 10.0 * float(np.log10(mean_square))

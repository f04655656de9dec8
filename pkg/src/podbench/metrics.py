"""Objective separation metrics: SDR/SIR/SAR via least-squares projection
onto delayed-reference subspaces, and scale-invariant SDR.

An estimate is decomposed as ``s_target + e_interf + e_artif`` where
``s_target`` is its least-squares projection onto the span of 0..L-1 sample
delays of the target reference, the interference term extends that span to
all references, and the artifact term is whatever falls outside.  The
normal equations use Toeplitz-structured Gram blocks built from FFT
cross-correlations and are stabilized with Tikhonov damping of
``1e-10 * trace``.  Signals are mean-removed before projection.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import toeplitz
from scipy.signal import fftconvolve

from .separation import StemPair

__all__ = [
    "MetricsError",
    "SingularProjectionError",
    "Decomposition",
    "SeparationMetrics",
    "TrackEvaluation",
    "project_decompose",
    "bss_eval",
    "si_sdr",
    "evaluate_track",
    "rows_to_csv",
    "rows_from_csv",
    "rows_to_json",
    "DEFAULT_FILTER_LENGTH",
    "METRIC_NAMES",
]

DEFAULT_FILTER_LENGTH = 512
METRIC_NAMES = ("sdr", "sir", "sar", "si_sdr")

_DAMPING = 1e-10

_CSV_HEADER = ["track_id", "source", "sdr", "sir", "sar", "si_sdr", "filter_length"]


class MetricsError(Exception):
    pass


class SingularProjectionError(MetricsError):
    """Delayed-reference Gram system is singular beyond what damping can fix."""


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Estimate split into target, interference, and artifact parts.

    The three vectors (length T + L - 1, covering the full filter spread)
    sum back to the zero-padded, mean-removed estimate.
    """

    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray
    filter_length: int


@dataclass(frozen=True)
class SeparationMetrics:
    """Per-track, per-source metric row; infinities mark zero error energy."""

    track_id: str
    source: str
    sdr: float
    sir: float
    sar: float
    si_sdr: float
    filter_length: int


@dataclass(frozen=True)
class TrackEvaluation:
    """Metrics for the submitted estimates plus the mixture-as-estimate baseline."""

    estimate: tuple[SeparationMetrics, ...]
    mixture_baseline: tuple[SeparationMetrics, ...]


def _as_signal(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise MetricsError(f"expected a 1-D signal, got shape {arr.shape}")
    return arr


def _correlation_fft(n_samples: int, filter_length: int, signals: Sequence[np.ndarray]):
    n_fft = 1 << int(np.ceil(np.log2(n_samples + filter_length - 1)))
    return n_fft, [np.fft.rfft(s, n_fft) for s in signals]


def _gram_matrix(spectra, n_fft: int, filter_length: int) -> np.ndarray:
    """Block-Toeplitz Gram matrix of all 0..L-1 delays of the references."""
    n_src = len(spectra)
    gram = np.zeros((n_src * filter_length, n_src * filter_length))
    for i in range(n_src):
        for j in range(i + 1):
            corr = np.fft.irfft(spectra[i] * np.conj(spectra[j]), n_fft)
            col = np.concatenate(([corr[0]], corr[-1 : -filter_length : -1]))
            block = toeplitz(col, r=corr[:filter_length])
            gram[i * filter_length : (i + 1) * filter_length, j * filter_length : (j + 1) * filter_length] = block
            gram[j * filter_length : (j + 1) * filter_length, i * filter_length : (i + 1) * filter_length] = block.T
    return gram


def _project(estimate: np.ndarray, references: Sequence[np.ndarray], filter_length: int) -> np.ndarray:
    """Least-squares projection of the estimate onto the span of 0..L-1
    sample delays of the references; result has length T + L - 1."""
    n_samples = estimate.size
    n_fft, spectra = _correlation_fft(n_samples, filter_length, list(references) + [estimate])
    ref_spectra, est_spectrum = spectra[:-1], spectra[-1]

    gram = _gram_matrix(ref_spectra, n_fft, filter_length)
    trace = float(np.trace(gram))
    if trace <= 0.0:
        raise SingularProjectionError("references carry no energy")

    rhs = np.concatenate(
        [np.fft.irfft(est_spectrum * np.conj(sf), n_fft)[:filter_length] for sf in ref_spectra]
    )
    damped = gram + (_DAMPING * trace) * np.eye(gram.shape[0])
    try:
        coeffs = np.linalg.solve(damped, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularProjectionError(f"normal equations are singular: {exc}") from exc
    if not np.all(np.isfinite(coeffs)):
        raise SingularProjectionError("projection filter diverged (rank-deficient references)")

    projected = np.zeros(n_samples + filter_length - 1)
    for k, ref in enumerate(references):
        taps = coeffs[k * filter_length : (k + 1) * filter_length]
        projected += fftconvolve(taps, ref)[: n_samples + filter_length - 1]
    return projected


def project_decompose(
    estimate,
    references: Sequence,
    target_index: int,
    filter_length: int = DEFAULT_FILTER_LENGTH,
) -> Decomposition:
    """Decompose an estimate against references allowing an L-tap filter.

    All signals must share one length T with ``1 <= filter_length <= T``.
    Signals are mean-removed first, and the returned parts reconstruct the
    (zero-padded) estimate exactly by construction.
    """
    est = _as_signal(estimate)
    refs = [_as_signal(r) for r in references]
    if not refs:
        raise MetricsError("need at least one reference")
    if not 0 <= target_index < len(refs):
        raise MetricsError(f"target_index {target_index} out of range for {len(refs)} references")
    lengths = {r.size for r in refs} | {est.size}
    if len(lengths) != 1:
        raise MetricsError(f"signals have differing lengths: {sorted(lengths)}")
    n_samples = est.size
    if not 1 <= filter_length <= n_samples:
        raise MetricsError(f"filter_length must lie in [1, {n_samples}], got {filter_length}")

    est = est - est.mean()
    refs = [r - r.mean() for r in refs]
    est_padded = np.concatenate([est, np.zeros(filter_length - 1)])

    # Exact membership short-circuit: an estimate that is exactly a scalar
    # multiple of the target reference projects onto itself, so both error
    # terms are exactly zero (the damped solver would leave numerical dust
    # and hide the infinite-ratio sentinel).
    target = refs[target_index]
    if np.any(target != 0.0):
        pivot = int(np.argmax(np.abs(target)))
        alpha = est[pivot] / target[pivot]
        if np.array_equal(est, alpha * target):
            zero = np.zeros_like(est_padded)
            return Decomposition(est_padded, zero, zero.copy(), filter_length)

    s_target = _project(est, [refs[target_index]], filter_length)
    p_all = _project(est, refs, filter_length)
    return Decomposition(
        s_target=s_target,
        e_interf=p_all - s_target,
        e_artif=est_padded - p_all,
        filter_length=filter_length,
    )


def _energy_ratio_db(numerator: float, denominator: float) -> float:
    if denominator == 0.0:
        return math.inf
    if numerator == 0.0:
        return -math.inf
    return 10.0 * math.log10(numerator / denominator)


def si_sdr(estimate, reference, zero_mean: bool = True) -> float:
    """Scale-invariant SDR in dB.

    The reference is rescaled by the least-squares factor
    ``<estimate, reference> / ||reference||^2`` before measuring the
    residual, so any rescaling of the estimate leaves the score unchanged.
    Signals are mean-removed first (disable with ``zero_mean=False``).
    """
    est = _as_signal(estimate)
    ref = _as_signal(reference)
    if est.size != ref.size:
        raise MetricsError(f"length mismatch: estimate {est.size}, reference {ref.size}")
    if zero_mean:
        est = est - est.mean()
        ref = ref - ref.mean()
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise MetricsError("reference is all zeros")
    alpha = float(np.dot(est, ref)) / ref_energy
    target = alpha * ref
    residual = target - est
    return _energy_ratio_db(float(np.dot(target, target)), float(np.dot(residual, residual)))


def bss_eval(
    estimates: StemPair,
    references: StemPair,
    filter_length: int = DEFAULT_FILTER_LENGTH,
    track_id: str = "",
) -> list[SeparationMetrics]:
    """SDR/SIR/SAR (plus SI-SDR) for the speech and music estimates.

    SDR compares the filtered target against interference plus artifacts,
    SIR against interference alone, and SAR compares target plus
    interference against artifacts.
    """
    ref_signals = [references.speech.mono_samples, references.music.mono_samples]
    est_signals = [estimates.speech.mono_samples, estimates.music.mono_samples]
    rows = []
    for index, source in enumerate(("speech", "music")):
        dec = project_decompose(est_signals[index], ref_signals, index, filter_length)
        target_energy = float(np.dot(dec.s_target, dec.s_target))
        interf_energy = float(np.dot(dec.e_interf, dec.e_interf))
        artif_energy = float(np.dot(dec.e_artif, dec.e_artif))
        distortion = dec.e_interf + dec.e_artif
        rows.append(
            SeparationMetrics(
                track_id=track_id,
                source=source,
                sdr=_energy_ratio_db(target_energy, float(np.dot(distortion, distortion))),
                sir=_energy_ratio_db(target_energy, interf_energy),
                sar=_energy_ratio_db(
                    float(np.dot(dec.s_target + dec.e_interf, dec.s_target + dec.e_interf)),
                    artif_energy,
                ),
                si_sdr=si_sdr(est_signals[index], ref_signals[index]),
                filter_length=filter_length,
            )
        )
    return rows


def evaluate_track(
    mixture,
    estimates: StemPair,
    references: StemPair,
    filter_length: int = DEFAULT_FILTER_LENGTH,
    track_id: str = "",
) -> TrackEvaluation:
    """Score the estimates and the do-nothing baseline that reuses the mixture
    as both estimated sources (for improvement deltas)."""
    baseline = StemPair(speech=mixture, music=mixture)
    return TrackEvaluation(
        estimate=tuple(bss_eval(estimates, references, filter_length, track_id)),
        mixture_baseline=tuple(bss_eval(baseline, references, filter_length, track_id)),
    )


def _format_value(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return repr(value)


def _parse_value(text: str) -> float:
    return float(text)


def rows_to_csv(rows: Sequence[SeparationMetrics]) -> str:
    """Serialize metric rows; infinities are written as ``inf`` / ``-inf``."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_CSV_HEADER)
    for r in rows:
        writer.writerow(
            [
                r.track_id,
                r.source,
                _format_value(r.sdr),
                _format_value(r.sir),
                _format_value(r.sar),
                _format_value(r.si_sdr),
                str(r.filter_length),
            ]
        )
    return out.getvalue()


def rows_from_csv(text: str) -> list[SeparationMetrics]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != _CSV_HEADER:
        raise MetricsError(f"expected header {','.join(_CSV_HEADER)}, got {','.join(header)}")
    rows = []
    for row in reader:
        if not row:
            continue
        track_id, source, sdr, sir, sar, si, flen = row
        rows.append(
            SeparationMetrics(
                track_id=track_id,
                source=source,
                sdr=_parse_value(sdr),
                sir=_parse_value(sir),
                sar=_parse_value(sar),
                si_sdr=_parse_value(si),
                filter_length=int(flen),
            )
        )
    return rows


def rows_to_json(rows: Sequence[SeparationMetrics]) -> str:
    """JSON array form; infinities become the strings ``inf`` / ``-inf``."""
    docs = []
    for r in rows:
        doc = {"track_id": r.track_id, "source": r.source, "filter_length": r.filter_length}
        for name in METRIC_NAMES:
            value = getattr(r, name)
            doc[name] = _format_value(value) if not math.isfinite(value) else value
        docs.append(doc)
    return json.dumps(docs, indent=2) + "\n"

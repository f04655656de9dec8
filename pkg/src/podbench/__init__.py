"""podbench: benchmarking toolkit for music/speech separation in podcast-style audio.

Synthesizes deterministic podcast-like mixtures from speech and music
source banks, separates them with oracle spectral masks, scores
separations with SDR/SIR/SAR and SI-SDR, and runs a two-part subjective
listening test with MOS aggregation.
"""

from .audio import AudioBuffer, downmix_to_mono, read_wav, rms_dbfs, write_wav
from .manifest import SourceManifest, load_manifest, partition_manifest, save_manifest
from .metrics import SeparationMetrics, bss_eval, evaluate_track, project_decompose, si_sdr
from .mixer import (
    GenerateConfig,
    MixRecipe,
    draw_mix_params,
    gain_ratio,
    generate_dataset,
    loudness,
    mix,
    render_recipe,
)
from .rng import SplitMix64, derive_stream_seed
from .separation import (
    StemPair,
    adaptive_normalize,
    combine_masks,
    denormalize,
    ideal_binary_masks,
    ideal_ratio_masks,
    log_l2_loss,
    oracle_separate,
)
from .spectral import Spectrogram, apply_mask_with_mixture_phase, istft, stft

__version__ = "0.1.0"

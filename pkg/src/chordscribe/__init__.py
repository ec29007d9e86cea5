"""Key, chord, and bass-note estimation from music audio.

Pipeline: loudness-based bass/treble chromagrams -> maximum-likelihood
training of a factored key/chord/bass hidden-Markov model -> constrained
Viterbi decoding with search-space reduction -> interval metrics.
"""

__version__ = "0.1.0"

from .audio_io import AudioBuffer, load_wav, resample, synthesize_triads, write_wav
from .annotations import (
    Alphabet,
    ChordSymbol,
    FrameLabels,
    IntervalLabels,
    beat_sync_labels,
    chord_pitch_classes,
    derive_bass,
    make_alphabet,
    map_to_alphabet,
    parse_chord_symbol,
    parse_key_label,
    parse_lab,
    write_lab,
)
from .chroma import (
    ChromaConfig,
    Chromagram,
    SpectralMatrix,
    a_weighting,
    bass_config,
    beat_sync_median,
    compute_chromagram,
    constant_q,
    default_beat_grid,
    estimate_tuning,
    fold_and_normalize,
    pitch_class_index,
    read_beats,
    read_chromagram,
    spl,
    treble_config,
    write_chromagram,
)
from .decode import (
    Constraints,
    DecodePath,
    NoAdmissiblePathError,
    chord_alphabet_constraint,
    forward_backward,
    max_gamma_decode,
    prune_chord_to_bass,
    prune_key_transitions,
    score_path,
    viterbi_joint,
)
from .evaluate import (
    EvalReport,
    aggregate,
    bass_frame_accuracy,
    overlap_ratio,
    paired_t_test,
    predominant_key_accuracy,
)
from .model import (
    ChordOnlyHmm,
    HpModel,
    TrainConfig,
    gaussian_logpdf,
    load_model,
    save_model,
    train,
    transpose_labels,
)

__all__ = [
    "Alphabet",
    "AudioBuffer",
    "ChordOnlyHmm",
    "ChordSymbol",
    "ChromaConfig",
    "Chromagram",
    "Constraints",
    "DecodePath",
    "EvalReport",
    "FrameLabels",
    "HpModel",
    "IntervalLabels",
    "NoAdmissiblePathError",
    "SpectralMatrix",
    "TrainConfig",
    "a_weighting",
    "aggregate",
    "bass_config",
    "bass_frame_accuracy",
    "beat_sync_labels",
    "beat_sync_median",
    "chord_alphabet_constraint",
    "chord_pitch_classes",
    "compute_chromagram",
    "constant_q",
    "default_beat_grid",
    "derive_bass",
    "estimate_tuning",
    "fold_and_normalize",
    "forward_backward",
    "gaussian_logpdf",
    "load_model",
    "load_wav",
    "make_alphabet",
    "map_to_alphabet",
    "max_gamma_decode",
    "overlap_ratio",
    "paired_t_test",
    "parse_chord_symbol",
    "parse_key_label",
    "parse_lab",
    "pitch_class_index",
    "predominant_key_accuracy",
    "prune_chord_to_bass",
    "prune_key_transitions",
    "read_beats",
    "read_chromagram",
    "resample",
    "save_model",
    "score_path",
    "spl",
    "synthesize_triads",
    "train",
    "transpose_labels",
    "treble_config",
    "viterbi_joint",
    "write_chromagram",
    "write_lab",
    "write_wav",
]

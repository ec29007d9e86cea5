"""Maximum-likelihood training of the key/chord/bass model.

All probability tables are relative-frequency estimates (optionally with
additive smoothing); emissions are per-state multivariate Gaussians over
chroma frames. Chord transitions are learned in key-relative coordinates:
every transition is transposed so its key tonic sits on C before counting,
one table per mode, which multiplies the usable evidence per cell by 12.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .annotations import UNLABELED, Alphabet, FrameLabels, make_alphabet, transpose_key
from .chroma import Chromagram

N_KEYS = 24
N_BASS = 13


class ModelFormatError(Exception):
    """Model file is corrupt, truncated, or from an unknown version."""


@dataclass
class TrainConfig:
    alphabet: str = "majmin25"
    alpha: float = 0.1  # additive pseudo-count on initial/transition counts
    epsilon: float = 1e-4  # diagonal covariance regularizer

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("smoothing alpha must be >= 0")
        if self.epsilon <= 0:
            raise ValueError("covariance regularizer must be > 0")


@dataclass
class ChordOnlyHmm:
    """Simple chord-chain HMM over concatenated treble+bass chroma (24-d
    emissions); first stage of the two-stage chord-alphabet reduction."""

    init: np.ndarray  # (C,)
    trans: np.ndarray  # (C, C)
    means: np.ndarray  # (C, 24)
    covs: np.ndarray  # (C, 24, 24)


@dataclass
class HpModel:
    """All learned probability tables plus the raw counts kept for pruning.

    chord_trans_rel holds the two key-relative chord transition tables
    (row 0: major-mode contexts, row 1: minor), indexed by chord states
    transposed so the key tonic is C. The absolute table for a concrete
    key is a permutation of the relevant mode table (chord_trans_for_key).
    """

    alphabet: Alphabet
    init_key: np.ndarray  # (24,)
    init_chord: np.ndarray  # (C,)
    init_bass: np.ndarray  # (13,)
    key_trans: np.ndarray  # (24, 24)
    chord_trans_rel: np.ndarray  # (2, C, C)
    bass_given_chord: np.ndarray  # (C, 13)
    bass_trans: np.ndarray  # (13, 13)
    chord_emis_mean: np.ndarray  # (C, 12)
    chord_emis_cov: np.ndarray  # (C, 12, 12)
    bass_emis_mean: np.ndarray  # (13, 12)
    bass_emis_cov: np.ndarray  # (13, 12, 12)
    key_trans_counts: np.ndarray  # (24, 24) raw
    chord_bass_counts: np.ndarray  # (C, 13) raw
    cac: ChordOnlyHmm
    train_warnings: list[str] = field(default_factory=list)

    @property
    def n_chords(self) -> int:
        return self.alphabet.size

    def chord_trans_for_key(self, key_state: int) -> np.ndarray:
        """Absolute chord transition table under a concrete key."""
        tonic, mode = key_state % 12, key_state // 12
        rel = self.chord_trans_rel[mode]
        perm = np.array(
            [self.alphabet.shift(c, -tonic) for c in range(self.n_chords)], dtype=np.int64
        )
        return rel[np.ix_(perm, perm)]


def _normalize_rows(counts: np.ndarray, alpha: float) -> np.ndarray:
    """(count + alpha) / (rowsum + alpha*n). With alpha=0, unobserved rows
    stay all-zero (their MLE is undefined)."""
    smoothed = counts + alpha
    sums = smoothed.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore"):
        out = np.where(sums > 0, smoothed / np.where(sums > 0, sums, 1.0), 0.0)
    return out


def _normalize_vector(counts: np.ndarray, alpha: float) -> np.ndarray:
    return _normalize_rows(counts[None, :], alpha)[0]


def _fit_gaussians(frames_per_state, dim, epsilon, state_names, warnings_out):
    """Sample mean and MLE covariance (+ epsilon*I) per state; states with
    no observations get a flat fallback (mean 0.5, cov 0.1*I) and a
    warning."""
    n = len(frames_per_state)
    means = np.full((n, dim), 0.5)
    covs = np.tile(0.1 * np.eye(dim), (n, 1, 1))
    for s, rows in enumerate(frames_per_state):
        if len(rows) == 0:
            warnings_out.append(f"no emission observations for {state_names(s)}")
            continue
        x = np.asarray(rows)
        means[s] = x.mean(axis=0)
        centered = x - means[s]
        covs[s] = centered.T @ centered / x.shape[0] + epsilon * np.eye(dim)
    return means, covs


def train(dataset, cfg: TrainConfig) -> HpModel:
    """Estimate every table of the model from labeled chromagram frames.

    dataset: iterable of (treble Chromagram, bass Chromagram, FrameLabels)
    with equal frame counts per song. UNLABELED states are excluded from
    every count they touch; transition counts need both endpoints labeled
    (plus the key at the target frame, for chord transitions).
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty training dataset")
    alphabet = make_alphabet(cfg.alphabet)
    n_chords = alphabet.size

    init_key_c = np.zeros(N_KEYS)
    init_chord_c = np.zeros(n_chords)
    init_bass_c = np.zeros(N_BASS)
    key_c = np.zeros((N_KEYS, N_KEYS))
    rel_c = np.zeros((2, n_chords, n_chords))
    bc_c = np.zeros((n_chords, N_BASS))
    bb_c = np.zeros((N_BASS, N_BASS))
    cac_c = np.zeros((n_chords, n_chords))

    chord_frames = [[] for _ in range(n_chords)]
    bass_frames = [[] for _ in range(N_BASS)]
    cac_frames = [[] for _ in range(n_chords)]

    for treble, bass_ch, labels in dataset:
        t_frames = treble.values.T
        b_frames = bass_ch.values.T
        if not (len(labels) == t_frames.shape[0] == b_frames.shape[0]):
            raise ValueError("label/chromagram frame counts differ")
        k, c, b = labels.key, labels.chord, labels.bass
        joint = np.concatenate([t_frames, b_frames], axis=1)

        if k[0] != UNLABELED:
            init_key_c[k[0]] += 1
        if c[0] != UNLABELED:
            init_chord_c[c[0]] += 1
        if b[0] != UNLABELED:
            init_bass_c[b[0]] += 1

        for t in range(1, len(labels)):
            if k[t - 1] != UNLABELED and k[t] != UNLABELED:
                key_c[k[t - 1], k[t]] += 1
            if c[t - 1] != UNLABELED and c[t] != UNLABELED:
                cac_c[c[t - 1], c[t]] += 1
                if k[t] != UNLABELED:
                    tonic, mode = k[t] % 12, k[t] // 12
                    rel_c[mode, alphabet.shift(c[t - 1], -tonic), alphabet.shift(c[t], -tonic)] += 1
            if c[t] != UNLABELED and b[t] != UNLABELED:
                bc_c[c[t], b[t]] += 1
            if b[t - 1] != UNLABELED and b[t] != UNLABELED:
                bb_c[b[t - 1], b[t]] += 1

        for t in range(len(labels)):
            if c[t] != UNLABELED:
                chord_frames[c[t]].append(t_frames[t])
                cac_frames[c[t]].append(joint[t])
            if b[t] != UNLABELED:
                bass_frames[b[t]].append(b_frames[t])

    warnings: list[str] = []
    chord_mean, chord_cov = _fit_gaussians(
        chord_frames, 12, cfg.epsilon, alphabet.label_at, warnings
    )
    bass_mean, bass_cov = _fit_gaussians(
        bass_frames, 12, cfg.epsilon, lambda s: f"bass {s}", warnings
    )
    cac_mean, cac_cov = _fit_gaussians(
        cac_frames, 24, cfg.epsilon, lambda s: f"{alphabet.label_at(s)} (chord-only)", warnings
    )

    return HpModel(
        alphabet=alphabet,
        init_key=_normalize_vector(init_key_c, cfg.alpha),
        init_chord=_normalize_vector(init_chord_c, cfg.alpha),
        init_bass=_normalize_vector(init_bass_c, cfg.alpha),
        key_trans=_normalize_rows(key_c, cfg.alpha),
        chord_trans_rel=_normalize_rows(rel_c, cfg.alpha),
        bass_given_chord=_normalize_rows(bc_c, cfg.alpha),
        bass_trans=_normalize_rows(bb_c, cfg.alpha),
        chord_emis_mean=chord_mean,
        chord_emis_cov=chord_cov,
        bass_emis_mean=bass_mean,
        bass_emis_cov=bass_cov,
        key_trans_counts=key_c,
        chord_bass_counts=bc_c,
        cac=ChordOnlyHmm(
            init=_normalize_vector(init_chord_c, cfg.alpha),
            trans=_normalize_rows(cac_c, cfg.alpha),
            means=cac_mean,
            covs=cac_cov,
        ),
        train_warnings=warnings,
    )


def transpose_labels(fl: FrameLabels, semitones: int, alphabet: Alphabet) -> FrameLabels:
    """Shift chord roots, key tonics, and bass pitch classes by a semitone
    count; modes/qualities, no-chord, no-bass, and unlabeled frames are
    fixed points."""
    if not 0 <= semitones <= 11:
        raise ValueError("semitones must be in 0..11")
    chord = np.array([alphabet.shift(c, semitones) for c in fl.chord], dtype=np.int64)
    key = np.array([transpose_key(k, semitones) for k in fl.key], dtype=np.int64)
    bass = np.where((fl.bass >= 0) & (fl.bass < 12), (fl.bass + semitones) % 12, fl.bass)
    return FrameLabels(key, chord, bass, fl.starts.copy(), fl.ends.copy())


def gaussian_logpdf(x, mean, cov) -> float:
    """Exact multivariate normal log density. Raises on a covariance that
    is not symmetric positive definite."""
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    if not np.allclose(cov, cov.T, atol=1e-10):
        raise ValueError("covariance must be symmetric")
    try:
        factor = cho_factor(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    d = mean.size
    diff = x - mean
    maha = float(diff @ cho_solve(factor, diff))
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + maha)


def gaussian_logpdf_frames(frames: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """Log densities of every frame under every state Gaussian: (T, n)."""
    frames = np.asarray(frames, dtype=np.float64)
    t, d = frames.shape
    n = means.shape[0]
    out = np.empty((t, n))
    for s in range(n):
        try:
            factor = cho_factor(covs[s], lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"covariance of state {s} is not positive definite") from exc
        diff = frames - means[s]
        maha = np.einsum("td,td->t", diff, cho_solve(factor, diff.T).T)
        logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
        out[:, s] = -0.5 * (d * np.log(2.0 * np.pi) + logdet + maha)
    return out


# --- serialization -------------------------------------------------------------

_FORMAT_HEADER = "chordscribe-model v1"


def _model_tables(m: HpModel):
    c = m.n_chords
    return [
        ("init_key", m.init_key, (N_KEYS,)),
        ("init_chord", m.init_chord, (c,)),
        ("init_bass", m.init_bass, (N_BASS,)),
        ("key_trans", m.key_trans, (N_KEYS, N_KEYS)),
        ("chord_trans_rel", m.chord_trans_rel, (2, c, c)),
        ("bass_given_chord", m.bass_given_chord, (c, N_BASS)),
        ("bass_trans", m.bass_trans, (N_BASS, N_BASS)),
        ("chord_emis_mean", m.chord_emis_mean, (c, 12)),
        ("chord_emis_cov", m.chord_emis_cov, (c, 12, 12)),
        ("bass_emis_mean", m.bass_emis_mean, (N_BASS, 12)),
        ("bass_emis_cov", m.bass_emis_cov, (N_BASS, 12, 12)),
        ("key_trans_counts", m.key_trans_counts, (N_KEYS, N_KEYS)),
        ("chord_bass_counts", m.chord_bass_counts, (c, N_BASS)),
        ("cac_init", m.cac.init, (c,)),
        ("cac_trans", m.cac.trans, (c, c)),
        ("cac_means", m.cac.means, (c, 24)),
        ("cac_covs", m.cac.covs, (c, 24, 24)),
    ]


def save_model(m: HpModel, path) -> None:
    """Versioned plain-text model file, one table per section; values are
    shortest round-trip decimals, so save->load->save is byte-identical."""
    with open(path, "w") as fh:
        fh.write(_FORMAT_HEADER + "\n")
        fh.write(f"alphabet {m.alphabet.kind}\n")
        for name, arr, shape in _model_tables(m):
            dims = " ".join(str(s) for s in shape)
            fh.write(f"table {name} {dims}\n")
            flat = np.asarray(arr, dtype=np.float64).reshape(shape[0], -1)
            for row in flat:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        fh.write("end\n")


def load_model(path) -> HpModel:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
    if not lines or lines[0] != _FORMAT_HEADER:
        raise ModelFormatError(f"{path}: not a {_FORMAT_HEADER!r} file")
    if len(lines) < 2 or not lines[1].startswith("alphabet "):
        raise ModelFormatError(f"{path}: missing alphabet line")
    alphabet = make_alphabet(lines[1].split(maxsplit=1)[1])

    tables: dict[str, np.ndarray] = {}
    i = 2
    while i < len(lines):
        if lines[i] == "end":
            break
        parts = lines[i].split()
        if not parts or parts[0] != "table":
            raise ModelFormatError(f"{path}:{i + 1}: expected a table header")
        name, shape = parts[1], tuple(int(v) for v in parts[2:])
        n_rows = shape[0]
        rows = lines[i + 1 : i + 1 + n_rows]
        if len(rows) < n_rows:
            raise ModelFormatError(f"{path}: truncated table {name}")
        try:
            arr = np.array([[float(v) for v in row.split()] for row in rows])
            arr = arr.reshape(shape)
        except ValueError as exc:
            raise ModelFormatError(f"{path}: bad values in table {name}") from exc
        tables[name] = arr
        i += 1 + n_rows
    else:
        raise ModelFormatError(f"{path}: missing end marker")

    expected = [name for name, _, _ in _model_tables_shapes(alphabet)]
    missing = [name for name in expected if name not in tables]
    if missing:
        raise ModelFormatError(f"{path}: missing tables {missing}")
    t = tables
    return HpModel(
        alphabet=alphabet,
        init_key=t["init_key"],
        init_chord=t["init_chord"],
        init_bass=t["init_bass"],
        key_trans=t["key_trans"],
        chord_trans_rel=t["chord_trans_rel"],
        bass_given_chord=t["bass_given_chord"],
        bass_trans=t["bass_trans"],
        chord_emis_mean=t["chord_emis_mean"],
        chord_emis_cov=t["chord_emis_cov"],
        bass_emis_mean=t["bass_emis_mean"],
        bass_emis_cov=t["bass_emis_cov"],
        key_trans_counts=t["key_trans_counts"],
        chord_bass_counts=t["chord_bass_counts"],
        cac=ChordOnlyHmm(t["cac_init"], t["cac_trans"], t["cac_means"], t["cac_covs"]),
    )


def _model_tables_shapes(alphabet: Alphabet):
    c = alphabet.size
    return [
        ("init_key", None, (N_KEYS,)),
        ("init_chord", None, (c,)),
        ("init_bass", None, (N_BASS,)),
        ("key_trans", None, (N_KEYS, N_KEYS)),
        ("chord_trans_rel", None, (2, c, c)),
        ("bass_given_chord", None, (c, N_BASS)),
        ("bass_trans", None, (N_BASS, N_BASS)),
        ("chord_emis_mean", None, (c, 12)),
        ("chord_emis_cov", None, (c, 12, 12)),
        ("bass_emis_mean", None, (N_BASS, 12)),
        ("bass_emis_cov", None, (N_BASS, 12, 12)),
        ("key_trans_counts", None, (N_KEYS, N_KEYS)),
        ("chord_bass_counts", None, (c, N_BASS)),
        ("cac_init", None, (c,)),
        ("cac_trans", None, (c, c)),
        ("cac_means", None, (c, 24)),
        ("cac_covs", None, (c, 24, 24)),
    ]

"""Joint (key, chord, bass) Viterbi decoding with search-space reduction.

The transition structure factors as
    p(k|k_prev) * p(c|c_prev, k) * p(b|c) * p(b|b_prev),
so each step's maximization runs in three stages (collapse previous bass,
then previous key, then previous chord) instead of over the full product
space. Three prune knobs cut the admissible sets: a key-transition count
floor (gamma), a per-chord cap on admissible basses (tau), and a chord
working set from a first-pass chord-only decode (the chord alphabet
constraint). Pruned rows are never renormalized.

Everything runs in natural log; zero probability is -inf. Ties break
toward the lowest (key, chord, bass) state everywhere: the final frame
takes the lowest maximizing state, and each backpointer the lowest
maximizing predecessor, which together select the optimal path whose
reversed state sequence is lexicographically smallest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .chroma import Chromagram
from .model import ChordOnlyHmm, HpModel, gaussian_logpdf_frames

N_KEYS = 24
N_BASS = 13

_TIE_BIG = np.int32(2**30)


class NoAdmissiblePathError(Exception):
    """Every state died at some frame; message names the first dead frame."""

    def __init__(self, frame: int):
        self.frame = frame
        super().__init__(f"no admissible path: all states impossible at frame {frame}")


@dataclass(frozen=True)
class Constraints:
    """Search-space reduction settings.

    gamma: keep a key transition only if its raw training count exceeds
    gamma (None disables; self-transitions get no exception). tau: per
    chord, only the tau most-counted bass states stay admissible
    (tau=3 amounts to root position plus first/second inversion). cac:
    restrict chords to those a chord-only first pass actually used.
    """

    gamma: int | None = None
    tau: int | None = None
    cac: bool = False

    def __post_init__(self):
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be a non-negative count threshold")
        if self.tau is not None and not 1 <= self.tau <= 13:
            raise ValueError("tau must be in 1..13")


@dataclass
class DecodePath:
    """Decoded per-frame states plus the joint log-probability achieved."""

    keys: np.ndarray
    chords: np.ndarray
    basses: np.ndarray
    log_prob: float
    expanded_transitions: int = 0

    def __len__(self) -> int:
        return self.keys.size


def prune_key_transitions(m: HpModel, gamma: int) -> np.ndarray:
    """Key-transition table with rarely-seen transitions zeroed.

    An entry survives only if its raw count exceeds gamma; no
    renormalization happens, so rows may sum below 1.
    """
    out = m.key_trans.copy()
    out[m.key_trans_counts <= gamma] = 0.0
    return out


def top_bass_states(m: HpModel, tau: int | None) -> np.ndarray:
    """(C, S) admissible bass states per chord, ascending within each row.

    Selection ranks raw chord-to-bass counts, breaking count ties toward
    the lower bass-state index.
    """
    s = 13 if tau is None else int(tau)
    counts = m.chord_bass_counts
    order = np.lexsort((np.arange(N_BASS)[None, :].repeat(counts.shape[0], 0), -counts), axis=1)
    return np.sort(order[:, :s], axis=1)


def prune_chord_to_bass(m: HpModel, tau: int) -> np.ndarray:
    """Chord-to-bass table keeping only each chord's tau top-counted basses."""
    slots = top_bass_states(m, tau)
    out = np.zeros_like(m.bass_given_chord)
    np.put_along_axis(out, slots, np.take_along_axis(m.bass_given_chord, slots, axis=1), axis=1)
    return out


# --- chord-only first pass ------------------------------------------------------


def forward_backward(hmm: ChordOnlyHmm, obs: np.ndarray) -> np.ndarray:
    """Per-frame state posteriors of the chord-only HMM, log-domain with
    per-frame normalization. obs: (T, 24) concatenated treble+bass chroma."""
    obs = np.asarray(obs, dtype=np.float64)
    log_e = gaussian_logpdf_frames(obs, hmm.means, hmm.covs)
    with np.errstate(divide="ignore"):
        log_pi = np.log(hmm.init)
        log_a = np.log(hmm.trans)
    T, n = log_e.shape
    la = np.empty((T, n))
    la[0] = log_pi + log_e[0]
    for t in range(T):
        if t > 0:
            la[t] = log_e[t] + logsumexp(la[t - 1][:, None] + log_a, axis=0)
        norm = logsumexp(la[t])
        if not np.isfinite(norm):
            raise ValueError(f"no admissible chord state at frame {t}")
        la[t] -= norm
    lb = np.zeros((T, n))
    for t in range(T - 2, -1, -1):
        lb[t] = logsumexp(log_a + (log_e[t + 1] + lb[t + 1])[None, :], axis=1)
        lb[t] -= logsumexp(lb[t])
    post = la + lb
    post -= logsumexp(post, axis=1, keepdims=True)
    return np.exp(post)


def max_gamma_decode(hmm: ChordOnlyHmm, obs: np.ndarray):
    """Most probable state per frame under the posterior marginals.

    Returns (states, posteriors); ties take the lowest state index.
    """
    post = forward_backward(hmm, obs)
    return np.argmax(post, axis=1), post


def chord_alphabet_constraint(hmm: ChordOnlyHmm, obs: np.ndarray, no_chord: int) -> np.ndarray:
    """Distinct chords of the first-pass decode, plus no-chord, ascending."""
    states, _ = max_gamma_decode(hmm, obs)
    return np.union1d(np.unique(states), [no_chord]).astype(np.int64)


# --- joint decoding -------------------------------------------------------------


@dataclass
class _LogTables:
    """Log-domain, constraint-applied views used by one decode run."""

    lpi_k: np.ndarray  # (24,)
    lpi_c: np.ndarray  # (Cw,)
    lpi_b: np.ndarray  # (13,)
    lf: np.ndarray  # (24, 24) key transitions
    lg: np.ndarray  # (24, Cw, Cw) chord transitions per key
    lh: np.ndarray  # (13, 13) bass transitions
    lr: np.ndarray  # (Cw, 13) bass given chord
    slots: np.ndarray  # (Cw, S) admissible bass targets per chord
    working: np.ndarray  # (Cw,) chord states in original alphabet indices
    emis_c: np.ndarray  # (T, Cw)
    emis_b: np.ndarray  # (T, 13)


def _build_tables(
    m: HpModel, constraints: Constraints, treble: Chromagram, bass: Chromagram
) -> _LogTables:
    if treble.n_frames != bass.n_frames:
        raise ValueError("treble and bass chromagrams must have equal frame counts")
    t_frames = treble.values.T
    b_frames = bass.values.T
    n_frames = t_frames.shape[0]

    key_trans = (
        prune_key_transitions(m, constraints.gamma) if constraints.gamma is not None else m.key_trans
    )
    bass_given_chord = (
        prune_chord_to_bass(m, constraints.tau) if constraints.tau is not None else m.bass_given_chord
    )
    slots = top_bass_states(m, constraints.tau)

    # The chord alphabet constraint zeroes transitions whose endpoints fall
    # outside the first-pass chord set, which for two or more frames is the
    # same as restricting the chord state space; a single frame has no
    # transitions to prune, so it keeps the full alphabet.
    if constraints.cac and n_frames >= 2:
        working = chord_alphabet_constraint(
            m.cac, np.concatenate([t_frames, b_frames], axis=1), m.alphabet.no_chord
        )
    else:
        working = np.arange(m.n_chords, dtype=np.int64)

    with np.errstate(divide="ignore"):
        lpi_k = np.log(m.init_key)
        lpi_c = np.log(m.init_chord[working])
        lpi_b = np.log(m.init_bass)
        lf = np.log(key_trans)
        lh = np.log(m.bass_trans)
        lr = np.log(bass_given_chord[working])
        lg = np.log(
            np.stack([m.chord_trans_for_key(k)[np.ix_(working, working)] for k in range(N_KEYS)])
        )

    emis_c = gaussian_logpdf_frames(t_frames, m.chord_emis_mean, m.chord_emis_cov)[:, working]
    emis_b = gaussian_logpdf_frames(b_frames, m.bass_emis_mean, m.bass_emis_cov)
    return _LogTables(
        lpi_k, lpi_c, lpi_b, lf, lg, lh, lr, slots[working], working, emis_c, emis_b
    )


def _viterbi_tables(tables: _LogTables):
    """Staged Viterbi over prepared log tables; dimensions come from the
    table shapes. Returns (keys, chord_positions, basses, log_prob,
    n_expanded) with chord positions indexing the working set."""
    T = tables.emis_c.shape[0]
    n_keys = tables.lf.shape[0]
    n_bass = tables.lh.shape[0]
    cw = tables.working.size
    s = tables.slots.shape[1]

    v = (
        tables.lpi_k[:, None, None]
        + (tables.lpi_c + tables.emis_c[0])[None, :, None]
        + (tables.lpi_b + tables.emis_b[0])[None, None, :]
    )
    if not np.isfinite(v.max()):
        raise NoAdmissiblePathError(0)

    backptr = np.full((T, n_keys, cw, n_bass), -1, dtype=np.int32)
    chord_ids = np.arange(cw, dtype=np.int32)[:, None, None]
    # With no bass cap the slots are the identity gather; plain broadcasts
    # avoid materializing the same arrays chord-by-chord.
    full_slots = s == n_bass
    lr_slots = tables.lr if full_slots else np.take_along_axis(tables.lr, tables.slots, axis=1)
    n_expanded = 0
    fin_h = int(np.isfinite(tables.lh).sum())
    fin_f = int(np.isfinite(tables.lf).sum())
    fin_g = int(np.isfinite(tables.lg).sum())
    fin_h_rows = np.isfinite(tables.lh).sum(axis=1)
    n_b_rest = n_keys * int(fin_h_rows[tables.slots].sum())

    for t in range(1, T):
        # stage 1: collapse previous bass (lowest maximizer wins)
        tmp = v[:, :, :, None] + tables.lh[None, None, :, :]
        stage_b = tmp.max(axis=2)  # (K, Cw, B)
        from_b = tmp.argmax(axis=2).astype(np.int32)
        n_expanded += n_keys * cw * fin_h if t == 1 else n_b_rest

        # stage 2: collapse previous key
        tmp = stage_b[:, None, :, :] + tables.lf[:, :, None, None]
        stage_k = tmp.max(axis=0)  # (K', Cw, B)
        from_k = tmp.argmax(axis=0).astype(np.int32)
        n_expanded += cw * n_bass * fin_f

        # stage 3: collapse previous chord, per target key, only at each
        # chord's admissible bass slots
        v = np.full((n_keys, cw, n_bass), -np.inf)
        if full_slots:
            extra = lr_slots + tables.emis_c[t][:, None] + tables.emis_b[t][None, :]
        else:
            extra = lr_slots + tables.emis_c[t][:, None] + tables.emis_b[t][tables.slots]
        for ki in range(n_keys):
            if full_slots:
                base = stage_k[ki][:, None, :]  # broadcast over target chords
                kk_g = from_k[ki][:, None, :]
                bvals = tables.slots[:1]
            else:
                base = stage_k[ki][:, tables.slots]  # (c_prev, c, S)
                kk_g = from_k[ki][:, tables.slots]
                bvals = tables.slots
            val = base + tables.lg[ki][:, :, None]
            best = val.max(axis=0)  # (c, S)
            from_c = val.argmax(axis=0)
            # ties at a live maximum need re-picking: plain argmax prefers
            # the lowest previous chord, but the canonical order is
            # previous key first; dead columns (-inf) need no repair
            ties = np.isfinite(best) & ((val == best[None]).sum(axis=0) > 1)
            if ties.any():
                composite = kk_g.astype(np.int32) * 256 + chord_ids
                masked = np.where(val == best[None], composite, _TIE_BIG)
                from_c = np.where(ties, masked.argmin(axis=0), from_c)
            kbar = np.take_along_axis(np.broadcast_to(kk_g, val.shape), from_c[None], 0)[0]
            bbar = from_b[kbar, from_c, bvals]
            flat = (kbar.astype(np.int32) * cw + from_c.astype(np.int32)) * n_bass + bbar
            if full_slots:
                v[ki] = best + extra
                backptr[t, ki] = flat
            else:
                np.put_along_axis(v[ki], tables.slots, best + extra, axis=1)
                np.put_along_axis(backptr[t, ki], tables.slots, flat, axis=1)
        n_expanded += s * fin_g

        if not np.isfinite(v.max()):
            raise NoAdmissiblePathError(t)

    flat_final = int(np.argmax(v.reshape(-1)))
    log_prob = float(v.reshape(-1)[flat_final])
    keys = np.empty(T, dtype=np.int64)
    chords = np.empty(T, dtype=np.int64)
    basses = np.empty(T, dtype=np.int64)
    state = flat_final
    for t in range(T - 1, -1, -1):
        k, rem = divmod(state, cw * n_bass)
        c, b = divmod(rem, n_bass)
        keys[t], chords[t], basses[t] = k, c, b
        if t > 0:
            state = int(backptr[t, k, c, b])
    return keys, chords, basses, log_prob, n_expanded


def viterbi_joint(
    m: HpModel, constraints: Constraints, treble: Chromagram, bass: Chromagram
) -> DecodePath:
    """Exact argmax (key, chord, bass) path under the constrained tables.

    Identical to flat Viterbi over the product space, but each step
    maximizes stage-by-stage per the factored transition. Raises
    NoAdmissiblePathError naming the first frame at which every state
    became impossible.
    """
    tables = _build_tables(m, constraints, treble, bass)
    keys, chord_pos, basses, log_prob, n_expanded = _viterbi_tables(tables)
    return DecodePath(keys, tables.working[chord_pos], basses, log_prob, n_expanded)


def score_path(
    m: HpModel,
    constraints: Constraints,
    treble: Chromagram,
    bass: Chromagram,
    keys,
    chords,
    basses,
) -> float:
    """Joint log-probability of a given state path under the same
    constraint-applied tables the decoder uses."""
    tables = _build_tables(m, constraints, treble, bass)
    pos = {c: i for i, c in enumerate(tables.working.tolist())}
    keys = np.asarray(keys)
    chords = np.asarray(chords)
    basses = np.asarray(basses)
    if any(c not in pos for c in chords.tolist()):
        return -np.inf
    cw_idx = np.array([pos[c] for c in chords.tolist()])
    lp = (
        tables.lpi_k[keys[0]]
        + tables.lpi_c[cw_idx[0]]
        + tables.lpi_b[basses[0]]
        + tables.emis_c[0, cw_idx[0]]
        + tables.emis_b[0, basses[0]]
    )
    for t in range(1, keys.size):
        lp += (
            tables.lf[keys[t - 1], keys[t]]
            + tables.lg[keys[t], cw_idx[t - 1], cw_idx[t]]
            + tables.lr[cw_idx[t], basses[t]]
            + tables.lh[basses[t - 1], basses[t]]
            + tables.emis_c[t, cw_idx[t]]
            + tables.emis_b[t, basses[t]]
        )
        if basses[t] not in tables.slots[cw_idx[t]]:
            lp = -np.inf
    return float(lp)

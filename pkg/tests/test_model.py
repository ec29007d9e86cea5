import math

import numpy as np
import pytest
from conftest import make_chromagram, make_frame_labels, synthetic_frames

from chordscribe.annotations import chord_pitch_classes, make_alphabet
from chordscribe.model import (
    HpModel,
    ModelFormatError,
    TrainConfig,
    gaussian_logpdf,
    gaussian_logpdf_frames,
    load_model,
    save_model,
    train,
    transpose_labels,
)

A25 = make_alphabet("majmin25")


def fixture_dataset(alpha_kind="majmin25"):
    """Two short songs with hand-checkable counts (alpha=0 oracle below)."""
    # song A in C major: C C G G C; bass walks through G's third once
    chords_a = [0, 0, 7, 7, 0]
    bass_a = [0, 0, 7, 11, 0]
    keys_a = [0] * 5
    # song B in G major: G C C G
    chords_b = [7, 0, 0, 7]
    bass_b = [7, 0, 0, 7]
    keys_b = [7] * 4
    rng = np.random.default_rng(42)
    songs = []
    for chords, bass, keys in ((chords_a, bass_a, keys_a), (chords_b, bass_b, keys_b)):
        t, b = synthetic_frames(chords, bass, alpha_kind, rng=rng)
        songs.append(
            (
                make_chromagram(t),
                make_chromagram(b, band="bass"),
                make_frame_labels(keys, chords, bass),
            )
        )
    return songs


@pytest.fixture(scope="module")
def model():
    return train(fixture_dataset(), TrainConfig(alphabet="majmin25", alpha=0.0))


class TestMleTables:

    def test_initial_chord(self, model):
        # first chords C:maj and G:maj
        expect = np.zeros(25)
        expect[0] = expect[7] = 0.5
        np.testing.assert_array_equal(model.init_chord, expect)

    def test_initial_key_and_bass(self, model):
        assert model.init_key[0] == model.init_key[7] == 0.5
        assert model.init_bass[0] == model.init_bass[7] == 0.5

    def test_key_transitions_hand_count(self, model):
        assert model.key_trans[0, 0] == 1.0
        assert model.key_trans[7, 7] == 1.0
        assert model.key_trans_counts[0, 0] == 4
        assert model.key_trans_counts[7, 7] == 3

    def test_relative_chord_rows_hand_count(self, model):
        major = model.chord_trans_rel[0]
        # key-relative pairs: A gives (I,I),(I,V),(V,V),(V,I); B adds
        # (I,IV),(IV,IV),(IV,I) after shifting G major onto C
        np.testing.assert_allclose(major[0, [0, 5, 7]], [1 / 3, 1 / 3, 1 / 3])
        np.testing.assert_allclose(major[7, [0, 7]], [0.5, 0.5])
        np.testing.assert_allclose(major[5, [0, 5]], [0.5, 0.5])
        assert major[0].sum() == pytest.approx(1.0)

    def test_bass_tables_hand_count(self, model):
        np.testing.assert_allclose(model.bass_given_chord[0, 0], 1.0)
        np.testing.assert_allclose(model.bass_given_chord[7, [7, 11]], [2 / 3, 1 / 3])
        np.testing.assert_allclose(model.bass_trans[0, [0, 7]], [0.5, 0.5])
        np.testing.assert_allclose(model.bass_trans[11, 0], 1.0)
        assert model.chord_bass_counts[7, 11] == 1

    def test_chord_only_transitions_untransposed(self, model):
        np.testing.assert_allclose(model.cac.trans[0, [0, 7]], [0.5, 0.5])
        np.testing.assert_allclose(model.cac.trans[7, [0, 7]], [2 / 3, 1 / 3])

    def test_key_dependent_transition_expansion(self, model):
        # under G major, the relative (V, I) cell surfaces as D:maj -> G:maj
        table_g = model.chord_trans_for_key(7)
        major = model.chord_trans_rel[0]
        assert table_g[2, 7] == major[7, 0]
        assert table_g[0, 0] == major[5, 5]

    def test_keyed_transposition_identity(self):
        # G->C under C major and A->D under D major hit the same relative cell
        rng = np.random.default_rng(1)
        songs = []
        for chords, keys in (([7, 0], [0, 0]), ([9, 2], [2, 2])):
            bass = [c % 12 for c in chords]
            t, b = synthetic_frames(chords, bass, rng=rng)
            songs.append(
                (make_chromagram(t), make_chromagram(b, "bass"), make_frame_labels(keys, chords, bass))
            )
        m = train(songs, TrainConfig(alpha=0.0))
        assert m.chord_trans_rel[0][7, 0] == 1.0  # V -> I in major, twice


class TestTrainValidation:
    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            train([], TrainConfig())

    def test_misaligned_frames(self):
        t, b = synthetic_frames([0, 0], [0, 0])
        labels = make_frame_labels([0, 0, 0], [0, 0, 0], [0, 0, 0])
        with pytest.raises(ValueError):
            train([(make_chromagram(t), make_chromagram(b, "bass"), labels)], TrainConfig())

    def test_unseen_states_reported_and_usable(self):
        m = train(fixture_dataset(), TrainConfig(alpha=0.1))
        assert any("no emission observations" in w for w in m.train_warnings)
        unseen = 3  # D#:maj never occurs
        np.testing.assert_allclose(m.chord_emis_mean[unseen], 0.5)
        np.testing.assert_allclose(m.chord_emis_cov[unseen], 0.1 * np.eye(12))

    def test_row_stochastic_with_smoothing(self):
        m = train(fixture_dataset(), TrainConfig(alpha=0.1))
        for table in (m.key_trans, m.bass_trans, m.bass_given_chord, m.cac.trans):
            np.testing.assert_allclose(table.sum(axis=-1), 1.0, atol=1e-9)
        np.testing.assert_allclose(m.chord_trans_rel.sum(axis=-1), 1.0, atol=1e-9)
        for vec in (m.init_key, m.init_chord, m.init_bass):
            assert vec.sum() == pytest.approx(1.0, abs=1e-9)

    def test_unlabeled_frames_excluded(self):
        t, b = synthetic_frames([0, 0, 7], [0, 0, 7])
        labels = make_frame_labels([0, -1, 0], [0, -1, 7], [0, -1, 7])
        m = train([(make_chromagram(t), make_chromagram(b, "bass"), labels)], TrainConfig(alpha=0.0))
        # no chord transition has both endpoints labeled
        assert m.chord_trans_rel.sum() == 0.0
        assert m.key_trans_counts.sum() == 0.0

    def test_emission_means_match_templates(self):
        m = train(fixture_dataset(), TrainConfig(alpha=0.0))
        for state in (0, 7):
            pcs = chord_pitch_classes(A25.symbol_at(state))
            top3 = set(np.argsort(m.chord_emis_mean[state])[-3:].tolist())
            assert top3 == pcs


class TestTransposition:
    def test_shift_zero_is_identity(self):
        fl = make_frame_labels([0, 7], [0, 7], [0, 7])
        out = transpose_labels(fl, 0, A25)
        np.testing.assert_array_equal(out.chord, fl.chord)
        np.testing.assert_array_equal(out.key, fl.key)

    def test_shift_three(self):
        from chordscribe.annotations import parse_chord_symbol

        a121 = make_alphabet("full121")
        fl = make_frame_labels([9], [a121.index_of(parse_chord_symbol("A:maj/3"))], [1])
        out = transpose_labels(fl, 3, a121)
        assert out.chord[0] == a121.index_of(parse_chord_symbol("C:maj/3"))
        assert out.bass[0] == 4
        assert out.key[0] == 0

    def test_no_bass_and_unlabeled_fixed(self):
        fl = make_frame_labels([-1], [24], [12])
        out = transpose_labels(fl, 5, A25)
        assert out.key[0] == -1 and out.chord[0] == 24 and out.bass[0] == 12

    def test_training_equivariance(self):
        cfg = TrainConfig(alpha=0.0)
        base = fixture_dataset()
        shifted = [(t, b, transpose_labels(fl, 3, A25)) for t, b, fl in base]
        m0 = train(base, cfg)
        m3 = train(shifted, cfg)
        np.testing.assert_allclose(m0.chord_trans_rel, m3.chord_trans_rel, atol=1e-12)
        # key/bass tables are permutations by the relabeling
        perm_k = np.array([(k + 3) % 12 + 12 * (k // 12) for k in range(24)])
        np.testing.assert_allclose(m3.key_trans[np.ix_(perm_k, perm_k)], m0.key_trans)
        np.testing.assert_allclose(m3.init_key[perm_k], m0.init_key)
        perm_b = np.array([(b + 3) % 12 for b in range(12)] + [12])
        np.testing.assert_allclose(m3.bass_trans[np.ix_(perm_b, perm_b)], m0.bass_trans)
        np.testing.assert_allclose(m3.init_bass[perm_b], m0.init_bass)


class TestGaussianLogpdf:
    def test_identity_cov_at_mode(self):
        mean = np.zeros(12)
        assert gaussian_logpdf(mean, mean, np.eye(12)) == pytest.approx(-6.0 * math.log(2 * math.pi))

    def test_monte_carlo_unit_mass(self):
        rng = np.random.default_rng(2024)
        mean = rng.random(12)
        a = rng.standard_normal((12, 12)) * 0.2
        cov = a @ a.T + np.eye(12) * 0.5
        # importance sampling with an inflated-proposal Gaussian
        prop_cov = cov * 2.0
        chol = np.linalg.cholesky(prop_cov)
        xs = mean + rng.standard_normal((100_000, 12)) @ chol.T
        logq = gaussian_logpdf_frames(xs, mean[None, :], prop_cov[None, :, :])[:, 0]
        logp = gaussian_logpdf_frames(xs, mean[None, :], cov[None, :, :])[:, 0]
        mass = float(np.mean(np.exp(logp - logq)))
        assert mass == pytest.approx(1.0, rel=0.02)

    def test_covariance_scaling_identity(self):
        mean = np.full(12, 0.3)
        cov = np.eye(12) * 0.7
        base = gaussian_logpdf(mean, mean, cov)
        scaled = gaussian_logpdf(mean, mean, cov * 4.0)
        assert base - scaled == pytest.approx(12 * math.log(2.0))

    def test_non_pd_rejected(self):
        with pytest.raises(ValueError):
            gaussian_logpdf(np.zeros(2), np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_frames_matches_scalar(self):
        rng = np.random.default_rng(5)
        mean = rng.random(12)
        a = rng.standard_normal((12, 12)) * 0.1
        cov = a @ a.T + np.eye(12) * 0.3
        xs = rng.random((4, 12))
        mat = gaussian_logpdf_frames(xs, mean[None, :], cov[None, :, :])
        for i in range(4):
            assert mat[i, 0] == pytest.approx(gaussian_logpdf(xs[i], mean, cov), abs=1e-10)


class TestSerialization:
    def test_roundtrip_exact(self, tmp_path):
        m = train(fixture_dataset(), TrainConfig(alpha=0.1))
        p = tmp_path / "model.txt"
        save_model(m, p)
        back = load_model(p)
        assert back.alphabet.kind == m.alphabet.kind
        np.testing.assert_array_equal(back.key_trans, m.key_trans)
        np.testing.assert_array_equal(back.chord_trans_rel, m.chord_trans_rel)
        np.testing.assert_array_equal(back.chord_emis_cov, m.chord_emis_cov)
        np.testing.assert_array_equal(back.key_trans_counts, m.key_trans_counts)
        np.testing.assert_array_equal(back.cac.covs, m.cac.covs)
        # byte-identical re-save
        p2 = tmp_path / "model2.txt"
        save_model(back, p2)
        assert p.read_bytes() == p2.read_bytes()

    def test_truncated_file(self, tmp_path):
        m = train(fixture_dataset(), TrainConfig())
        p = tmp_path / "model.txt"
        save_model(m, p)
        text = p.read_text().splitlines()
        (tmp_path / "trunc.txt").write_text("\n".join(text[: len(text) // 2]))
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "trunc.txt")

    def test_version_mismatch(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("someone-elses-model v9\n")
        with pytest.raises(ModelFormatError):
            load_model(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "nope.txt")

"""Batch front end: chroma extraction, training, decoding, evaluation,
and synthetic fixture generation.

Songs are paired across directories by file stem. Configuration comes
from a flat key=value file (path via --config or the HP_CONFIG
environment variable), overridable per-flag. Output files are written
atomically (temp + rename). Exit status is 0 only when no per-song error
occurred.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import audio_io, chroma as chroma_mod
from .annotations import (
    BASS_LABELS,
    KEY_LABELS,
    chord_pitch_classes,
    derive_bass,
    beat_sync_labels,
    make_alphabet,
    merge_intervals,
    most_prevalent_labels,
    parse_chord_symbol,
    parse_lab,
    write_lab,
)
from .decode import Constraints, viterbi_joint
from .evaluate import (
    EvalReport,
    bass_frame_accuracy,
    first_key,
    overlap_ratio,
    paired_t_test,
    predominant_key,
)
from .model import TrainConfig, load_model, save_model, train


@dataclass
class RunConfig:
    audio_dir: str | None = None
    chroma_dir: str | None = None
    chords_dir: str | None = None
    keys_dir: str | None = None
    beats_dir: str | None = None
    pred_dir: str | None = None
    model_path: str | None = None
    output_dir: str | None = None
    alphabet: str = "majmin25"
    gammas: tuple = (None,)
    taus: tuple = (None,)
    cac: bool = False
    alpha: float = 0.1
    epsilon: float = 1e-4
    seed: int = 0
    jobs: int = 1
    q_factor: float = 17.0
    hop: int = 1024
    bins_per_semitone: int = 1
    sample_rate: int = 11025
    beat_period: float = 0.5
    train_fraction: float = 2.0 / 3.0


_INT_KEYS = {"seed", "jobs", "hop", "bins_per_semitone", "sample_rate"}
_FLOAT_KEYS = {"alpha", "epsilon", "q_factor", "beat_period", "train_fraction"}
_BOOL_KEYS = {"cac"}


def parse_config_file(path) -> dict:
    """Flat `key = value` text; `#` comments and blank lines ignored."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _sweep(text: str) -> tuple:
    out = []
    for piece in str(text).split(","):
        piece = piece.strip().lower()
        out.append(None if piece in ("", "none") else int(piece))
    return tuple(out)


def build_config(args) -> RunConfig:
    cfg = RunConfig()
    config_path = getattr(args, "config", None) or os.environ.get("HP_CONFIG")
    file_values = parse_config_file(config_path) if config_path else {}
    known = {f.name for f in fields(RunConfig)}
    for key, val in file_values.items():
        if key == "gamma":
            cfg = replace(cfg, gammas=_sweep(val))
        elif key == "tau":
            cfg = replace(cfg, taus=_sweep(val))
        elif key in _INT_KEYS:
            cfg = replace(cfg, **{key: int(val)})
        elif key in _FLOAT_KEYS:
            cfg = replace(cfg, **{key: float(val)})
        elif key in _BOOL_KEYS:
            cfg = replace(cfg, **{key: val.lower() in ("1", "true", "yes")})
        elif key in known:
            cfg = replace(cfg, **{key: val})
        else:
            raise ValueError(f"unknown config key {key!r}")
    for f in fields(RunConfig):
        if f.name in ("gammas", "taus", "cac"):
            continue
        flag = getattr(args, f.name, None)
        if flag is not None:
            cfg = replace(cfg, **{f.name: flag})
    if getattr(args, "gamma", None) is not None:
        cfg = replace(cfg, gammas=_sweep(args.gamma))
    if getattr(args, "tau", None) is not None:
        cfg = replace(cfg, taus=_sweep(args.tau))
    if getattr(args, "cac", False):
        cfg = replace(cfg, cac=True)
    return cfg


def _require_dirs(cfg: RunConfig, names: list[str]) -> list[Path]:
    paths = []
    for name in names:
        value = getattr(cfg, name)
        if not value:
            raise SystemExit(f"error: {name} is required (flag --{name.replace('_', '-')})")
        p = Path(value)
        if not p.is_dir():
            raise SystemExit(f"error: {name} {p} is not a directory")
        paths.append(p)
    return paths


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.output_dir:
        raise SystemExit("error: output_dir is required")
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic_write_via(path: Path, writer, payload) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    writer(tmp, payload)
    os.replace(tmp, path)


def _stems(directory: Path, suffix: str) -> list[str]:
    return sorted(p.name[: -len(suffix)] for p in directory.glob(f"*{suffix}"))


def _beats_for(cfg: RunConfig, stem: str, duration: float) -> np.ndarray:
    """Beat timestamps from the beats directory, else a fixed grid."""
    if cfg.beats_dir:
        beat_file = Path(cfg.beats_dir) / f"{stem}.txt"
        if beat_file.exists():
            beats = chroma_mod.read_beats(beat_file)
            if beats.size >= 2:
                return beats
        print(f"note: no usable beats for {stem}; using {cfg.beat_period}s grid", file=sys.stderr)
    return chroma_mod.default_beat_grid(duration, cfg.beat_period)


# --- chroma -----------------------------------------------------------------


def _chroma_one(job):
    cfg, stem, wav_path, out_dir = job
    buf = audio_io.load_wav(wav_path)
    buf = audio_io.resample(buf, cfg.sample_rate)
    cents = chroma_mod.estimate_tuning(buf)
    f_ref = 440.0 * 2.0 ** (cents / 1200.0)
    beats = _beats_for(cfg, stem, buf.duration)
    for band, make in (("treble", chroma_mod.treble_config), ("bass", chroma_mod.bass_config)):
        band_cfg = make(
            q_factor=cfg.q_factor,
            hop=cfg.hop,
            f_ref=f_ref,
            bins_per_semitone=cfg.bins_per_semitone,
        )
        ch = chroma_mod.compute_chromagram(buf, band_cfg, band)
        ch = chroma_mod.beat_sync_median(ch, beats)
        _atomic_write_via(out_dir / f"{stem}.{band}.chroma", chroma_mod.write_chromagram, ch)
    _atomic_write_text(out_dir / f"{stem}.tuning.txt", f"{cents}\n")
    return stem


def cmd_chroma(cfg: RunConfig) -> int:
    (audio_dir,) = _require_dirs(cfg, ["audio_dir"])
    out_dir = Path(cfg.chroma_dir) if cfg.chroma_dir else _out_dir(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    stems = _stems(audio_dir, ".wav")
    if not stems:
        print(f"error: no .wav files in {audio_dir}", file=sys.stderr)
        return 1
    jobs = [(cfg, stem, audio_dir / f"{stem}.wav", out_dir) for stem in stems]
    failures = 0
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = {pool.submit(_chroma_one, job): job[1] for job in jobs}
            for fut, stem in futures.items():
                try:
                    fut.result()
                    print(f"chroma: {stem}")
                except Exception as exc:
                    failures += 1
                    print(f"error: {stem}: {exc}", file=sys.stderr)
    else:
        for job in jobs:
            try:
                _chroma_one(job)
                print(f"chroma: {job[1]}")
            except Exception as exc:
                failures += 1
                print(f"error: {job[1]}: {exc}", file=sys.stderr)
    return 1 if failures else 0


# --- train ------------------------------------------------------------------


def _load_song(cfg: RunConfig, stem: str, chroma_dir: Path, alphabet):
    treble = chroma_mod.read_chromagram(chroma_dir / f"{stem}.treble.chroma")
    bass = chroma_mod.read_chromagram(chroma_dir / f"{stem}.bass.chroma")
    chords = parse_lab(Path(cfg.chords_dir) / f"{stem}.lab")
    keys = None
    if cfg.keys_dir and (Path(cfg.keys_dir) / f"{stem}.lab").exists():
        keys = parse_lab(Path(cfg.keys_dir) / f"{stem}.lab")
    beats = np.append(treble.starts, treble.ends[-1])
    labels = beat_sync_labels(chords, beats, alphabet, key_iv=keys)
    return treble, bass, labels


def cmd_train(cfg: RunConfig) -> int:
    chroma_dir, _ = _require_dirs(cfg, ["chroma_dir", "chords_dir"])
    if not cfg.model_path:
        raise SystemExit("error: model_path is required")
    stems = _stems(chroma_dir, ".treble.chroma")
    stems = [s for s in stems if (Path(cfg.chords_dir) / f"{s}.lab").exists()]
    if not stems:
        print("error: no training songs (need <stem>.treble.chroma + <stem>.lab)", file=sys.stderr)
        return 1

    rng = np.random.default_rng(cfg.seed)
    order = list(rng.permutation(stems))
    n_train = max(1, int(round(len(order) * cfg.train_fraction)))
    train_stems, test_stems = sorted(order[:n_train]), sorted(order[n_train:])

    alphabet = make_alphabet(cfg.alphabet)
    dataset = []
    failures = 0
    for stem in train_stems:
        try:
            dataset.append(_load_song(cfg, stem, chroma_dir, alphabet))
        except Exception as exc:
            failures += 1
            print(f"error: {stem}: {exc}", file=sys.stderr)
    if not dataset:
        print("error: no loadable training songs", file=sys.stderr)
        return 1

    model = train(dataset, TrainConfig(alphabet=cfg.alphabet, alpha=cfg.alpha, epsilon=cfg.epsilon))
    model_path = Path(cfg.model_path)
    model_path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_via(model_path, lambda p, m: save_model(m, p), model)
    _atomic_write_text(model_path.with_suffix(".train_songs.txt"), "".join(s + "\n" for s in train_stems))
    _atomic_write_text(model_path.with_suffix(".test_songs.txt"), "".join(s + "\n" for s in test_stems))
    print(f"trained on {len(dataset)} songs -> {model_path}")
    for warning in model.train_warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 1 if failures else 0


# --- decode -----------------------------------------------------------------


def _write_decode_labels(out_dir: Path, stem: str, path, alphabet, starts, ends) -> None:
    for kind, labels in (
        ("key", [KEY_LABELS[k] for k in path.keys]),
        ("chord", [alphabet.label_at(c) for c in path.chords]),
        ("bass", [BASS_LABELS[b] for b in path.basses]),
    ):
        merged = merge_intervals(starts, ends, labels)
        _atomic_write_via(out_dir / f"{stem}.{kind}.lab", write_lab, merged)


def _decode_one(job):
    model, constraints, stem, chroma_dir, out_dir, alphabet = job
    t0 = time.perf_counter()
    treble = chroma_mod.read_chromagram(chroma_dir / f"{stem}.treble.chroma")
    bass = chroma_mod.read_chromagram(chroma_dir / f"{stem}.bass.chroma")
    t_feature = time.perf_counter() - t0
    t0 = time.perf_counter()
    path = viterbi_joint(model, constraints, treble, bass)
    t_decode = time.perf_counter() - t0
    _write_decode_labels(out_dir, stem, path, alphabet, treble.starts, treble.ends)
    return stem, treble.n_frames, t_feature, t_decode, path.expanded_transitions, path.log_prob


def cmd_decode(cfg: RunConfig) -> int:
    (chroma_dir,) = _require_dirs(cfg, ["chroma_dir"])
    if not cfg.model_path or not Path(cfg.model_path).exists():
        raise SystemExit(f"error: model file not found: {cfg.model_path}")
    out_root = _out_dir(cfg)
    model = load_model(cfg.model_path)
    alphabet = model.alphabet
    stems = _stems(chroma_dir, ".treble.chroma")
    if not stems:
        print(f"error: no chroma files in {chroma_dir}", file=sys.stderr)
        return 1

    settings = [(g, t) for g in cfg.gammas for t in cfg.taus]
    sweep = len(settings) > 1
    timing_rows = ["gamma,tau,song,frames,feature_s,decode_s,transitions,log_prob"]
    failures = 0
    for gamma, tau in settings:
        constraints = Constraints(gamma=gamma, tau=tau, cac=cfg.cac)
        out_dir = out_root / f"g{gamma}_t{tau}" if sweep else out_root
        out_dir.mkdir(parents=True, exist_ok=True)
        jobs = [(model, constraints, stem, chroma_dir, out_dir, alphabet) for stem in stems]
        results = []
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                futures = {pool.submit(_decode_one, job): job[2] for job in jobs}
                for fut, stem in futures.items():
                    try:
                        results.append(fut.result())
                    except Exception as exc:
                        failures += 1
                        print(f"error: {stem}: {exc}", file=sys.stderr)
        else:
            for job in jobs:
                try:
                    results.append(_decode_one(job))
                except Exception as exc:
                    failures += 1
                    print(f"error: {job[2]}: {exc}", file=sys.stderr)
        for stem, frames, t_feat, t_dec, expanded, lp in sorted(results):
            timing_rows.append(
                f"{gamma},{tau},{stem},{frames},{t_feat:.4f},{t_dec:.4f},{expanded},{lp:.4f}"
            )
            print(f"decode[g={gamma} t={tau}]: {stem} ({t_dec:.2f}s, {expanded} transitions)")
    _atomic_write_text(out_root / "timing.csv", "\n".join(timing_rows) + "\n")
    return 1 if failures else 0


# --- eval -------------------------------------------------------------------

_BASS_STATE = {name: i for i, name in enumerate(BASS_LABELS)}


def _song_metrics(cfg: RunConfig, stem: str, pred_dir: Path) -> tuple[dict, float]:
    gt_chords = parse_lab(Path(cfg.chords_dir) / f"{stem}.lab")
    duration = gt_chords.total_duration()
    pred_chords = parse_lab(pred_dir / f"{stem}.chord.lab")
    metrics = {
        "or_majmin": overlap_ratio(pred_chords, gt_chords, "majmin"),
        "cp": overlap_ratio(pred_chords, gt_chords, "exact"),
        "ncp": overlap_ratio(pred_chords, gt_chords, "noteset"),
    }

    if cfg.keys_dir and (Path(cfg.keys_dir) / f"{stem}.lab").exists():
        gt_keys = parse_lab(Path(cfg.keys_dir) / f"{stem}.lab")
        pred_keys = parse_lab(pred_dir / f"{stem}.key.lab")
        metrics["key_hit"] = float(predominant_key(pred_keys) == first_key(gt_keys))

    bass_path = pred_dir / f"{stem}.bass.lab"
    if bass_path.exists():
        pred_bass = parse_lab(bass_path)
        beats = _beats_for(cfg, stem, gt_chords.span[1])
        gt_states = np.array(
            [
                -1 if lab is None else derive_bass(parse_chord_symbol(lab))
                for lab in most_prevalent_labels(gt_chords, beats)
            ]
        )
        pred_states = np.array(
            [
                -1 if lab is None else _BASS_STATE[lab]
                for lab in most_prevalent_labels(pred_bass, beats)
            ]
        )
        metrics["f_bass"] = bass_frame_accuracy(pred_states, gt_states)
    return metrics, duration


def cmd_eval(cfg: RunConfig) -> int:
    (chords_dir,) = _require_dirs(cfg, ["chords_dir"])
    if not cfg.pred_dir:
        raise SystemExit("error: pred_dir is required")
    pred_dir = Path(cfg.pred_dir)
    out_dir = _out_dir(cfg)
    stems = _stems(chords_dir, ".lab")
    if not stems:
        print(f"error: no ground-truth .lab files in {chords_dir}", file=sys.stderr)
        return 1

    report = EvalReport()
    for stem in stems:
        try:
            metrics, duration = _song_metrics(cfg, stem, pred_dir)
            report.add(stem, metrics, duration)
        except Exception as exc:
            report.flagged.append(stem)
            gt = parse_lab(chords_dir / f"{stem}.lab")
            report.add(stem, {"or_majmin": 0.0, "cp": 0.0, "ncp": 0.0}, gt.total_duration())
            reason = "missing prediction" if isinstance(exc, FileNotFoundError) else exc
            print(f"flagged: {stem}: {reason}; scored 0", file=sys.stderr)
    report.finalize()

    lines = [report.table()]
    if getattr(cfg, "_compare_dir", None):
        other = Path(cfg._compare_dir)
        songs = sorted(report.per_song)
        a, b = [], []
        for stem in songs:
            gt = parse_lab(chords_dir / f"{stem}.lab")
            a.append(report.per_song[stem]["or_majmin"])
            b.append(overlap_ratio(parse_lab(other / f"{stem}.chord.lab"), gt, "majmin"))
        try:
            t, p = paired_t_test(a, b)
            lines.append(f"paired t-test (or_majmin vs {other}): t={t:.4f} p={p:.3g}")
        except ValueError as exc:
            lines.append(f"paired t-test (or_majmin vs {other}): not computable ({exc})")

    text = "\n".join(lines) + "\n"
    print(text, end="")
    _atomic_write_text(out_dir / "report.txt", text)
    _atomic_write_text(out_dir / "report.csv", "\n".join(report.csv_rows()) + "\n")
    return 1 if report.flagged else 0


# --- synth ------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, script_path: str, out_stem: str, key: str) -> int:
    """Render a `chord duration` script into a WAV plus matching chord,
    key, and beat annotation files."""
    records = []
    with open(script_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields_ = line.split()
            if len(fields_) != 2:
                raise SystemExit(f"error: {script_path}:{lineno}: expected `chord duration`")
            records.append((fields_[0], float(fields_[1])))
    if not records:
        raise SystemExit(f"error: {script_path}: empty script")

    segments = []
    lab_records = []
    t = 0.0
    for label, dur in records:
        sym = parse_chord_symbol(label)
        if sym.is_no_chord:
            segments.append(np.zeros(int(round(dur * cfg.sample_rate))))
        else:
            seg = audio_io.synthesize_triads(
                [(chord_pitch_classes(sym), derive_bass(sym), dur)], cfg.sample_rate
            )
            segments.append(seg.samples)
        lab_records.append((t, t + dur, label))
        t += dur
    buf = audio_io.AudioBuffer(np.concatenate(segments), cfg.sample_rate)

    out = Path(out_stem)
    out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_via(Path(f"{out}.wav"), lambda p, b: audio_io.write_wav(p, b), buf)
    from .annotations import make_intervals

    _atomic_write_via(Path(f"{out}.chords.lab"), write_lab, make_intervals(lab_records))
    _atomic_write_via(
        Path(f"{out}.keys.lab"), write_lab, make_intervals([(0.0, t, key)])
    )
    beats = chroma_mod.default_beat_grid(t, cfg.beat_period)
    _atomic_write_text(Path(f"{out}.beats.txt"), "".join(f"{b}\n" for b in beats))
    print(f"synth: {out}.wav ({t:.1f}s, {len(records)} segments)")
    return 0


# --- argument parsing ---------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="key=value config file (default: $HP_CONFIG)")
    p.add_argument("--jobs", type=int, help="parallel workers")
    p.add_argument("--seed", type=int, help="random seed for dataset splits")
    p.add_argument("--output-dir", dest="output_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chordscribe",
        description="Estimate keys, chords, and bass notes from audio.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chroma", help="extract beat-synchronous chromagrams")
    _add_common(p)
    p.add_argument("--audio-dir", dest="audio_dir")
    p.add_argument("--chroma-dir", dest="chroma_dir")
    p.add_argument("--beats", dest="beats_dir", help="directory of <stem>.txt beat files")

    p = sub.add_parser("train", help="estimate model tables from labeled songs")
    _add_common(p)
    p.add_argument("--chroma-dir", dest="chroma_dir")
    p.add_argument("--chords-dir", dest="chords_dir")
    p.add_argument("--keys-dir", dest="keys_dir")
    p.add_argument("--model", dest="model_path")
    p.add_argument("--alphabet", choices=["majmin25", "full121"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)

    p = sub.add_parser("decode", help="decode key/chord/bass label files")
    _add_common(p)
    p.add_argument("--chroma-dir", dest="chroma_dir")
    p.add_argument("--model", dest="model_path")
    p.add_argument("--gamma", help="key-transition count floor; comma list sweeps")
    p.add_argument("--tau", help="admissible basses per chord; comma list sweeps")
    p.add_argument("--cac", action="store_true", default=False)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    _add_common(p)
    p.add_argument("--pred-dir", dest="pred_dir")
    p.add_argument("--chords-dir", dest="chords_dir")
    p.add_argument("--keys-dir", dest="keys_dir")
    p.add_argument("--beats", dest="beats_dir")
    p.add_argument("--compare", help="second prediction dir for a paired t-test")

    p = sub.add_parser("synth", help="render a chord script to WAV + annotations")
    _add_common(p)
    p.add_argument("script", help="text file of `chord duration` lines")
    p.add_argument("out_stem", help="output path stem")
    p.add_argument("--key", default="C:maj", help="key annotation for the whole piece")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = build_config(args)
    if args.command == "chroma":
        return cmd_chroma(cfg)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "decode":
        return cmd_decode(cfg)
    if args.command == "eval":
        if getattr(args, "compare", None):
            cfg._compare_dir = args.compare
        return cmd_eval(cfg)
    if args.command == "synth":
        return cmd_synth(cfg, args.script, args.out_stem, args.key)
    raise SystemExit(2)


if __name__ == "__main__":
    sys.exit(main())

"""Walk through the loudness-based chromagram, stage by stage.

Synthesizes a C-major triad over a C bass, then shows what each step of
the feature chain contributes: constant-Q magnitudes, sound power level,
A-weighting, and the folded, per-frame-normalized chromagram. Ends with
the tuning estimator on a deliberately detuned signal.

Run: python demos/01_loudness_chromagram.py
"""

import numpy as np

from chordscribe import (
    AudioBuffer,
    a_weighting,
    bass_config,
    compute_chromagram,
    constant_q,
    estimate_tuning,
    fold_and_normalize,
    spl,
    synthesize_triads,
    treble_config,
)
from chordscribe.chroma import apply_a_weighting

PITCH_NAMES = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"]

buf = synthesize_triads([({0, 4, 7}, 0, 2.0)], sr=11025)
print(f"Synthesized {buf.duration:.1f}s of C major (C4, E4, G4) over a C2 bass.\n")

cfg = treble_config()
mag = constant_q(buf, cfg)
print(f"Constant-Q: {mag.values.shape[0]} bins x {mag.n_frames} frames,")
print(f"  band {mag.freqs[0]:.1f}-{mag.freqs[-1]:.1f} Hz, Q={cfg.q_factor:g}")
mid = mag.n_frames // 2
top = np.argsort(mag.values[:, mid])[-3:]
print("  strongest bins at", ", ".join(f"{mag.freqs[s]:.1f} Hz" for s in sorted(top)))

level = spl(mag)
print(f"\nSPL: {level.values[:, mid].min():.0f} .. {level.values[:, mid].max():.0f} dB "
      "(10*log10 of power; loudness is roughly linear in this)")

print("\nA-weighting corrections (ear sensitivity vs frequency):")
for f in (55.0, 110.0, 220.0, 440.0, 1000.0, 1661.2):
    print(f"  {f:7.1f} Hz -> {a_weighting(f):+6.1f} dB")

weighted = apply_a_weighting(level)
chroma = fold_and_normalize(weighted, cfg, "treble")
means = chroma.values.mean(axis=1)
print("\nTreble chromagram, mean over frames (folded per pitch class,")
print("min-max normalized per frame):")
for p in np.argsort(means)[::-1]:
    bar = "#" * int(round(means[p] * 40))
    print(f"  {PITCH_NAMES[p]:2s} {means[p]:.3f} {bar}")
print("  -> the triad tones C, E, G rank highest")

bass_chroma = compute_chromagram(buf, bass_config(), "bass")
print(f"\nBass chromagram, middle frame: strongest pitch class = "
      f"{PITCH_NAMES[int(np.argmax(bass_chroma.values[:, mid]))]}")

# tuning: shift every partial up 30 cents and re-estimate
ratio = 2 ** (30 / 1200)
t = np.arange(int(11025 * 2.5)) / 11025
x = sum(np.sin(2 * np.pi * 440 * ratio * 2 ** (k / 12) * t) for k in (0, 4, 7, -12))
detuned = AudioBuffer(0.5 * x / np.abs(x).max(), 11025)
print(f"\nTuning estimate, in-tune fixture:  {estimate_tuning(buf):+.0f} cents")
print(f"Tuning estimate, +30 cent fixture: {estimate_tuning(detuned):+.0f} cents")

"""Bundled synthetic corpus: tone-coded speech, scripted transcripts and three noise types."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..features import SAMPLE_RATE, AudioClip, write_wav
from .pipeline import ManifestEntry, NoiseEntry, write_manifest, write_noise_catalog

WORDS = ("alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
         "india", "kilo", "lima", "mike", "oscar", "papa", "sierra", "tango")
LETTER_MS = 45
GAP_MS = 70


def letter_frequency(ch: str) -> float:
    return 300.0 + 110.0 * (ord(ch) - ord("a"))


def _tone(freq, n, rng):
    t = np.arange(n) / SAMPLE_RATE
    env = np.hanning(n)
    phase = rng.uniform(0, 2 * np.pi)
    return env * (np.sin(2 * np.pi * freq * t + phase) + 0.3 * np.sin(4 * np.pi * freq * t + phase))


def synth_sentence(text: str, rng, amplitude: float = 0.4) -> np.ndarray:
    letter_n = SAMPLE_RATE * LETTER_MS // 1000
    gap = np.zeros(SAMPLE_RATE * GAP_MS // 1000)
    parts = [gap]
    for word in text.split():
        parts += [_tone(letter_frequency(c), letter_n, rng) for c in word if c.isalpha()]
        parts.append(gap)
    x = np.concatenate(parts)
    return amplitude * x / max(np.max(np.abs(x)), 1e-9)


def synth_noise(kind: str, seconds: float, rng) -> np.ndarray:
    n = int(seconds * SAMPLE_RATE)
    t = np.arange(n) / SAMPLE_RATE
    if kind == "babble":
        x = np.zeros(n)
        for _ in range(5):
            words = " ".join(rng.choice(WORDS, size=12))
            s = synth_sentence(words, rng)
            s = np.resize(s, n)
            x += np.roll(s, int(rng.integers(0, n)))
    elif kind == "music":
        x = np.zeros(n)
        note_n = SAMPLE_RATE // 4
        for start in range(0, n, note_n):
            root = 110.0 * 2 ** (int(rng.integers(0, 24)) / 12)
            seg = slice(start, min(start + note_n, n))
            for ratio in (1.0, 1.25, 1.5):
                x[seg] += np.sin(2 * np.pi * root * ratio * t[seg]) * np.exp(-3 * (t[seg] - t[start]))
    elif kind == "tv":
        white = rng.standard_normal(n)
        kernel = np.hanning(32)
        x = np.convolve(white, kernel / kernel.sum(), mode="same")
        x *= 0.6 + 0.4 * np.sin(2 * np.pi * 3.0 * t + rng.uniform(0, 2 * np.pi))
    else:
        raise ValueError(f"unknown noise type {kind!r}")
    return 0.5 * x / max(np.max(np.abs(x)), 1e-9)


def make_toy_corpus(out_dir, n_utts: int = 16, seed: int = 0, words_per_utt=(2, 4), noise_seconds: float = 2.0):
    """Write WAVs, ``manifest.tsv`` and ``noises.tsv`` under ``out_dir``; returns the two TSV paths."""
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    (out / "noise").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n_utts):
        text = " ".join(rng.choice(WORDS, size=int(rng.integers(words_per_utt[0], words_per_utt[1] + 1))))
        path = out / "wav" / f"utt{i:04d}.wav"
        write_wav(path, AudioClip(synth_sentence(text, rng)))
        entries.append(ManifestEntry(f"utt{i:04d}", path, text))
    noises = []
    for kind in ("babble", "music", "tv"):
        for k in range(2):
            path = out / "noise" / f"{kind}{k}.wav"
            write_wav(path, AudioClip(synth_noise(kind, noise_seconds, rng)))
            noises.append(NoiseEntry(f"{kind}{k}", path, kind))
    write_manifest(out / "manifest.tsv", entries)
    write_noise_catalog(out / "noises.tsv", noises)
    return out / "manifest.tsv", out / "noises.tsv"

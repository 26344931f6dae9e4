"""Power-mel filterbank features.

Frames of 25 ms every 10 ms at 16 kHz are Hann-windowed, zero-padded to a
512-point FFT, projected onto 40 triangular mel filters and compressed with
a 1/15 power law.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ClipTooShort, FeatureFileError, InvalidClip

SAMPLE_RATE = 16000
FRAME_LEN = 400
FRAME_HOP = 160
N_FFT = 512
NUM_MEL = 40
POWER = 1.0 / 15.0
ENERGY_FLOOR = 1e-12

_PMEL_MAGIC = b"PMEL"


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidClip("AudioClip must be mono (1-D samples)")
        if self.sample_rate_hz != SAMPLE_RATE:
            raise InvalidClip(f"sample rate must be {SAMPLE_RATE}, got {self.sample_rate_hz}")
        if self.samples.size == 0:
            raise InvalidClip("AudioClip is empty")
        if not np.all(np.isfinite(self.samples)) or np.max(np.abs(self.samples)) > 1.0:
            raise InvalidClip("samples must be finite and within [-1, 1]")

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass
class FeatureMatrix:
    frames: np.ndarray
    frame_hop_ms: int = 10
    frame_len_ms: int = 25
    num_mel: int = field(init=False)

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2:
            raise FeatureFileError("feature matrix must be 2-D (T x F)")
        self.num_mel = self.frames.shape[1]

    @property
    def shape(self):
        return self.frames.shape

    def to_bytes(self) -> bytes:
        t, f = self.frames.shape
        body = np.ascontiguousarray(self.frames, dtype="<f4").tobytes()
        return _PMEL_MAGIC + struct.pack("<II", t, f) + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "FeatureMatrix":
        if len(data) < 12 or data[:4] != _PMEL_MAGIC:
            raise FeatureFileError("not a PMEL feature file")
        t, f = struct.unpack("<II", data[4:12])
        expected = 12 + 4 * t * f
        if len(data) != expected:
            raise FeatureFileError(f"PMEL payload size {len(data)} != {expected}")
        frames = np.frombuffer(data, dtype="<f4", offset=12).reshape(t, f)
        return cls(frames.astype(np.float32))

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "FeatureMatrix":
        return cls.from_bytes(Path(path).read_bytes())


def read_wav(path) -> AudioClip:
    """Read a 16-bit PCM mono 16 kHz WAV file."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2 or w.getframerate() != SAMPLE_RATE:
            raise InvalidClip(
                f"{path}: expected PCM16 mono {SAMPLE_RATE} Hz, got "
                f"{w.getnchannels()} ch / {8 * w.getsampwidth()} bit / {w.getframerate()} Hz"
            )
        raw = w.readframes(w.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioClip(pcm.astype(np.float64) / 32768.0)


def write_wav(path, clip: AudioClip):
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SAMPLE_RATE)
        w.writeframes(pcm.tobytes())


def num_frames(num_samples: int) -> int:
    if num_samples < FRAME_LEN:
        raise ClipTooShort(f"need at least {FRAME_LEN} samples, got {num_samples}")
    return 1 + (num_samples - FRAME_LEN) // FRAME_HOP


def hann_window(n: int = FRAME_LEN) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(clip: AudioClip) -> np.ndarray:
    """Return a (T, 400) array of Hann-windowed frames; frame k starts at 160k."""
    x = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)
    t = num_frames(x.size)
    idx = FRAME_HOP * np.arange(t)[:, None] + np.arange(FRAME_LEN)[None, :]
    return x[idx] * hann_window()[None, :]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(num_mel: int = NUM_MEL, fmin: float = 0.0, fmax: float = SAMPLE_RATE / 2):
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), num_mel + 2))
    return edges[1:-1]


def mel_filterbank(num_mel: int = NUM_MEL, n_fft: int = N_FFT, sample_rate: int = SAMPLE_RATE,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters on the 2595*log10(1 + f/700) scale, shape (num_mel, n_fft//2 + 1)."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), num_mel + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


_FBANK = mel_filterbank()


def mel_energies(clip: AudioClip) -> np.ndarray:
    """Uncompressed mel energies, shape (T, 40)."""
    frames = frame_signal(clip)
    power = np.abs(np.fft.rfft(frames, n=N_FFT, axis=1)) ** 2
    return power @ _FBANK.T


def power_mel(clip: AudioClip, normalize: bool = False) -> FeatureMatrix:
    """40-dim power-mel features: max(mel energy, 1e-12) ** (1/15).

    ``normalize`` applies per-utterance mean/variance normalization; it is
    off by default and breaks the non-negativity of the output.
    """
    feats = np.maximum(mel_energies(clip), ENERGY_FLOOR) ** POWER
    if normalize:
        feats = (feats - feats.mean(axis=0)) / (feats.std(axis=0) + 1e-8)
    return FeatureMatrix(feats)

"""Vocal tract length perturbation on waveforms and SpecAugment-style masking on features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WarpOutOfRange
from .features import SAMPLE_RATE, AudioClip, FeatureMatrix


@dataclass(frozen=True)
class VtlpConfig:
    warp_min: float = 0.8
    warp_max: float = 1.2
    fft_oversize_factor: int = 16
    frame_len: int = 400
    hop: int = 50

    def __post_init__(self):
        if not 0 < self.warp_min <= self.warp_max:
            raise ValueError("need 0 < warp_min <= warp_max")
        if self.fft_oversize_factor < 1:
            raise ValueError("fft_oversize_factor must be >= 1")

    @property
    def n_fft(self) -> int:
        base = 1 << (self.frame_len - 1).bit_length()
        return base * self.fft_oversize_factor


@dataclass(frozen=True)
class SpecAugConfig:
    time_mask_max: int = 20
    time_mask_count: int = 1
    freq_mask_count_max: int = 2
    freq_mask_width_max: int = 8

    def __post_init__(self):
        if min(self.time_mask_max, self.time_mask_count, self.freq_mask_count_max, self.freq_mask_width_max) < 0:
            raise ValueError("SpecAugment parameters must be non-negative")


def warp_frequency(f, alpha: float, nyquist: float = SAMPLE_RATE / 2):
    """Piecewise-linear VTLP map: f -> alpha*f below the cutoff, then linear to (nyquist, nyquist)."""
    f = np.asarray(f, dtype=np.float64)
    f_cut = nyquist * min(alpha, 1.0 / alpha) * 0.8
    upper = alpha * f_cut + (nyquist - alpha * f_cut) * (f - f_cut) / (nyquist - f_cut)
    return np.where(f <= f_cut, alpha * f, upper)


def unwarp_frequency(f_out, alpha: float, nyquist: float = SAMPLE_RATE / 2):
    """Inverse of :func:`warp_frequency`."""
    f_out = np.asarray(f_out, dtype=np.float64)
    f_cut = nyquist * min(alpha, 1.0 / alpha) * 0.8
    knee = alpha * f_cut
    upper = f_cut + (f_out - knee) * (nyquist - f_cut) / (nyquist - knee)
    return np.where(f_out <= knee, f_out / alpha, upper)


def sample_warp(seed: int, cfg: VtlpConfig = VtlpConfig()) -> float:
    return float(np.random.default_rng(seed).uniform(cfg.warp_min, cfg.warp_max))


def _wrap(phase):
    return phase - 2.0 * np.pi * np.round(phase / (2.0 * np.pi))


def vtlp_warp(clip: AudioClip, warp_factor: float, cfg: VtlpConfig = VtlpConfig()) -> AudioClip:
    """Warp the frequency axis of ``clip`` by ``warp_factor`` and resynthesize.

    Frames are analysed with a zero-padded FFT (``fft_oversize_factor`` x the
    frame's power-of-two size). Magnitudes are resampled along the warped
    axis; phases are re-accumulated from warped instantaneous frequencies
    (phase-vocoder style) so stationary partials stay coherent across frames.
    Frames are overlap-added and the output has the input's length.
    """
    if not cfg.warp_min <= warp_factor <= cfg.warp_max:
        raise WarpOutOfRange(f"warp factor {warp_factor} outside [{cfg.warp_min}, {cfg.warp_max}]")
    x = clip.samples
    n, hop, n_fft = cfg.frame_len, cfg.hop, cfg.n_fft
    pad = n - hop
    padded = np.concatenate([np.zeros(pad), x, np.zeros(pad + n)])
    n_frames = 1 + (x.size + pad) // hop
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)

    idx = hop * np.arange(n_frames)[:, None] + np.arange(n)[None, :]
    spec = np.fft.rfft(padded[idx] * window, n=n_fft, axis=1)
    mag, phase = np.abs(spec), np.angle(spec)

    n_bins = n_fft // 2 + 1
    bin_hz = SAMPLE_RATE / n_fft
    out_freqs = np.arange(n_bins) * bin_hz
    src_pos = unwarp_frequency(out_freqs, warp_factor) / bin_hz
    src_pos = np.clip(src_pos, 0, n_bins - 1)
    lo = np.floor(src_pos).astype(int)
    hi = np.minimum(lo + 1, n_bins - 1)
    frac = src_pos - lo
    nearest = np.round(src_pos).astype(int)
    new_mag = mag[:, lo] * (1.0 - frac) + mag[:, hi] * frac

    # instantaneous frequency of each analysis bin from frame-to-frame phase advance
    expected = 2.0 * np.pi * hop * np.arange(n_bins) / n_fft
    dev = _wrap(np.diff(phase, axis=0) - expected)
    inst_hz = (np.arange(n_bins) / n_fft + dev / (2.0 * np.pi * hop)) * SAMPLE_RATE
    advance = 2.0 * np.pi * hop * warp_frequency(inst_hz[:, nearest], warp_factor) / SAMPLE_RATE
    new_phase = np.empty_like(phase)
    new_phase[0] = phase[0, nearest]
    new_phase[1:] = phase[0, nearest] + np.cumsum(advance, axis=0)

    frames = np.fft.irfft(new_mag * np.exp(1j * new_phase), n=n_fft, axis=1)[:, :n] * window
    out = np.zeros(padded.size)
    norm = np.zeros(padded.size)
    np.add.at(out, idx, frames)
    np.add.at(norm, idx, np.broadcast_to(window ** 2, frames.shape))
    y = out[pad:pad + x.size] / norm[pad:pad + x.size]
    peak = np.max(np.abs(y))
    if peak > 1.0:
        y = y / peak
    return AudioClip(y)


@dataclass
class MaskRecord:
    time_spans: list
    freq_spans: list


def spec_augment(feats: FeatureMatrix, seed: int, cfg: SpecAugConfig = SpecAugConfig(), return_masks: bool = False):
    """Zero one (configurable) time span of U{1..time_mask_max} frames and
    U{0..freq_mask_count_max} frequency bands of U{1..freq_mask_width_max} bins.

    Masks start uniformly among positions where they fit and are clipped only
    when longer than the feature axis.
    """
    frames = np.array(feats.frames, copy=True)
    t_len, f_len = frames.shape
    rng = np.random.default_rng(seed)
    time_spans, freq_spans = [], []
    if cfg.time_mask_max > 0:
        for _ in range(cfg.time_mask_count):
            width = int(rng.integers(1, cfg.time_mask_max + 1))
            start = int(rng.integers(0, max(t_len - width, 0) + 1))
            time_spans.append((start, min(start + width, t_len)))
    if cfg.freq_mask_count_max > 0 and cfg.freq_mask_width_max > 0:
        for _ in range(int(rng.integers(0, cfg.freq_mask_count_max + 1))):
            width = int(rng.integers(1, cfg.freq_mask_width_max + 1))
            start = int(rng.integers(0, max(f_len - width, 0) + 1))
            freq_spans.append((start, min(start + width, f_len)))
    for a, b in time_spans:
        frames[a:b, :] = 0
    for a, b in freq_spans:
        frames[:, a:b] = 0
    out = FeatureMatrix(frames)
    if return_masks:
        return out, MaskRecord(time_spans, freq_spans)
    return out

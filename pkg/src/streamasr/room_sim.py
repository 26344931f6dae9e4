"""Shoebox room acoustics: image-source impulse responses and noisy far-field mixing."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.signal import fftconvolve

from .errors import EmptyCatalog, EmptyNoiseList, InvalidScene
from .features import SAMPLE_RATE, AudioClip

SPEED_OF_SOUND = 343.0
# guards floor() against distances like 4.43 - 1.0 = 3.4299999...
_DELAY_EPS = 1e-9
NOISE_TYPES = ("babble", "music", "tv")


@dataclass
class RoomConfig:
    length_range: tuple = (3.0, 10.0)
    width_range: tuple = (3.0, 10.0)
    height_range: tuple = (2.5, 4.0)
    t60_range: tuple = (0.0, 1.0)
    snr_range_db: tuple = (0.0, 30.0)
    max_noises: int = 3
    wall_margin_m: float = 0.5
    # selection weight per noise type; missing types weigh 1.0
    type_weights: Mapping[str, float] = field(default_factory=dict)


@dataclass
class RoomScene:
    room_dims_m: tuple
    src_pos_m: np.ndarray
    mic_pos_m: np.ndarray
    noise_positions_m: list
    t60_s: float
    snr_db: float
    seed: int
    noise_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.room_dims_m = tuple(float(d) for d in self.room_dims_m)
        self.src_pos_m = np.asarray(self.src_pos_m, dtype=np.float64)
        self.mic_pos_m = np.asarray(self.mic_pos_m, dtype=np.float64)
        self.noise_positions_m = [np.asarray(p, dtype=np.float64) for p in self.noise_positions_m]
        self.validate()

    def validate(self):
        dims = np.asarray(self.room_dims_m)
        if dims.shape != (3,) or np.any(dims <= 0):
            raise InvalidScene(f"room dimensions must be 3 positive lengths, got {self.room_dims_m}")
        for name, pos in [("source", self.src_pos_m), ("microphone", self.mic_pos_m)] + [
            (f"noise {k}", p) for k, p in enumerate(self.noise_positions_m)
        ]:
            if pos.shape != (3,) or np.any(pos <= 0) or np.any(pos >= dims):
                raise InvalidScene(f"{name} position {pos} is not strictly inside the room {dims}")
        if not 1 <= len(self.noise_positions_m) <= 3:
            raise InvalidScene(f"need 1-3 noise sources, got {len(self.noise_positions_m)}")
        if not 0.0 <= self.t60_s <= 1.0:
            raise InvalidScene(f"T60 {self.t60_s} outside [0, 1] s")
        if not 0.0 <= self.snr_db <= 30.0:
            raise InvalidScene(f"SNR {self.snr_db} outside [0, 30] dB")

    def position(self, source_index) -> np.ndarray:
        if source_index == "source":
            return self.src_pos_m
        if isinstance(source_index, str) and source_index.startswith("noise_"):
            source_index = int(source_index.split("_", 1)[1])
        return self.noise_positions_m[int(source_index)]


@dataclass
class ImpulseResponse:
    taps: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE


def _uniform_in(rng, dims, margin):
    dims = np.asarray(dims)
    m = np.minimum(margin, dims / 4)
    return rng.uniform(m, dims - m)


def sample_scene(rng_seed: int, noise_catalog, cfg: RoomConfig | None = None) -> RoomScene:
    """Draw a random room, placements, T60, SNR and 1-3 noise ids from the catalog.

    ``noise_catalog`` is either a collection of ids or a mapping id -> noise
    type (``babble``/``music``/``tv``); types are weighted by ``cfg.type_weights``.
    """
    cfg = cfg or RoomConfig()
    if not noise_catalog:
        raise EmptyCatalog("noise catalog is empty")
    rng = np.random.default_rng(rng_seed)
    dims = (rng.uniform(*cfg.length_range), rng.uniform(*cfg.width_range), rng.uniform(*cfg.height_range))
    src = _uniform_in(rng, dims, cfg.wall_margin_m)
    mic = _uniform_in(rng, dims, cfg.wall_margin_m)
    n_noise = int(rng.integers(1, cfg.max_noises + 1))
    noises = [_uniform_in(rng, dims, cfg.wall_margin_m) for _ in range(n_noise)]
    t60 = float(rng.uniform(*cfg.t60_range))
    snr = float(rng.uniform(*cfg.snr_range_db))

    if isinstance(noise_catalog, Mapping):
        ids = sorted(noise_catalog)
        weights = np.array([cfg.type_weights.get(noise_catalog[i], 1.0) for i in ids], dtype=np.float64)
    else:
        ids = sorted(noise_catalog)
        weights = np.ones(len(ids))
    picks = rng.choice(len(ids), size=n_noise, p=weights / weights.sum())
    return RoomScene(dims, src, mic, noises, t60, snr, int(rng_seed), [ids[i] for i in picks])


def wall_reflection_coefficient(room_dims, t60: float) -> float:
    """Pressure reflection coefficient of uniformly absorbing walls for a target T60.

    Eyring's reverberation formula, the absorption-exact form of Sabine's
    T60 = 0.161 V / (S a), solved for the absorption and converted to an
    amplitude coefficient.
    """
    if t60 <= 0:
        return 0.0
    lx, ly, lz = room_dims
    volume = lx * ly * lz
    surface = 2 * (lx * ly + lx * lz + ly * lz)
    # energy kept per reflection: 1 - a = exp(-0.161 V / (S T60))
    kept = np.exp(-24.0 * np.log(10.0) * volume / (SPEED_OF_SOUND * surface * t60))
    return float(np.sqrt(kept))


def _image_grid(room_dims, src, mic, max_dist):
    """Yield (distance, reflection_count) arrays for all images within max_dist of the mic."""
    dims = np.asarray(room_dims)
    n_max = np.ceil(max_dist / (2 * dims)).astype(int) + 1
    ranges = [np.arange(-n, n + 1) for n in n_max]
    ny, nz = np.meshgrid(ranges[1], ranges[2], indexing="ij")
    ny = ny.ravel()
    nz = nz.ravel()
    for px in (0, 1):
        for py in (0, 1):
            for pz in (0, 1):
                iy = (1 - 2 * py) * src[1] + 2 * ny * dims[1] - mic[1]
                iz = (1 - 2 * pz) * src[2] + 2 * nz * dims[2] - mic[2]
                refl_yz = np.abs(ny - py) + np.abs(ny) + np.abs(nz - pz) + np.abs(nz)
                dyz2 = iy ** 2 + iz ** 2
                keep = dyz2 <= max_dist ** 2
                iy_k, refl_k, dyz2_k = iy[keep], refl_yz[keep], dyz2[keep]
                for nx in ranges[0]:
                    ix = (1 - 2 * px) * src[0] + 2 * nx * dims[0] - mic[0]
                    d2 = dyz2_k + ix ** 2
                    sel = d2 <= max_dist ** 2
                    if not np.any(sel):
                        continue
                    refl = refl_k[sel] + abs(nx - px) + abs(nx)
                    yield np.sqrt(d2[sel]), refl


def _collect_images(room_dims, src, mic, max_dist):
    idx, refl, inv_d = [], [], []
    for dist, r in _image_grid(room_dims, src, mic, max_dist):
        idx.append(np.floor(SAMPLE_RATE * dist / SPEED_OF_SOUND + _DELAY_EPS).astype(np.int64))
        refl.append(r.astype(np.float64))
        inv_d.append(1.0 / dist)
    return np.concatenate(idx), np.concatenate(refl), np.concatenate(inv_d)


def _taps_for(log_beta, images, n_taps):
    idx, refl, inv_d = images
    return np.bincount(idx, weights=np.exp(refl * log_beta) * inv_d, minlength=n_taps)[:n_taps]


def calibrate_reflection(images, n_taps, t60, beta0, tol: float = 0.05):
    """Uniform reflection coefficient whose image-source decay measures ``t60``.

    Shoebox image-source decays are not diffuse, so Eyring's coefficient
    overestimates T60 in flat or elongated rooms. The coefficient is refined
    by a bracketed root search on the Schroeder-measured T60, starting from
    the Eyring value. The measured T60 is not monotone in the coefficient for
    every geometry, so a root that does not land within ``tol`` of the target
    falls back to the best point of a coarse scan.
    """
    def measured(log_beta):
        return schroeder_t60(_taps_for(log_beta, images, n_taps))

    def err(log_beta):
        m = measured(log_beta)
        return (m if np.isfinite(m) else 10.0 * t60) - t60

    def close(log_beta):
        m = measured(log_beta)
        return np.isfinite(m) and abs(m - t60) <= tol * t60

    x0 = np.log(beta0)
    f0 = err(x0)
    if abs(f0) < 1e-3 * t60:
        return beta0
    # more absorption (more negative log-beta) shortens the decay
    lo = hi = x0
    for _ in range(40):
        if f0 > 0:
            hi, lo = lo, lo * 2.0
            if err(lo) <= 0:
                break
        else:
            lo, hi = hi, hi / 2.0
            if err(hi) >= 0:
                break
    else:
        lo = hi = None
    if lo is not None:
        root = brentq(err, lo, hi, xtol=1e-6, rtol=1e-6)
        if close(root):
            return float(np.exp(root))
    grid = np.log(np.linspace(0.02, 0.995, 80))
    errors = [abs(e) for e in map(err, grid)]
    best = int(np.argmin(errors))
    # refine between the neighbours of the best grid point when they bracket a root
    for a, b in ((best - 1, best), (best, best + 1)):
        if 0 <= a and b < grid.size and err(grid[a]) * err(grid[b]) < 0:
            root = brentq(err, grid[a], grid[b], xtol=1e-6, rtol=1e-6)
            if close(root):
                return float(np.exp(root))
    return float(np.exp(grid[best]))


def make_rir(scene: RoomScene, source_index="source", length_factor: float = 1.2) -> ImpulseResponse:
    """Image-source impulse response from ``source_index`` ("source" or noise k) to the mic.

    Every image contributes beta**reflections / distance at sample
    floor(fs * distance / c). Images are enumerated up to the distance sound
    travels in ``length_factor * T60`` (direct path only when T60 = 0); the
    uniform wall reflection coefficient beta is calibrated so the response
    decays with the scene's T60.
    """
    scene.validate()
    src = scene.position(source_index)
    mic = scene.mic_pos_m
    d_direct = float(np.linalg.norm(src - mic))
    direct_tap = int(np.floor(SAMPLE_RATE * d_direct / SPEED_OF_SOUND + _DELAY_EPS))
    if scene.t60_s <= 0:
        taps = np.zeros(direct_tap + 1)
        taps[direct_tap] = 1.0 / d_direct
        return ImpulseResponse(taps)

    max_dist = max(length_factor * scene.t60_s * SPEED_OF_SOUND, d_direct)
    n_taps = int(np.floor(SAMPLE_RATE * max_dist / SPEED_OF_SOUND + _DELAY_EPS)) + 1
    images = _collect_images(scene.room_dims_m, src, mic, max_dist)
    beta0 = wall_reflection_coefficient(scene.room_dims_m, scene.t60_s)
    beta = calibrate_reflection(images, n_taps, scene.t60_s, beta0)
    return ImpulseResponse(_taps_for(np.log(beta), images, n_taps))


def schroeder_t60(taps: np.ndarray, sample_rate: int = SAMPLE_RATE, lo_db: float = -5.0, hi_db: float = -25.0):
    """T60 from the Schroeder backward-integrated decay, fitted between lo_db and hi_db."""
    energy = np.cumsum(np.asarray(taps, dtype=np.float64)[::-1] ** 2)[::-1]
    if energy[0] <= 0:
        return 0.0
    edc = 10.0 * np.log10(np.maximum(energy / energy[0], 1e-300))
    i0 = int(np.argmax(edc <= lo_db))
    i1 = int(np.argmax(edc <= hi_db))
    if edc[i1] > hi_db or i1 - i0 < 2:
        return float("nan")
    t = np.arange(i0, i1 + 1) / sample_rate
    slope, _ = np.polyfit(t, edc[i0:i1 + 1], 1)
    return float(-60.0 / slope)


def _fit_length(noise: np.ndarray, n: int, rng) -> np.ndarray:
    """Loop (shorter) or crop (longer) a noise clip to n samples at a random offset."""
    if noise.size >= n:
        start = int(rng.integers(0, noise.size - n + 1))
        return noise[start:start + n]
    offset = int(rng.integers(0, noise.size))
    reps = int(np.ceil((n + offset) / noise.size))
    return np.tile(noise, reps)[offset:offset + n]


def reverberate(clip: AudioClip, rir: ImpulseResponse) -> np.ndarray:
    x = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)
    nz = np.flatnonzero(rir.taps)
    if nz.size == 1:
        # dry room: exact delay and gain
        y = np.zeros(x.size)
        k = int(nz[0])
        if k < x.size:
            y[k:] = rir.taps[k] * x[: x.size - k]
        return y
    return fftconvolve(x, rir.taps)[: x.size]


def power(x) -> float:
    return float(np.mean(np.square(x)))


@dataclass
class SimulationResult:
    clip: AudioClip
    speech: np.ndarray
    noise: np.ndarray
    noise_gain: float
    scale: float


def simulate_components(clean: AudioClip, scene: RoomScene, noises: Sequence[AudioClip]) -> SimulationResult:
    """Like :func:`simulate` but also returns the separately reverberated components.

    ``speech`` and ``noise`` are reported before peak normalization; the
    output equals ``scale * (speech + noise)``.
    """
    if not noises:
        raise EmptyNoiseList("scene has noise sources but no noise clips were supplied")
    if len(noises) != len(scene.noise_positions_m):
        raise InvalidScene(f"scene places {len(scene.noise_positions_m)} noise sources, got {len(noises)} clips")
    n = len(clean)
    rng = np.random.default_rng([scene.seed, 0x5EED])
    speech = reverberate(clean, make_rir(scene, "source"))
    noise = np.zeros(n)
    for k, clip in enumerate(noises):
        looped = _fit_length(clip.samples, n, rng)
        noise += reverberate(looped, make_rir(scene, k))
    p_speech, p_noise = power(speech), power(noise)
    if p_speech > 0 and p_noise > 0:
        gain = np.sqrt(p_speech / (p_noise * 10.0 ** (scene.snr_db / 10.0)))
    else:
        gain = 1.0
    noise *= gain
    mix = speech + noise
    peak = float(np.max(np.abs(mix))) if mix.size else 0.0
    scale = 1.0 / peak if peak > 1.0 else 1.0
    return SimulationResult(AudioClip(np.clip(mix * scale, -1.0, 1.0)), speech, noise, float(gain), scale)


def simulate(clean: AudioClip, scene: RoomScene, noises: Sequence[AudioClip]) -> AudioClip:
    """Reverberate speech and 1-3 noises in the scene and mix at ``scene.snr_db``.

    Output has the clean clip's length and is peak-normalized only if it
    would otherwise clip.
    """
    return simulate_components(clean, scene, noises).clip

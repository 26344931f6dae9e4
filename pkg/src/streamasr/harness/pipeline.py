"""On-the-fly augmentation: manifest in, (utt_id, features, token ids) out.

Every random choice for an utterance is derived from (epoch_seed, utt_id),
so the output does not depend on how many workers run or in which order
they finish.
"""

from __future__ import annotations

import csv
import hashlib
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from ..errors import ConfigError
from ..features import AudioClip, FeatureMatrix, power_mel, read_wav
from ..room_sim import NOISE_TYPES, RoomConfig, sample_scene, simulate
from ..spectral_augment import SpecAugConfig, VtlpConfig, sample_warp, spec_augment, vtlp_warp

PIPELINE_ORDER = ("vtlp", "room_sim", "power_mel", "spec_augment")
DEFAULT_WORKERS = 4
DEFAULT_QUEUE_BOUND = 16


@dataclass(frozen=True)
class AugmentPolicy:
    r_as_percent: float = 70.0
    vtlp_enabled: bool = True
    specaug_enabled: bool = True
    vtlp: VtlpConfig = VtlpConfig()
    specaug: SpecAugConfig = SpecAugConfig()
    room: RoomConfig = field(default_factory=RoomConfig)

    def __post_init__(self):
        if not 0.0 <= self.r_as_percent <= 100.0:
            raise ConfigError(f"r_as_percent must lie in [0, 100], got {self.r_as_percent}")

    @property
    def order(self) -> tuple:
        return PIPELINE_ORDER


def utterance_seed(epoch_seed: int, utt_id: str) -> int:
    digest = hashlib.blake2b(f"{int(epoch_seed)}\x00{utt_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stage_seed(utt_seed: int, stage: str) -> int:
    digest = hashlib.blake2b(f"{utt_seed}\x00{stage}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def decide_augment(utt_seed: int, policy: AugmentPolicy) -> str:
    """``"simulate"`` with probability r_AS/100, else ``"clean"``."""
    u = np.random.default_rng(stage_seed(utt_seed, "decide")).random()
    return "simulate" if u < policy.r_as_percent / 100.0 else "clean"


# -- manifests --------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    wav_path: Path
    transcript: str


@dataclass(frozen=True)
class NoiseEntry:
    noise_id: str
    wav_path: Path
    noise_type: str


def _read_tsv(path, n_cols):
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), 1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != n_cols:
                raise ConfigError(f"{path}:{lineno}: expected {n_cols} tab-separated fields, got {len(row)}")
            rows.append(row)
    return path.parent, rows


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def load_manifest(path) -> list:
    """TSV rows ``utt_id  wav_path  transcript``; relative paths resolve against the manifest's folder."""
    base, rows = _read_tsv(path, 3)
    seen = set()
    out = []
    for utt_id, wav, text in rows:
        if utt_id in seen:
            raise ConfigError(f"{path}: duplicate utt_id {utt_id!r}")
        seen.add(utt_id)
        wav_path = _resolve(base, wav)
        if not wav_path.is_file():
            raise ConfigError(f"{path}: missing audio file {wav_path}")
        out.append(ManifestEntry(utt_id, wav_path, text))
    return out


def write_manifest(path, entries: Sequence[ManifestEntry]):
    base = Path(path).parent
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for e in entries:
            w.writerow([e.utt_id, _relative(e.wav_path, base), e.transcript])


def _relative(p: Path, base: Path) -> str:
    try:
        return str(Path(p).relative_to(base))
    except ValueError:
        return str(p)


def load_noise_catalog(path) -> list:
    """TSV rows ``noise_id  wav_path  type`` with type one of babble/music/tv."""
    base, rows = _read_tsv(path, 3)
    out = []
    for noise_id, wav, kind in rows:
        if kind not in NOISE_TYPES:
            raise ConfigError(f"{path}: noise {noise_id!r} has unknown type {kind!r}")
        out.append(NoiseEntry(noise_id, _resolve(base, wav), kind))
    return out


def write_noise_catalog(path, entries: Sequence[NoiseEntry]):
    base = Path(path).parent
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for e in entries:
            w.writerow([e.noise_id, _relative(e.wav_path, base), e.noise_type])


# -- per-utterance processing ---------------------------------------------------------


@dataclass
class PipelineOutput:
    utt_id: str
    features: FeatureMatrix
    token_ids: list
    simulated: bool
    warp: float | None

    def serialize(self) -> bytes:
        ids = np.asarray(self.token_ids, dtype="<u4")
        head = f"{self.utt_id}\t{int(self.simulated)}\t{self.warp!r}\t{len(ids)}\n".encode("utf-8")
        return head + ids.tobytes() + self.features.to_bytes()


@dataclass
class PipelineFailure:
    utt_id: str
    message: str


def process_utterance(entry: ManifestEntry, policy: AugmentPolicy, epoch_seed: int,
                      noises: Mapping[str, AudioClip], noise_types: Mapping[str, str],
                      tokenizer=None, clip: AudioClip | None = None) -> PipelineOutput:
    """decide -> VTLP -> room simulation (or skip) -> power-mel -> SpecAugment."""
    seed = utterance_seed(epoch_seed, entry.utt_id)
    clip = read_wav(entry.wav_path) if clip is None else clip
    simulate_it = decide_augment(seed, policy) == "simulate"
    warp = None
    if policy.vtlp_enabled:
        warp = sample_warp(stage_seed(seed, "vtlp"), policy.vtlp)
        clip = vtlp_warp(clip, warp, policy.vtlp)
    if simulate_it:
        scene = sample_scene(stage_seed(seed, "room"), noise_types, policy.room)
        clip = simulate(clip, scene, [noises[i] for i in scene.noise_ids])
    feats = power_mel(clip)
    if policy.specaug_enabled:
        feats = spec_augment(feats, stage_seed(seed, "specaug"), policy.specaug)
    ids = tokenizer.encode(entry.transcript) if tokenizer is not None else []
    return PipelineOutput(entry.utt_id, feats, ids, simulate_it, warp)


# -- worker pool --------------------------------------------------------------------


class InstrumentedQueue(queue.Queue):
    """Bounded queue that records the largest size it ever reached."""

    def __init__(self, maxsize: int):
        super().__init__(maxsize)
        self.high_water = 0

    def _put(self, item):
        super()._put(item)
        self.high_water = max(self.high_water, len(self.queue))


@dataclass
class PipelineStats:
    processed: int = 0
    failures: list = field(default_factory=list)
    input_high_water: int = 0
    output_high_water: int = 0
    output_bound: int = 0


_PILL = object()
_WORKER_DONE = object()


def _put(q: queue.Queue, item, stop: threading.Event) -> bool:
    while not stop.is_set():
        try:
            q.put(item, timeout=0.05)
            return True
        except queue.Full:
            continue
    return False


def run_pipeline(manifest: Sequence[ManifestEntry], policy: AugmentPolicy, num_workers: int = DEFAULT_WORKERS,
                 epoch_seed: int = 0, noise_catalog: Sequence[NoiseEntry] = (), tokenizer=None,
                 queue_bound: int = DEFAULT_QUEUE_BOUND, stats: PipelineStats | None = None,
                 preloaded_noises: Mapping[str, AudioClip] | None = None) -> Iterator[PipelineOutput]:
    """Yield processed utterances as workers finish them.

    A feeder thread fills a bounded input queue; ``num_workers`` threads
    process entries into a bounded output queue of size ``queue_bound``.
    Per-utterance failures land in ``stats.failures`` and are skipped.
    Closing the generator early stops the workers.
    """
    if num_workers < 1:
        raise ConfigError("num_workers must be >= 1")
    if queue_bound < 1:
        raise ConfigError("queue_bound must be >= 1")
    stats = stats if stats is not None else PipelineStats()
    stats.output_bound = queue_bound
    noises = dict(preloaded_noises or {})
    for n in noise_catalog:
        if n.noise_id not in noises:
            noises[n.noise_id] = read_wav(n.wav_path)
    noise_types = {n.noise_id: n.noise_type for n in noise_catalog} or {k: "babble" for k in noises}
    if policy.r_as_percent > 0 and not noise_types:
        raise ConfigError("room simulation is enabled but the noise catalog is empty")

    inq = InstrumentedQueue(max(2 * num_workers, 1))
    outq = InstrumentedQueue(queue_bound)
    stop = threading.Event()

    def feed():
        for entry in manifest:
            if not _put(inq, entry, stop):
                return
        for _ in range(num_workers):
            if not _put(inq, _PILL, stop):
                return

    def work():
        while not stop.is_set():
            try:
                entry = inq.get(timeout=0.05)
            except queue.Empty:
                continue
            if entry is _PILL:
                break
            try:
                item = process_utterance(entry, policy, epoch_seed, noises, noise_types, tokenizer)
            except Exception as exc:  # reported per utterance, never fatal to the pool
                item = PipelineFailure(entry.utt_id, f"{type(exc).__name__}: {exc}")
            if not _put(outq, item, stop):
                return
        _put(outq, _WORKER_DONE, stop)

    threads = [threading.Thread(target=feed, daemon=True)]
    threads += [threading.Thread(target=work, daemon=True) for _ in range(num_workers)]
    for t in threads:
        t.start()
    finished = 0
    try:
        while finished < num_workers:
            item = outq.get()
            if item is _WORKER_DONE:
                finished += 1
            elif isinstance(item, PipelineFailure):
                stats.failures.append(item)
            else:
                stats.processed += 1
                yield item
    finally:
        stop.set()
        for t in threads:
            t.join(timeout=5.0)
        stats.input_high_water = inq.high_water
        stats.output_high_water = outq.high_water

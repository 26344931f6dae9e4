"""End-to-end acceptance checks; each test records one PASS/FAIL line in the terminal summary."""

import collections
import contextlib
import csv
import dataclasses
import io
import math
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from conftest import ACCEPTANCE_LINES, OVERFIT_STEPS
from oracles import (LR_CURVE, TableMocha, TableRnnt, central_diff, ctc_enumerate, mocha_decode_enumerate,
                     mocha_enumerate, rel_err, rnnt_decode_enumerate, rnnt_enumerate, schroeder_decay_t60, snr_db)
from streamasr.decode_metrics import (DEFAULT_BEAMS, count_params, latency_csv, measure_latency, mocha_beam_decode,
                                      mocha_greedy, rnnt_beam_decode, rnnt_greedy)
from streamasr.errors import InfeasibleLength
from streamasr.features import AudioClip, FeatureMatrix
from streamasr.harness import (AugmentPolicy, PipelineStats, decide_augment, load_manifest, load_noise_catalog,
                               run_pipeline, utterance_seed)
from streamasr.mocha_attention import (MonotonicEnergies, chunk_weights, expected_alignment, expected_context,
                                       expected_context_backward, sigmoid)
from streamasr.room_sim import make_rir, reverberate, sample_scene, simulate_components
from streamasr.seq_losses import ctc_loss, rnnt_loss, smoothed_ce
from streamasr.spectral_augment import SpecAugConfig, VtlpConfig, spec_augment, vtlp_warp
from streamasr.toy_model import (DecoderConfig, EncoderConfig, ModelConfig, ToyModel, TrainConfig, active_layers,
                                 lr_at, synthetic_utterances)
from streamasr.toy_model.checkpoint import read_checkpoint, save_checkpoint
from streamasr.toy_model.config import full_scale_config
from streamasr.toy_model.train import Utterance, utterance_loss

README = Path(__file__).resolve().parent.parent / "README.md"


@contextlib.contextmanager
def criterion(name):
    """Record PASS with the collected details, or FAIL with the error, then re-raise."""
    details = []
    try:
        yield details
    except BaseException as exc:
        ACCEPTANCE_LINES.append(f"FAIL  {name}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        print(ACCEPTANCE_LINES[-1])
        raise
    ACCEPTANCE_LINES.append(f"PASS  {name}: {'; '.join(details)}")
    print(ACCEPTANCE_LINES[-1])


def test_full_scale_wers_are_out_of_scope():
    with criterion("full-scale WERs (960 h training) stated as not reproduced") as d:
        text = README.read_text(encoding="utf-8")
        assert "not reproduced" in text and "960" in text
        d.append("README states the desk-scale substitutes")


def test_loss_oracle():
    with criterion("loss oracle, >=500 cases at 1e-10, <30 s") as d:
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        worst, cases = 0.0, 0
        for _ in range(300):
            t, u, v = (int(x) for x in (rng.integers(1, 5), rng.integers(0, 4), rng.integers(1, 4)))
            labels = rng.integers(0, v, size=u).tolist()
            z = 3 * rng.standard_normal((t, u + 1, v + 1))
            worst = max(worst, abs(rnnt_loss(z, labels).loss - rnnt_enumerate(z, labels)))
            zc = 3 * rng.standard_normal((t, v + 1))
            ref = ctc_enumerate(zc, labels)
            if math.isinf(ref):
                with pytest.raises(InfeasibleLength):
                    ctc_loss(zc, labels)
            else:
                worst = max(worst, abs(ctc_loss(zc, labels).loss - ref))
            cases += 2
        elapsed = time.perf_counter() - t0
        d += [f"{cases} cases", f"max |err| {worst:.2e}", f"{elapsed:.1f} s"]
        assert cases >= 500 and worst <= 1e-10 and elapsed < 30


def test_gradient_suite():
    with criterion("gradients vs central differences, 1e-4 kernels / 1e-3 end-to-end, <2 min") as d:
        rng = np.random.default_rng(7)
        t0 = time.perf_counter()
        worst = collections.defaultdict(float)
        for _ in range(25):
            t, u, v = int(rng.integers(1, 5)), int(rng.integers(0, 4)), int(rng.integers(1, 4))
            labels = rng.integers(0, v, size=u).tolist()
            z = rng.standard_normal((t, u + 1, v + 1))
            worst["rnnt"] = max(worst["rnnt"], rel_err(rnnt_loss(z, labels).grad,
                                                       central_diff(lambda x: rnnt_loss(x, labels).loss, z)))
            zc = rng.standard_normal((2 * u + 1, v + 1))
            worst["ctc"] = max(worst["ctc"], rel_err(ctc_loss(zc, labels).grad,
                                                     central_diff(lambda x: ctc_loss(x, labels).loss, zc)))
            lp = rng.standard_normal((3, v + 1))
            tg = rng.integers(0, v + 1, size=3).tolist()
            worst["ce"] = max(worst["ce"], rel_err(smoothed_ce(lp, tg).grad,
                                                   central_diff(lambda x: smoothed_ce(x, tg).loss, lp)))
            e, uu = rng.standard_normal((3, 5)), rng.standard_normal((3, 5))
            enc, g = rng.standard_normal((5, 2)), rng.standard_normal((3, 2))
            ctx = lambda e_: float(np.sum(g * expected_context(MonotonicEnergies(e_, uu, 2), enc).contexts))  # noqa: E731
            ge, _, _ = expected_context_backward(g, MonotonicEnergies(e, uu, 2), enc)
            worst["mocha"] = max(worst["mocha"], rel_err(ge, central_diff(ctx, e)))
        for kind in ("mocha", "rnnt"):
            m = ToyModel(ModelConfig(vocab_size=2, encoder=EncoderConfig(2, 4, input_dim=3),
                                     decoder=DecoderConfig(kind, decoder_hidden=4, embed_dim=2, attention_dim=3,
                                                           joint_dim=4, chunk_size=2),
                                     dropout=0.0, init_scale=0.5))
            m.eval()
            utt = Utterance("g", rng.random((5, 3)), [1, 0])
            utterance_loss(m, utt, TrainConfig()).backward()
            for _, p in m.named_tensors():
                base = p.detach().clone()

                def f(x):
                    with torch.no_grad():
                        p.copy_(torch.from_numpy(x))
                        val = float(utterance_loss(m, utt, TrainConfig()))
                        p.copy_(base)
                    return val

                worst["e2e"] = max(worst["e2e"], rel_err(p.grad.numpy(), central_diff(f, base.numpy(), h=1e-4)))
        elapsed = time.perf_counter() - t0
        d += [f"{k} {v:.1e}" for k, v in worst.items()] + [f"{elapsed:.1f} s"]
        assert all(worst[k] < 1e-4 for k in ("rnnt", "ctc", "ce", "mocha"))
        assert worst["e2e"] < 1e-3 and elapsed < 120


def test_mocha_alignment_oracle():
    with criterion("MoChA expected alignment vs enumeration (1e-8), chunk mass (1e-10)") as d:
        rng = np.random.default_rng(11)
        worst, mass, cases = 0.0, 0.0, 0
        for n_out in range(1, 4):
            for t_len in range(1, 6):
                for _ in range(14):
                    e = 3 * rng.standard_normal((n_out, t_len))
                    alpha = expected_alignment(MonotonicEnergies(e, np.zeros_like(e)))
                    worst = max(worst, float(np.max(np.abs(alpha - mocha_enumerate(sigmoid(e))))))
                    for w in (1, 2, 4):
                        beta = chunk_weights(alpha, 4 * rng.standard_normal(alpha.shape), w)
                        mass = max(mass, float(np.max(np.abs(beta.sum(1) - alpha.sum(1)))))
                    cases += 1
        d += [f"{cases} cases", f"max |err| {worst:.1e}", f"mass drift {mass:.1e}"]
        assert cases >= 200 and worst <= 1e-8 and mass <= 1e-10


def test_warmup_schedule():
    with criterion("warm-up schedule reproduces every reference point exactly") as d:
        misses = [(e, lr, lr_at(e)) for e, lr in LR_CURVE if lr_at(e) != lr]
        d += [f"{len(LR_CURVE)} points, {len(misses)} mismatches", f"active_layers(1.75) = {active_layers(1.75)}"]
        assert not misses and active_layers(1.75) == 6


def _noise_clips(scene, rng):
    return [AudioClip(0.3 * rng.uniform(-1, 1, int(rng.integers(3000, 12000)))) for _ in scene.noise_ids]


def _speech(rng, n=12000):
    t = np.arange(n) / 16000
    f0 = rng.uniform(100, 300)
    x = np.sin(2 * np.pi * f0 * t) * (0.5 + 0.5 * np.sin(2 * np.pi * 4 * t)) + 0.05 * rng.standard_normal(n)
    return AudioClip(0.6 * x / np.max(np.abs(x)))


def test_acoustic_simulator():
    with criterion("room simulator: SNR within 0.1 dB, T60 within 20%, dry room exact, <2 min") as d:
        catalog = {"b0": "babble", "b1": "babble", "m0": "music", "t0": "tv"}
        rng = np.random.default_rng(5)
        t0 = time.perf_counter()
        snr_err = 0.0
        for k in range(100):
            scene = sample_scene(1000 + k, catalog)
            clean = _speech(rng)
            res = simulate_components(clean, scene, _noise_clips(scene, rng))
            speech = reverberate(clean, make_rir(scene))
            noise = res.clip.samples / res.scale - speech
            snr_err = max(snr_err, abs(snr_db(speech, noise) - scene.snr_db))
        t60_err = 0.0
        for k in range(50):
            target = float(rng.uniform(0.1, 1.0))
            scene = dataclasses.replace(sample_scene(5000 + k, catalog), t60_s=target)
            t60_err = max(t60_err, abs(schroeder_decay_t60(make_rir(scene).taps) / target - 1))
        dry_ok = True
        for k in range(10):
            scene = dataclasses.replace(sample_scene(9000 + k, catalog), t60_s=0.0)
            taps = make_rir(scene).taps
            (delay,) = np.flatnonzero(taps)
            x = _speech(rng, 6000).samples
            y = reverberate(x, make_rir(scene))
            dry_ok &= bool(np.array_equal(y[delay:], taps[delay] * x[: x.size - delay]) and not y[:delay].any())
        elapsed = time.perf_counter() - t0
        d += [f"max SNR err {snr_err:.4f} dB (100 scenes)", f"max T60 err {100 * t60_err:.1f}% (50 scenes)",
              f"dry exact {dry_ok}", f"{elapsed:.1f} s"]
        assert snr_err <= 0.1 and t60_err <= 0.2 and dry_ok and elapsed < 120


def test_augment_ratio():
    with criterion("r_AS = 70%: simulated fraction 0.700 +- 0.01 over 10 000 decisions") as d:
        policy = AugmentPolicy(r_as_percent=70.0)
        frac = np.mean([decide_augment(utterance_seed(0, f"utt{i:05d}"), policy) == "simulate"
                        for i in range(10_000)])
        d.append(f"fraction {frac:.4f}")
        assert abs(frac - 0.7) <= 0.01


def test_vtlp():
    with criterion("VTLP identity <= 1e-3 and 1 kHz -> 1200 Hz within one FFT bin") as d:
        rng = np.random.default_rng(3)
        clip = AudioClip(rng.uniform(-0.8, 0.8, 16000))
        ident = float(np.max(np.abs(vtlp_warp(clip, 1.0).samples - clip.samples)))
        t = np.arange(16000) / 16000
        out = vtlp_warp(AudioClip(0.5 * np.sin(2 * np.pi * 1000 * t)), 1.2).samples
        fine = 1 << 18
        peak = np.argmax(np.abs(np.fft.rfft(out * np.hanning(out.size), n=fine))) * 16000 / fine
        bin_hz = 16000 / VtlpConfig().n_fft
        d += [f"identity err {ident:.1e}", f"peak {peak:.2f} Hz (bin {bin_hz:.2f} Hz)"]
        assert ident <= 1e-3 and abs(peak - 1200) <= bin_hz


def test_spec_augment():
    with criterion("SpecAugment: unmasked bit-equal, mean time mask 10.5 +- 0.3, zero config identity") as d:
        x = FeatureMatrix(np.random.default_rng(0).uniform(0.5, 2.0, (120, 40)))
        lengths, intact = [], True
        for s in range(10_000):
            out, masks = spec_augment(x, s, return_masks=True)
            (a, b), = masks.time_spans
            lengths.append(b - a)
            if s < 500:
                keep = np.ones(x.frames.shape, dtype=bool)
                keep[a:b] = False
                for fa, fb in masks.freq_spans:
                    keep[:, fa:fb] = False
                intact &= bool(np.array_equal(out.frames[keep], x.frames[keep]) and not out.frames[~keep].any())
        ident = np.array_equal(spec_augment(x, 9, SpecAugConfig(0, 1, 0, 0)).frames, x.frames)
        d += [f"mean length {np.mean(lengths):.3f}", f"complement exact {intact}", f"identity {ident}"]
        assert intact and ident and abs(np.mean(lengths) - 10.5) <= 0.3


def test_pipeline_determinism(toy_corpus):
    with criterion("pipeline: 1 vs 8 workers identical output multiset, queue bound respected") as d:
        manifest, noises = load_manifest(toy_corpus[0]), load_noise_catalog(toy_corpus[1])
        runs = {}
        for workers in (1, 8):
            stats = PipelineStats()
            outs = run_pipeline(manifest, AugmentPolicy(), workers, 1, noises, queue_bound=4, stats=stats)
            runs[workers] = (collections.Counter(o.serialize() for o in outs), stats)
        (one, s1), (eight, s8) = runs[1], runs[8]
        d += [f"{sum(one.values())} utterances", f"identical {one == eight}",
              f"high-water {s1.output_high_water}/{s1.output_bound}, {s8.output_high_water}/{s8.output_bound}"]
        assert sum(one.values()) == len(manifest) and one == eight
        assert not s1.failures and not s8.failures
        assert s1.output_high_water <= s1.output_bound and s8.output_high_water <= s8.output_bound


def test_decoding():
    with criterion("decoding: beam 1 = greedy, exhaustive agreement (T<=3, V<=2), flagged empty output") as d:
        greedy_ok = exhaustive_ok = 0
        for seed in range(100):
            r = TableRnnt(seed, num_frames=3, vocab=2)
            greedy_ok += rnnt_greedy(r).tokens == rnnt_beam_decode(r, beam=1).tokens
            m = TableMocha(seed, num_frames=3, vocab=2, p_low=0.1)
            greedy_ok += mocha_greedy(m).tokens == mocha_beam_decode(m, beam=1).tokens
            want, _ = rnnt_decode_enumerate(r, max_symbols=2)
            exhaustive_ok += rnnt_beam_decode(r, beam=400, max_symbols=2).tokens == want
            want, _ = mocha_decode_enumerate(m, max_len=5)
            exhaustive_ok += mocha_beam_decode(m, beam=500, max_len=5).tokens == want
        empty = mocha_beam_decode(TableMocha(0, num_frames=6, vocab=3, p_low=0.0, p_high=0.49), beam=12)
        d += [f"greedy {greedy_ok}/200", f"exhaustive {exhaustive_ok}/200",
              f"empty={empty.tokens == ()} no_attention={empty.no_attention}"]
        assert greedy_ok == 200 and exhaustive_ok == 200 and empty.tokens == () and empty.no_attention


@pytest.mark.parametrize("name", ["overfit_mocha", "overfit_rnnt"])
def test_overfit(name, request):
    label = "MoChA (CTC+CE)" if name == "overfit_mocha" else "RNN-T"
    with criterion(f"overfit {label}: loss down >= 80% in {OVERFIT_STEPS} steps, <5 min") as d:
        _, losses, seconds = request.getfixturevalue(name)
        reduction = 1 - losses[-10:].mean() / losses[0]
        d += [f"loss {losses[0]:.3f} -> {losses[-10:].mean():.3f}", f"reduction {100 * reduction:.1f}%",
              f"{seconds:.0f} s"]
        assert len(losses) == OVERFIT_STEPS and reduction >= 0.8 and seconds < 300


def test_parameter_accounting(tmp_path):
    with criterion("parameter accounting exact vs checkpoint; full-scale MoChA > RNN-T") as d:
        exact = True
        for kind in ("mocha", "rnnt", "full_attention"):
            for bidir in (False, True):
                cfg = ModelConfig(vocab_size=7, encoder=EncoderConfig(2, 5, bidirectional=bidir),
                                  decoder=DecoderConfig(kind, decoder_hidden=6))
                model = ToyModel(cfg)
                n_bytes = save_checkpoint(tmp_path / "m.ckpt", model)
                _, tensors = read_checkpoint(tmp_path / "m.ckpt")
                pc = count_params(model)
                exact &= pc.total == sum(a.size for _, a in tensors) and pc.serialized_bytes == n_bytes
        mocha = count_params(full_scale_config("mocha")).total
        rnnt = count_params(full_scale_config("rnnt")).total
        d += [f"checkpoint match {exact}", f"MoChA {mocha / 1e6:.1f}M vs RNN-T {rnnt / 1e6:.1f}M"]
        assert exact and mocha > rnnt


def test_latency_report(overfit_mocha, overfit_rnnt):
    with criterion("latency CSV for beams 1,4,8,12 with deterministic transcripts") as d:
        rows_seen = 0
        for model, _, _ in (overfit_mocha, overfit_rnnt):
            with torch.no_grad():
                utts = [(u.utt_id, model.encode(u.feats)) for u in synthetic_utterances(8, vocab_size=6, seed=9)]
            first, second = measure_latency(utts, model), measure_latency(utts, model)
            assert [r.beam for r in first] == list(DEFAULT_BEAMS)
            assert [r.tokens for r in first] == [r.tokens for r in second]
            rows = list(csv.reader(io.StringIO(latency_csv(first))))
            assert rows[0] == ["utt_id", "beam", "latency_ms", "inference_s", "tokens"]
            assert len(rows) == 1 + len(utts) * len(DEFAULT_BEAMS)
            assert all(float(r[2]) >= 0 and float(r[3]) >= 0 for r in rows[1:])
            rows_seen += len(rows) - 1
        d += [f"{rows_seen} rows over MoChA and RNN-T", "transcripts identical across runs"]

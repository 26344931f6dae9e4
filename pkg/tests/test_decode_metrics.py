import csv
import io

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import TableMocha, TableRnnt, mocha_decode_enumerate, rnnt_decode_enumerate
from streamasr.decode_metrics import (DEFAULT_BEAMS, ModelMochaScorer, ModelRnntScorer, corpus_wer, count_params,
                                      decode_utterance, format_table, latency_csv, lstm_param_count, measure_latency,
                                      mocha_beam_decode, mocha_greedy, full_scale_table, rnnt_beam_decode,
                                      rnnt_greedy, wer)
from streamasr.errors import EmptyReference, EmptySet
from streamasr.toy_model import DecoderConfig, EncoderConfig, ModelConfig, ToyModel, synthetic_utterances
from streamasr.toy_model.checkpoint import read_checkpoint, save_checkpoint
from streamasr.toy_model.config import full_scale_config


# -- beam search ---------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(60))
def test_rnnt_matches_exhaustive_search(seed):
    model = TableRnnt(seed, num_frames=3, vocab=2)
    want, score = rnnt_decode_enumerate(model, max_symbols=2)
    got = rnnt_beam_decode(model, beam=200, max_symbols=2)
    assert got.tokens == want and got.log_prob == pytest.approx(score, abs=1e-10)


@pytest.mark.parametrize("seed", range(60))
def test_mocha_matches_exhaustive_search(seed):
    model = TableMocha(seed, num_frames=3, vocab=2, p_low=0.2)
    want, score = mocha_decode_enumerate(model, max_len=5)
    got = mocha_beam_decode(model, beam=500, max_len=5)
    assert got.tokens == want and got.log_prob == pytest.approx(score, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_beam_one_is_greedy(seed):
    r = TableRnnt(seed, num_frames=4, vocab=3)
    g, b = rnnt_greedy(r, max_symbols=2), rnnt_beam_decode(r, beam=1, max_symbols=2)
    assert g.tokens == b.tokens and g.path_log_prob == pytest.approx(b.path_log_prob)
    m = TableMocha(seed, num_frames=5, vocab=3, p_low=0.1)
    g, b = mocha_greedy(m), mocha_beam_decode(m, beam=1)
    assert g.tokens == b.tokens and g.log_prob == pytest.approx(b.log_prob)
    assert (g.no_attention, g.truncated) == (b.no_attention, b.truncated)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_wider_beam_never_scores_worse(seed):
    r = TableRnnt(seed, num_frames=4, vocab=3)
    scores = [rnnt_beam_decode(r, beam=k, max_symbols=2).log_prob for k in (1, 2, 4, 8, 12)]
    assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))
    m = TableMocha(seed, num_frames=4, vocab=3, p_low=0.1)
    scores = [mocha_beam_decode(m, beam=k).log_prob for k in (1, 2, 4, 8, 12)]
    assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))


@pytest.mark.parametrize("seed", range(40))
def test_merging_keeps_argmax(seed):
    model = TableRnnt(seed, num_frames=3, vocab=2)
    # 7 emission choices per frame: a 343-wide beam keeps every unmerged alignment
    a = rnnt_beam_decode(model, beam=400, max_symbols=2, merge=True)
    b = rnnt_beam_decode(model, beam=400, max_symbols=2, merge=False)
    assert a.tokens == b.tokens and a.log_prob == pytest.approx(b.log_prob, abs=1e-10)


def test_hypotheses_are_normalized():
    for h in rnnt_beam_decode(TableRnnt(3, 4, 3), beam=6, return_all=True):
        assert h.log_prob <= 0
    for h in mocha_beam_decode(TableMocha(3, 5, 3, p_low=0.1), beam=6, return_all=True):
        assert h.log_prob <= 0


class _BlankOnly(TableRnnt):
    def log_probs(self, t, state):
        lp = np.full(self.vocab + 1, np.log(0.1 / self.vocab))
        lp[self.blank] = np.log(0.9)
        return lp


def test_blank_dominant_model_emits_nothing():
    h = rnnt_beam_decode(_BlankOnly(0, 5, 3), beam=12)
    assert h.tokens == () and h.log_prob == pytest.approx(5 * np.log(0.9))


def test_no_attention_is_flagged():
    model = TableMocha(1, num_frames=6, vocab=3, p_low=0.0, p_high=0.49)
    for beam in (1, 12):
        h = mocha_beam_decode(model, beam=beam)
        assert h.tokens == () and h.no_attention


def test_stop_positions_do_not_move_backwards():
    model = TableMocha(5, num_frames=8, vocab=3, p_low=0.3)
    for h in mocha_beam_decode(model, beam=8, return_all=True):
        assert 0 <= h.stop_t < 8


def test_output_length_capped():
    class Chatty(TableMocha):
        def output(self, dstate, prev_token, stop_t):
            lp = np.full(self.vocab + 1, -10.0)
            lp[0] = np.log1p(-np.exp(-10.0) * self.vocab)
            return lp, dstate

    h = mocha_beam_decode(Chatty(0, num_frames=3, vocab=2, p_low=0.6), beam=4)
    assert len(h.tokens) == 5 and h.truncated


def test_invalid_beam():
    with pytest.raises(ValueError):
        rnnt_beam_decode(TableRnnt(0), beam=0)
    with pytest.raises(ValueError):
        mocha_beam_decode(TableMocha(0), beam=0)


def test_model_scorer_matches_lattice():
    m = ToyModel(ModelConfig(vocab_size=3, encoder=EncoderConfig(1, 8), decoder=DecoderConfig("rnnt", decoder_hidden=8)))
    m.eval()
    with torch.no_grad():
        h = m.encode(np.random.default_rng(0).random((5, 40)))
        lattice = torch.log_softmax(m.joint_lattice(h, [2, 0]), -1).numpy()
    s = ModelRnntScorer(m, h)
    state = s.initial_state()
    for u, y in enumerate([2, 0, None]):
        for t in range(5):
            assert np.allclose(s.log_probs(t, state), lattice[t, u])
        if y is not None:
            state = s.extend(state, y)


def test_model_decoders_run():
    for kind in ("rnnt", "mocha"):
        m = ToyModel(ModelConfig(vocab_size=4, encoder=EncoderConfig(1, 8),
                                 decoder=DecoderConfig(kind, decoder_hidden=8, embed_dim=4, attention_dim=4)))
        m.eval()
        feats = np.random.default_rng(1).random((12, 40))
        a, b = decode_utterance(m, feats, beam=4), decode_utterance(m, feats, beam=4)
        assert a.tokens == b.tokens and all(0 <= y < 4 for y in a.tokens)


# -- WER ----------------------------------------------------------------------------------


@pytest.mark.parametrize("ref,hyp,want", [
    ("a b c", "a b c", (0, 0, 0, 0.0)),
    ("a b c", "a c", (0, 1, 0, 100 / 3)),
    ("a", "b c", (1, 0, 1, 200.0)),
    ("a b", "", (0, 2, 0, 100.0)),
])
def test_wer_examples(ref, hyp, want):
    s, d, i, pct = wer(ref, hyp)
    assert (s, d, i) == want[:3] and pct == pytest.approx(want[3])


def test_wer_empty_reference():
    with pytest.raises(EmptyReference):
        wer("", "a")


def _levenshtein(a, b):
    d = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        prev, d[0] = d[0], i
        for j, y in enumerate(b, 1):
            prev, d[j] = d[j], min(d[j] + 1, d[j - 1] + 1, prev + (x != y))
    return d[-1]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from("abc"), min_size=1, max_size=7), st.lists(st.sampled_from("abc"), max_size=7))
def test_wer_counts_are_a_minimal_alignment(ref, hyp):
    r = wer(ref, hyp)
    assert r.errors == _levenshtein(ref, hyp)
    assert len(hyp) == len(ref) - r.deletions + r.insertions


def test_corpus_wer_pools_counts():
    r = corpus_wer([("a b c", "a c"), ("d", "d e")])
    assert (r.deletions, r.insertions, r.ref_words) == (1, 1, 4) and r.wer_percent == 50.0


# -- latency ------------------------------------------------------------------------------


def _toy_mocha():
    m = ToyModel(ModelConfig(vocab_size=4, encoder=EncoderConfig(1, 8),
                             decoder=DecoderConfig("mocha", decoder_hidden=8, embed_dim=4, attention_dim=4)))
    m.eval()
    return m


def test_latency_empty_set():
    with pytest.raises(EmptySet):
        measure_latency([], _toy_mocha())


def test_latency_tokens_deterministic():
    m = _toy_mocha()
    with torch.no_grad():
        utts = [(u.utt_id, m.encode(u.feats)) for u in synthetic_utterances(5, vocab_size=4, seed=1)]
    a, b = measure_latency(utts, m), measure_latency(utts, m)
    assert [r.tokens for r in a] == [r.tokens for r in b]
    for r in a:
        assert r.excludes_encoder and min(r.per_utterance_latency_ms) >= 0
        assert r.mean_latency_ms <= 1000 * max(r.per_utterance_inference_s)


def test_latency_csv_format():
    m = _toy_mocha()
    with torch.no_grad():
        utts = [(u.utt_id, m.encode(u.feats)) for u in synthetic_utterances(3, vocab_size=4, seed=1)]
    rows = list(csv.reader(io.StringIO(latency_csv(measure_latency(utts, m)))))
    assert rows[0] == ["utt_id", "beam", "latency_ms", "inference_s", "tokens"]
    assert len(rows) == 1 + 3 * len(DEFAULT_BEAMS)
    assert sorted({int(r[1]) for r in rows[1:]}) == list(DEFAULT_BEAMS)


def test_mocha_inference_time_grows_with_beam(overfit_mocha):
    model = overfit_mocha[0]
    with torch.no_grad():
        utts = [(u.utt_id, model.encode(u.feats)) for u in synthetic_utterances(100, vocab_size=6, seed=0)]
    reports = measure_latency(utts, model, repeats=3)
    times = [r.mean_inference_s for r in reports]
    assert all(b >= a for a, b in zip(times, times[1:])), times


# -- parameter accounting -------------------------------------------------------------------


def test_lstm_count():
    assert lstm_param_count(40, 1024) == 4_362_240


def test_bidirectional_doubles_encoder():
    def enc(bidir):
        cfg = ModelConfig(encoder=EncoderConfig(1, 1024, bidirectional=bidir))
        return count_params(cfg).per_block["encoder"]

    assert enc(False) == lstm_param_count(40, 1024)
    assert enc(True) == 2 * enc(False)


def test_mocha_larger_than_rnnt():
    assert count_params(full_scale_config("mocha")).total > count_params(full_scale_config("rnnt")).total
    rows = dict((label, m) for label, m, _ in full_scale_table())
    assert rows["BFA"] > rows["UFA"] and rows["MoChA"] > rows["RNN-T"]
    assert "RNN-T" in format_table(full_scale_table())


@pytest.mark.parametrize("kind", ["mocha", "rnnt", "full_attention"])
def test_count_matches_checkpoint(tmp_path, kind):
    m = ToyModel(ModelConfig(vocab_size=5, encoder=EncoderConfig(2, 6), decoder=DecoderConfig(kind, decoder_hidden=7)))
    state = {"epoch": 0.5, "active_layers": 2}
    n_bytes = save_checkpoint(tmp_path / "m.ckpt", m, state)
    _, tensors = read_checkpoint(tmp_path / "m.ckpt")
    per_block, total, size = count_params(m, state)
    assert total == sum(a.size for _, a in tensors) == sum(p.numel() for p in m.parameters())
    assert size == n_bytes
    assert sum(per_block.values()) == total

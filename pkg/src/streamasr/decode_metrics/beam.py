"""Beam search for RNN-T (time synchronous) and MoChA (label synchronous) models.

Both searches talk to the model through a small scorer object, so the same
code runs against :class:`~streamasr.toy_model.ToyModel` and against the
table-driven fakes used for exhaustive checks.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Protocol

import numpy as np

from ..mocha_attention import ATTEND_THRESHOLD, hard_attend_step


@dataclass
class Hypothesis:
    """``log_prob`` is the merged mass of every surviving path with these tokens;
    ``path_log_prob`` is the score of the single path that ranks it in the beam."""

    tokens: tuple = ()
    log_prob: float = 0.0
    decoder_state: Any = None
    stop_t: int = 0
    no_attention: bool = False
    truncated: bool = False
    path_log_prob: float = 0.0
    first_token_s: float | None = field(default=None, compare=False)


def _rank(h: Hypothesis):
    return (-h.log_prob, h.tokens)


class RnntScorer(Protocol):
    blank: int
    num_frames: int

    def initial_state(self): ...
    def extend(self, state, token: int): ...
    def log_probs(self, t: int, state) -> np.ndarray: ...


class MochaScorer(Protocol):
    eos: int
    num_frames: int

    def initial_state(self): ...
    def decoder_state(self, state, prev_token: int): ...
    def monotonic_probs(self, dstate, start: int) -> np.ndarray: ...
    def output(self, dstate, prev_token: int, stop_t: int): ...


class _NestedPruner:
    """Prefix-consistent pruning.

    Slot m of the next beam is the best not-yet-taken expansion of slots
    1..m of the current one, so the first k slots are exactly what a beam of
    width k would hold. Widening the beam therefore only ever adds
    candidates. Slot 1 alone is greedy search.
    """

    def __init__(self):
        self.heap = []
        self.counter = 0

    def push(self, score, tokens, item):
        heapq.heappush(self.heap, (-score, tokens, self.counter, item))
        self.counter += 1

    def pop(self):
        return heapq.heappop(self.heap)[3] if self.heap else None


# -- RNN-T ----------------------------------------------------------------------


class _PrefixCache:
    """Prediction-network states keyed by label prefix (blank-free history)."""

    def __init__(self, scorer):
        self.scorer = scorer
        self.states = {(): scorer.initial_state()}
        self.probs = {}

    def state(self, prefix):
        st = self.states.get(prefix)
        if st is None:
            st = self.scorer.extend(self.state(prefix[:-1]), prefix[-1])
            self.states[prefix] = st
        return st

    def log_probs(self, t, prefix):
        key = (t, prefix)
        lp = self.probs.get(key)
        if lp is None:
            lp = np.asarray(self.scorer.log_probs(t, self.state(prefix)), dtype=np.float64)
            self.probs[key] = lp
        return lp


def rnnt_greedy(scorer: RnntScorer, max_symbols: int = 5) -> Hypothesis:
    """Most likely symbol at every step, at most ``max_symbols`` labels per frame."""
    cache = _PrefixCache(scorer)
    tokens: tuple = ()
    score = 0.0
    t0 = time.perf_counter()
    first = None
    for t in range(scorer.num_frames):
        for s in range(max_symbols + 1):
            lp = cache.log_probs(t, tokens)
            k = int(np.argmax(lp)) if s < max_symbols else scorer.blank
            score += float(lp[k])
            if k == scorer.blank:
                break
            tokens = tokens + (k,)
            if first is None:
                first = time.perf_counter() - t0
    return Hypothesis(tokens, score, cache.state(tokens), scorer.num_frames,
                      path_log_prob=score, first_token_s=first)


@dataclass
class _Slot:
    hyp: Hypothesis
    n_emit: int = 0      # labels emitted on the current frame
    ended: bool = False  # blank already taken on the current frame


def rnnt_beam_decode(scorer: RnntScorer, beam: int = 12, max_symbols: int = 5, merge: bool = True,
                     return_all: bool = False):
    """Time-synchronous transducer beam search.

    On frame t each hypothesis either takes blank and waits for the next
    frame, or emits a label and stays on t (at most ``max_symbols`` times).
    Blank-ended and still-emitting candidates share one pool of ``beam``
    slots. With ``merge`` a blank-ended hypothesis whose labels match one
    already in the pool adds its probability to that entry and frees its
    own continuation; without it duplicates run on separately and are summed
    at the end. Either way the returned ``log_prob`` is the log-sum-exp over
    the surviving paths of that label sequence.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    cache = _PrefixCache(scorer)
    blank = scorer.blank
    t0 = time.perf_counter()
    first = None
    frame = [Hypothesis()] + [None] * (beam - 1)
    for t in range(scorer.num_frames):
        slots = [None if h is None else _Slot(h) for h in frame]
        while any(s is not None and not s.ended for s in slots):
            pruner = _NestedPruner()
            nxt = []
            ended_at = {}
            for slot in slots:
                if slot is not None:
                    h = slot.hyp
                    if slot.ended:
                        pruner.push(h.path_log_prob, h.tokens, slot)
                    else:
                        lp = cache.log_probs(t, h.tokens)
                        b = float(lp[blank])
                        pruner.push(h.path_log_prob + b, h.tokens,
                                    _Slot(replace(h, log_prob=h.log_prob + b, path_log_prob=h.path_log_prob + b),
                                          slot.n_emit, True))
                        if slot.n_emit < max_symbols:
                            for k in range(len(lp)):
                                if k != blank:
                                    x = float(lp[k])
                                    pruner.push(h.path_log_prob + x, h.tokens + (k,),
                                                _Slot(Hypothesis(h.tokens + (k,), h.log_prob + x,
                                                                 path_log_prob=h.path_log_prob + x),
                                                      slot.n_emit + 1))
                chosen = pruner.pop()
                if chosen is not None and chosen.ended and merge:
                    j = ended_at.get(chosen.hyp.tokens)
                    if j is not None and nxt[j] is not chosen:
                        kept = nxt[j].hyp
                        kept.log_prob = float(np.logaddexp(kept.log_prob, chosen.hyp.log_prob))
                        chosen = None
                    else:
                        chosen = _Slot(replace(chosen.hyp), chosen.n_emit, True)
                        ended_at[chosen.hyp.tokens] = len(nxt)
                nxt.append(chosen)
            slots = nxt
            if first is None and slots[0] is not None and slots[0].hyp.tokens:
                first = time.perf_counter() - t0
        frame = [None if s is None else s.hyp for s in slots]
    pooled: dict = {}
    for h in frame:
        if h is None:
            continue
        if h.tokens in pooled:
            p = pooled[h.tokens]
            p.log_prob = float(np.logaddexp(p.log_prob, h.log_prob))
            p.path_log_prob = max(p.path_log_prob, h.path_log_prob)
        else:
            pooled[h.tokens] = replace(h)
    finals = sorted(pooled.values(), key=_rank)
    for h in finals:
        h.stop_t = scorer.num_frames
        h.decoder_state = cache.state(h.tokens)
        h.first_token_s = first
    return finals if return_all else finals[0]


# -- MoChA ----------------------------------------------------------------------


def _mocha_expand(scorer: MochaScorer, h: Hypothesis, threshold: float):
    """Advance one hypothesis by one output step.

    Returns ``None`` when no remaining frame passes the threshold, else
    ``(log_probs, state, stop_t)``.
    """
    prev = h.tokens[-1] if h.tokens else scorer.eos
    dstate = scorer.decoder_state(h.decoder_state, prev)
    probs = scorer.monotonic_probs(dstate, h.stop_t)
    stop = None
    for i, p in enumerate(probs):
        if hard_attend_step(p, threshold):
            stop = h.stop_t + i
            break
    if stop is None:
        return None
    log_probs, state = scorer.output(dstate, prev, stop)
    return np.asarray(log_probs, dtype=np.float64), state, stop


def mocha_greedy(scorer: MochaScorer, threshold: float = ATTEND_THRESHOLD, max_len: int | None = None) -> Hypothesis:
    max_len = scorer.num_frames + 2 if max_len is None else max_len
    t0 = time.perf_counter()
    first = None
    h = Hypothesis(decoder_state=scorer.initial_state())
    for _ in range(max_len):
        step = _mocha_expand(scorer, h, threshold)
        if step is None:
            return replace(h, no_attention=True, first_token_s=first)
        lp, state, stop = step
        k = int(np.argmax(lp))
        score = h.log_prob + float(lp[k])
        if k == scorer.eos:
            return replace(h, log_prob=score, path_log_prob=score, decoder_state=state, stop_t=stop,
                           first_token_s=first)
        h = Hypothesis(h.tokens + (k,), score, state, stop, path_log_prob=score)
        if first is None:
            first = time.perf_counter() - t0
    return replace(h, truncated=True, first_token_s=first)


def mocha_beam_decode(scorer: MochaScorer, beam: int = 12, threshold: float = ATTEND_THRESHOLD,
                      max_len: int | None = None, return_all: bool = False):
    """Label-synchronous beam search with hard monotonic chunkwise attention.

    Each hypothesis scans forward from its own stop frame and halts at the
    first frame whose selection probability reaches ``threshold``. A
    hypothesis that finds no such frame ends with ``no_attention`` set and
    emits nothing further. Search ends once no live hypothesis can beat the
    best finished one; length is capped at ``2 + num_frames``.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    max_len = scorer.num_frames + 2 if max_len is None else max_len
    t0 = time.perf_counter()
    first = None
    slots = [Hypothesis(decoder_state=scorer.initial_state())] + [None] * (beam - 1)
    finished: list = []
    for _ in range(max_len):
        pruner = _NestedPruner()
        nxt = []
        for h in slots:
            if h is not None:
                step = _mocha_expand(scorer, h, threshold)
                if step is None:
                    finished.append(replace(h, no_attention=True))
                else:
                    lp, state, stop = step
                    for k in range(len(lp)):
                        score = h.log_prob + float(lp[k])
                        if k == scorer.eos:
                            pruner.push(score, h.tokens, (True, replace(h, log_prob=score, path_log_prob=score,
                                                                        decoder_state=state, stop_t=stop)))
                        else:
                            pruner.push(score, h.tokens + (k,),
                                        (False, Hypothesis(h.tokens + (k,), score, state, stop, path_log_prob=score)))
            chosen = pruner.pop()
            if chosen is not None:
                ended, chosen = chosen
                if ended:
                    finished.append(chosen)
                    chosen = None
            nxt.append(chosen)
        slots = nxt
        live = [h for h in slots if h is not None]
        if first is None and live and slots[0] is not None and slots[0].tokens:
            first = time.perf_counter() - t0
        if not live:
            break
        if finished and max(f.log_prob for f in finished) >= max(h.log_prob for h in live):
            break
    else:
        finished += [replace(h, truncated=True) for h in slots if h is not None]
    finals = sorted(finished, key=_rank)
    for h in finals:
        h.first_token_s = first
    return finals if return_all else finals[0]


# -- adapters for ToyModel ----------------------------------------------------------


class ModelRnntScorer:
    """Scores an RNN-T :class:`ToyModel` against precomputed encoder outputs."""

    def __init__(self, model, h_enc):
        import torch

        self.torch = torch
        self.model = model
        self.h_enc = h_enc if torch.is_tensor(h_enc) else torch.as_tensor(np.asarray(h_enc), dtype=model.dtype)
        self.blank = model.cfg.blank
        self.num_frames = int(self.h_enc.shape[0])
        with torch.no_grad():
            self.enc_proj = self.h_enc @ model.p("joint.enc").T

    def initial_state(self):
        with self.torch.no_grad():
            return self._pack(self.model.pred_step(self.model.cfg.sos))

    def extend(self, state, token):
        with self.torch.no_grad():
            return self._pack(self.model.pred_step(int(token), state[:2]))

    def _pack(self, hc):
        h, c = hc
        return (h, c, h @ self.model.p("joint.pred").T + self.model.p("joint.b"))

    def log_probs(self, t, state):
        with self.torch.no_grad():
            z = self.torch.tanh(self.enc_proj[t] + state[2]) @ self.model.p("joint.out").T
            return self.torch.log_softmax(z, dim=-1).numpy()


class ModelMochaScorer:
    """Scores a MoChA :class:`ToyModel`; state is (h, c, context)."""

    def __init__(self, model, h_enc):
        import torch

        self.torch = torch
        self.model = model
        self.h_enc = h_enc if torch.is_tensor(h_enc) else torch.as_tensor(np.asarray(h_enc), dtype=model.dtype)
        self.eos = model.cfg.eos
        self.num_frames = int(self.h_enc.shape[0])
        self.w = model.cfg.decoder.chunk_size
        with torch.no_grad():
            self.mono_h = self.h_enc @ model.p("mono.W_h").T
            self.chunk_h = self.h_enc @ model.p("chunk.W_h").T

    def initial_state(self):
        return None

    def decoder_state(self, state, prev_token):
        torch = self.torch
        with torch.no_grad():
            if state is None:
                ctx = self.h_enc.new_zeros(self.h_enc.shape[1])
                return self.model.dec_step(int(prev_token), ctx, None)
            h, c, ctx = state
            return self.model.dec_step(int(prev_token), ctx, (h, c))

    def _energy(self, prefix, s, enc_proj):
        p = self.model.p
        e = self.torch.tanh(s @ p(f"{prefix}.W_s").T + enc_proj + p(f"{prefix}.b")) @ p(f"{prefix}.v")
        return e + p("mono.r") if prefix == "mono" else e

    def monotonic_probs(self, dstate, start):
        with self.torch.no_grad():
            return self.torch.sigmoid(self._energy("mono", dstate[0], self.mono_h[start:])).numpy()

    def output(self, dstate, prev_token, stop_t):
        torch = self.torch
        with torch.no_grad():
            lo = max(0, stop_t - self.w + 1)
            u = self._energy("chunk", dstate[0], self.chunk_h[lo:stop_t + 1])
            ctx = torch.softmax(u, dim=0) @ self.h_enc[lo:stop_t + 1]
            logits = self.model.output_logits(dstate[0], int(prev_token), ctx)
            return torch.log_softmax(logits, dim=-1).numpy(), (dstate[0], dstate[1], ctx)


def decode_utterance(model, feats, beam: int = 12, **kw) -> Hypothesis:
    """Encode features and run the decoder matching the model's kind."""
    import torch

    with torch.no_grad():
        h = model.encode(feats)
    if model.cfg.decoder.kind == "rnnt":
        return rnnt_beam_decode(ModelRnntScorer(model, h), beam=beam, **kw)
    if model.cfg.decoder.kind == "mocha":
        return mocha_beam_decode(ModelMochaScorer(model, h), beam=beam, **kw)
    raise ValueError(f"no streaming decoder for kind {model.cfg.decoder.kind!r}")

"""Decoder-side latency and inference time per beam width.

Encoder outputs are computed before the clock starts, so every number here
excludes encoder time. Latency is time to the first emitted token; an
utterance that emits nothing reports its full decode time.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Sequence

from ..errors import EmptySet
from .beam import ModelMochaScorer, ModelRnntScorer, mocha_beam_decode, rnnt_beam_decode

DEFAULT_BEAMS = (1, 4, 8, 12)
CSV_COLUMNS = ("utt_id", "beam", "latency_ms", "inference_s", "tokens")


@dataclass
class LatencyReport:
    beam: int
    utt_ids: list = field(default_factory=list)
    per_utterance_latency_ms: list = field(default_factory=list)
    per_utterance_inference_s: list = field(default_factory=list)
    tokens: list = field(default_factory=list)
    excludes_encoder: bool = True

    @property
    def total_inference_s(self) -> float:
        return float(sum(self.per_utterance_inference_s))

    @property
    def mean_latency_ms(self) -> float:
        return float(sum(self.per_utterance_latency_ms) / len(self.per_utterance_latency_ms))

    @property
    def mean_inference_s(self) -> float:
        return self.total_inference_s / len(self.per_utterance_inference_s)


def _decoder_for(model):
    kind = model.cfg.decoder.kind
    if kind == "rnnt":
        return ModelRnntScorer, rnnt_beam_decode
    if kind == "mocha":
        return ModelMochaScorer, mocha_beam_decode
    raise ValueError(f"latency is measured for streaming decoders only, not {kind!r}")


def measure_latency(utterances: Sequence[tuple], model, beams: Sequence[int] = DEFAULT_BEAMS,
                    repeats: int = 1) -> list:
    """Decode every ``(utt_id, encoder_outputs)`` pair at each beam width.

    With ``repeats > 1`` the fastest run per utterance is kept, which damps
    scheduler noise without changing the tokens.
    """
    if not utterances:
        raise EmptySet("no utterances to time")
    scorer_cls, decode = _decoder_for(model)
    reports = []
    for beam in beams:
        rep = LatencyReport(beam)
        for utt_id, h_enc in utterances:
            best = None
            for _ in range(max(1, repeats)):
                t0 = time.perf_counter()
                hyp = decode(scorer_cls(model, h_enc), beam=beam)
                elapsed = time.perf_counter() - t0
                if best is None or elapsed < best[0]:
                    best = (elapsed, hyp)
            elapsed, hyp = best
            first = hyp.first_token_s if hyp.tokens and hyp.first_token_s is not None else elapsed
            rep.utt_ids.append(utt_id)
            rep.per_utterance_latency_ms.append(1000.0 * first)
            rep.per_utterance_inference_s.append(elapsed)
            rep.tokens.append(tuple(hyp.tokens))
        reports.append(rep)
    return reports


def latency_csv(reports: Sequence[LatencyReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        for uid, lat, inf, toks in zip(rep.utt_ids, rep.per_utterance_latency_ms,
                                       rep.per_utterance_inference_s, rep.tokens):
            w.writerow([uid, rep.beam, f"{lat:.4f}", f"{inf:.6f}", " ".join(map(str, toks))])
    return buf.getvalue()


def summary_rows(reports: Sequence[LatencyReport]) -> list:
    return [(r.beam, r.mean_latency_ms, r.mean_inference_s) for r in reports]

from .beam import (Hypothesis, ModelMochaScorer, ModelRnntScorer, decode_utterance, mocha_beam_decode,
                   mocha_greedy, rnnt_beam_decode, rnnt_greedy)
from .latency import DEFAULT_BEAMS, LatencyReport, latency_csv, measure_latency
from .params import ParamCount, count_params, format_table, lstm_param_count, full_scale_table
from .wer import WerResult, corpus_wer, wer

__all__ = [
    "Hypothesis", "ModelMochaScorer", "ModelRnntScorer", "decode_utterance", "mocha_beam_decode",
    "mocha_greedy", "rnnt_beam_decode", "rnnt_greedy",
    "DEFAULT_BEAMS", "LatencyReport", "latency_csv", "measure_latency",
    "ParamCount", "count_params", "format_table", "lstm_param_count", "full_scale_table",
    "WerResult", "corpus_wer", "wer",
]

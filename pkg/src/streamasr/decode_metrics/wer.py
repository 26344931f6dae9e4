"""Word error rate by Levenshtein alignment with unit costs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import EmptyReference


@dataclass(frozen=True)
class WerResult:
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer_percent(self) -> float:
        return 100.0 * self.errors / self.ref_words

    def __iter__(self):
        return iter((self.substitutions, self.deletions, self.insertions, self.wer_percent))


def _words(x) -> list:
    return x.split() if isinstance(x, str) else list(x)


def wer(ref: Sequence[str] | str, hyp: Sequence[str] | str) -> WerResult:
    """Align ``hyp`` to ``ref`` and count edits.

    Among minimum-cost alignments the one with the most substitutions is
    chosen, then the most deletions, so the split is deterministic.
    """
    r, h = _words(ref), _words(hyp)
    if not r:
        raise EmptyReference("reference transcript is empty")
    n, m = len(r), len(h)
    # cost table holds (edits, -subs, -dels) so tuple min gives the tie-break
    cost = np.empty((n + 1, m + 1), dtype=object)
    cost[0, 0] = (0, 0, 0)
    for i in range(1, n + 1):
        cost[i, 0] = (i, 0, -i)
    for j in range(1, m + 1):
        cost[0, j] = (j, 0, 0)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            e, s, d = cost[i - 1, j - 1]
            diag = (e, s, d) if r[i - 1] == h[j - 1] else (e + 1, s - 1, d)
            e, s, d = cost[i - 1, j]
            up = (e + 1, s, d - 1)
            e, s, d = cost[i, j - 1]
            left = (e + 1, s, d)
            cost[i, j] = min(diag, up, left)
    edits, neg_s, neg_d = cost[n, m]
    subs, dels = -neg_s, -neg_d
    return WerResult(subs, dels, edits - subs - dels, n)


def corpus_wer(pairs: Iterable[tuple]) -> WerResult:
    """Pooled counts over (ref, hyp) pairs; WER is total edits over total reference words."""
    s = d = i = n = 0
    for ref, hyp in pairs:
        res = wer(ref, hyp)
        s, d, i, n = s + res.substitutions, d + res.deletions, i + res.insertions, n + res.ref_words
    if n == 0:
        raise EmptyReference("no reference words in corpus")
    return WerResult(s, d, i, n)

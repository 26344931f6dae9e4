"""Greedy pair-merge BPE with a word-start marker."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from ..errors import CorpusEmpty

WORD_START = "▁"
UNK = "<unk>"
UNK_ID = 0


def _word_symbols(word: str) -> tuple:
    return (WORD_START,) + tuple(word)


@dataclass
class BpeModel:
    merges: list
    vocab: dict
    target_size: int = 0
    _ranks: dict = field(default=None, repr=False, compare=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.merges = [tuple(m) for m in self.merges]
        self._ranks = {m: i for i, m in enumerate(self.merges)}
        self.id_to_token = {i: t for t, i in self.vocab.items()}

    def __len__(self):
        return len(self.vocab)

    def segment(self, word: str) -> tuple:
        hit = self._cache.get(word)
        if hit is not None:
            return hit
        syms = list(_word_symbols(word))
        while len(syms) > 1:
            best = min(range(len(syms) - 1), key=lambda i: self._ranks.get((syms[i], syms[i + 1]), float("inf")))
            pair = (syms[best], syms[best + 1])
            if pair not in self._ranks:
                break
            # apply this merge everywhere, left to right
            out, i = [], 0
            while i < len(syms):
                if i < len(syms) - 1 and (syms[i], syms[i + 1]) == pair:
                    out.append(syms[i] + syms[i + 1])
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            syms = out
        self._cache[word] = tuple(syms)
        return self._cache[word]

    def encode(self, text: str) -> list:
        ids = []
        for word in text.split():
            ids += [self.vocab.get(s, UNK_ID) for s in self.segment(word)]
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        text = "".join(self.id_to_token.get(int(i), UNK) for i in ids)
        return text.replace(WORD_START, " ").strip()

    def save(self, path):
        lines = ["#merges"] + [f"{a} {b}" for a, b in self.merges]
        lines += ["#vocab"] + [f"{tok}\t{i}" for tok, i in sorted(self.vocab.items(), key=lambda kv: kv[1])]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BpeModel":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != "#merges" or "#vocab" not in lines:
            raise ValueError(f"{path}: not a BPE model file")
        split = lines.index("#vocab")
        merges = [tuple(line.split(" ")) for line in lines[1:split]]
        vocab = {}
        for line in lines[split + 1:]:
            tok, i = line.rsplit("\t", 1)
            vocab[tok] = int(i)
        return cls(merges, vocab, len(vocab))


def bpe_train(transcripts: Iterable[str], target_size: int) -> BpeModel:
    """Merge the most frequent adjacent pair until the vocabulary (UNK included)
    reaches ``target_size`` or no pair occurs twice. Ties go to the
    lexicographically smallest pair."""
    words = Counter()
    for line in transcripts:
        words.update(line.split())
    if not words:
        raise CorpusEmpty("no words to train BPE on")
    segs = {w: list(_word_symbols(w)) for w in words}
    chars = sorted({s for syms in segs.values() for s in syms})
    vocab = {UNK: UNK_ID}
    for c in chars:
        vocab[c] = len(vocab)
    merges = []
    while len(vocab) < target_size:
        pairs = Counter()
        for w, syms in segs.items():
            for a, b in zip(syms, syms[1:]):
                pairs[(a, b)] += words[w]
        if not pairs:
            break
        pair, count = min(pairs.items(), key=lambda kv: (-kv[1], kv[0]))
        if count < 2:
            break
        merges.append(pair)
        joined = pair[0] + pair[1]
        if joined not in vocab:
            vocab[joined] = len(vocab)
        for w, syms in segs.items():
            out, i = [], 0
            while i < len(syms):
                if i < len(syms) - 1 and (syms[i], syms[i + 1]) == pair:
                    out.append(joined)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            segs[w] = out
    return BpeModel(merges, vocab, target_size)

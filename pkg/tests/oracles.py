"""Brute-force reference implementations used only by the test-suite."""

import itertools
import math
import zlib

import numpy as np


def _log_softmax(row):
    m = max(row)
    s = sum(math.exp(x - m) for x in row)
    return [x - m - math.log(s) for x in row]


def rnnt_enumerate(logits, labels):
    """-ln P(y|x) by summing every monotonic alignment path explicitly."""
    logits = np.asarray(logits, dtype=np.float64)
    t_len, u1, v1 = logits.shape
    blank = v1 - 1
    u_len = len(labels)
    lp = [[_log_softmax(list(logits[t, u])) for u in range(u1)] for t in range(t_len)]
    n_moves = t_len + u_len
    total = 0.0
    # the last move is always the blank leaving (T-1, U)
    for label_pos in itertools.combinations(range(n_moves - 1), u_len):
        label_pos = set(label_pos)
        t = u = 0
        logp = 0.0
        for m in range(n_moves):
            if m in label_pos:
                logp += lp[t][u][labels[u]]
                u += 1
            else:
                logp += lp[t][u][blank]
                t += 1
        total += math.exp(logp)
    return -math.log(total)


def ctc_collapse(path, blank):
    out = []
    prev = None
    for s in path:
        if s != prev and s != blank:
            out.append(s)
        prev = s
    return out


def ctc_enumerate(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    t_len, v1 = logits.shape
    blank = v1 - 1
    lp = [_log_softmax(list(row)) for row in logits]
    total = 0.0
    for path in itertools.product(range(v1), repeat=t_len):
        if ctc_collapse(path, blank) == list(labels):
            total += math.exp(sum(lp[t][s] for t, s in enumerate(path)))
    return -math.log(total) if total > 0 else math.inf


def mocha_enumerate(p):
    """Expected stop distribution by enumerating hard monotonic alignments.

    Step l scans from the previous stop (inclusive; frame 0 for the first
    step) and stops at frame t with probability p[l][t]; passing the last
    frame means no later step attends anything.
    """
    p = np.asarray(p, dtype=np.float64)
    n_out, t_len = p.shape
    alpha = np.zeros((n_out, t_len))

    def walk(l, start, prob):
        if l == n_out or prob == 0.0:
            return
        survive = prob
        for t in range(start, t_len):
            stop_prob = survive * p[l, t]
            alpha[l, t] += stop_prob
            walk(l + 1, t, stop_prob)
            survive *= 1.0 - p[l, t]

    walk(0, 0, 1.0)
    return alpha


def central_diff(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-8))


def _seeded(seed, *key):
    return np.random.default_rng(zlib.crc32(repr((seed,) + key).encode()))


class TableRnnt:
    """Transducer whose log-probs are a fixed pseudo-random function of (t, label prefix)."""

    def __init__(self, seed, num_frames=3, vocab=2, scale=2.0):
        self.seed, self.num_frames, self.vocab, self.scale = seed, num_frames, vocab, scale
        self.blank = vocab

    def initial_state(self):
        return ()

    def extend(self, state, token):
        return state + (token,)

    def log_probs(self, t, state):
        z = self.scale * _seeded(self.seed, t, state).standard_normal(self.vocab + 1)
        return np.array(_log_softmax(list(z)))


class TableMocha:
    """Label-synchronous model with table-driven selection and output probabilities."""

    def __init__(self, seed, num_frames=4, vocab=2, scale=2.0, p_low=0.0, p_high=1.0):
        self.seed, self.num_frames, self.vocab, self.scale = seed, num_frames, vocab, scale
        self.p_low, self.p_high = p_low, p_high
        self.eos = vocab

    def initial_state(self):
        return ()

    def decoder_state(self, state, prev_token):
        return state + (prev_token,)

    def monotonic_probs(self, dstate, start):
        r = _seeded(self.seed, "p", dstate).uniform(self.p_low, self.p_high, self.num_frames)
        return r[start:]

    def output(self, dstate, prev_token, stop_t):
        z = self.scale * _seeded(self.seed, "y", dstate, stop_t).standard_normal(self.vocab + 1)
        return np.array(_log_softmax(list(z))), dstate


def rnnt_decode_enumerate(model, max_symbols):
    """Label sequence with the highest total probability, summing all capped alignments."""
    totals = {}

    def walk(t, prefix, n_emit, logp):
        if t == model.num_frames:
            totals[prefix] = np.logaddexp(totals.get(prefix, -np.inf), logp)
            return
        lp = model.log_probs(t, prefix)
        walk(t + 1, prefix, 0, logp + lp[model.blank])
        if n_emit < max_symbols:
            for k in range(model.vocab):
                walk(t, prefix + (k,), n_emit + 1, logp + lp[k])

    walk(0, (), 0, 0.0)
    best = min(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    return best[0], float(best[1])


def mocha_decode_enumerate(model, max_len, threshold=0.5):
    """Best finished sequence over every token path under deterministic hard attention."""
    finals = []

    def walk(tokens, state, stop, logp):
        if len(tokens) == max_len:
            finals.append((tokens, logp))
            return
        prev = tokens[-1] if tokens else model.eos
        ds = model.decoder_state(state, prev)
        probs = model.monotonic_probs(ds, stop)
        hit = next((stop + i for i, p in enumerate(probs) if p >= threshold), None)
        if hit is None:
            finals.append((tokens, logp))
            return
        lp, new_state = model.output(ds, prev, hit)
        for k in range(model.vocab + 1):
            if k == model.eos:
                finals.append((tokens, logp + lp[k]))
            else:
                walk(tokens + (k,), new_state, hit, logp + lp[k])

    walk((), model.initial_state(), 0, 0.0)
    best = min(finals, key=lambda f: (-f[1], f[0]))
    return best[0], float(best[1])


def schroeder_decay_t60(taps, fs=16000, lo=-5.0, hi=-25.0):
    """T60 from a least-squares line through the Schroeder curve between lo and hi dB."""
    e = np.asarray(taps, dtype=np.float64) ** 2
    edc = np.cumsum(e[::-1])[::-1]
    db = 10 * np.log10(np.maximum(edc / edc[0], 1e-300))
    idx = np.where((db <= lo) & (db >= hi))[0]
    t = idx / fs
    slope, _ = np.polyfit(t, db[idx], 1)
    return -60.0 / slope


def snr_db(speech, noise):
    return 10 * math.log10(np.mean(np.square(speech)) / np.mean(np.square(noise)))


# reference warm-up curve, (epoch, learning rate)
LR_CURVE = [
    (0.05, 0.0001), (0.1, 0.00012222222222222221), (0.15, 0.00014444444444444444), (0.2, 0.00016666666666666666),
    (0.25, 0.00018888888888888888), (0.3, 0.0002111111111111111), (0.35, 0.00023333333333333333), (0.4, 0.00025555555555555553),
    (0.45, 0.0002777777777777778), (0.5, 0.0003), (0.55, 0.0001), (0.6, 0.00015000000000000001),
    (0.65, 0.00019999999999999998), (0.7, 0.00025), (0.75, 0.0003), (0.8, 0.0001),
    (0.85, 0.00015000000000000001), (0.9, 0.00019999999999999998), (0.95, 0.00025), (1, 0.0003),
    (1.05, 0.0001), (1.1, 0.00015000000000000001), (1.15, 0.00019999999999999998), (1.2, 0.00025),
    (1.25, 0.0003), (1.3, 0.0001), (1.35, 0.00015000000000000001), (1.4, 0.00019999999999999998),
    (1.45, 0.00025), (1.5, 0.0003), (1.55, 0.0001), (1.6, 0.00015000000000000001),
    (1.65, 0.00019999999999999998), (1.7, 0.00025), (1.75, 0.0003), (1.8, 0.0001),
    (1.85, 0.00015000000000000001), (1.9, 0.00019999999999999998), (1.95, 0.00025), (2, 0.0003),
    (2.05, 0.0001), (2.1, 0.00015000000000000001), (2.15, 0.00019999999999999998), (2.2, 0.00025),
    (2.25, 0.0003), (2.3, 0.0001), (2.35, 0.00015000000000000001), (2.4, 0.00019999999999999998),
    (2.45, 0.00025), (2.5, 0.0003),
]

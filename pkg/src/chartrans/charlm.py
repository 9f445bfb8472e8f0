"""Character n-gram language model with Witten-Bell smoothing, prefix
scoring, and cumulative bin features.

The model is trained on a list of word types (duplicates ignored).  Each
conditional interpolates the maximum-likelihood estimate with the
next-lower order, weighting the backoff by the number of distinct
continuations seen after the history; the recursion bottoms out in a
uniform distribution over the alphabet plus the end sentinel.  Scores are
per-transition log10 likelihoods, so they are comparable across prefix
lengths during incremental decoding.
"""

import math
from dataclasses import dataclass
from statistics import mean, pstdev

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


class CharLM:
    def __init__(self, order, alphabet, tables):
        self.order = order
        self.alphabet = frozenset(alphabet)
        # tables[m] maps a length-m history tuple to {symbol: count}.
        self.tables = tables
        self._sums = [
            {h: sum(c.values()) for h, c in table.items()} for table in tables
        ]
        # Uniform base mass shared by every symbol, end sentinel, and UNK.
        self._base = 1.0 / (len(self.alphabet) + 1)

    def _map(self, sym):
        if sym in self.alphabet or sym in (BOS, EOS):
            return sym
        return UNK

    def prob(self, history, nxt):
        """Interpolated Witten-Bell probability of nxt after history."""
        k = self.order - 1
        h = tuple(self._map(s) for s in (tuple(history)[-k:] if k else ()))
        w = self._map(nxt)
        return self._prob(h, w)

    def _prob(self, h, w):
        m = len(h)
        counts = self.tables[m].get(h)
        if counts is None:
            # Unseen history: fall through to the lower order directly.
            return self._prob(h[1:], w) if m > 0 else self._base
        lower = self._prob(h[1:], w) if m > 0 else self._base
        distinct = len(counts)
        return (counts.get(w, 0) + distinct * lower) / (
            self._sums[m][h] + distinct
        )

    def logprob(self, history, nxt):
        return math.log10(self.prob(history, nxt))


def train_charlm(words, order):
    """Collect type-based n-gram counts over begin/end-padded words."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    words = list(dict.fromkeys(tuple(w) for w in words))
    if not words:
        raise ValueError("empty training word list")
    alphabet = {sym for w in words for sym in w}
    tables = [{} for _ in range(order)]
    for w in words:
        seq = (BOS,) * (order - 1) + w + (EOS,)
        for i in range(order - 1, len(seq)):
            nxt = seq[i]
            for m in range(order):
                h = seq[i - m : i]
                slot = tables[m].setdefault(h, {})
                slot[nxt] = slot.get(nxt, 0) + 1
    return CharLM(order, alphabet, tables)


def score_prefix(lm, prefix, complete=False):
    """Normalized log10 likelihood of a prefix: the mean over its
    transitions, including the end transition iff complete."""
    if not prefix:
        raise ValueError("cannot score an empty prefix")
    logsum, n = extend_score(lm, 0.0, (), prefix)
    if complete:
        logsum += lm.logprob((BOS,) * (lm.order - 1) + tuple(prefix), EOS)
        n += 1
    return logsum / n


def extend_score(lm, logsum, prefix, suffix):
    """Add the transitions of suffix (appended after prefix) to a running
    log10 sum.  Summation order matches score_prefix exactly, so
    incremental decoding reproduces from-scratch scores bit for bit."""
    padded = [BOS] * (lm.order - 1) + list(prefix)
    for sym in suffix:
        logsum += lm.logprob(padded, sym)
        padded.append(sym)
    return logsum, len(prefix) + len(suffix)


@dataclass(frozen=True)
class BinConfig:
    """Score thresholds (strictly decreasing) with the corpus mean and
    standard deviation they were derived from."""

    thresholds: tuple
    mu: float
    sigma: float

    def __post_init__(self):
        if any(
            a <= b for a, b in zip(self.thresholds, self.thresholds[1:])
        ):
            raise ValueError("thresholds must be strictly decreasing")

    @property
    def catch_all(self):
        return len(self.thresholds)


def make_bins(lm, words, spread=3, step=0.5):
    """Thresholds spanning a normal distribution around the mean word
    score: mu + k * step * sigma for k = +spread..-spread."""
    words = list(dict.fromkeys(tuple(w) for w in words))
    if not words:
        raise ValueError("empty word list")
    scores = [score_prefix(lm, w, complete=True) for w in words]
    mu = mean(scores)
    sigma = pstdev(scores)
    if sigma == 0.0:
        return BinConfig((mu,), mu, sigma)
    thresholds = tuple(
        mu + k * step * sigma for k in range(spread, -spread - 1, -1)
    )
    return BinConfig(thresholds, mu, sigma)


def lm_bin_features(score, bins):
    """Indices of all thresholds at or below the score (cumulative); the
    catch-all index alone when the score is under every threshold."""
    fired = {j for j, t in enumerate(bins.thresholds) if t <= score}
    return fired if fired else {bins.catch_all}


def save_charlm(lm, path):
    with open(path, "w", encoding="utf-8") as out:
        out.write(f"#charlm\torder={lm.order}\n")
        out.write("#alphabet\t" + " ".join(sorted(lm.alphabet)) + "\n")
        for m, table in enumerate(lm.tables):
            for h in sorted(table):
                for sym, count in sorted(table[h].items()):
                    out.write(f"{m}\t{' '.join(h)}\t{sym}\t{count}\n")


def load_charlm(path):
    with open(path, encoding="utf-8") as src:
        header = src.readline().strip()
        if not header.startswith("#charlm"):
            raise ValueError(f"{path}: not a charlm file")
        order = int(header.split("order=")[1])
        alpha_line = src.readline().strip()
        alphabet = set(alpha_line.split("\t")[1].split()) if "\t" in alpha_line else set()
        tables = [{} for _ in range(order)]
        for line in src:
            if not line.strip():
                continue
            m, h, sym, count = line.rstrip("\n").split("\t")
            slot = tables[int(m)].setdefault(tuple(h.split()), {})
            slot[sym] = int(count)
    return CharLM(order, alphabet, tables)

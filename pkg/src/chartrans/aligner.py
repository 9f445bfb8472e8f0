"""Unsupervised EM many-to-many alignment and two-pass precision alignment.

The standard aligner links source substrings (up to max_x symbols) with
target substrings (up to max_y symbols), optionally allowing deletions
(source substring to nothing) and insertions (nothing to target
substring), and trains link probabilities by EM over the joint
likelihood of all monotone alignments.

Precision alignment runs two passes: a strict 1-1 alignment with nulls
on either side, then a re-alignment of the padded output in which every
source-side null must merge into an adjacent substitution, using the
insertion-merging recurrence.  All charts store log-domain values;
probabilities are recovered on read.
"""

import logging
import math
from dataclasses import dataclass

from .core import NULL, TrainingPair

log = logging.getLogger(__name__)

NEG_INF = float("-inf")


@dataclass(frozen=True)
class AlignParams:
    max_x: int = 2
    max_y: int = 2
    allow_deletion: bool = True
    allow_insertion: bool = False
    max_iterations: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if self.max_x < 1 or self.max_y < 1:
            raise ValueError("substring limits must be >= 1")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")

    def moves(self):
        """Admissible (source length, target length) steps."""
        out = []
        for i in range(self.max_x + 1):
            for j in range(self.max_y + 1):
                if i == 0 and j == 0:
                    continue
                if i == 0 and not self.allow_insertion:
                    continue
                if j == 0 and not self.allow_deletion:
                    continue
                out.append((i, j))
        return out


ONE_TO_ONE = AlignParams(
    max_x=1, max_y=1, allow_deletion=True, allow_insertion=True
)


class DeltaTable:
    """Joint substring-pair probabilities; the aligner's parameter set."""

    def __init__(self, probs):
        self.probs = {}
        self._logs = {}
        for key, p in probs.items():
            if p < 0:
                raise ValueError(f"negative probability for {key}")
            if p > 0:
                self.probs[key] = p
                self._logs[key] = math.log(p)

    def prob(self, src, tgt):
        return self.probs.get((src, tgt), 0.0)

    def logp(self, src, tgt):
        return self._logs.get((src, tgt), NEG_INF)

    def total(self):
        return sum(self.probs.values())

    def __len__(self):
        return len(self.probs)

    def __contains__(self, key):
        return key in self.probs

    @classmethod
    def uniform(cls, pairs, params):
        """Uniform over every substring pair co-occurring in some training
        pair under the given limits (plus deletions/insertions if allowed)."""
        keys = set()
        for pair in pairs:
            x, y = pair.source, pair.target
            for i in range(len(x)):
                for di in range(1, params.max_x + 1):
                    if i + di > len(x):
                        break
                    s = x[i : i + di]
                    if params.allow_deletion:
                        keys.add((s, ()))
                    for j in range(len(y)):
                        for dj in range(1, params.max_y + 1):
                            if j + dj > len(y):
                                break
                            keys.add((s, y[j : j + dj]))
            if params.allow_insertion:
                for j in range(len(y)):
                    for dj in range(1, params.max_y + 1):
                        if j + dj > len(y):
                            break
                        keys.add(((), y[j : j + dj]))
        if not keys:
            return cls({})
        p = 1.0 / len(keys)
        return cls({k: p for k in keys})


class Chart:
    """(T+1) x (V+1) table of monotone path sums, stored as logs."""

    def __init__(self, rows, cols):
        self.rows = rows
        self.cols = cols
        self.log = [[NEG_INF] * cols for _ in range(rows)]

    def value(self, t, v):
        lv = self.log[t][v]
        return math.exp(lv) if lv > NEG_INF else 0.0

    def corner(self):
        return self.value(self.rows - 1, self.cols - 1)

    def log_corner(self):
        return self.log[self.rows - 1][self.cols - 1]


def _logsum(values):
    m = max(values)
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(sum(math.exp(v - m) for v in values))


@dataclass(frozen=True)
class AlignmentLink:
    source: tuple
    target: tuple

    def __post_init__(self):
        if not self.source and not self.target:
            raise ValueError("link with both sides empty")


@dataclass(frozen=True)
class Alignment:
    links: tuple
    likelihood: float = 0.0

    def source(self):
        return tuple(s for link in self.links for s in link.source)

    def target(self):
        return tuple(t for link in self.links for t in link.target)


def forward(x, y, delta, params):
    """Sum over all admissible monotone alignments; alpha(T, V) is the
    total likelihood."""
    T, V = len(x), len(y)
    chart = Chart(T + 1, V + 1)
    chart.log[0][0] = 0.0
    moves = params.moves()
    for t in range(T + 1):
        for v in range(V + 1):
            if t == 0 and v == 0:
                continue
            terms = []
            for i, j in moves:
                if i > t or j > v:
                    continue
                prev = chart.log[t - i][v - j]
                if prev == NEG_INF:
                    continue
                ld = delta.logp(x[t - i : t], y[v - j : v])
                if ld == NEG_INF:
                    continue
                terms.append(prev + ld)
            if terms:
                chart.log[t][v] = _logsum(terms)
    return chart


def backward(x, y, delta, params):
    """Mirror of forward: beta(t, v) sums suffix paths; beta(0, 0) equals
    alpha(T, V)."""
    T, V = len(x), len(y)
    chart = Chart(T + 1, V + 1)
    chart.log[T][V] = 0.0
    moves = params.moves()
    for t in range(T, -1, -1):
        for v in range(V, -1, -1):
            if t == T and v == V:
                continue
            terms = []
            for i, j in moves:
                if t + i > T or v + j > V:
                    continue
                nxt = chart.log[t + i][v + j]
                if nxt == NEG_INF:
                    continue
                ld = delta.logp(x[t : t + i], y[v : v + j])
                if ld == NEG_INF:
                    continue
                terms.append(nxt + ld)
            if terms:
                chart.log[t][v] = _logsum(terms)
    return chart


def _estep_pair(x, y, delta, params, gamma):
    """Accumulate expected link counts for one pair; returns its log-likelihood."""
    alpha = forward(x, y, delta, params)
    ll = alpha.log_corner()
    if ll == NEG_INF:
        return NEG_INF
    beta = backward(x, y, delta, params)
    moves = params.moves()
    for t in range(len(x) + 1):
        for v in range(len(y) + 1):
            b = beta.log[t][v]
            if b == NEG_INF:
                continue
            for i, j in moves:
                if i > t or j > v:
                    continue
                a = alpha.log[t - i][v - j]
                if a == NEG_INF:
                    continue
                key = (x[t - i : t], y[v - j : v])
                ld = delta.logp(*key)
                if ld == NEG_INF:
                    continue
                gamma[key] = gamma.get(key, 0.0) + math.exp(a + ld + b - ll)
    return ll


def _em_loop(pairs, init, params, estep, history=None):
    """Shared EM shell: iterate E/M until the relative log-likelihood
    change drops below tol.  Unalignable pairs are excluded with a warning
    on the first iteration.  history, when given, collects one
    (log-likelihood, delta total mass) entry per iteration."""
    delta = init
    active = list(range(len(pairs)))
    prev_ll = None
    for iteration in range(params.max_iterations):
        gamma = {}
        total_ll = 0.0
        kept = []
        for idx in active:
            ll = estep(pairs[idx], delta, gamma)
            if ll == NEG_INF:
                if iteration == 0:
                    log.warning("pair %d cannot be aligned; excluded", idx)
                    continue
                raise RuntimeError(f"pair {idx} became unalignable mid-EM")
            kept.append(idx)
            total_ll += ll
        active = kept
        total = sum(gamma.values())
        if total <= 0:
            break
        delta = DeltaTable({k: v / total for k, v in gamma.items()})
        if history is not None:
            history.append((total_ll, delta.total()))
        if prev_ll is not None:
            rel = abs(total_ll - prev_ll) / max(abs(prev_ll), 1e-300)
            if rel < params.tol:
                prev_ll = total_ll
                break
        prev_ll = total_ll
    return delta, active


def em_train(pairs, params, history=None):
    """EM over the joint likelihood of all admissible monotone alignments."""
    init = DeltaTable.uniform(pairs, params)

    def estep(pair, delta, gamma):
        return _estep_pair(pair.source, pair.target, delta, params, gamma)

    delta, _ = _em_loop(pairs, init, params, estep, history)
    return delta


def _link_key(link):
    # Shorter source spans first, then lexicographic target, then source.
    return (len(link.source), link.target, link.source)


def viterbi_nbest(x, y, delta, params, n):
    """N-best max-product alignments, best first.

    Ties break toward shorter source spans, then lexicographic target
    spans.  Returns fewer than n alignments when fewer paths exist.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    T, V = len(x), len(y)
    moves = params.moves()
    # Each cell holds up to n partial paths as (neg log score, tiebreak, links).
    cells = [[None] * (V + 1) for _ in range(T + 1)]
    cells[0][0] = [(0.0, (), ())]
    for t in range(T + 1):
        for v in range(V + 1):
            if t == 0 and v == 0:
                continue
            entries = []
            for i, j in moves:
                if i > t or j > v:
                    continue
                prev = cells[t - i][v - j]
                if not prev:
                    continue
                ld = delta.logp(x[t - i : t], y[v - j : v])
                if ld == NEG_INF:
                    continue
                link = AlignmentLink(x[t - i : t], y[v - j : v])
                for neg, key, links in prev:
                    entries.append(
                        (neg - ld, key + (_link_key(link),), links + (link,))
                    )
            if entries:
                entries.sort(key=lambda e: (e[0], e[1]))
                cells[t][v] = entries[:n]
    goal = cells[T][V]
    if not goal:
        return []
    return [
        Alignment(links=links, likelihood=math.exp(-neg))
        for neg, _, links in goal
    ]


def pass1_align(pairs, params=None):
    """First precision pass: strict 1-1 alignment with nulls on either side.

    Returns equal-length padded pairs where insertion links contribute "_"
    on the source and deletion links contribute "_" on the target.
    Unalignable pairs are dropped with a warning.
    """
    padded = [p for _, p in _pass1_indexed(pairs, params)]
    return padded


def _pass1_indexed(pairs, params=None):
    params = params or ONE_TO_ONE
    delta = em_train(pairs, params)
    out = []
    for idx, pair in enumerate(pairs):
        best = viterbi_nbest(pair.source, pair.target, delta, params, 1)
        if not best:
            log.warning("pair %d cannot be aligned in pass 1; excluded", idx)
            continue
        src, tgt = [], []
        for link in best[0].links:
            src.append(link.source[0] if link.source else NULL)
            tgt.append(link.target[0] if link.target else NULL)
        out.append((idx, TrainingPair(tuple(src), tuple(tgt))))
    return out


def _null_counters(x):
    """Per-position CI (nulls since the last substitution, inclusive of the
    current one) and PI (nulls immediately before that substitution), using
    the scan order of the insertion-merging recurrence.  1-based position 0
    is the start-of-word cell."""
    T = len(x)
    ci = [0] * (T + 1)
    pi = [0] * (T + 1)
    cur_ci, cur_pi = 0, 0
    for t in range(T + 1):
        if t > 0 and x[t - 1] == NULL:
            cur_ci += 1
        else:
            cur_pi = cur_ci
            cur_ci = 0
        ci[t], pi[t] = cur_ci, cur_pi
    return ci, pi


def _strip(span):
    return tuple(s for s in span if s != NULL)


def forward_insertion_merging(x, y, delta):
    """Forward recurrence over padded equal-length sequences in which
    source-side nulls merge into adjacent substitutions.

    Cells whose source prefix is entirely nulls (t - CI == 0) hold 1, the
    base for merging leading insertions rightward.  Elsewhere
    alpha(t, v) sums, over k = 0..PI, the probability of the span ending
    at (t, v) that absorbs the CI trailing nulls plus k nulls from before
    the last substitution, times alpha at the cell before that span.
    Null tokens are dropped when looking up span probabilities.
    """
    if len(x) != len(y):
        raise ValueError(f"padded lengths differ: {len(x)} vs {len(y)}")
    T = len(x)
    ci, pi = _null_counters(x)
    chart = Chart(T + 1, T + 1)
    for t in range(T + 1):
        for v in range(T + 1):
            if t - ci[t] == 0:
                chart.log[t][v] = 0.0
                continue
            if t > 0 and v > 0:
                terms = []
                for k in range(pi[t] + 1):
                    start = t - ci[t] - k - 1
                    if v - ci[t] - k - 1 < 0:
                        continue
                    prev = chart.log[start][v - ci[t] - k - 1]
                    if prev == NEG_INF:
                        continue
                    ld = delta.logp(
                        _strip(x[start:t]), _strip(y[v - ci[t] - k - 1 : v])
                    )
                    if ld == NEG_INF:
                        continue
                    terms.append(prev + ld)
                if terms:
                    chart.log[t][v] = _logsum(terms)
    return chart


def _merge_terms(x, y):
    """Diagonal span terms for the insertion-merging lattice.

    For each 1-based position t, lists (base cell, source span, target
    span) triples with nulls stripped.  Cells inside a leading null run
    get no terms: a leading run must merge rightward in full, so only the
    term reaching back to cell 0 survives, which keeps every path covering
    the whole target.
    """
    T = len(x)
    ci, pi = _null_counters(x)
    terms = [[] for _ in range(T + 1)]
    for t in range(1, T + 1):
        if t - ci[t] == 0:
            continue
        for k in range(pi[t] + 1):
            start = t - ci[t] - k - 1
            if start > 0 and start - ci[start] == 0:
                # Base inside a leading null run: target prefix would be dropped.
                continue
            terms[t].append((start, _strip(x[start:t]), _strip(y[start:t])))
    return terms


def _merge_estep(padded, delta, gamma):
    x, _y = padded.source, padded.target
    terms = _merge_terms(x, padded.target)
    T = len(x)
    fwd = [NEG_INF] * (T + 1)
    fwd[0] = 0.0
    for t in range(1, T + 1):
        vals = [
            fwd[b] + delta.logp(s, u)
            for b, s, u in terms[t]
            if fwd[b] > NEG_INF and delta.logp(s, u) > NEG_INF
        ]
        if vals:
            fwd[t] = _logsum(vals)
    ll = fwd[T]
    if ll == NEG_INF:
        return NEG_INF
    bwd = [NEG_INF] * (T + 1)
    bwd[T] = 0.0
    for t in range(T, 0, -1):
        if bwd[t] == NEG_INF:
            continue
        for b, s, u in terms[t]:
            ld = delta.logp(s, u)
            if ld == NEG_INF or fwd[b] == NEG_INF:
                continue
            bwd[b] = _logsum([bwd[b], ld + bwd[t]])
            gamma[(s, u)] = gamma.get((s, u), 0.0) + math.exp(
                fwd[b] + ld + bwd[t] - ll
            )
    return ll


def _merge_uniform(padded_pairs):
    keys = set()
    for pair in padded_pairs:
        for cell in _merge_terms(pair.source, pair.target):
            for _, s, u in cell:
                keys.add((s, u))
    if not keys:
        return DeltaTable({})
    p = 1.0 / len(keys)
    return DeltaTable({k: p for k in keys})


def _merge_decode(x, y, delta):
    """Max-product decode of the merging lattice; smaller k (fewer merged
    insertions) wins ties.  Returns links or None when no path covers the
    pair."""
    terms = _merge_terms(x, y)
    T = len(x)
    best = [NEG_INF] * (T + 1)
    back = [None] * (T + 1)
    best[0] = 0.0
    for t in range(1, T + 1):
        # Terms are generated in increasing k order; strict > keeps the
        # earliest (minimal merge) on ties.
        for b, s, u in terms[t]:
            if best[b] == NEG_INF:
                continue
            ld = delta.logp(s, u)
            if ld == NEG_INF:
                continue
            score = best[b] + ld
            if score > best[t]:
                best[t] = score
                back[t] = (b, s, u)
    if best[T] == NEG_INF:
        return None, NEG_INF
    links = []
    t = T
    while t > 0:
        b, s, u = back[t]
        links.append(AlignmentLink(s, u))
        t = b
    links.reverse()
    return tuple(links), best[T]


def precision_align(pairs, p1=None, p2=None):
    """Two-pass precision alignment.

    Pass 1 aligns 1-1 with nulls on either side; pass 2 re-estimates span
    probabilities with EM over the insertion-merging lattice and decodes
    the max-product merge.  Output links never have an empty source span;
    target-side nulls come through as deletion links.
    """
    p2 = p2 or AlignParams(max_x=1, max_y=1)
    indexed = _pass1_indexed(pairs, p1)
    if not indexed:
        return []
    padded = [p for _, p in indexed]
    delta, active = _em_loop(
        padded, _merge_uniform(padded), p2,
        lambda pair, d, g: _merge_estep(pair, d, g),
    )
    alignments = []
    active_set = set(active)
    for pos, (idx, pair) in enumerate(indexed):
        if pos not in active_set:
            continue
        links, score = _merge_decode(pair.source, pair.target, delta)
        if links is None:
            log.warning("pair %d cannot be decoded in pass 2; excluded", idx)
            continue
        alignments.append(Alignment(links=links, likelihood=math.exp(score)))
    return alignments


def baseline_align(pairs, params=None):
    """Single-pass many-to-many alignment (the 2-2-with-deletions default):
    EM then 1-best decode per pair."""
    params = params or AlignParams()
    delta = em_train(pairs, params)
    alignments = []
    for idx, pair in enumerate(pairs):
        best = viterbi_nbest(pair.source, pair.target, delta, params, 1)
        if not best:
            log.warning("pair %d cannot be aligned; excluded", idx)
            continue
        alignments.append(best[0])
    return alignments


LINK_SEP = "}"
SPAN_JOIN = "|"


def format_alignment(alignment):
    """One pair per line: links space-separated as "SRC}TGT" with "|"
    joining multi-symbol spans and empty spans printed as "_".

    Symbols containing the separators cannot round-trip through this
    format and are rejected rather than silently corrupted."""
    parts = []
    for link in alignment.links:
        for sym in link.source + link.target:
            if LINK_SEP in sym or SPAN_JOIN in sym:
                raise ValueError(
                    f"symbol {sym!r} collides with alignment file separators"
                )
        src = SPAN_JOIN.join(link.source) if link.source else NULL
        tgt = SPAN_JOIN.join(link.target) if link.target else NULL
        parts.append(f"{src}{LINK_SEP}{tgt}")
    return " ".join(parts)


def parse_alignment(line):
    links = []
    for part in line.split():
        if part.count(LINK_SEP) != 1:
            raise ValueError(f"bad link {part!r}")
        src, tgt = part.split(LINK_SEP)
        links.append(
            AlignmentLink(
                () if src == NULL else tuple(src.split(SPAN_JOIN)),
                () if tgt == NULL else tuple(tgt.split(SPAN_JOIN)),
            )
        )
    return Alignment(links=tuple(links))


def write_alignments(alignments, stream):
    for a in alignments:
        stream.write(format_alignment(a) + "\n")


def read_alignments(stream):
    lines = stream.splitlines() if isinstance(stream, str) else stream
    return [parse_alignment(line) for line in lines if line.strip()]

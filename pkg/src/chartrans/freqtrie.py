"""Prefix trie over corpus word counts, unigram bin features, and
probability-ratio corpus pruning."""

from dataclasses import dataclass, field


@dataclass
class Lexicon:
    """Word-to-count map; words are symbol tuples, counts positive."""

    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        for w, c in self.counts.items():
            if c < 1:
                raise ValueError(f"non-positive count for {w}")

    @property
    def total_tokens(self):
        return sum(self.counts.values())


def parse_lexicon(stream):
    """Parse "WORD<TAB>COUNT" lines; a bare "WORD" line means count 1.
    Words are split into characters.  Repeated words accumulate."""
    counts = {}
    lines = stream.splitlines() if isinstance(stream, str) else stream
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if "\t" in line:
            word, count = line.split("\t", 1)
            count = int(count)
        else:
            word, count = line, 1
        key = tuple(word)
        counts[key] = counts.get(key, 0) + count
    return Lexicon(counts)


def serialize_lexicon(lex):
    return "".join(
        f"{''.join(w)}\t{c}\n" for w, c in sorted(lex.counts.items())
    )


class TrieNode:
    __slots__ = ("children", "prefix_count", "word_count")

    def __init__(self):
        self.children = {}
        self.prefix_count = 0
        self.word_count = 0


def build_trie(lex):
    """Trie whose nodes carry the summed count of every word passing
    through them; word-final nodes also carry the exact word count."""
    root = TrieNode()
    root.prefix_count = lex.total_tokens
    for word, count in lex.counts.items():
        node = root
        for sym in word:
            child = node.children.get(sym)
            if child is None:
                child = node.children[sym] = TrieNode()
            node = child
            node.prefix_count += count
        node.word_count += count
    return root


def walk(root, prefix):
    """Node reached by prefix, or None if the trie has no such path."""
    node = root
    for sym in prefix:
        node = node.children.get(sym)
        if node is None:
            return None
    return node


def prefix_count(root, prefix, end_of_word=False):
    """Summed count of words extending prefix; with end_of_word, the
    count of the exact word instead.  0 when absent."""
    node = walk(root, prefix)
    if node is None:
        return 0
    return node.word_count if end_of_word else node.prefix_count


def trie_words(root):
    """Reconstruct the word-count map by walking every path."""
    out = {}

    def visit(node, prefix):
        if node.word_count:
            out[prefix] = node.word_count
        for sym, child in sorted(node.children.items()):
            visit(child, prefix + (sym,))

    visit(root, ())
    return out


def prune_lexicon(target, english):
    """Drop every word whose relative frequency in the English lexicon
    strictly exceeds its relative frequency in the target lexicon.  Words
    the English lexicon has never seen are always kept."""
    total_en = english.total_tokens
    total_tgt = target.total_tokens
    if total_en == 0 or total_tgt == 0:
        return Lexicon(dict(target.counts))
    kept = {
        w: c
        for w, c in target.counts.items()
        if english.counts.get(w, 0) / total_en <= c / total_tgt
    }
    return Lexicon(kept)


@dataclass(frozen=True)
class FreqBinConfig:
    """Count thresholds, strictly increasing, all >= 1."""

    thresholds: tuple = (1, 10, 100, 1000, 10000, 100000, 1000000)

    def __post_init__(self):
        if not self.thresholds or self.thresholds[0] < 1:
            raise ValueError("thresholds must start at >= 1")
        if any(a >= b for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly increasing")

    @property
    def zero_feature(self):
        return len(self.thresholds)


def freq_bin_features(count, bins):
    """Indices of all thresholds at or below the count (cumulative); the
    dedicated zero feature alone when the count is 0."""
    if count < 0:
        raise ValueError(f"negative count {count}")
    if count == 0:
        return {bins.zero_feature}
    return {j for j, t in enumerate(bins.thresholds) if t <= count}

"""Semi-Markov discriminative transducer.

Rules rewrite a non-empty source span into a target span (possibly
empty).  Decoding tiles the source with rules under a beam, scoring each
step with sparse indicator features: the rule itself, source context
n-grams around the application point, target n-grams of the growing
output, joint rule n-grams, a copy indicator, and (when corpus resources
are attached) cumulative language-model and frequency bin features
computed on the output prefix.  Training is online large-margin (MIRA)
against the k-best list, with optional weight averaging.

Feature keys are tuples (template tag first); they serialize to JSON
arrays in model files, so arbitrary symbols never collide.
"""

import json
import logging
from dataclasses import dataclass, field

from .charlm import EOS, BOS, extend_score, lm_bin_features, BinConfig
from .core import TrainingPair
from .freqtrie import FreqBinConfig, freq_bin_features, walk

log = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class Rule:
    source: tuple
    target: tuple

    def __post_init__(self):
        if not self.source:
            raise ValueError("rule with empty source span")


@dataclass(frozen=True)
class FeatureConfig:
    context_window: int = 2
    max_source_ngram: int = 2
    target_order: int = 2
    joint_order: int = 2
    copy_feature: bool = True
    lm_features: bool = True
    freq_features: bool = True

    def __post_init__(self):
        if self.context_window < 0:
            raise ValueError("context window must be >= 0")
        if min(self.max_source_ngram, self.target_order, self.joint_order) < 1:
            raise ValueError("n-gram orders must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    mira_c: float = 0.05
    nbest: int = 10
    beam: int = 40
    averaging: bool = True
    loss: str = "levenshtein"

    def __post_init__(self):
        if self.mira_c <= 0:
            raise ValueError("C must be positive")
        if self.nbest < 1 or self.beam < 1:
            raise ValueError("nbest and beam must be >= 1")


@dataclass
class Candidate:
    output: tuple
    derivation: tuple
    score: float
    features: dict


@dataclass
class Model:
    weights: dict
    rules: frozenset
    config: FeatureConfig
    lm: object = None
    lm_bins: BinConfig = None
    trie: object = None
    freq_bins: FreqBinConfig = None
    _index: dict = field(default=None, repr=False)
    _max_src: int = field(default=0, repr=False)

    def rule_index(self):
        if self._index is None:
            index = {}
            for rule in sorted(self.rules):
                index.setdefault(rule.source, []).append(rule)
            self._index = index
            self._max_src = max((len(s) for s in index), default=0)
        return self._index

    @property
    def uses_lm(self):
        return self.config.lm_features and self.lm is not None and self.lm_bins is not None

    @property
    def uses_freq(self):
        return self.config.freq_features and self.trie is not None and self.freq_bins is not None


def extract_rules(alignments):
    """Rule inventory and gold derivations from alignment links.

    Every link becomes a rule (deletion links become empty-target rules);
    insertion links are rejected, since no rule may have an empty source.
    """
    rules = set()
    golds = []
    for alignment in alignments:
        deriv = []
        for link in alignment.links:
            if not link.source:
                raise ValueError(f"insertion link {link} cannot become a rule")
            rule = Rule(link.source, link.target)
            rules.add(rule)
            deriv.append(rule)
        golds.append(tuple(deriv))
    return frozenset(rules), golds


_UNSET = object()


def _step_features(x, pos, rule, out, prev_rules, model, lm_sum=None, node=_UNSET):
    """Features for applying rule at pos given the output so far.

    lm_sum and node carry incremental decoder state (running log10 sum of
    the output's transitions; trie node reached by the output).  When
    omitted they are recomputed from scratch, which yields bit-identical
    results because summation order matches.
    """
    cfg = model.config
    feats = {}

    def fire(key, value=1.0):
        feats[key] = feats.get(key, 0.0) + value

    fire(("R", rule.source, rule.target))

    c = cfg.context_window
    for off in range(-c, c + 1):
        for length in range(1, cfg.max_source_ngram + 1):
            a = pos + off
            if a < 0 or a + length > len(x) or off + length - 1 > c:
                continue
            fire(("C", off, x[a : a + length], rule.source, rule.target))

    new_out = out + rule.target
    for m in range(1, cfg.target_order + 1):
        if len(new_out) >= m:
            fire(("T", new_out[-m:]))

    seq = prev_rules + (rule,)
    for j in range(1, cfg.joint_order + 1):
        if len(seq) >= j:
            fire(("J", tuple((r.source, r.target) for r in seq[-j:])))

    if cfg.copy_feature and rule.source == rule.target:
        fire(("COPY",))

    final = pos + len(rule.source) == len(x)
    new_sum = lm_sum
    if model.uses_lm and new_out:
        if new_sum is None:
            new_sum, _ = extend_score(model.lm, 0.0, (), out)
        new_sum, _ = extend_score(model.lm, new_sum, out, rule.target)
        total, n = new_sum, len(new_out)
        if final:
            total = total + model.lm.logprob(
                (BOS,) * (model.lm.order - 1) + new_out, EOS
            )
            n += 1
        for idx in sorted(lm_bin_features(total / n, model.lm_bins)):
            fire(("LMB", idx))

    new_node = node
    if model.uses_freq:
        if new_node is _UNSET:
            new_node = walk(model.trie, out)
        if new_node is not None:
            new_node = walk(new_node, rule.target)
        if new_out:
            count = 0
            if new_node is not None:
                count = new_node.word_count if final else new_node.prefix_count
            for idx in sorted(freq_bin_features(count, model.freq_bins)):
                fire(("FQB", idx))

    return feats, new_sum, new_node


def featurize_step(x, pos, rule, target_so_far, prev_rules, model):
    """Feature vector for applying rule at pos; see _step_features."""
    feats, _, _ = _step_features(
        tuple(x), pos, rule, tuple(target_so_far), tuple(prev_rules), model
    )
    return feats


def _dot(weights, feats):
    return sum(weights.get(k, 0.0) * v for k, v in feats.items())


def derivation_features(x, derivation, model):
    """Summed step features of a full derivation."""
    feats = {}
    out = ()
    prev = ()
    pos = 0
    for rule in derivation:
        step, _, _ = _step_features(x, pos, rule, out, prev, model)
        for k, v in step.items():
            feats[k] = feats.get(k, 0.0) + v
        out = out + rule.target
        prev = prev + (rule,)
        pos += len(rule.source)
    if pos != len(x):
        raise ValueError("derivation does not tile the source")
    return feats, out


def gold_candidate(x, derivation, model):
    feats, out = derivation_features(x, derivation, model)
    return Candidate(out, tuple(derivation), _dot(model.weights, feats), feats)


def _rules_key(rules):
    return tuple((r.source, r.target) for r in rules)


def decode_nbest(x, model, beam_width, n):
    """Beam n-best decode: distinct outputs, score-descending, ties broken
    by lexicographic output.

    States merge on (source position, last target_order output symbols,
    last joint_order - 1 rules); the symbol window is one longer than the
    highest target n-gram needs after a non-empty emission, so step
    features stay a pure function of the state even across empty-target
    (deletion) rules.  Each state keeps its n best distinct outputs and
    each position keeps its beam_width best states, so with corpus
    features disabled and a beam at least the state count the result
    matches exhaustive enumeration.
    """
    if n < 1 or beam_width < n:
        raise ValueError("need beam >= n >= 1")
    x = tuple(x)
    index = model.rule_index()
    max_src = max(model._max_src, 1)
    cfg = model.config
    m_keep = cfg.target_order
    j_keep = cfg.joint_order - 1
    weights = model.weights

    root = model.trie if model.uses_freq else None
    # item: (score, output, rules, lm_sum, trie_node), slotted by
    # (state key, output) so equal-output items in one state collapse.
    start = (0.0, (), (), 0.0, root)
    beams = [dict() for _ in range(len(x) + 1)]
    beams[0][(((), ()), ())] = start

    def order_key(item):
        return (-item[0], item[1], _rules_key(item[2]))

    for t in range(len(x)):
        if not beams[t]:
            continue
        states = {}
        for (skey, _out), item in beams[t].items():
            states.setdefault(skey, []).append(item)
        for skey in states:
            states[skey].sort(key=order_key)
            del states[skey][n:]
        ranked_states = sorted(
            states.values(), key=lambda items: order_key(items[0])
        )[:beam_width]
        matches = []
        for length in range(1, min(max_src, len(x) - t) + 1):
            matches.extend(index.get(x[t : t + length], ()))
        if not matches:
            matches = [Rule((x[t],), (x[t],))]
        for items in ranked_states:
            for score, out, rules, lm_sum, node in items:
                for rule in matches:
                    feats, new_sum, new_node = _step_features(
                        x, t, rule, out, rules, model, lm_sum, node
                    )
                    new_out = out + rule.target
                    new_rules = rules + (rule,)
                    new_item = (
                        score + _dot(weights, feats),
                        new_out,
                        new_rules,
                        new_sum if new_sum is not None else 0.0,
                        new_node,
                    )
                    skey = (new_out[-m_keep:] if m_keep else (),
                            _rules_key(new_rules[-j_keep:]) if j_keep else ())
                    slot = beams[t + len(rule.source)]
                    old = slot.get((skey, new_out))
                    if old is None or order_key(new_item) < order_key(old):
                        slot[(skey, new_out)] = new_item
    finals = {}
    for item in beams[len(x)].values():
        old = finals.get(item[1])
        if old is None or order_key(item) < order_key(old):
            finals[item[1]] = item
    ranked = sorted(finals.values(), key=order_key)[:n]
    out = []
    for score, output, rules, _, _ in ranked:
        feats, _ = derivation_features(x, rules, model)
        out.append(Candidate(output, rules, score, feats))
    return out


def loss(gold_output, cand_output, kind="levenshtein"):
    """Zero-one or unit-cost symbol edit distance."""
    if kind == "zero-one":
        return 0.0 if tuple(gold_output) == tuple(cand_output) else 1.0
    if kind != "levenshtein":
        raise ValueError(f"unknown loss {kind!r}")
    a, b = tuple(gold_output), tuple(cand_output)
    prev = list(range(len(b) + 1))
    for i, sa in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, sb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (0 if sa == sb else 1),
            )
        prev = cur
    return float(prev[len(b)])


def mira_update(weights, gold, candidates, c, loss_kind="levenshtein", avg=None):
    """Margin-infused update against each violating candidate, in score
    order: step the weights by the smallest tau <= C restoring a margin
    of loss(candidate); an unclipped step makes the constraint tight."""
    for cand in candidates:
        if cand.output == gold.output:
            continue
        diff = {}
        for k, v in gold.features.items():
            diff[k] = diff.get(k, 0.0) + v
        for k, v in cand.features.items():
            d = diff.get(k, 0.0) - v
            if d == 0.0:
                diff.pop(k, None)
            else:
                diff[k] = d
        diff = {k: v for k, v in diff.items() if v != 0.0}
        if not diff:
            continue
        margin = _dot(weights, diff)
        cost = loss(gold.output, cand.output, loss_kind)
        if margin >= cost:
            continue
        sqnorm = sum(v * v for v in diff.values())
        tau = min(c, (cost - margin) / sqnorm)
        for k, v in diff.items():
            weights[k] = weights.get(k, 0.0) + tau * v
            if avg is not None:
                u, step = avg
                u[k] = u.get(k, 0.0) + (step - 1) * tau * v
    return weights


def train(pairs, alignments, cfg=None, feature_config=None, lm=None,
          lm_bins=None, trie=None, freq_bins=None, dev=None, references=None):
    """Online MIRA training over the gold derivations of the alignments.

    pairs may be None (reconstructed from the alignments); when given it
    is checked for coverage.  With dev instances, logs word accuracy
    after every epoch.  Averaging uses lazily-accumulated update
    timestamps, so it costs O(updates), not O(steps x features).
    """
    cfg = cfg or TrainConfig()
    rules, golds = extract_rules(alignments)
    train_pairs = [TrainingPair(a.source(), a.target()) for a in alignments]
    if pairs is not None:
        known = {(p.source, p.target) for p in pairs}
        for tp in train_pairs:
            if (tp.source, tp.target) not in known:
                raise ValueError(f"alignment pair {tp} not among training pairs")
    model = Model(
        weights={}, rules=rules,
        config=feature_config or FeatureConfig(),
        lm=lm, lm_bins=lm_bins, trie=trie, freq_bins=freq_bins,
    )
    u = {}
    step = 0
    for epoch in range(cfg.epochs):
        for pair, deriv in zip(train_pairs, golds):
            step += 1
            candidates = decode_nbest(pair.source, model, cfg.beam, cfg.nbest)
            gold = gold_candidate(pair.source, deriv, model)
            mira_update(
                model.weights, gold, candidates, cfg.mira_c, cfg.loss, (u, step)
            )
        if dev is not None:
            acc = _accuracy(model, dev, cfg.beam)
            log.info("epoch %d dev accuracy %.4f", epoch + 1, acc)
    if cfg.averaging and step > 0:
        model.weights = {
            k: w - u.get(k, 0.0) / step for k, w in model.weights.items()
        }
    return model


def _accuracy(model, instances, beam):
    hits = 0
    for inst in instances:
        cands = decode_nbest(inst.source, model, beam, 1)
        if cands and cands[0].output in inst.references:
            hits += 1
    return hits / len(instances) if instances else 0.0


def _plain(key):
    return [_plain(k) if isinstance(k, tuple) else k for k in key] \
        if isinstance(key, (tuple, list)) else key


def _tupled(key):
    return tuple(_tupled(k) if isinstance(k, list) else k for k in key)


def save_model(model, path, lm_path=None, lexicon_path=None):
    """Text model file: header (feature config, resource references,
    bin thresholds), rule inventory, then KEY<TAB>WEIGHT lines."""
    with open(path, "w", encoding="utf-8") as out:
        out.write("#model\tv1\n")
        out.write("#features\t" + json.dumps(vars(model.config)) + "\n")
        if model.lm_bins is not None:
            out.write("#lmbins\t" + json.dumps({
                "thresholds": list(model.lm_bins.thresholds),
                "mu": model.lm_bins.mu, "sigma": model.lm_bins.sigma,
                "path": lm_path,
            }) + "\n")
        if model.freq_bins is not None:
            out.write("#freqbins\t" + json.dumps({
                "thresholds": list(model.freq_bins.thresholds),
                "path": lexicon_path,
            }) + "\n")
        for rule in sorted(model.rules):
            out.write("#rule\t" + json.dumps(
                [_plain(rule.source), _plain(rule.target)], ensure_ascii=False
            ) + "\n")
        for key in sorted(model.weights, key=repr):
            w = model.weights[key]
            if w != 0.0:
                out.write(json.dumps(_plain(key), ensure_ascii=False) + f"\t{w!r}\n")


def load_model(path, lm=None, trie=None):
    """Read a model file; returns (model, resource_refs) where the refs
    hold any lm/lexicon paths recorded at save time."""
    config = None
    lm_bins = None
    freq_bins = None
    rules = set()
    weights = {}
    refs = {}
    with open(path, encoding="utf-8") as src:
        first = src.readline().rstrip("\n")
        if first != "#model\tv1":
            raise ValueError(f"{path}: not a model file")
        for line in src:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#features\t"):
                config = FeatureConfig(**json.loads(line.split("\t", 1)[1]))
            elif line.startswith("#lmbins\t"):
                blob = json.loads(line.split("\t", 1)[1])
                lm_bins = BinConfig(
                    tuple(blob["thresholds"]), blob["mu"], blob["sigma"]
                )
                refs["lm"] = blob.get("path")
            elif line.startswith("#freqbins\t"):
                blob = json.loads(line.split("\t", 1)[1])
                freq_bins = FreqBinConfig(tuple(blob["thresholds"]))
                refs["lexicon"] = blob.get("path")
            elif line.startswith("#rule\t"):
                src_t, tgt_t = json.loads(line.split("\t", 1)[1])
                rules.add(Rule(tuple(src_t), tuple(tgt_t)))
            else:
                key_json, w = line.split("\t")
                weights[_tupled(json.loads(key_json))] = float(w)
    model = Model(
        weights=weights, rules=frozenset(rules), config=config or FeatureConfig(),
        lm=lm, lm_bins=lm_bins, trie=trie, freq_bins=freq_bins,
    )
    return model, refs


def format_nbest(source, candidates):
    """N-best lines: SOURCE<TAB>RANK<TAB>OUTPUT<TAB>SCORE."""
    src = " ".join(source)
    if not candidates:
        return [f"{src}\t0\t\tNaN"]
    return [
        f"{src}\t{rank}\t{' '.join(c.output)}\t{c.score:.6f}"
        for rank, c in enumerate(candidates, start=1)
    ]

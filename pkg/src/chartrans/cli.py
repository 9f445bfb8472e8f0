"""Command-line front end: align / train / decode / evaluate / prune /
ablate over a flat key = value configuration."""

import argparse
import dataclasses
import hashlib
import logging
import os
import sys
from dataclasses import dataclass

from . import aligner, charlm, core, freqtrie, transducer

log = logging.getLogger("chartrans")


@dataclass
class RunConfig:
    # input/output paths
    pairs: str = ""
    dev: str = ""
    test: str = ""
    wordlist: str = ""
    english_wordlist: str = ""
    outdir: str = "."
    # task adapter
    task: str = "pairs"  # pairs | inflection
    copy_instances: int = 0
    # alignment
    max_x: int = 2
    max_y: int = 2
    allow_deletion: bool = True
    allow_insertion: bool = False
    em_iterations: int = 100
    em_tol: float = 1e-6
    # features
    context_window: int = 2
    max_source_ngram: int = 2
    target_order: int = 2
    joint_order: int = 2
    copy_feature: bool = True
    # corpus resources
    lm_order: int = 4
    freq_thresholds: str = "1,10,100,1000,10000,100000,1000000"
    # training
    epochs: int = 20
    mira_c: float = 0.05
    nbest: int = 10
    beam: int = 40
    averaging: bool = True
    loss: str = "levenshtein"
    # decoding
    decode_nbest: int = 10
    # ablation switches
    disable_lm: bool = False
    disable_freq: bool = False
    disable_precision: bool = False

    def path(self, name):
        return os.path.join(self.outdir, name)

    @property
    def alignment_file(self):
        return self.path("alignments.txt")

    @property
    def model_file(self):
        return self.path("model.txt")

    @property
    def nbest_file(self):
        return self.path("nbest.txt")


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_BOOL = {"true": True, "yes": True, "1": True,
         "false": False, "no": False, "0": False}


def _convert(key, text):
    kind = _FIELDS.get(key)
    if kind is None:
        raise ValueError(f"unknown configuration key {key!r}")
    text = text.strip()
    if kind is bool or kind == "bool":
        if text.lower() not in _BOOL:
            raise ValueError(f"bad boolean for {key}: {text!r}")
        return _BOOL[text.lower()]
    if kind is int or kind == "int":
        return int(text)
    if kind is float or kind == "float":
        return float(text)
    return text


def load_config(path=None, overrides=()):
    cfg = RunConfig()
    if path:
        with open(path, encoding="utf-8") as src:
            for lineno, line in enumerate(src, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, value = (part.strip() for part in line.split("=", 1))
                setattr(cfg, key, _convert(key, value))
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        setattr(cfg, key, _convert(key, value))
    return cfg


def _read(path):
    with open(path, encoding="utf-8") as src:
        return src.read()


def read_training_pairs(cfg):
    text = _read(cfg.pairs)
    if cfg.task == "inflection":
        pairs = core.parse_inflections(text)
    else:
        pairs = core.parse_pairs(text)
    if cfg.copy_instances:
        pairs = core.copy_augment(pairs, cfg.copy_instances)
    return pairs


def read_eval_instances(cfg, path):
    text = _read(path)
    if cfg.task == "inflection":
        return [
            core.EvalInstance(p.source, frozenset([p.target]))
            for p in core.parse_inflections(text)
        ]
    return core.parse_eval(text)


def align_params(cfg):
    return aligner.AlignParams(
        max_x=cfg.max_x, max_y=cfg.max_y,
        allow_deletion=cfg.allow_deletion,
        allow_insertion=cfg.allow_insertion,
        max_iterations=cfg.em_iterations, tol=cfg.em_tol,
    )


def feature_config(cfg):
    return transducer.FeatureConfig(
        context_window=cfg.context_window,
        max_source_ngram=cfg.max_source_ngram,
        target_order=cfg.target_order,
        joint_order=cfg.joint_order,
        copy_feature=cfg.copy_feature,
        lm_features=not cfg.disable_lm,
        freq_features=not cfg.disable_freq,
    )


def train_config(cfg):
    return transducer.TrainConfig(
        epochs=cfg.epochs, mira_c=cfg.mira_c, nbest=cfg.nbest,
        beam=cfg.beam, averaging=cfg.averaging, loss=cfg.loss,
    )


def cmd_align(cfg):
    pairs = read_training_pairs(cfg)
    if cfg.disable_precision:
        alignments = aligner.baseline_align(pairs, align_params(cfg))
    else:
        p1 = aligner.AlignParams(
            1, 1, True, True, cfg.em_iterations, cfg.em_tol
        )
        p2 = aligner.AlignParams(
            1, 1, True, False, cfg.em_iterations, cfg.em_tol
        )
        alignments = aligner.precision_align(pairs, p1, p2)
    os.makedirs(cfg.outdir, exist_ok=True)
    with open(cfg.alignment_file, "w", encoding="utf-8") as out:
        aligner.write_alignments(alignments, out)
    excluded = len(pairs) - len(alignments)
    print(f"aligned {len(alignments)} pairs, excluded {excluded} unalignable")
    return cfg.alignment_file


def _hash_inputs(*parts):
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part if isinstance(part, bytes) else str(part).encode())
        digest.update(b"\x00")
    return digest.hexdigest()[:10]


def load_resources(cfg):
    """Build (or reuse cached) character LM and pruned lexicon from the
    word list; caches live beside the word list, keyed by a content hash."""
    if not cfg.wordlist:
        return None, None, None, None, {}
    raw = _read(cfg.wordlist)
    en_raw = _read(cfg.english_wordlist) if cfg.english_wordlist else ""
    lex = freqtrie.parse_lexicon(raw)
    words = list(lex.counts)

    lm_tag = _hash_inputs(raw, cfg.lm_order, "lm-v1")
    lm_path = f"{cfg.wordlist}.{lm_tag}.lm"
    if os.path.exists(lm_path):
        lm = charlm.load_charlm(lm_path)
    else:
        lm = charlm.train_charlm(words, cfg.lm_order)
        charlm.save_charlm(lm, lm_path)
    lm_bins = charlm.make_bins(lm, words)

    lex_path = cfg.wordlist
    if cfg.english_wordlist:
        tag = _hash_inputs(raw, en_raw, "prune-v1")
        lex_path = f"{cfg.wordlist}.{tag}.plex"
        if os.path.exists(lex_path):
            lex = freqtrie.parse_lexicon(_read(lex_path))
        else:
            lex = freqtrie.prune_lexicon(lex, freqtrie.parse_lexicon(en_raw))
            with open(lex_path, "w", encoding="utf-8") as out:
                out.write(freqtrie.serialize_lexicon(lex))
    trie = freqtrie.build_trie(lex)
    freq_bins = freqtrie.FreqBinConfig(
        tuple(int(t) for t in cfg.freq_thresholds.split(","))
    )
    refs = {"lm": lm_path, "lexicon": lex_path}
    return lm, lm_bins, trie, freq_bins, refs


def cmd_train(cfg):
    with open(cfg.alignment_file, encoding="utf-8") as src:
        alignments = aligner.read_alignments(src)
    if not alignments:
        raise ValueError(f"no alignments in {cfg.alignment_file}")
    lm = lm_bins = trie = freq_bins = None
    refs = {}
    if not (cfg.disable_lm and cfg.disable_freq):
        lm, lm_bins, trie, freq_bins, refs = load_resources(cfg)
    dev = read_eval_instances(cfg, cfg.dev) if cfg.dev else None
    model = transducer.train(
        None, alignments, cfg=train_config(cfg),
        feature_config=feature_config(cfg),
        lm=lm, lm_bins=lm_bins, trie=trie, freq_bins=freq_bins, dev=dev,
    )
    os.makedirs(cfg.outdir, exist_ok=True)
    transducer.save_model(
        model, cfg.model_file,
        lm_path=refs.get("lm"), lexicon_path=refs.get("lexicon"),
    )
    print(f"model written to {cfg.model_file}")
    return cfg.model_file


def load_model(cfg):
    model, refs = transducer.load_model(cfg.model_file)
    if model.config.lm_features and refs.get("lm"):
        model.lm = charlm.load_charlm(refs["lm"])
    if model.config.freq_features and refs.get("lexicon"):
        lex = freqtrie.parse_lexicon(_read(refs["lexicon"]))
        model.trie = freqtrie.build_trie(lex)
    return model


def _sources(cfg, path):
    out = []
    for line in _read(path).splitlines():
        if not line.strip():
            continue
        if cfg.task == "inflection":
            lemma, form, tags = line.split("\t")
            out.append(
                core.inflection_to_pairs(
                    core.word_seq(lemma), tags, core.word_seq(form)
                ).source
            )
        else:
            out.append(core.parse_seq(line.split("\t", 1)[0]))
    return out


def cmd_decode(cfg, input_path=None, output_path=None):
    model = load_model(cfg)
    sources = _sources(cfg, input_path or cfg.test)
    output_path = output_path or cfg.nbest_file
    beam = max(cfg.beam, cfg.decode_nbest)
    with open(output_path, "w", encoding="utf-8") as out:
        for src in sources:
            candidates = transducer.decode_nbest(
                src, model, beam, cfg.decode_nbest
            )
            if not candidates:
                log.warning("no candidates for %s", " ".join(src))
            for line in transducer.format_nbest(src, candidates):
                out.write(line + "\n")
    print(f"n-best lists written to {output_path}")
    return output_path


def read_nbest(path):
    """Group n-best lines back into per-source candidate lists, in file
    order; a rank of 0 or 1 starts a new block."""
    blocks = []
    for line in _read(path).splitlines():
        if not line.strip():
            continue
        src, rank, output, _score = line.split("\t")
        rank = int(rank)
        if rank <= 1:
            blocks.append((tuple(src.split()), []))
        if rank >= 1:
            blocks[-1][1].append(tuple(output.split()) if output else ())
    return blocks


def cmd_evaluate(cfg, nbest_path=None, refs_path=None):
    blocks = read_nbest(nbest_path or cfg.nbest_file)
    instances = read_eval_instances(cfg, refs_path or cfg.test)
    if len(blocks) != len(instances):
        raise ValueError(
            f"{len(blocks)} n-best blocks but {len(instances)} eval instances"
        )
    predictions = [outs[0] if outs else () for _, outs in blocks]
    accuracy = core.word_accuracy(predictions, instances)
    oracle = (
        sum(
            1 for (_, outs), inst in zip(blocks, instances)
            if any(o in inst.references for o in outs)
        ) / len(instances)
        if instances else 0.0
    )
    print(f"accuracy={accuracy:.6f}")
    print(f"oracle={oracle:.6f}")
    os.makedirs(cfg.outdir, exist_ok=True)
    with open(cfg.path("report.txt"), "w", encoding="utf-8") as out:
        out.write(f"accuracy={accuracy:.6f}\noracle={oracle:.6f}\n")
    return accuracy, oracle


def cmd_prune(cfg):
    target = freqtrie.parse_lexicon(_read(cfg.wordlist))
    english = freqtrie.parse_lexicon(_read(cfg.english_wordlist))
    pruned = freqtrie.prune_lexicon(target, english)
    os.makedirs(cfg.outdir, exist_ok=True)
    out_path = cfg.path("pruned_lexicon.txt")
    with open(out_path, "w", encoding="utf-8") as out:
        out.write(freqtrie.serialize_lexicon(pruned))
    print(
        f"kept {len(pruned.counts)} of {len(target.counts)} words -> {out_path}"
    )
    return out_path


ABLATION_VARIANTS = (
    ("full", {}),
    ("-LM", {"disable_lm": True}),
    ("-Freq", {"disable_freq": True}),
    ("-Precision", {"disable_precision": True}),
)


def cmd_ablate(cfg):
    """Run the whole pipeline once per ablation variant on identical data
    and print one accuracy row per variant."""
    results = []
    for name, switches in ABLATION_VARIANTS:
        sub = dataclasses.replace(cfg, **switches)
        sub.outdir = os.path.join(cfg.outdir, name.strip("-").lower() or "full")
        cmd_align(sub)
        cmd_train(sub)
        cmd_decode(sub)
        accuracy, _oracle = cmd_evaluate(sub)
        results.append((name, accuracy))
    width = max(len(name) for name, _ in results)
    print(f"{'system'.ljust(width)}  accuracy")
    for name, accuracy in results:
        print(f"{name.ljust(width)}  {accuracy:.4f}")
    with open(cfg.path("ablation.txt"), "w", encoding="utf-8") as out:
        for name, accuracy in results:
            out.write(f"{name}\t{accuracy:.6f}\n")
    return results


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="chartrans",
        description="character-level string transduction with target-corpus features",
    )
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("align", "train", "decode", "evaluate", "prune", "ablate"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument(
            "--set", dest="overrides", action="append", default=[],
            metavar="KEY=VALUE",
        )
        if name == "decode":
            p.add_argument("--input", default=None)
            p.add_argument("--output", default=None)
        if name == "evaluate":
            p.add_argument("--nbest", default=None)
            p.add_argument("--refs", default=None)
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        cfg = load_config(args.config, args.overrides)
        if args.command == "align":
            cmd_align(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "decode":
            cmd_decode(cfg, args.input, args.output)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.nbest, args.refs)
        elif args.command == "prune":
            cmd_prune(cfg)
        elif args.command == "ablate":
            cmd_ablate(cfg)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

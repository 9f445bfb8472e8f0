import logging
import random

import pytest

from chartrans.cli import (
    RunConfig,
    cmd_ablate,
    cmd_align,
    cmd_decode,
    cmd_evaluate,
    cmd_prune,
    cmd_train,
    load_config,
    main,
    read_nbest,
)
from chartrans.core import parse_pairs
from chartrans.aligner import read_alignments

from toytask import context_pairs

WALK_CORPUS = """\
w ɔ k\tw a l k e d
w\tw
k\tk
ɔ\ta l
ɔ k\ta l k
"""


def write_context_task(tmp_path, seed=5, n_train=60, n_test=25):
    rng = random.Random(seed)
    train_pairs = context_pairs(rng, n_train)
    test_pairs = context_pairs(rng, n_test)
    pairs_file = tmp_path / "pairs.txt"
    pairs_file.write_text(
        "".join(
            " ".join(p.source) + "\t" + " ".join(p.target) + "\n"
            for p in train_pairs
        ),
        encoding="utf-8",
    )
    test_file = tmp_path / "test.txt"
    test_file.write_text(
        "".join(
            " ".join(p.source) + "\t" + " ".join(p.target) + "\n"
            for p in test_pairs
        ),
        encoding="utf-8",
    )
    words = {"".join(p.target) for p in train_pairs + test_pairs}
    words_file = tmp_path / "words.txt"
    words_file.write_text("\n".join(sorted(words)) + "\n", encoding="utf-8")
    cfg = RunConfig(
        pairs=str(pairs_file), test=str(test_file), wordlist=str(words_file),
        outdir=str(tmp_path / "out"), epochs=5, nbest=5, beam=10,
        decode_nbest=3,
    )
    return cfg


def test_load_config_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "pairs = data.txt   # training data\n"
        "\n"
        "epochs = 7\n"
        "averaging = false\n",
        encoding="utf-8",
    )
    cfg = load_config(str(path), overrides=["beam=13", "loss=zero-one"])
    assert cfg.pairs == "data.txt"
    assert cfg.epochs == 7
    assert cfg.averaging is False
    assert cfg.beam == 13
    assert cfg.loss == "zero-one"


def test_load_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("no_such_option = 1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_config(str(path))
    with pytest.raises(ValueError):
        load_config(None, overrides=["also_bad=2"])


def test_full_pipeline_reaches_perfect_accuracy(tmp_path):
    cfg = write_context_task(tmp_path)
    cmd_align(cfg)
    alignments = read_alignments(
        (tmp_path / "out" / "alignments.txt").read_text(encoding="utf-8")
    )
    pairs = parse_pairs((tmp_path / "pairs.txt").read_text(encoding="utf-8"))
    assert len(alignments) == len(pairs)
    cmd_train(cfg)
    cmd_decode(cfg)
    accuracy, oracle = cmd_evaluate(cfg)
    assert accuracy == 1.0
    assert oracle >= accuracy
    report = (tmp_path / "out" / "report.txt").read_text(encoding="utf-8")
    assert "accuracy=1.000000" in report


def test_decode_is_deterministic(tmp_path):
    cfg = write_context_task(tmp_path, n_train=30, n_test=10)
    cmd_align(cfg)
    cmd_train(cfg)
    first = cmd_decode(cfg, output_path=str(tmp_path / "n1.txt"))
    second = cmd_decode(cfg, output_path=str(tmp_path / "n2.txt"))
    assert (tmp_path / "n1.txt").read_bytes() == (tmp_path / "n2.txt").read_bytes()


def test_decode_single_best_and_fallback(tmp_path):
    cfg = write_context_task(tmp_path, n_train=20, n_test=5)
    cfg.decode_nbest = 1
    cmd_align(cfg)
    cmd_train(cfg)
    # a source with a symbol outside the training alphabet: the identity
    # fallback copies it through
    probe = tmp_path / "probe.txt"
    probe.write_text("a Q b\n", encoding="utf-8")
    out = cmd_decode(cfg, input_path=str(probe),
                     output_path=str(tmp_path / "probe_out.txt"))
    lines = (tmp_path / "probe_out.txt").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1  # one line per input at n=1
    _src, rank, output, _score = lines[0].split("\t")
    assert rank == "1"
    assert "Q" in output.split()


def test_baseline_alignment_links_a_to_w(tmp_path):
    (tmp_path / "pairs.txt").write_text(WALK_CORPUS, encoding="utf-8")
    cfg = RunConfig(
        pairs=str(tmp_path / "pairs.txt"), outdir=str(tmp_path / "out"),
        disable_precision=True,
    )
    cmd_align(cfg)
    baseline = read_alignments(
        (tmp_path / "out" / "alignments.txt").read_text(encoding="utf-8")
    )
    # 2-2 with deletions can only tile 3 phonemes over 6 letters as 2+2+2
    assert baseline[0].links[0].source == ("w",)
    assert baseline[0].links[0].target == ("w", "a")
    cfg_precision = RunConfig(
        pairs=str(tmp_path / "pairs.txt"), outdir=str(tmp_path / "out2"),
    )
    cmd_align(cfg_precision)
    precision = read_alignments(
        (tmp_path / "out2" / "alignments.txt").read_text(encoding="utf-8")
    )
    assert precision[0].links != baseline[0].links
    assert precision[0].links[1].target == ("a", "l")


def test_missing_file_exits_nonzero(tmp_path, capsys):
    rc = main(["align", "--set", f"pairs={tmp_path}/nope.txt",
               "--set", f"outdir={tmp_path}/out"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_train_logs_dev_accuracy_per_epoch(tmp_path, caplog):
    cfg = write_context_task(tmp_path, n_train=25, n_test=8)
    cfg.dev = cfg.test
    cfg.epochs = 3
    cmd_align(cfg)
    with caplog.at_level(logging.INFO):
        cmd_train(cfg)
    dev_lines = [r for r in caplog.records if "dev accuracy" in r.message]
    assert len(dev_lines) == cfg.epochs


def test_disabling_corpus_features_drops_bin_keys(tmp_path):
    cfg = write_context_task(tmp_path, n_train=25, n_test=8)
    cfg.disable_lm = True
    cfg.disable_freq = True
    cmd_align(cfg)
    cmd_train(cfg)
    model_text = (tmp_path / "out" / "model.txt").read_text(encoding="utf-8")
    assert "LMB" not in model_text
    assert "FQB" not in model_text


def test_prune_command(tmp_path):
    (tmp_path / "tgt.txt").write_text("casa\t10\nthe\t1\n", encoding="utf-8")
    (tmp_path / "en.txt").write_text("the\t100\nhouse\t5\n", encoding="utf-8")
    cfg = RunConfig(
        wordlist=str(tmp_path / "tgt.txt"),
        english_wordlist=str(tmp_path / "en.txt"),
        outdir=str(tmp_path / "out"),
    )
    out_path = cmd_prune(cfg)
    kept = (tmp_path / "out" / "pruned_lexicon.txt").read_text(encoding="utf-8")
    assert "casa" in kept
    assert "the" not in kept


def test_read_nbest_groups_blocks(tmp_path):
    path = tmp_path / "nb.txt"
    path.write_text(
        "a b\t1\tx y\t0.5\n"
        "a b\t2\tx z\t0.25\n"
        "c\t0\t\tNaN\n"
        "d\t1\tq\t1.0\n",
        encoding="utf-8",
    )
    blocks = read_nbest(str(path))
    assert len(blocks) == 3
    assert blocks[0] == (("a", "b"), [("x", "y"), ("x", "z")])
    assert blocks[1] == (("c",), [])
    assert blocks[2] == (("d",), [("q",)])


def test_evaluate_multi_reference_and_oracle(tmp_path):
    (tmp_path / "nb.txt").write_text(
        "a\t1\twrong\t1.0\na\t2\tx\t0.5\nb\t1\ty\t1.0\n", encoding="utf-8"
    )
    (tmp_path / "refs.txt").write_text("a\tx|z\nb\ty\n", encoding="utf-8")
    cfg = RunConfig(outdir=str(tmp_path / "out"))
    accuracy, oracle = cmd_evaluate(
        cfg, nbest_path=str(tmp_path / "nb.txt"),
        refs_path=str(tmp_path / "refs.txt"),
    )
    assert accuracy == 0.5  # rank 1 of "a" is wrong, "b" is right
    assert oracle == 1.0  # "x" appears at rank 2


def test_evaluate_count_mismatch(tmp_path):
    (tmp_path / "nb.txt").write_text("a\t1\tx\t1.0\n", encoding="utf-8")
    (tmp_path / "refs.txt").write_text("a\tx\nb\ty\n", encoding="utf-8")
    cfg = RunConfig(outdir=str(tmp_path / "out"))
    with pytest.raises(ValueError):
        cmd_evaluate(cfg, nbest_path=str(tmp_path / "nb.txt"),
                     refs_path=str(tmp_path / "refs.txt"))


def test_ablate_produces_four_rows(tmp_path):
    cfg = write_context_task(tmp_path, n_train=20, n_test=6)
    cfg.epochs = 2
    results = cmd_ablate(cfg)
    assert [name for name, _ in results] == ["full", "-LM", "-Freq", "-Precision"]
    table = (tmp_path / "out" / "ablation.txt").read_text(encoding="utf-8")
    assert len(table.strip().splitlines()) == 4


def test_inflection_task_pipeline(tmp_path):
    suffix = {"PRS": "o", "PST": "ed"}
    lemmas = ["mira", "lanza", "corre", "gana", "tapa", "suma", "pesa", "nada"]
    lines = []
    for lemma in lemmas:
        for tag, suf in suffix.items():
            lines.append(f"{lemma}\t{lemma}{suf}\tV;{tag}")
    (tmp_path / "infl.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    cfg = RunConfig(
        pairs=str(tmp_path / "infl.txt"), test=str(tmp_path / "infl.txt"),
        outdir=str(tmp_path / "out"), task="inflection", copy_instances=3,
        epochs=4, nbest=5, beam=10, decode_nbest=2,
        disable_lm=True, disable_freq=True,
    )
    cmd_align(cfg)
    cmd_train(cfg)
    cmd_decode(cfg)
    accuracy, _ = cmd_evaluate(cfg)
    assert accuracy == 1.0


def test_main_runs_pipeline_via_argv(tmp_path, capsys):
    cfg = write_context_task(tmp_path, n_train=15, n_test=5)
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(
        f"pairs = {cfg.pairs}\ntest = {cfg.test}\nwordlist = {cfg.wordlist}\n"
        f"outdir = {cfg.outdir}\nepochs = 2\nnbest = 3\nbeam = 8\n"
        "decode_nbest = 2\n",
        encoding="utf-8",
    )
    assert main(["align", "--config", str(cfg_file)]) == 0
    assert main(["train", "--config", str(cfg_file)]) == 0
    assert main(["decode", "--config", str(cfg_file)]) == 0
    assert main(["evaluate", "--config", str(cfg_file)]) == 0
    out = capsys.readouterr().out
    assert "accuracy=" in out

"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also repeated in the terminal summary of any run that includes this file.
"""

import math
import random
import time
import unicodedata

import numpy as np
import pytest

from nikud_tagger.cli import main
from nikud_tagger.corpus import LabeledSentence, pack, pack_stats
from nikud_tagger.hebrew import (
    HEAD_SIZES, MASK_ID, SHIN_DOT, SIN_DOT, AnalyzedText, LetterLabel, analyze, compose,
    eligibility, normalize, strip_diacritics,
)
from nikud_tagger.infer import decode_logits, predict_labels
from nikud_tagger.metrics import VocEquivalence, oracle_score, score_pair
from nikud_tagger.model import HeadLogits, TrainingConfig, grad_check, init
from nikud_tagger.synthetic import write_corpus
from nikud_tagger.train import Trainer, evaluate_dev
from nikud_tagger.vocab import CharVocab

import conftest
from conftest import FIXTURES, random_analyzed, synthetic_sentences

VOCAB = CharVocab.default()


def report(request, criterion: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES[request.node.nodeid] = line
    assert ok, line


def test_c01_gradient_correctness(request):
    started = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        E, H, L = int(rng.integers(2, 7)), int(rng.integers(1, 7)), int(rng.integers(2, 9))
        cfg = TrainingConfig(embedding_dim=E, hidden_size=H, encoder_frozen=False, seed=seed)
        params = init(cfg, VOCAB)
        token_ids = rng.integers(0, len(VOCAB), size=(2, L))
        labels = np.stack([rng.integers(0, k, size=(2, L)) for k in HEAD_SIZES], axis=1)
        labels[rng.random(labels.shape) < 0.2] = MASK_ID
        worst = max(worst, grad_check(params, token_ids, labels, eps=1e-5))
    elapsed = time.perf_counter() - started
    report(request, "C1 gradient correctness",
           worst < 1e-4 and elapsed < 60,
           f"20 models, max relative error {worst:.2e} (< 1e-4), {elapsed:.1f}s (< 60s)")


def test_c02_freeze_contract(request):
    cfg = TrainingConfig(embedding_dim=8, hidden_size=8, max_length=32, batch_size=1,
                         learning_rate=0.01, encoder_frozen=True)
    trainer = Trainer(cfg, VOCAB)
    before = trainer.params.weights["embedding"].copy()
    packs = pack(synthetic_sentences(100, seed=2), 32, VOCAB, packing=False)[:100]
    trainer.run_epoch(packs)
    after = trainer.params.weights["embedding"]
    moved = not np.array_equal(trainer.params.weights["dense_W"], trainer._epoch_start.weights["dense_W"])
    report(request, "C2 freeze contract",
           trainer.step == 100 and before.tobytes() == after.tobytes() and moved,
           f"{trainer.step} optimizer steps, embedding bitwise unchanged={before.tobytes() == after.tobytes()}")


def test_c03_overfit_sanity(request):
    started = time.perf_counter()
    sentences = synthetic_sentences(50, seed=0)
    cfg = TrainingConfig(embedding_dim=16, hidden_size=64, max_length=64, batch_size=2,
                         learning_rate=0.001, epochs=200, patience=20, seed=0)
    packs = pack(sentences, cfg.max_length, VOCAB)
    trainer = Trainer(cfg, VOCAB)
    best, log = trainer.fit(packs, packs)
    acc = evaluate_dev(best, packs, VOCAB).letter_acc
    elapsed = time.perf_counter() - started
    report(request, "C3 overfit sanity",
           acc >= 0.99 and elapsed < 300 and trainer.epoch <= 200,
           f"train letter accuracy {acc:.4f} (>= 0.99) after {trainer.epoch} epochs, {elapsed:.1f}s (< 300s)")


def test_c04_round_trip(request):
    lines = (FIXTURES / "roundtrip_corpus.txt").read_text(encoding="utf-8").splitlines()
    bad = []
    for i, t in enumerate(lines):
        n = normalize(t)
        if compose(analyze(n)) != unicodedata.normalize("NFC", n):
            bad.append(i + 1)
    report(request, "C4 round trip",
           len(lines) >= 1000 and not bad,
           f"{len(lines) - len(bad)}/{len(lines)} lines reproduced exactly"
           + (f", first failure at line {bad[0]}" if bad else ""))


def _same(a, b) -> bool:
    return all((math.isnan(x) and math.isnan(y)) or x == y for x, y in zip(a[:4], b[:4])) and a[4:] == b[4:]


def test_c05_metric_oracle(request):
    rng = random.Random(2024)
    voc = VocEquivalence.default()
    disagreements = 0
    for _ in range(1000):
        gold = random_analyzed(rng, rng.randrange(0, 30))
        pred = AnalyzedText(gold.plain, tuple(
            conftest.label_for(c, lambda k: rng.randrange(k)) if rng.random() < 0.3 else lab
            for c, lab in zip(gold.plain, gold.labels)))
        disagreements += not _same(score_pair(gold, pred, voc), oracle_score(gold, pred, voc))
    s = score_pair(analyze(normalize("שָׁלוֹם")), analyze(normalize("שַׁלוֹם")), voc)
    fixture_ok = (s.decisions.correct, s.decisions.total) == (6, 7) and s.letters == (3, 4) \
        and s.wor == 0.0 and s.voc == 1.0
    report(request, "C5 metric oracle equivalence",
           disagreements == 0 and fixture_ok,
           f"{disagreements} disagreements on 1000 pairs; fixture DEC {s.decisions.correct}/{s.decisions.total}"
           f" CHA {s.letters[0]}/{s.letters[1]} WOR {s.wor:g} VOC {s.voc:g}")


def test_c06_perfect_prediction(request, tmp_path, capsys):
    write_corpus(tmp_path / "gold", {"news": 6, "poetry": 4}, lines_per_doc=4, seed=9)
    assert main(["eval", str(tmp_path / "gold"), str(tmp_path / "gold"), "--out", str(tmp_path / "r")]) == 0
    capsys.readouterr()
    macro = (tmp_path / "r" / "report.csv").read_text().splitlines()[-1].split(",")[2:6]
    report(request, "C6 perfect-prediction calibration",
           macro == ["100.00"] * 4,
           "DEC/CHA/WOR/VOC = " + "/".join(macro))


def test_c07_eligibility_soundness(request):
    rng = np.random.default_rng(7)
    n_rows, length = 10_000, 24
    token_ids = rng.integers(0, len(VOCAB), size=(n_rows, length))
    # bias the logits toward classes that would be illegal if not masked
    logits = HeadLogits(*(rng.normal(size=(n_rows, length, k)) * 10 for k in HEAD_SIZES))
    labels = decode_logits(logits, token_ids, VOCAB)
    violations = both_dots = 0
    for row in range(n_rows):
        plain = "".join(VOCAB.symbols[t] if len(VOCAB.symbols[t]) == 1 else "x" for t in token_ids[row])
        labs = tuple(LetterLabel(*map(int, labels[row, :, j])) for j in range(length))
        text = compose(AnalyzedText(plain, labs))
        back = analyze(normalize(text))
        violations += len(back.violations)
        for ch, lab in zip(back.plain, back.labels):
            for ok, v in zip(eligibility(ch), lab.as_tuple()):
                violations += (not ok) and v != MASK_ID
        both_dots += sum(1 for i, c in enumerate(text) if c == "ש"
                         and SHIN_DOT in text[i + 1:i + 4] and SIN_DOT in text[i + 1:i + 4])
    report(request, "C7 eligibility soundness",
           violations == 0 and both_dots == 0,
           f"{n_rows} random predictions, {violations} marks on ineligible letters, {both_dots} double-dotted shins")


def test_c08_packing_efficiency(request):
    lines = (FIXTURES / "short_sentences.txt").read_text(encoding="utf-8").splitlines()
    max_length = 256
    sentences = []
    for i, line in enumerate(lines):
        a = analyze(normalize(line))
        sentences.append(LabeledSentence(a.plain, a.labels, ("short", i)))
    mean_len = sum(len(s) for s in sentences) / len(sentences)
    packed = pack_stats(pack(sentences, max_length, VOCAB))[0]
    unpacked = pack_stats(pack(sentences, max_length, VOCAB, packing=False))[0]

    cfg = TrainingConfig(embedding_dim=16, hidden_size=32, max_length=max_length, batch_size=32)
    params = init(cfg, VOCAB)
    text = "\n".join(strip_diacritics(line) for line in lines)

    def throughput(packing: bool) -> float:
        best = math.inf
        for _ in range(2):
            started = time.perf_counter()
            predict_labels(params, text, VOCAB, packing=packing)
            best = min(best, time.perf_counter() - started)
        return len(text) / best

    fast, slow = throughput(True), throughput(False)
    report(request, "C8 packing efficiency",
           mean_len <= max_length / 6 and packed < 0.5 * unpacked and fast >= 2 * slow,
           f"mean length {mean_len:.1f} (<= {max_length / 6:.1f}), pad_fraction {packed:.3f} vs {unpacked:.3f},"
           f" throughput {fast:.0f} vs {slow:.0f} chars/s ({fast / slow:.1f}x)")


def test_c09_split_determinism(request, tmp_path, capsys):
    write_corpus(tmp_path / "c", {"a": 55, "b": 45}, lines_per_doc=1, seed=3)
    outs = []
    for name in ("m1.tsv", "m2.tsv"):
        assert main(["split", str(tmp_path / "c"), "--ratios", "0.9", "0.05", "0.05",
                     "--seed", "11", "--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name).read_text())
    capsys.readouterr()
    names = [line.split("\t")[0] for line in outs[0].splitlines()]
    counts = tuple(names.count(n) for n in ("train", "validation", "test"))
    report(request, "C9 split determinism",
           counts == (90, 5, 5) and outs[0] == outs[1],
           f"counts {counts}, identical across runs={outs[0] == outs[1]}")


def test_c10_resume_equivalence(request, tmp_path):
    cfg = TrainingConfig(embedding_dim=8, hidden_size=8, max_length=48, batch_size=4,
                         learning_rate=0.01, seed=5, encoder_frozen=False)
    packs = pack(synthetic_sentences(60, seed=8), 48, VOCAB)
    straight = Trainer(cfg, VOCAB)
    straight.fit(packs, packs[:5], epochs=2)
    first = Trainer(cfg, VOCAB)
    first.fit(packs, packs[:5], epochs=1)
    first.save(tmp_path / "last.ckpt")
    resumed = Trainer.resume(tmp_path / "last.ckpt", VOCAB)
    resumed.fit(packs, packs[:5], epochs=2)
    differing = [k for k, w in straight.params.weights.items()
                 if not np.array_equal(w, resumed.params.weights[k])]
    report(request, "C10 checkpoint-resume equivalence",
           not differing and straight.log == resumed.log,
           f"{len(straight.params.weights) - len(differing)}/{len(straight.params.weights)} arrays bitwise equal,"
           f" logs equal={straight.log == resumed.log}")


@pytest.mark.parametrize("n_per_epoch", [130])
def test_c11_logging_regimen(request, n_per_epoch):
    cfg = TrainingConfig(embedding_dim=4, hidden_size=4, max_length=32, batch_size=1,
                         learning_rate=0.01, epochs=2)
    packs = pack(synthetic_sentences(n_per_epoch, seed=4), 32, VOCAB, packing=False)
    trainer = Trainer(cfg, VOCAB)
    _, log = trainer.fit(packs, packs[:10])
    n = trainer.step
    fields_ok = all(
        all(isinstance(getattr(e, f), float) and 0 <= getattr(e, f) <= 1
            for f in ("nikud_acc", "dagesh_acc", "sin_acc", "letter_acc", "word_acc"))
        for e in log.epochs
    )
    report(request, "C11 logging regimen",
           len(log.steps) == n // 100 and len(log.epochs) == trainer.epoch == 2 and fields_ok,
           f"{n} mini-batches -> {len(log.steps)} step records (expected {n // 100}),"
           f" {len(log.epochs)} epoch records with five dev accuracies")

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nikud_tagger.hebrew import (
    DAGESH, LETTERS, SHIN_DOT, analyze, eligibility, normalize, strip_diacritics,
)
from nikud_tagger.infer import diacritize, diacritize_lines, letters_only, predict_labels
from nikud_tagger.model import TrainingConfig, init
from nikud_tagger.synthetic import corpus_lines
from nikud_tagger.vocab import CharVocab

VOCAB = CharVocab.default()


@pytest.fixture(scope="module")
def params():
    cfg = TrainingConfig(embedding_dim=6, hidden_size=5, max_length=64, batch_size=8)
    return init(cfg, VOCAB, seed=2)


def test_empty(params):
    assert diacritize(params, "") == ""


def test_no_hebrew(params):
    assert diacritize(params, "abc") == "abc"


def test_strip_first(params):
    for line in corpus_lines(20, seed=4):
        assert diacritize(params, line) == diacritize(params, strip_diacritics(line))


def test_long_input_alignment(params):
    rng = random.Random(0)
    text = "".join(rng.choice(LETTERS + "  .") for _ in range(5000))
    out = predict_labels(params, text, max_length=1024)
    assert len(out.plain) == len(out.labels) == 5000
    assert letters_only(diacritize(params, text)) == letters_only(text)


def test_packing_does_not_change_output_length(params):
    text = "\n".join(strip_diacritics(t) for t in corpus_lines(10, seed=8))
    a = diacritize(params, text, packing=True)
    b = diacritize(params, text, packing=False)
    assert strip_diacritics(a) == strip_diacritics(b) == strip_diacritics(text)


def test_force_shin_dot(params):
    out = predict_labels(params, "שששש", force_shin_dot=True)
    assert all(lab.sin in (1, 2) for lab in out.labels)


def test_lines_keep_count(params):
    lines = ["", "abc", "שלום עולם", ""] * 3
    out = list(diacritize_lines(params, lines, chunk_lines=5))
    assert len(out) == len(lines)
    assert [strip_diacritics(o) for o in out] == lines


@settings(max_examples=60, deadline=None)
@given(st.text(alphabet=LETTERS + " .,!?abc123\n" + DAGESH + SHIN_DOT, max_size=120))
def test_properties(params, text):
    out = diacritize(params, text)
    assert strip_diacritics(out) == strip_diacritics(text)
    assert diacritize(params, out) == out
    # strict analysis rejects marks on ineligible letters and a second dot on one shin
    analyzed = analyze(normalize(out), strict=True)
    for ch, lab in zip(analyzed.plain, analyzed.labels):
        for ok, v in zip(eligibility(ch), lab.as_tuple()):
            assert ok or v == -1

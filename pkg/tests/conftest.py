import random
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from nikud_tagger.corpus import LabeledSentence
from nikud_tagger.hebrew import (
    HEAD_SIZES, LETTERS, MASK_ID, AnalyzedText, LetterLabel, analyze, eligibility, normalize,
)
from nikud_tagger.synthetic import sentence

FIXTURES = Path(__file__).parent / "fixtures"

PASS_THROUGH = " ,.!?-:;0123456789abcXYZ־\""


def label_for(ch: str, draw_int) -> LetterLabel:
    """Random label respecting eligibility; ``draw_int(k)`` returns an int in [0, k)."""
    ids = []
    for ok, k in zip(eligibility(ch), HEAD_SIZES):
        ids.append(draw_int(k) if ok else MASK_ID)
    return LetterLabel(*ids)


@st.composite
def analyzed_texts(draw, max_size=30):
    chars = draw(st.lists(st.sampled_from(LETTERS + PASS_THROUGH), max_size=max_size))
    labels = tuple(
        label_for(c, lambda k: draw(st.integers(0, k - 1))) for c in chars
    )
    return AnalyzedText("".join(chars), labels)


def random_analyzed(rng: random.Random, n: int, letter_share: float = 0.8) -> AnalyzedText:
    chars = [
        rng.choice(LETTERS) if rng.random() < letter_share else rng.choice(PASS_THROUGH)
        for _ in range(n)
    ]
    return AnalyzedText("".join(chars), tuple(label_for(c, lambda k: rng.randrange(k)) for c in chars))


def synthetic_sentences(n: int, seed: int = 0, min_words: int = 3, max_words: int = 6):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        a = analyze(normalize(sentence(rng, min_words, max_words)))
        out.append(LabeledSentence(a.plain, a.labels, ("synthetic", i)))
    return out


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


# acceptance criteria report lines, filled by test_acceptance and echoed at session end
ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    acceptance_failed = [
        r.nodeid for r in terminalreporter.stats.get("failed", [])
        if "test_acceptance" in r.nodeid and r.nodeid not in ACCEPTANCE_LINES
    ]
    if not ACCEPTANCE_LINES and not acceptance_failed:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES.values():
        terminalreporter.write_line(line)
    for nodeid in acceptance_failed:
        terminalreporter.write_line(f"FAIL {nodeid}: raised before reporting")

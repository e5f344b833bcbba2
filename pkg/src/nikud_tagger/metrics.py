"""Diacritization accuracy: decisions (DEC), characters (CHA), words (WOR) and
vocalization (VOC), scored per document and macro-averaged over documents.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, NamedTuple

from .hebrew import NIKUD_MARKS, AnalyzedText, eligibility, is_letter

METRICS = ("DEC", "CHA", "WOR", "VOC")


class AlignmentError(ValueError):
    def __init__(self, position: int, message: str):
        super().__init__(f"position {position}: {message}")
        self.position = position
        self.detail = message


class MissingDocument(KeyError):
    pass


def _parse_codepoint(s: str) -> str:
    s = s.strip()
    if s.upper().startswith("U+"):
        return chr(int(s[2:], 16))
    if len(s) == 1:
        return s
    raise ValueError(f"bad code point {s!r}")


@dataclass(frozen=True)
class VocEquivalence:
    """Which prediction errors leave the pronunciation intact.

    ``classes`` are groups of nikud marks read alike; each mark not listed is
    its own class. Dagesh errors only count on ``dagesh_significant`` letters.
    Sin/shin errors always count.
    """

    classes: tuple[frozenset[str], ...] = ()
    dagesh_significant: frozenset[str] = frozenset()

    def __post_init__(self):
        seen: set[str] = set()
        for group in self.classes:
            if seen & group:
                raise ValueError(f"equivalence classes overlap on {sorted(seen & group)}")
            seen |= group
        rep = {}
        for i, group in enumerate(self.classes):
            for mark in group:
                rep[mark] = i
        # class id -> representative; unlisted ids map to themselves
        object.__setattr__(self, "_nikud_rep", {
            i: ("class", rep[m]) if m in rep else ("id", i) for i, m in enumerate(NIKUD_MARKS)
        })

    def nikud_equivalent(self, a: int, b: int) -> bool:
        return a == b or self._nikud_rep.get(a, ("id", a)) == self._nikud_rep.get(b, ("id", b))

    @classmethod
    def from_dict(cls, data: dict) -> "VocEquivalence":
        return cls(
            tuple(frozenset(_parse_codepoint(c) for c in group) for group in data.get("nikud_classes", [])),
            frozenset(_parse_codepoint(c) for c in data.get("dagesh_significant", [])),
        )

    @classmethod
    def load(cls, path: str | Path) -> "VocEquivalence":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def default(cls) -> "VocEquivalence":
        text = resources.files("nikud_tagger").joinpath("data/voc_default.json").read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DecisionCount:
    total: int
    correct: int
    per_head: tuple[tuple[int, int], ...]  # (correct, total) for nikud, dagesh, sin


class PairScore(NamedTuple):
    dec: float
    cha: float
    wor: float
    voc: float
    decisions: DecisionCount
    letters: tuple[int, int]  # (correct, total)
    words: tuple[int, int, int]  # (fully correct, vocalization correct, total)


def _ratio(num: int, den: int) -> float:
    return num / den if den else math.nan


def _aligned_letters(gold: AnalyzedText, pred: AnalyzedText) -> list[tuple[int, int]]:
    """Pairs of (gold index, pred index) over Hebrew letters."""
    g_idx = [i for i, c in enumerate(gold.plain) if is_letter(c)]
    p_idx = [i for i, c in enumerate(pred.plain) if is_letter(c)]
    for gi, pi in zip(g_idx, p_idx):
        if gold.plain[gi] != pred.plain[pi]:
            raise AlignmentError(gi, f"gold letter {gold.plain[gi]!r} vs predicted {pred.plain[pi]!r}")
    if len(g_idx) != len(p_idx):
        pos = g_idx[len(p_idx)] if len(g_idx) > len(p_idx) else len(gold.plain)
        raise AlignmentError(pos, f"gold has {len(g_idx)} letters, prediction has {len(p_idx)}")
    return list(zip(g_idx, p_idx))


def score_pair(gold: AnalyzedText, pred: AnalyzedText, voc: VocEquivalence | None = None) -> PairScore:
    voc = voc or VocEquivalence.default()
    pairs = _aligned_letters(gold, pred)
    head_correct = [0, 0, 0]
    head_total = [0, 0, 0]
    letter_ok: dict[int, bool] = {}
    letter_voc_ok: dict[int, bool] = {}
    for gi, pi in pairs:
        ch = gold.plain[gi]
        g, p = gold.labels[gi].as_tuple(), pred.labels[pi].as_tuple()
        ok = voc_ok = True
        for head, applicable in enumerate(eligibility(ch)):
            if not applicable:
                continue
            head_total[head] += 1
            if g[head] == p[head]:
                head_correct[head] += 1
                continue
            ok = False
            if head == 0:
                voc_ok &= voc.nikud_equivalent(g[0], p[0])
            elif head == 1:
                voc_ok &= ch not in voc.dagesh_significant
            else:
                voc_ok = False
        letter_ok[gi] = ok
        letter_voc_ok[gi] = voc_ok

    words = wor_ok = voc_words = 0
    run: list[int] = []
    for i, c in enumerate(gold.plain + " "):
        if is_letter(c):
            run.append(i)
        elif run:
            words += 1
            wor_ok += all(letter_ok[j] for j in run)
            voc_words += all(letter_voc_ok[j] for j in run)
            run = []

    decisions = DecisionCount(
        sum(head_total), sum(head_correct), tuple(zip(head_correct, head_total))
    )
    n_letters = len(pairs)
    n_ok = sum(letter_ok.values())
    return PairScore(
        _ratio(decisions.correct, decisions.total),
        _ratio(n_ok, n_letters),
        _ratio(wor_ok, words),
        _ratio(voc_words, words),
        decisions,
        (n_ok, n_letters),
        (wor_ok, voc_words, words),
    )


# --- brute-force reference, deliberately sharing nothing with score_pair ---

_O_NIKUD = set("אבגדהוזחטיכלמנסעפצקרשתךן")
_O_DAGESH = set("בגדהוזטיכלמנספצקשתךף")
_O_NIKUD_POINTS = [None] + [chr(c) for c in range(0x05B0, 0x05BC) if c != 0x05BA]


def oracle_score(gold: AnalyzedText, pred: AnalyzedText, voc: VocEquivalence | None = None) -> PairScore:
    voc = voc or VocEquivalence.default()
    gold_letters = [(i, c) for i, c in enumerate(gold.plain) if "א" <= c <= "ת"]
    pred_letters = [(i, c) for i, c in enumerate(pred.plain) if "א" <= c <= "ת"]
    for k in range(max(len(gold_letters), len(pred_letters))):
        if k >= len(gold_letters) or k >= len(pred_letters) or gold_letters[k][1] != pred_letters[k][1]:
            pos = gold_letters[k][0] if k < len(gold_letters) else len(gold.plain)
            raise AlignmentError(pos, "letter sequences differ")
    pred_at = {g[0]: p[0] for g, p in zip(gold_letters, pred_letters)}

    def same_sound(a: int, b: int) -> bool:
        if a < 0 or b < 0:
            return a == b
        pa, pb = _O_NIKUD_POINTS[a], _O_NIKUD_POINTS[b]
        if pa == pb:
            return True
        return any(pa in group and pb in group for group in voc.classes)

    heads = {0: [0, 0], 1: [0, 0], 2: [0, 0]}
    wrong_at: dict[int, list[str]] = {}
    for i, c in gold_letters:
        gl, pl = gold.labels[i], pred.labels[pred_at[i]]
        errs = []
        if c in _O_NIKUD:
            heads[0][1] += 1
            if gl.nikud == pl.nikud:
                heads[0][0] += 1
            else:
                errs.append("soft" if same_sound(gl.nikud, pl.nikud) else "hard")
        if c in _O_DAGESH:
            heads[1][1] += 1
            if gl.dagesh == pl.dagesh:
                heads[1][0] += 1
            else:
                errs.append("hard" if c in voc.dagesh_significant else "soft")
        if c == "ש":
            heads[2][1] += 1
            if gl.sin == pl.sin:
                heads[2][0] += 1
            else:
                errs.append("hard")
        wrong_at[i] = errs

    total = sum(h[1] for h in heads.values())
    correct = sum(h[0] for h in heads.values())
    good_letters = sum(1 for i, _ in gold_letters if not wrong_at[i])

    n_words = n_wor = n_voc = 0
    for m in re.finditer("[א-ת]+", gold.plain):
        n_words += 1
        errs = [e for i in range(m.start(), m.end()) for e in wrong_at[i]]
        n_wor += not errs
        n_voc += "hard" not in errs

    def frac(a, b):
        return a / b if b else math.nan

    return PairScore(
        frac(correct, total),
        frac(good_letters, len(gold_letters)),
        frac(n_wor, n_words),
        frac(n_voc, n_words),
        DecisionCount(total, correct, tuple((heads[h][0], heads[h][1]) for h in range(3))),
        (good_letters, len(gold_letters)),
        (n_wor, n_voc, n_words),
    )


def _mean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


@dataclass
class EvalReport:
    documents: dict[str, PairScore]
    genres: dict[str, str] = field(default_factory=dict)

    def macro(self, doc_ids=None) -> dict[str, float]:
        """Unweighted mean over documents; documents where a metric is undefined are skipped."""
        ids = list(self.documents) if doc_ids is None else list(doc_ids)
        return {
            name: _mean(self.documents[d][k] for d in ids)
            for k, name in enumerate(METRICS)
        }

    def per_genre(self) -> dict[str, dict[str, float]]:
        groups: dict[str, list[str]] = {}
        for d in self.documents:
            groups.setdefault(self.genres.get(d, ""), []).append(d)
        return {g: self.macro(ids) for g, ids in sorted(groups.items())}

    def decision_totals(self) -> tuple[int, int]:
        return (
            sum(s.decisions.correct for s in self.documents.values()),
            sum(s.decisions.total for s in self.documents.values()),
        )

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["document", "genre", *METRICS, "decisions_correct", "decisions_total"])
            for d, s in self.documents.items():
                w.writerow([d, self.genres.get(d, ""), *(_pct(v) for v in s[:4]),
                            s.decisions.correct, s.decisions.total])
            for g, m in self.per_genre().items():
                w.writerow([f"GENRE:{g}", g, *(_pct(m[k]) for k in METRICS), "", ""])
            correct, total = self.decision_totals()
            w.writerow(["MACRO", "", *(_pct(v) for v in self.macro().values()), correct, total])

    def format_table(self) -> str:
        lines = []
        genres = self.per_genre()
        if len(genres) > 1 or "" not in genres:
            lines += _table("Genre", ("CHA", "WOR"), genres)
            lines.append("")
        lines += _table("System", METRICS, {"model (macro)": self.macro()})
        return "\n".join(lines)


def _pct(v: float) -> str:
    return "nan" if math.isnan(v) else f"{100 * v:.2f}"


def _table(first: str, cols, rows: Mapping[str, Mapping[str, float]]) -> list[str]:
    width = max([len(first)] + [len(r) for r in rows]) + 2
    head = f"{first:<{width}}" + "".join(f"{c:>8}" for c in cols)
    out = [head, "-" * len(head)]
    for name, vals in rows.items():
        out.append(f"{name:<{width}}" + "".join(f"{_pct(vals[c]):>8}" for c in cols))
    return out


def evaluate_corpus(gold_docs: Mapping[str, AnalyzedText], pred_docs: Mapping[str, AnalyzedText],
                    voc: VocEquivalence | None = None,
                    genres: Mapping[str, str] | None = None) -> EvalReport:
    voc = voc or VocEquivalence.default()
    missing = sorted(set(gold_docs) ^ set(pred_docs))
    if missing:
        raise MissingDocument(f"documents present on one side only: {missing[:5]}")
    scores = {}
    for doc_id in sorted(gold_docs):
        try:
            scores[doc_id] = score_pair(gold_docs[doc_id], pred_docs[doc_id], voc)
        except AlignmentError as e:
            raise AlignmentError(e.position, f"{doc_id}: {e.detail}") from None
    return EvalReport(scores, dict(genres or {}))

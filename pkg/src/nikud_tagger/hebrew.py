"""Unicode model of Hebrew letters and points.

Text goes through three stages: ``normalize`` (canonical decomposition, strip
cantillation and unsupported points), ``analyze`` (split into base characters
plus a per-character label triple) and ``compose`` (the inverse of analyze,
serialized in NFC).
"""

from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

logger = logging.getLogger(__name__)

MASK_ID = -1

# Index in each tuple is the label id; None means "no mark".
NIKUD_MARKS: tuple[str | None, ...] = (
    None,
    "\u05B0",  # sheva
    "\u05B1",  # hataf segol
    "\u05B2",  # hataf patah
    "\u05B3",  # hataf qamats
    "\u05B4",  # hiriq
    "\u05B5",  # tsere
    "\u05B6",  # segol
    "\u05B7",  # patah
    "\u05B8",  # qamats
    "\u05B9",  # holam
    "\u05BB",  # qubuts
)
NIKUD_NAMES = (
    "None", "Sheva", "HatafSegol", "HatafPatah", "HatafQamats", "Hiriq",
    "Tsere", "Segol", "Patah", "Qamats", "Holam", "Qubuts",
)
DAGESH = "\u05BC"
DAGESH_MARKS: tuple[str | None, ...] = (None, DAGESH)
SHIN_DOT = "\u05C1"
SIN_DOT = "\u05C2"
SIN_MARKS: tuple[str | None, ...] = (None, SHIN_DOT, SIN_DOT)

HOLAM_HASER_FOR_VAV = "\u05BA"

N_NIKUD = len(NIKUD_MARKS)
N_DAGESH = len(DAGESH_MARKS)
N_SIN = len(SIN_MARKS)
HEAD_SIZES = (N_NIKUD, N_DAGESH, N_SIN)

LETTERS = "".join(chr(c) for c in range(0x05D0, 0x05EB))
BASE_LETTERS = "אבגדהוזחטיכלמנסעפצקרשת"
NIKUD_ELIGIBLE = frozenset(BASE_LETTERS + "ךן")
DAGESH_ELIGIBLE = frozenset("בגדהוזטיכלמנספצקשתךף")
SIN_ELIGIBLE = frozenset("ש")

_MARK_TO_NIKUD = {m: i for i, m in enumerate(NIKUD_MARKS) if m is not None}
_MARK_TO_NIKUD[HOLAM_HASER_FOR_VAV] = _MARK_TO_NIKUD["\u05B9"]
_MARK_TO_SIN = {SHIN_DOT: 1, SIN_DOT: 2}
INVENTORY_MARKS = frozenset(_MARK_TO_NIKUD) | {DAGESH, SHIN_DOT, SIN_DOT}

# Hebrew block code points that are points but not part of the label inventory.
# Maqaf, paseq, sof pasuq and nun hafukha are punctuation and survive.
_STRIPPED = frozenset(
    [chr(c) for c in range(0x0591, 0x05B0)]  # cantillation
    + ["\u05BD", "\u05BF", "\u05C4", "\u05C5", "\u05C7"]
)


class StrictModeViolation(ValueError):
    """A mark sits on a character that may not carry it (strict analysis)."""


class IllegalLabel(ValueError):
    """A label assigns a mark to a position that is not eligible for it."""


def is_letter(ch: str) -> bool:
    return "א" <= ch <= "ת"


def eligibility(ch: str) -> tuple[bool, bool, bool]:
    """Return ``(can_nikud, can_dagesh, can_sin)`` for any character."""
    return ch in NIKUD_ELIGIBLE, ch in DAGESH_ELIGIBLE, ch in SIN_ELIGIBLE


@dataclass(frozen=True)
class LetterLabel:
    nikud: int = MASK_ID
    dagesh: int = MASK_ID
    sin: int = MASK_ID

    @classmethod
    def blank(cls, ch: str) -> "LetterLabel":
        """The all-None label for ``ch``; ineligible heads are masked."""
        can_n, can_d, can_s = eligibility(ch)
        return cls(0 if can_n else MASK_ID, 0 if can_d else MASK_ID, 0 if can_s else MASK_ID)

    def as_tuple(self) -> tuple[int, int, int]:
        return self.nikud, self.dagesh, self.sin


MASKED = LetterLabel()


class Violation(NamedTuple):
    col: int  # 1-based position in the normalized input
    mark: str
    letter: str | None

    def format(self, file: str = "<text>", line: int = 1) -> str:
        on = self.letter if self.letter is not None else "<none>"
        return f"{file}:{line}:{self.col} U+{ord(self.mark):04X} on {on}"


@dataclass(frozen=True)
class AnalyzedText:
    plain: str
    labels: tuple[LetterLabel, ...]
    violations: tuple[Violation, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if len(self.plain) != len(self.labels):
            raise ValueError(
                f"plain has {len(self.plain)} characters but {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.plain)

    def __getitem__(self, item: slice) -> "AnalyzedText":
        return AnalyzedText(self.plain[item], tuple(self.labels[item]))


def normalize(raw: str) -> str:
    """Decompose canonically and drop marks the label model does not cover.

    Combining marks end up in canonical combining-class order, so any input
    ordering of a letter's points yields the same code points.
    """
    decomposed = unicodedata.normalize("NFD", raw)
    return "".join(ch for ch in decomposed if ch not in _STRIPPED)


def analyze(text: str, strict: bool = False) -> AnalyzedText:
    """Split normalized text into base characters and aligned labels.

    Inventory marks are collected onto the preceding Hebrew letter. A mark that
    cannot sit on that letter, a mark with no letter, or a second mark for an
    already filled head is a violation: logged and dropped, or raised as
    :class:`StrictModeViolation` when ``strict``.
    """
    plain: list[str] = []
    labels: list[list[int]] = []
    violations: list[Violation] = []

    def reject(col: int, mark: str, letter: str | None) -> None:
        v = Violation(col, mark, letter)
        if strict:
            raise StrictModeViolation(v.format())
        logger.debug("dropping mark: %s", v.format())
        violations.append(v)

    current: str | None = None  # Hebrew letter currently accepting marks
    for col, ch in enumerate(text, start=1):
        if ch in INVENTORY_MARKS:
            if current is None:
                reject(col, ch, plain[-1] if plain else None)
                continue
            can_n, can_d, can_s = eligibility(current)
            slot = labels[-1]
            if ch in _MARK_TO_NIKUD:
                head, ok, value = 0, can_n, _MARK_TO_NIKUD[ch]
            elif ch == DAGESH:
                head, ok, value = 1, can_d, 1
            else:
                head, ok, value = 2, can_s, _MARK_TO_SIN[ch]
            if not ok or (slot[head] not in (0, value)):
                reject(col, ch, current)
                continue
            slot[head] = value
            continue

        plain.append(ch)
        if is_letter(ch):
            current = ch
            labels.append(list(LetterLabel.blank(ch).as_tuple()))
        else:
            current = None
            labels.append([MASK_ID, MASK_ID, MASK_ID])

    return AnalyzedText(
        "".join(plain),
        tuple(LetterLabel(*lab) for lab in labels),
        tuple(violations),
    )


def _check(ch: str, label_id: int, allowed: bool, marks: Sequence[str | None], head: str) -> str:
    if label_id == MASK_ID:
        return ""
    if not 0 <= label_id < len(marks):
        raise IllegalLabel(f"{head} label {label_id} out of range at {ch!r}")
    mark = marks[label_id]
    if mark is None:
        return ""
    if not allowed:
        raise IllegalLabel(f"{head} mark U+{ord(mark):04X} on ineligible {ch!r}")
    return mark


def compose(analyzed: AnalyzedText) -> str:
    """Attach the marks named by each label to its base character (NFC output)."""
    out: list[str] = []
    for ch, lab in zip(analyzed.plain, analyzed.labels):
        can_n, can_d, can_s = eligibility(ch)
        out.append(ch)
        out.append(_check(ch, lab.dagesh, can_d, DAGESH_MARKS, "dagesh"))
        out.append(_check(ch, lab.sin, can_s, SIN_MARKS, "sin"))
        out.append(_check(ch, lab.nikud, can_n, NIKUD_MARKS, "nikud"))
    return unicodedata.normalize("NFC", "".join(out))


def strip_diacritics(text: str) -> str:
    """Remove every Hebrew point (and cantillation) and return NFC text."""
    kept = (ch for ch in normalize(text) if ch not in INVENTORY_MARKS)
    return unicodedata.normalize("NFC", "".join(kept))

"""Corpus loading, sentence segmentation, packing and train/dev/test splitting."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .hebrew import MASK_ID, AnalyzedText, LetterLabel, analyze, normalize
from .vocab import CharVocab

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.9, 0.05, 0.05)
SPLIT_NAMES = ("train", "validation", "test")

_SENTENCE_END = re.compile(r"[.!?:]\s+|\n+")


class EncodingError(ValueError):
    pass


class SentenceTooLong(ValueError):
    pass


class BadRatios(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSentence:
    plain: str
    labels: tuple[LetterLabel, ...]
    source: tuple[str, int] = ("", 0)

    def __len__(self) -> int:
        return len(self.plain)

    @classmethod
    def from_analyzed(cls, text: AnalyzedText, source=("", 0)) -> "LabeledSentence":
        return cls(text.plain, text.labels, source)

    def label_array(self) -> np.ndarray:
        """Labels as an int array of shape (3, len)."""
        arr = np.array([lab.as_tuple() for lab in self.labels], dtype=np.int64).reshape(-1, 3)
        return arr.T


@dataclass
class Document:
    id: str
    genre: str
    sentences: list[LabeledSentence] = field(default_factory=list)


@dataclass
class PackedSequence:
    token_ids: np.ndarray  # (max_length,)
    labels: np.ndarray  # (3, max_length)
    attention_mask: np.ndarray  # (max_length,)
    # (offset within the row, length, source) for every sentence in the row
    spans: list[tuple[int, int, tuple[str, int]]] = field(default_factory=list)

    @property
    def max_length(self) -> int:
        return len(self.token_ids)


@dataclass
class DatasetSplit:
    train: list[Document]
    validation: list[Document]
    test: list[Document]
    seed: int

    def manifest_lines(self) -> list[str]:
        return [
            f"{name}\t{doc.id}"
            for name, docs in zip(SPLIT_NAMES, (self.train, self.validation, self.test))
            for doc in docs
        ]


def sentence_spans(plain: str, max_length: int) -> list[tuple[int, int]]:
    """Half-open spans of sentences in ``plain``.

    Boundaries fall at newlines and after ``. ! ? :`` followed by whitespace;
    surrounding whitespace is not part of any sentence. Sentences longer than
    ``max_length`` are cut at the last whitespace that keeps the piece within
    the limit, or hard at the limit when there is none.
    """
    spans = []
    start = 0
    for m in _SENTENCE_END.finditer(plain):
        end = m.start() + (0 if m.group(0)[0].isspace() else 1)
        spans.extend(_trimmed_pieces(plain, start, end, max_length))
        start = m.end()
    spans.extend(_trimmed_pieces(plain, start, len(plain), max_length))
    return spans


def _trimmed_pieces(plain: str, start: int, end: int, max_length: int):
    while start < end and plain[start].isspace():
        start += 1
    while end > start and plain[end - 1].isspace():
        end -= 1
    while end - start > max_length:
        window = plain[start:start + max_length + 1]
        cut = max((i for i, c in enumerate(window) if c.isspace()), default=0)
        if cut == 0:
            yield start, start + max_length
            start += max_length
        else:
            yield start, start + cut
            start += cut + 1
        while start < end and plain[start].isspace():
            start += 1
    if end > start:
        yield start, end


def read_text(path: str | Path) -> str:
    data = Path(path).read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise EncodingError(f"{path}: invalid UTF-8 at byte {e.start}") from e


def load_document(
    path: str | Path,
    genre: str = "",
    max_length: int = 1024,
    strict: bool = False,
    doc_id: str | None = None,
) -> Document:
    """Read a diacritized UTF-8 file into labeled sentences."""
    path = Path(path)
    doc_id = doc_id if doc_id is not None else path.stem
    doc = Document(doc_id, genre)
    for lineno, line in enumerate(read_text(path).splitlines(), start=1):
        try:
            analyzed = analyze(normalize(line), strict=strict)
        except ValueError as e:
            raise type(e)(f"{path}:{lineno}: {e}") from e
        for v in analyzed.violations:
            logger.warning("%s", v.format(str(path), lineno))
        for start, end in sentence_spans(analyzed.plain, max_length):
            doc.sentences.append(
                LabeledSentence(
                    analyzed.plain[start:end],
                    analyzed.labels[start:end],
                    (doc_id, len(doc.sentences)),
                )
            )
    return doc


def load_corpus(root: str | Path, max_length: int = 1024, strict: bool = False) -> list[Document]:
    """Load every ``<root>/<genre>/<file>.txt``; ids are ``<genre>/<stem>``."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root not found: {root}")
    docs = []
    for path in sorted(root.rglob("*.txt")):
        rel = path.relative_to(root).with_suffix("")
        genre = rel.parts[0] if len(rel.parts) > 1 else ""
        docs.append(load_document(path, genre, max_length, strict, doc_id=rel.as_posix()))
    return docs


def pack(
    sentences: Sequence[LabeledSentence],
    max_length: int,
    vocab: CharVocab | None = None,
    packing: bool = True,
) -> list[PackedSequence]:
    """Greedily fill fixed-length rows with consecutive sentences.

    Sentences keep corpus order; a sentence joins the current row if it fits
    after a single masked space, otherwise it opens a new row. With
    ``packing=False`` every sentence gets its own row.
    """
    vocab = vocab or CharVocab.default()
    rows: list[list[LabeledSentence]] = []
    used = 0
    for s in sentences:
        if len(s) > max_length:
            raise SentenceTooLong(f"sentence {s.source} has {len(s)} > {max_length} characters")
        if len(s) == 0:
            continue
        if packing and rows and used + 1 + len(s) <= max_length:
            rows[-1].append(s)
            used += 1 + len(s)
        else:
            rows.append([s])
            used = len(s)
    return [_build_row(row, max_length, vocab) for row in rows]


def _build_row(row: list[LabeledSentence], max_length: int, vocab: CharVocab) -> PackedSequence:
    token_ids = np.full(max_length, vocab.pad_id, dtype=np.int64)
    labels = np.full((3, max_length), MASK_ID, dtype=np.int64)
    attention = np.zeros(max_length, dtype=np.int8)
    spans = []
    pos = 0
    for i, s in enumerate(row):
        if i:
            token_ids[pos] = vocab.encode_char(" ")
            attention[pos] = 1
            pos += 1
        n = len(s)
        token_ids[pos:pos + n] = vocab.encode(s.plain)
        labels[:, pos:pos + n] = s.label_array()
        attention[pos:pos + n] = 1
        spans.append((pos, n, s.source))
        pos += n
    return PackedSequence(token_ids, labels, attention, spans)


def pack_documents(
    docs: Iterable[Document], max_length: int, vocab: CharVocab | None = None, packing: bool = True
) -> list[PackedSequence]:
    """Pack each document separately so no row mixes documents."""
    packs = []
    for doc in docs:
        packs.extend(pack(doc.sentences, max_length, vocab, packing))
    return packs


def unpack(packs: Sequence[PackedSequence]) -> list[tuple[str, np.ndarray]]:
    """Recover ``(token_ids, labels)`` per sentence, in pack order."""
    out = []
    for p in packs:
        for off, n, _ in p.spans:
            out.append((p.token_ids[off:off + n].copy(), p.labels[:, off:off + n].copy()))
    return out


def pack_stats(packs: Sequence[PackedSequence]) -> tuple[float, float]:
    """Return ``(pad_fraction, packs_per_sentence)``."""
    if not packs:
        raise ValueError("pack_stats needs at least one pack")
    total = sum(p.max_length for p in packs)
    pad = sum(int((p.attention_mask == 0).sum()) for p in packs)
    n_sentences = sum(len(p.spans) for p in packs)
    return pad / total, len(packs) / n_sentences


def split_dataset(
    docs: Sequence[Document], ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0
) -> DatasetSplit:
    """Shuffle documents with ``seed`` and cut them into train/validation/test.

    Validation and test sizes are floored; train takes the remainder.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise BadRatios(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    if not docs:
        raise ValueError("split_dataset needs at least one document")
    n = len(docs)
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(math.floor(n * ratios[1] + 1e-9))
    n_test = int(math.floor(n * ratios[2] + 1e-9))
    n_train = n - n_val - n_test
    if (ratios[1] > 0 and n_val == 0) or (ratios[2] > 0 and n_test == 0):
        logger.warning("only %d documents: validation=%d test=%d after rounding", n, n_val, n_test)
    shuffled = [docs[i] for i in order]
    return DatasetSplit(
        shuffled[:n_train],
        shuffled[n_train:n_train + n_val],
        shuffled[n_train + n_val:],
        seed,
    )


def write_manifest(split: DatasetSplit, path: str | Path) -> None:
    Path(path).write_text("\n".join(split.manifest_lines()) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {name: [] for name in SPLIT_NAMES}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        name, _, doc_id = line.partition("\t")
        if name not in out or not doc_id:
            raise ValueError(f"{path}:{lineno}: expected '<split>\\t<doc-id>'")
        out[name].append(doc_id)
    return out


def split_from_manifest(docs: Sequence[Document], manifest: dict[str, list[str]], seed: int = 0) -> DatasetSplit:
    by_id = {d.id: d for d in docs}
    missing = [i for ids in manifest.values() for i in ids if i not in by_id]
    if missing:
        raise KeyError(f"manifest names documents missing from corpus: {missing[:5]}")
    return DatasetSplit(*(
        [by_id[i] for i in manifest[name]] for name in SPLIT_NAMES
    ), seed=seed)

"""Prediction: unpointed (or pointed) text in, pointed text out."""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from .corpus import LabeledSentence, pack, sentence_spans
from .hebrew import (
    DAGESH_ELIGIBLE, HEAD_SIZES, MASK_ID, NIKUD_ELIGIBLE, SIN_ELIGIBLE,
    AnalyzedText, IllegalLabel, LetterLabel, compose, is_letter, strip_diacritics,
)
from .model import HeadLogits, ModelParams, collate, forward, predict_argmax
from .vocab import CharVocab


def _eligibility_arrays(vocab: CharVocab) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per token id: may the position carry each head's marks at all?"""
    table = np.zeros((3, len(vocab)), dtype=bool)
    for i, sym in enumerate(vocab.symbols):
        table[0, i] = sym in NIKUD_ELIGIBLE
        table[1, i] = sym in DAGESH_ELIGIBLE
        table[2, i] = sym in SIN_ELIGIBLE
    return table[0], table[1], table[2]


def decode_batch(params: ModelParams, token_ids: np.ndarray, vocab: CharVocab,
                 force_shin_dot: bool = False) -> np.ndarray:
    """Masked argmax labels ``(B, 3, L)``; ineligible positions get ``MASK_ID``."""
    logits = forward(params, token_ids, mode="eval")
    return decode_logits(logits, token_ids, vocab, force_shin_dot)


def decode_logits(logits: HeadLogits, token_ids: np.ndarray, vocab: CharVocab,
                  force_shin_dot: bool = False) -> np.ndarray:
    elig = [e[token_ids] for e in _eligibility_arrays(vocab)]  # each (B, L)
    allowed = []
    for k, (e, size) in enumerate(zip(elig, HEAD_SIZES)):
        cls_ok = np.ones(size, dtype=bool)
        if k == 2 and force_shin_dot:
            cls_ok[0] = False
        # ineligible positions allow everything; they are overwritten with MASK_ID
        allowed.append(np.where(e[..., None], cls_ok, True))
    labels = predict_argmax(logits, allowed)
    for k, e in enumerate(elig):
        labels[:, k][~e] = MASK_ID
    return labels


def predict_labels(params: ModelParams, text: str, vocab: CharVocab | None = None,
                   max_length: int | None = None, batch_size: int | None = None,
                   packing: bool = True, force_shin_dot: bool = False) -> AnalyzedText:
    """Label every character of ``text`` after stripping any existing points.

    Sentences are packed into rows of ``max_length`` like training data, run
    in eval mode, and stitched back by their recorded offsets.
    """
    vocab = vocab or CharVocab.default()
    max_length = max_length or params.config.max_length
    batch_size = batch_size or params.config.batch_size
    plain = strip_diacritics(text)
    labels = np.full((len(plain), 3), MASK_ID, dtype=np.int64)
    if not plain:
        return AnalyzedText("", ())

    spans = sentence_spans(plain, max_length)
    sentences = [
        LabeledSentence(plain[s:e], (LetterLabel(),) * (e - s), ("", s)) for s, e in spans
    ]
    packs = pack(sentences, max_length, vocab, packing=packing)
    for b in range(0, len(packs), batch_size):
        chunk = packs[b:b + batch_size]
        token_ids, _, _ = collate(chunk)
        pred = decode_batch(params, token_ids, vocab, force_shin_dot)
        for row, p in enumerate(chunk):
            for off, n, (_, start) in p.spans:
                labels[start:start + n] = pred[row, :, off:off + n].T

    return AnalyzedText(plain, tuple(LetterLabel(*map(int, lab)) for lab in labels))


def diacritize(params: ModelParams, text: str, **kwargs) -> str:
    analyzed = predict_labels(params, text, **kwargs)
    try:
        return compose(analyzed)
    except IllegalLabel as e:  # masked argmax makes this unreachable
        raise RuntimeError(f"internal error: decoder emitted an illegal label: {e}") from e


def diacritize_lines(params: ModelParams, lines: Iterable[str], chunk_lines: int = 256,
                     **kwargs) -> Iterator[str]:
    """Stream lines through :func:`diacritize`, packing ``chunk_lines`` at a time."""
    buf: list[str] = []
    for line in lines:
        buf.append(line.rstrip("\n"))
        if len(buf) >= chunk_lines:
            yield from _run_chunk(params, buf, kwargs)
            buf = []
    if buf:
        yield from _run_chunk(params, buf, kwargs)


def _run_chunk(params, lines, kwargs):
    out = diacritize(params, "\n".join(lines), **kwargs).split("\n")
    if len(out) != len(lines):
        raise RuntimeError("line count changed during diacritization")
    return out


def letters_only(text: str) -> str:
    return "".join(c for c in strip_diacritics(text) if is_letter(c))

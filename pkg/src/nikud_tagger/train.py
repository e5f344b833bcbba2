"""Training loop: seeded shuffling, mini-batch updates, 100-step loss records,
per-epoch dev accuracies, best/last checkpoints and early stopping."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import checkpoint
from .corpus import DatasetSplit, PackedSequence, pack_documents
from .hebrew import HEAD_SIZES, MASK_ID, is_letter
from .infer import decode_batch
from .model import HEADS, ModelParams, TrainingConfig, backward, collate, init
from .optim import make_optimizer
from .vocab import CharVocab

logger = logging.getLogger(__name__)

UNIFORM_LOSS = sum(math.log(k) for k in HEAD_SIZES)


class EmptyDataset(ValueError):
    pass


class DivergenceDetected(RuntimeError):
    def __init__(self, message: str, params: ModelParams):
        super().__init__(message)
        self.params = params


@dataclass
class StepRecord:
    step: int
    loss: float
    nikud_loss: float
    dagesh_loss: float
    sin_loss: float


@dataclass
class EpochRecord:
    epoch: int
    step: int
    train_loss: float
    nikud_acc: float
    dagesh_acc: float
    sin_acc: float
    letter_acc: float
    word_acc: float


@dataclass
class TrainLog:
    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)

    def write(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        for name, records, cls in (("train_log.csv", self.steps, StepRecord),
                                   ("epoch_log.csv", self.epochs, EpochRecord)):
            with open(out_dir / name, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow([fl.name for fl in dataclasses.fields(cls)])
                for r in records:
                    w.writerow(dataclasses.astuple(r))

    def to_state(self) -> dict:
        return {"steps": [dataclasses.astuple(r) for r in self.steps],
                "epochs": [dataclasses.astuple(r) for r in self.epochs]}

    @classmethod
    def from_state(cls, state: dict) -> "TrainLog":
        return cls([StepRecord(*r) for r in state.get("steps", [])],
                   [EpochRecord(*r) for r in state.get("epochs", [])])


class DevMetrics(NamedTuple):
    nikud_acc: float
    dagesh_acc: float
    sin_acc: float
    letter_acc: float
    word_acc: float
    counts: dict

    @property
    def empty_heads(self) -> tuple[str, ...]:
        """Heads with no gold decisions; their accuracy is a vacuous 1.0."""
        return tuple(h for h in HEADS if self.counts[h] == 0)


def _acc(correct: int, total: int) -> float:
    return correct / total if total else 1.0


def _word_runs(flags: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate([[False], flags, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2], edges[1::2]))


def score_labels(token_ids: np.ndarray, gold: np.ndarray, pred: np.ndarray,
                 vocab: CharVocab) -> dict:
    """Raw counts for dev accuracy from ``(B, L)`` tokens and ``(B, 3, L)`` labels."""
    letter_ids = np.array([is_letter(s) for s in vocab.symbols])
    letters = letter_ids[token_ids]
    applicable = gold != MASK_ID
    hit = (gold == pred) | ~applicable
    counts = {}
    for k, h in enumerate(HEADS):
        counts[h] = int(applicable[:, k].sum())
        counts[f"{h}_correct"] = int((applicable[:, k] & (gold[:, k] == pred[:, k])).sum())
    letter_ok = hit.all(axis=1) & letters
    counts["letters"] = int(letters.sum())
    counts["letters_correct"] = int(letter_ok.sum())
    words = words_ok = 0
    for row in range(token_ids.shape[0]):
        for s, e in _word_runs(letters[row]):
            words += 1
            words_ok += bool(letter_ok[row, s:e].all())
    counts["words"] = words
    counts["words_correct"] = words_ok
    return counts


def metrics_from_counts(counts: dict) -> DevMetrics:
    return DevMetrics(
        *(_acc(counts[f"{h}_correct"], counts[h]) for h in HEADS),
        _acc(counts["letters_correct"], counts["letters"]),
        _acc(counts["words_correct"], counts["words"]),
        counts,
    )


def evaluate_dev(params: ModelParams, dev: Sequence[PackedSequence], vocab: CharVocab | None = None,
                 batch_size: int | None = None) -> DevMetrics:
    """Per-head, letter and word accuracy of masked-argmax predictions."""
    if not dev:
        raise EmptyDataset("evaluate_dev needs a nonempty dev set")
    vocab = vocab or CharVocab.default()
    batch_size = batch_size or params.config.batch_size
    total: dict = {}
    for b in range(0, len(dev), batch_size):
        token_ids, gold, _ = collate(dev[b:b + batch_size])
        pred = decode_batch(params, token_ids, vocab)
        for k, v in score_labels(token_ids, gold, pred, vocab).items():
            total[k] = total.get(k, 0) + v
    return metrics_from_counts(total)


class Trainer:
    """Owns the mutable parameters, optimizer state and log of one run."""

    def __init__(self, config: TrainingConfig, vocab: CharVocab | None = None,
                 params: ModelParams | None = None, out_dir: str | Path | None = None):
        self.config = config
        self.vocab = vocab or CharVocab.default()
        self.params = params if params is not None else init(config, self.vocab, config.seed)
        self.optimizer = make_optimizer(config.optimizer, config.learning_rate)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.epoch = 0
        self.step = 0
        self.best: ModelParams | None = None
        self.best_acc = -math.inf
        self.bad_epochs = 0
        self.log = TrainLog()
        self._window: list[tuple[float, float, float, float]] = []

    # --- persistence ---

    def save(self, path: str | Path) -> None:
        extra = dict(self.optimizer.state_arrays())
        if self.best is not None:
            extra.update({f"best/{k}": v for k, v in self.best.weights.items()})
        state = {
            "epoch": self.epoch,
            "step": self.step,
            "best_acc": self.best_acc if self.best is not None else None,
            "bad_epochs": self.bad_epochs,
            "optimizer": self.optimizer.state_scalars(),
            "window": self._window,
            "log": self.log.to_state(),
        }
        checkpoint.save(self.params, path, self.vocab, extra, state)

    @classmethod
    def resume(cls, path: str | Path, vocab: CharVocab | None = None,
               out_dir: str | Path | None = None, **overrides) -> "Trainer":
        """Rebuild a trainer from a checkpoint written by :meth:`save`.

        ``overrides`` may change non-shape config fields such as ``epochs``.
        """
        ck = checkpoint.load(path, vocab)
        config = ck.params.config.replace(**overrides) if overrides else ck.params.config
        params = ModelParams(ck.params.weights, config)
        t = cls(config, ck.vocab, params, out_dir)
        st = ck.state
        t.epoch, t.step, t.bad_epochs = st["epoch"], st["step"], st["bad_epochs"]
        t.optimizer.load_state(st["optimizer"], ck.extra)
        best = {k[5:]: v for k, v in ck.extra.items() if k.startswith("best/")}
        if best:
            t.best = ModelParams(best, config)
            t.best_acc = st["best_acc"]
        t._window = [tuple(w) for w in st["window"]]
        t.log = TrainLog.from_state(st["log"])
        return t

    # --- training ---

    def _shuffled(self, packs: Sequence[PackedSequence]) -> list[PackedSequence]:
        order = np.random.default_rng([self.config.seed, self.epoch]).permutation(len(packs))
        return [packs[i] for i in order]

    def train_step(self, batch: Sequence[PackedSequence]) -> float:
        token_ids, labels, _ = collate(batch)
        rng = np.random.default_rng([self.config.seed, 7919, self.step])
        result, grads = backward(self.params, token_ids, labels, mode="train", rng=rng)
        limit = self.config.divergence_factor * UNIFORM_LOSS
        if not math.isfinite(result.total) or result.total > limit:
            raise DivergenceDetected(
                f"loss {result.total:.4g} at step {self.step + 1} (limit {limit:.4g})",
                self._epoch_start,
            )
        self.optimizer.step(self.params.weights, grads, self.params.trainable())
        self.step += 1
        self._window.append((result.total, *result.per_head))
        if self.step % self.config.log_every == 0:
            mean = np.mean(self._window, axis=0)
            self.log.steps.append(StepRecord(self.step, *map(float, mean)))
            self._window = []
        return result.total

    def run_epoch(self, packs: Sequence[PackedSequence]) -> float:
        self._epoch_start = self.params.copy()
        bs = self.config.batch_size
        shuffled = self._shuffled(packs)
        losses = [self.train_step(shuffled[b:b + bs]) for b in range(0, len(shuffled), bs)]
        if not self.params.is_finite():
            raise DivergenceDetected("non-finite parameters after epoch", self._epoch_start)
        self.epoch += 1
        return float(np.mean(losses))

    def fit(self, train_packs: Sequence[PackedSequence], dev_packs: Sequence[PackedSequence],
            epochs: int | None = None) -> tuple[ModelParams, TrainLog]:
        """Train until ``epochs`` total epochs are done or patience runs out."""
        if not train_packs:
            raise EmptyDataset("no training data")
        if not dev_packs:
            logger.warning("empty dev set; selecting the best model on training data")
            dev_packs = train_packs
        target = epochs if epochs is not None else self.config.epochs
        while self.epoch < target and self.bad_epochs < self.config.patience:
            train_loss = self.run_epoch(train_packs)
            dev = evaluate_dev(self.params, dev_packs, self.vocab)
            self.log.epochs.append(EpochRecord(self.epoch, self.step, train_loss, *dev[:5]))
            logger.info("epoch %d step %d loss %.4f dev letter %.4f word %.4f",
                        self.epoch, self.step, train_loss, dev.letter_acc, dev.word_acc)
            improved = dev.letter_acc > self.best_acc
            if improved:
                self.best_acc = dev.letter_acc
                self.best = self.params.copy()
                self.bad_epochs = 0
            else:
                self.bad_epochs += 1
            if self.out_dir is not None:
                self.out_dir.mkdir(parents=True, exist_ok=True)
                self.save(self.out_dir / "last.ckpt")
                if improved:
                    checkpoint.save(self.best, self.out_dir / "best.ckpt", self.vocab)
                self.log.write(self.out_dir)
        return (self.best if self.best is not None else self.params), self.log


def train(config: TrainingConfig, split: DatasetSplit, out_dir: str | Path | None = None,
          vocab: CharVocab | None = None) -> tuple[ModelParams, TrainLog]:
    vocab = vocab or CharVocab.default()
    train_packs = pack_documents(split.train, config.max_length, vocab)
    dev_packs = pack_documents(split.validation, config.max_length, vocab)
    if not train_packs:
        raise EmptyDataset("training split has no sentences")
    return Trainer(config, vocab, out_dir=out_dir).fit(train_packs, dev_packs)

"""Training loop and evaluation."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tape, backward, no_tape, precision
from .data import filter_length
from .errors import DataError, NumericError
from .metrics import bleu, bucket_range, length_bucket
from .model import HeadConfig, Model
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    max_len: int = 64
    epochs: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    precision: str = "single"
    eval_batch_size: int = 256

    def validate(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.max_len <= 0 or self.epochs <= 0:
            raise ValueError("learning rate, batch size, max length and epochs must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam constants")
        if self.precision not in ("single", "double"):
            raise ValueError("precision is 'single' or 'double'")
        return self


@dataclass
class TrainResult:
    model: Model
    optimizer: Adam
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = -math.inf
    steps: int = 0


def batches(examples, size):
    for start in range(0, len(examples), size):
        yield examples[start:start + size]


def train(dataset, enc_config, head_config=None, config=None, on_epoch=None):
    """Train from scratch and keep the parameters of the best dev epoch.

    Everything random derives from ``config.seed``: initialization, the
    shuffle order, dropout, random layouts (fresh per sentence per epoch)
    and Gumbel noise.
    """
    config = (config or TrainConfig()).validate()
    head_config = head_config or HeadConfig()
    train_set = filter_length(dataset.train, config.max_len)
    if not train_set:
        raise DataError("no training examples left after length filtering")
    dev_set = filter_length(dataset.dev, config.max_len) or dataset.dev
    with precision(config.precision):
        model = Model(dataset.task, enc_config, head_config, dataset.vocab, dataset.tgt_vocab,
                      dataset.n_classes, config.seed)
        opt = Adam(model.params, config.lr, config.beta1, config.beta2, config.eps)
        rng = np.random.default_rng([config.seed, 1])
        result = TrainResult(model, opt)
        best_state = None
        best_loss = math.inf
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(train_set))
            shuffled = [train_set[i] for i in order]
            total = 0.0
            for batch in batches(shuffled, config.batch_size):
                with Tape() as tape:
                    loss = model.loss(batch, rng, training=True)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise NumericError(f"non-finite loss at epoch {epoch}, step {result.steps + 1}")
                opt.step(backward(tape, loss, model.params))
                total += value * len(batch)
                result.steps += 1
            try:
                model.params.check_finite()
            except FloatingPointError as exc:
                raise NumericError(str(exc)) from None
            metric = evaluate(model, dev_set, config.eval_batch_size)
            dev_loss = mean_loss(model, dev_set, config.eval_batch_size)
            row = {"epoch": epoch, "train_loss": total / len(train_set), "dev_loss": dev_loss,
                   "dev_metric": metric}
            result.history.append(row)
            log.info("epoch %d loss %.4f dev %.4f", epoch, row["train_loss"], metric)
            if on_epoch is not None:
                on_epoch(row)
            # ties on the metric (e.g. BLEU stuck at 0) go to the lower dev loss
            if (metric, -dev_loss) > (result.best_metric, -best_loss):
                result.best_metric, result.best_epoch, best_loss = metric, epoch, dev_loss
                best_state = model.params.state()
        model.params.load_state(best_state)
    return result


def predict_all(model, examples, batch_size=256):
    rng = model._eval_rng()
    out = []
    for batch in batches(examples, batch_size):
        out.extend(model.predict(batch, rng))
    return out


def mean_loss(model, examples, batch_size=256):
    """Example-weighted mean of the training loss, without dropout or a tape."""
    rng = model._eval_rng()
    total = 0.0
    with no_tape():
        for batch in batches(examples, batch_size):
            total += float(model.loss(batch, rng).data) * len(batch)
    return total / len(examples)


def evaluate(model, examples, batch_size=256):
    """Accuracy for classifiers, word-level BLEU for generators."""
    if not examples:
        raise DataError("cannot evaluate an empty split")
    preds = predict_all(model, examples, batch_size)
    return _score(model.task, examples, preds)


def _score(task, examples, preds):
    if task == "seq2seq":
        return bleu(preds, [ex.target for ex in examples])
    return sum(p == ex.label for p, ex in zip(preds, examples)) / len(examples)


def evaluate_classification(model, examples, batch_size=256):
    if model.task == "seq2seq":
        raise DataError("accuracy needs a classification model")
    return evaluate(model, examples, batch_size)


def evaluate_by_length(model, examples, batch_size=256, preds=None):
    """One row per length group of the first sentence; empty groups get ``None``.

    Groups run from 1 to the largest group present.
    """
    if not examples:
        raise DataError("cannot evaluate an empty split")
    if preds is None:
        preds = predict_all(model, examples, batch_size)
    groups = {}
    for ex, p in zip(examples, preds):
        groups.setdefault(length_bucket(len(ex.tokens)), []).append((ex, p))
    rows = []
    for i in range(1, max(groups) + 1):
        lo, hi = bucket_range(i)
        members = groups.get(i, [])
        value = _score(model.task, [m[0] for m in members], [m[1] for m in members]) if members else None
        rows.append({"bucket": i, "min_len": lo, "max_len": hi, "count": len(members), "metric": value})
    return rows

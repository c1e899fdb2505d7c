"""Word saliency from the encoding-to-embedding Jacobian, and agreement stats.

The saliency of word k is ``sum_ij |d s_i / d w_kj|`` where ``s`` is the
sentence encoding and ``w_k`` the word's embedding.
"""

import contextlib
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor


class SaliencyError(ValueError):
    pass


@dataclass
class SaliencyProfile:
    tokens: list
    scores: np.ndarray
    model: str = ""

    def __post_init__(self):
        if len(self.tokens) != len(self.scores):
            raise SaliencyError("one score per token is required")

    def normalized(self):
        """Scores divided by the sentence maximum (all zeros stay zero)."""
        top = float(np.max(self.scores)) if len(self.scores) else 0.0
        return self.scores / top if top > 0 else np.zeros_like(self.scores)


@contextlib.contextmanager
def _frozen(params):
    saved = [(t, t.requires_grad) for t in params.tensors()]
    for t, _ in saved:
        t.requires_grad = False
    try:
        yield
    finally:
        for t, flag in saved:
            t.requires_grad = flag


def jacobian_l1(encoder, ids, lengths, layouts=None, rng=None):
    """Per-word saliency (B, T) for a padded batch.

    One backward pass per encoding dimension; every sentence in the batch
    is seeded at once since sentences do not interact.
    """
    ids = np.asarray(ids)
    lengths = np.asarray(lengths)
    if ids.size == 0 or (lengths < 1).any():
        raise SaliencyError("cannot compute saliency of an empty sentence")
    with _frozen(encoder.params):
        embedded = Tensor(encoder.embedding.data[ids], requires_grad=True)
        with Tape() as tape:
            out = encoder.encode(ids, lengths, layouts=layouts, rng=rng, training=False, embedded=embedded)
    enc = out.encoding
    total = np.zeros(ids.shape, dtype=np.float64)
    for i in range(enc.shape[1]):
        seed = np.zeros_like(enc.data)
        seed[:, i] = 1.0
        g = tape.gradients(enc, seed, wrt=[embedded]).get(id(embedded))
        if g is not None:
            total += np.abs(g).sum(axis=-1)
    return total, out.layouts


def word_saliency(encoder, tokens, vocab, layout=None, rng=None, model=""):
    """:class:`SaliencyProfile` of one tokenized sentence."""
    if not tokens:
        raise SaliencyError("cannot compute saliency of an empty sentence")
    ids = np.array([vocab.encode(tokens)])
    layouts = None if layout is None else [layout]
    scores, _ = jacobian_l1(encoder, ids, [len(tokens)], layouts, rng)
    return SaliencyProfile(list(tokens), scores[0], model)


def corpus_saliency(encoder, sentences, vocab, layouts=None, batch_size=64, model="", rng=None):
    """Profiles for a list of token lists, computed in padded batches."""
    out = []
    for start in range(0, len(sentences), batch_size):
        chunk = sentences[start:start + batch_size]
        lengths = np.array([len(s) for s in chunk])
        ids = np.zeros((len(chunk), int(lengths.max())), dtype=np.int64)
        for b, s in enumerate(chunk):
            ids[b, :len(s)] = vocab.encode(s)
        lays = None if layouts is None else layouts[start:start + batch_size]
        scores, _ = jacobian_l1(encoder, ids, lengths, lays, rng)
        out.extend(SaliencyProfile(list(s), scores[b, :len(s)], model) for b, s in enumerate(chunk))
    return out


def pearson(x, y):
    """Product-moment correlation, or ``None`` when it is undefined."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise SaliencyError("pearson needs two vectors of equal length")
    if len(x) < 2:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


@dataclass
class Agreement:
    """Mean average Pearson (x100) over ordered model pairs.

    ``pairs`` maps ``(i, j)`` to that pair's sentence-averaged correlation;
    ``excluded`` counts (pair, sentence) cases with undefined correlation.
    """

    mean: float
    pairs: dict
    excluded: int
    sentences: int


def saliency_agreement(profiles):
    """``profiles[m][s]`` holds model m's scores for sentence s."""
    n_models = len(profiles)
    if n_models < 2:
        raise SaliencyError("agreement needs at least two models")
    n_sent = len(profiles[0])
    if any(len(p) != n_sent for p in profiles):
        raise SaliencyError("every model must score the same sentences")
    pairs = {}
    excluded = 0
    for i in range(n_models):
        for j in range(n_models):
            if i == j:
                continue
            rs = []
            for s in range(n_sent):
                a = getattr(profiles[i][s], "scores", profiles[i][s])
                b = getattr(profiles[j][s], "scores", profiles[j][s])
                r = pearson(a, b)
                if r is None:
                    excluded += 1
                else:
                    rs.append(r)
            pairs[(i, j)] = 100.0 * sum(rs) / len(rs) if rs else None
    defined = [v for v in pairs.values() if v is not None]
    if not defined:
        raise SaliencyError("no sentence has a defined correlation")
    return Agreement(sum(defined) / len(defined), pairs, excluded, n_sent)


def positional_saliency_summary(profiles, quarters=4):
    """Mean per-quarter share of each sentence's total saliency.

    Word k of an n-word sentence falls in part ``floor(k * quarters / n)``.
    """
    if not profiles:
        raise SaliencyError("empty corpus")
    acc = np.zeros(quarters)
    used = 0
    for p in profiles:
        scores = np.asarray(getattr(p, "scores", p), dtype=np.float64)
        n = len(scores)
        if n < 2 * quarters:
            raise SaliencyError(f"sentences need at least {2 * quarters} words, got {n}")
        total = scores.sum()
        if total <= 0:
            continue
        part = np.arange(n) * quarters // n
        acc += np.bincount(part, weights=scores / total, minlength=quarters)
        used += 1
    if used == 0:
        raise SaliencyError("every sentence has zero saliency")
    return acc / used


def write_records(fh, profiles):
    """One tab-separated row per word: sentence, position, token, raw, normalized."""
    fh.write("sentence\tposition\ttoken\tsaliency\tnormalized\tmodel\n")
    for s, p in enumerate(profiles):
        norm = p.normalized()
        for k, (tok, raw) in enumerate(zip(p.tokens, p.scores)):
            fh.write(f"{s}\t{k}\t{tok}\t{float(raw):.9g}\t{float(norm[k]):.6f}\t{p.model}\n")

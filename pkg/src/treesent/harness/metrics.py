"""Corpus BLEU and sentence-length buckets."""

import math
from collections import Counter

from .errors import DataError


def _split(text, level):
    if isinstance(text, (list, tuple)):
        text = " ".join(text)
    if level == "word":
        return text.split()
    if level == "char":
        return [ch for ch in text if not ch.isspace()]
    raise ValueError(f"unknown BLEU level {level!r}")


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(hypothesis, reference, n, level="word"):
    """Clipped n-gram matches and total hypothesis n-grams for one pair."""
    hyp = _ngrams(_split(hypothesis, level), n)
    ref = _ngrams(_split(reference, level), n)
    matched = sum(min(c, ref[g]) for g, c in hyp.items())
    return matched, sum(hyp.values())


def bleu(hypotheses, references, level="word", max_n=4, smooth=False):
    """Corpus-level BLEU in [0, 100] with one reference per hypothesis.

    Clipped counts are pooled over the corpus before the geometric mean.
    ``smooth`` adds one to numerator and denominator for n > 1.
    """
    if len(hypotheses) != len(references):
        raise DataError(f"{len(hypotheses)} hypotheses for {len(references)} references")
    if not hypotheses:
        raise DataError("BLEU of an empty corpus")
    matched = [0] * max_n
    total = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h, r = _split(hyp, level), _split(ref, level)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matched[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            total[n - 1] += sum(hc.values())
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(max_n):
        m, t = matched[n], total[n]
        if smooth and n > 0:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_sum / max_n)


def length_bucket(n):
    """Lengths 1-8 form group 1; group i >= 2 covers 4i+1 .. 4i+4."""
    if n < 1:
        raise ValueError("length must be positive")
    return 1 if n <= 8 else (n - 1) // 4


def bucket_range(i):
    return (1, 8) if i == 1 else (4 * i + 1, 4 * i + 4)

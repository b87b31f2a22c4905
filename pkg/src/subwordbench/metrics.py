"""Corpus BLEU and character n-gram F-score (CHRF) for detokenized output.

BLEU follows the usual corpus-level definition with no smoothing: a single
n-gram order without any match scores 0.  CHRF averages precision and recall
over character orders per sentence and macro-averages the F-scores.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .corpus import iter_lines


@dataclass(frozen=True)
class EvalPair:
    hypotheses: tuple[str, ...]
    references: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "hypotheses", tuple(self.hypotheses))
        object.__setattr__(self, "references", tuple(self.references))
        if not self.hypotheses:
            raise ValueError("no hypotheses to score")
        if len(self.hypotheses) != len(self.references):
            raise ValueError(
                f"{len(self.hypotheses)} hypotheses but {len(self.references)} references"
            )

    def __len__(self):
        return len(self.hypotheses)

    @classmethod
    def from_files(cls, hyp_path, ref_path) -> EvalPair:
        hyps = [line for _, line in iter_lines(hyp_path)]
        refs = [line for _, line in iter_lines(ref_path)]
        return cls(tuple(hyps), tuple(refs))


def _ngrams(items: Sequence, n: int) -> Counter:
    return Counter(tuple(items[i : i + n]) for i in range(len(items) - n + 1))


def bleu_statistics(pair: EvalPair, max_n: int = 4, lowercase: bool = True):
    """Matched and total n-gram counts per order, plus both lengths."""
    matched = [0] * max_n
    total = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(pair.hypotheses, pair.references):
        if lowercase:
            hyp, ref = hyp.lower(), ref.lower()
        h, r = hyp.split(), ref.split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            total[n - 1] += sum(hc.values())
            matched[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
    return matched, total, hyp_len, ref_len


def corpus_bleu(pair: EvalPair, max_n: int = 4, lowercase: bool = True) -> float:
    """Corpus BLEU in [0, 100] over whitespace tokens, single reference.

    Orders for which the hypotheses contain no n-gram at all are dropped from
    the geometric mean, so an identical corpus of one-word sentences still
    scores 100.  Any order with n-grams but no match gives 0.
    """
    if max_n < 1:
        raise ValueError("max_n must be at least 1")
    matched, total, hyp_len, ref_len = bleu_statistics(pair, max_n, lowercase)
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    orders = 0
    for m, t in zip(matched, total):
        if t == 0:
            break
        if m == 0:
            return 0.0
        log_sum += math.log(m / t)
        orders += 1
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_sum / orders)


def _normalize_spaces(text: str) -> str:
    return " ".join(text.split())


def sentence_chrf(hyp: str, ref: str, beta: float = 3.0, max_char_n: int = 6, lowercase: bool = True) -> float:
    """CHRF of one sentence in [0, 100].

    Only orders with at least one n-gram on both sides count; P and R are
    averaged over those orders before the F_beta combination.
    """
    hyp, ref = _normalize_spaces(hyp), _normalize_spaces(ref)
    if lowercase:
        hyp, ref = hyp.lower(), ref.lower()
    precisions, recalls = [], []
    for n in range(1, max_char_n + 1):
        hc, rc = _ngrams(hyp, n), _ngrams(ref, n)
        if not hc or not rc:
            break
        overlap = sum((hc & rc).values())
        precisions.append(overlap / sum(hc.values()))
        recalls.append(overlap / sum(rc.values()))
    if not precisions:
        # at least one side is empty
        return 100.0 if hyp == ref else 0.0
    p = sum(precisions) / len(precisions)
    r = sum(recalls) / len(recalls)
    if p == 0.0 and r == 0.0:
        return 0.0
    b2 = beta * beta
    return 100.0 * (1 + b2) * p * r / (b2 * p + r)


def chrf(pair: EvalPair, beta: float = 3.0, max_char_n: int = 6, lowercase: bool = True) -> float:
    """Macro-average of sentence CHRF scores; beta=3 gives CHRF3."""
    if max_char_n < 1:
        raise ValueError("max_char_n must be at least 1")
    scores = [
        sentence_chrf(h, r, beta, max_char_n, lowercase)
        for h, r in zip(pair.hypotheses, pair.references)
    ]
    return math.fsum(scores) / len(scores)


METRICS = {"bleu": corpus_bleu, "chrf3": chrf}

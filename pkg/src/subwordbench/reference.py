"""Published per-cell score aggregates for resampling experiments.

Mean and standard deviation over 5 training seeds of lowercased BLEU and of
CHRF3, for four segmentation methods on eight low-resource translation
tasks.  :func:`reference_summary` turns them into the mapping expected by
:func:`subwordbench.stats.resample_summary`.
"""

from __future__ import annotations

from .stats import BLEU, CHRF3

METHODS = ("LMVR", "MORSEL", "SentencePiece", "Subword-NMT")

# task, method, BLEU mean, BLEU sd, CHRF3 mean, CHRF3 sd
SCORES = (
    ('EN-KK (train120k)', 'LMVR', 1.00, 0.12, 21.98, 0.41),
    ('EN-KK (train120k)', 'MORSEL', 0.94, 0.11, 21.24, 0.89),
    ('EN-KK (train120k)', 'SentencePiece', 1.04, 0.09, 21.48, 0.47),
    ('EN-KK (train120k)', 'Subword-NMT', 1.32, 0.08, 22.12, 0.28),
    ('EN-KK (train220k)', 'LMVR', 1.82, 0.13, 22.74, 0.84),
    ('EN-KK (train220k)', 'MORSEL', 2.06, 0.11, 22.88, 0.40),
    ('EN-KK (train220k)', 'SentencePiece', 2.18, 0.08, 22.78, 0.43),
    ('EN-KK (train220k)', 'Subword-NMT', 1.94, 0.22, 22.62, 0.88),
    ('KK-EN (train120k)', 'LMVR', 1.70, 0.07, 23.72, 0.44),
    ('KK-EN (train120k)', 'MORSEL', 2.62, 0.08, 26.26, 0.36),
    ('KK-EN (train120k)', 'SentencePiece', 2.34, 0.21, 24.64, 0.81),
    ('KK-EN (train120k)', 'Subword-NMT', 3.14, 0.18, 25.92, 0.54),
    ('KK-EN (train220k)', 'LMVR', 9.42, 0.26, 33.88, 0.76),
    ('KK-EN (train220k)', 'MORSEL', 10.44, 0.48, 34.58, 0.88),
    ('KK-EN (train220k)', 'SentencePiece', 10.02, 0.29, 33.50, 0.54),
    ('KK-EN (train220k)', 'Subword-NMT', 10.68, 0.34, 35.52, 0.41),
    ('EN-NE', 'LMVR', 4.32, 0.04, 31.00, 0.29),
    ('EN-NE', 'MORSEL', 4.38, 0.16, 31.28, 0.47),
    ('EN-NE', 'SentencePiece', 4.58, 0.15, 31.36, 0.35),
    ('EN-NE', 'Subword-NMT', 4.42, 0.16, 30.96, 0.34),
    ('NE-EN', 'LMVR', 7.84, 0.11, 34.10, 0.16),
    ('NE-EN', 'MORSEL', 5.30, 0.30, 28.18, 0.97),
    ('NE-EN', 'SentencePiece', 8.42, 0.23, 34.40, 0.73),
    ('NE-EN', 'Subword-NMT', 8.46, 0.15, 34.18, 0.13),
    ('EN-SI', 'LMVR', 1.44, 0.32, 28.22, 0.30),
    ('EN-SI', 'MORSEL', 1.12, 0.13, 27.44, 0.34),
    ('EN-SI', 'SentencePiece', 1.08, 0.31, 27.56, 0.43),
    ('EN-SI', 'Subword-NMT', 0.88, 0.13, 26.78, 0.51),
    ('SI-EN', 'LMVR', 7.24, 0.22, 32.16, 0.63),
    ('SI-EN', 'MORSEL', 7.78, 0.16, 34.32, 0.30),
    ('SI-EN', 'SentencePiece', 7.52, 0.08, 33.58, 0.43),
    ('SI-EN', 'Subword-NMT', 7.76, 0.25, 34.38, 0.38),
)


def reference_summary() -> dict[tuple[str, str, str], tuple[float, float]]:
    out = {}
    for task, method, bleu, bleu_sd, chrf, chrf_sd in SCORES:
        out[(task, method, BLEU)] = (bleu, bleu_sd)
        out[(task, method, CHRF3)] = (chrf, chrf_sd)
    return out

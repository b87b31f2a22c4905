"""Subword segmentation for low-resource translation experiments.

Modules: ``corpus`` (I/O and counting), ``bpe`` (token- and sentence-level
byte pair encoding), ``morph`` (MDL morph segmentation), ``hybrid`` (stem
BPE plus suffixes), ``metrics`` (BLEU, CHRF), ``stats`` (rank tests and a
Bayesian linear model) and ``cli``.
"""

__version__ = "0.1.0"

"""Tokenized corpora, frequency tables, gold segmentations and analyses.

All files are UTF-8 text.  A corpus holds one sentence per line with tokens
separated by spaces; tokenization proper (Moses, Indic NLP) happens upstream.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

# Morph-edge marker stripped from gold morphs before the concatenation check.
GOLD_MARKER = "+"
GOLD_ALT_SEP = ", "


class FormatError(ValueError):
    """A data file does not follow its expected line format."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


@dataclass(frozen=True)
class TokenizedCorpus:
    sentences: tuple[tuple[str, ...], ...]
    lowercased: bool = False

    def __post_init__(self):
        for sent in self.sentences:
            for tok in sent:
                if not tok or any(ch.isspace() for ch in tok):
                    raise ValueError(f"invalid token {tok!r}")
                if self.lowercased and tok != tok.lower():
                    raise ValueError(f"token {tok!r} is not lowercase")

    @classmethod
    def from_lists(cls, sentences: Iterable[Iterable[str]], lowercased: bool = False):
        return cls(tuple(tuple(s) for s in sentences), lowercased)

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


FrequencyTable = Counter  # word -> count; every count >= 1


class Analysis(NamedTuple):
    stem: str
    suffixes: tuple[str, ...] = ()

    @property
    def word(self) -> str:
        return self.stem + "".join(self.suffixes)


def split_tokens(line: str) -> list[str]:
    """The only built-in tokenizer: split on runs of whitespace."""
    return line.split()


def iter_lines(path) -> Iterator[tuple[int, str]]:
    """Yield ``(line_no, text)`` with line endings removed.

    Decoding is done per line so an invalid byte sequence is reported with
    its line number.
    """
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, 1):
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise FormatError(path, line_no, f"invalid UTF-8 ({exc.reason})") from None
            yield line_no, text.rstrip("\r\n")


def load_corpus(path, lowercase: bool = False) -> TokenizedCorpus:
    if not os.path.exists(path):
        raise FileNotFoundError(f"corpus file not found: {path}")
    sentences = []
    for _, line in iter_lines(path):
        if lowercase:
            line = line.lower()
        sentences.append(tuple(split_tokens(line)))
    return TokenizedCorpus(tuple(sentences), lowercase)


def write_corpus(corpus: TokenizedCorpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sent in corpus.sentences:
            fh.write(" ".join(sent) + "\n")


def count_frequencies(corpus: TokenizedCorpus | Iterable[Iterable[str]]) -> Counter:
    counts = Counter()
    for sent in corpus:
        counts.update(sent)
    return counts


def merge_frequencies(*tables: Counter) -> Counter:
    """Sum several tables, e.g. source and target side for a joint model."""
    total = Counter()
    for table in tables:
        total.update(table)
    return total


def strip_gold_marker(morph: str) -> str:
    return morph.strip(GOLD_MARKER)


def load_gold(path) -> dict[str, list[tuple[str, ...]]]:
    """Read ``word<TAB>morphs(, morphs)*`` lines.

    Alternatives keep their file order.  Morph-edge ``+`` markers are removed.
    """
    gold: dict[str, list[tuple[str, ...]]] = {}
    for line_no, line in iter_lines(path):
        if not line.strip():
            continue
        word, sep, rest = line.partition("\t")
        if not sep:
            raise FormatError(path, line_no, "expected word<TAB>analyses")
        word = word.strip()
        analyses = []
        for alt in rest.split(GOLD_ALT_SEP):
            morphs = tuple(m for m in (strip_gold_marker(m) for m in alt.split()) if m)
            if not morphs:
                raise FormatError(path, line_no, f"empty analysis for {word!r}")
            if "".join(morphs) != word:
                raise FormatError(
                    path, line_no, f"morphs {' '.join(morphs)!r} do not spell {word!r}"
                )
            analyses.append(morphs)
        gold.setdefault(word, []).extend(analyses)
    return gold


def load_analyses(path) -> dict[str, Analysis]:
    """Read ``word<TAB>stem<TAB>suffix1 suffix2 ...`` lines."""
    table: dict[str, Analysis] = {}
    for line_no, line in iter_lines(path):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) == 2:
            fields.append("")
        if len(fields) != 3:
            raise FormatError(path, line_no, f"expected 3 tab-separated fields, got {len(fields)}")
        word, stem, suffixes = fields[0], fields[1], tuple(fields[2].split())
        if not stem:
            raise FormatError(path, line_no, f"empty stem for {word!r}")
        analysis = Analysis(stem, suffixes)
        if analysis.word != word:
            raise FormatError(path, line_no, f"stem+suffixes do not spell {word!r}")
        table[word] = analysis
    return table


def write_analyses(table: dict[str, Analysis], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for word in sorted(table):
            a = table[word]
            fh.write(f"{word}\t{a.stem}\t{' '.join(a.suffixes)}\n")

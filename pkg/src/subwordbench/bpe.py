"""Byte pair encoding at the token level and at the sentence level.

Token mode follows the Subword-NMT conventions: words are learned from a
frequency table, an end-of-word sentinel is glued to the final character
during learning, and every non-final piece of a word is emitted with a
trailing ``@@``::

    slowly -> s@@ low@@ ly

Sentence mode learns from whole sentences.  Each word gets a boundary marker
(U+2581 by default) on its first character, so whitespace is encoded in the
pieces themselves and detokenization is lossless::

    the nation -> ▁the ▁n ation
"""

from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

CONTINUATION = "@@"
END_OF_WORD = "</w>"
DEFAULT_BOUNDARY = "▁"
TOKEN, SENTENCE = "token", "sentence"

HEADER_PREFIX = "#subwordbench-bpe"


class MergeRule(NamedTuple):
    left: str
    right: str


class MarkerError(ValueError):
    """A piece sequence violates the marker convention of its scheme."""


@dataclass(frozen=True)
class BpeModel:
    merges: tuple[MergeRule, ...]
    mode: str = TOKEN
    requested_symbols: int = 0
    # Marker-free pieces produced on the training data; None for loaded models.
    vocabulary: frozenset[str] | None = None
    marker: str = DEFAULT_BOUNDARY
    _ranks: dict = field(init=False, repr=False, compare=False)
    _cache: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in (TOKEN, SENTENCE):
            raise ValueError(f"unknown BPE mode {self.mode!r}")
        if len(self.marker) != 1:
            raise ValueError("boundary marker must be a single code point")
        ranks = {}
        for i, (left, right) in enumerate(self.merges):
            if not left or not right:
                raise ValueError(f"empty symbol in merge {i}")
            ranks.setdefault((left, right), i)
        object.__setattr__(self, "_ranks", ranks)
        object.__setattr__(self, "_cache", {})

    def __len__(self):
        return len(self.merges)

    def truncated(self, k: int) -> BpeModel:
        return BpeModel(self.merges[:k], self.mode, k, None, self.marker)

    # -- applying ---------------------------------------------------------

    def _symbols(self, word: str, word_initial: bool = True) -> tuple[str, ...]:
        key = (word, word_initial)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        symbols = _initial_symbols(word, self.mode, self.marker, word_initial)
        symbols = _apply_ranked(symbols, self._ranks)
        if len(self._cache) < 200_000:
            self._cache[key] = symbols
        return symbols

    def segment_word(self, word: str) -> list[str]:
        """Pieces of a single token, with this model's marker convention."""
        if not word:
            return []
        symbols = self._symbols(word)
        if self.mode == SENTENCE:
            return list(symbols)
        last = symbols[-1][: -len(END_OF_WORD)]
        return [s + CONTINUATION for s in symbols[:-1]] + [last]

    def segment(self, text: str) -> list[str]:
        """Pieces of a whitespace-tokenized sentence."""
        pieces: list[str] = []
        for word in text.split():
            pieces.extend(self.segment_word(word))
        return pieces

    # -- serialization ----------------------------------------------------

    def dumps(self) -> str:
        lines = [f"{HEADER_PREFIX} v1 mode={self.mode} merges={len(self.merges)}"]
        if self.mode == SENTENCE and self.marker != DEFAULT_BOUNDARY:
            lines[0] += f" marker=U+{ord(self.marker):04X}"
        lines.extend(f"{left} {right}" for left, right in self.merges)
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> BpeModel:
        model, rest = parse_bpe_lines(text.splitlines())
        if any(line.strip() for line in rest):
            raise ValueError("trailing content after BPE merges")
        return model

    @classmethod
    def load(cls, path) -> BpeModel:
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def parse_header(line: str, prefix: str) -> dict[str, str]:
    parts = line.split()
    if not parts or parts[0] != prefix or len(parts) < 2 or parts[1] != "v1":
        raise ValueError(f"expected a '{prefix} v1' header, got {line!r}")
    fields = {}
    for item in parts[2:]:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed header field {item!r}")
        fields[key] = value
    return fields


def parse_bpe_lines(lines: list[str]) -> tuple[BpeModel, list[str]]:
    """Parse a BPE header and its merges; return the model and leftover lines."""
    if not lines:
        raise ValueError("empty BPE model file")
    fields = parse_header(lines[0], HEADER_PREFIX)
    mode = fields.get("mode", TOKEN)
    n = int(fields.get("merges", "0"))
    marker = DEFAULT_BOUNDARY
    if "marker" in fields:
        marker = chr(int(fields["marker"].removeprefix("U+"), 16))
    if len(lines) < n + 1:
        raise ValueError(f"header announces {n} merges, file has {len(lines) - 1}")
    merges = []
    for line in lines[1 : n + 1]:
        parts = line.split(" ")
        if len(parts) != 2:
            raise ValueError(f"malformed merge line {line!r}")
        merges.append(MergeRule(*parts))
    return BpeModel(tuple(merges), mode, n, None, marker), lines[n + 1 :]


# -- learning ---------------------------------------------------------------


def _initial_symbols(word: str, mode: str, marker: str, word_initial: bool = True):
    chars = list(word)
    if mode == TOKEN:
        chars[-1] += END_OF_WORD
    elif word_initial:
        chars[0] = marker + chars[0]
    return tuple(chars)


def _apply_ranked(symbols: tuple[str, ...], ranks: dict) -> tuple[str, ...]:
    # Merging the lowest-ranked pair present, everywhere, until none is left
    # is equivalent to replaying the merge list in order.
    symbols = list(symbols)
    while len(symbols) > 1:
        best = None
        for pair in zip(symbols, symbols[1:]):
            r = ranks.get(pair)
            if r is not None and (best is None or r < best[0]):
                best = (r, pair)
        if best is None:
            break
        symbols = _merge_word(symbols, *best[1])
    return tuple(symbols)


def _merge_word(symbols, left, right):
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i < n - 1 and symbols[i] == left and symbols[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def _strip_symbol(symbol: str) -> str:
    return symbol[: -len(END_OF_WORD)] if symbol.endswith(END_OF_WORD) else symbol


def _check_reserved(word: str, marker: str) -> None:
    if CONTINUATION in word or marker in word:
        raise ValueError(f"word {word!r} contains a reserved marker")


class LearnResult(NamedTuple):
    merges: list[MergeRule]
    # vocab_sizes[k] = number of distinct marker-free pieces after k merges
    vocab_sizes: list[int]
    vocabulary: frozenset[str]


def learn_merges(words: dict[tuple[str, ...], int], num_merges: int) -> LearnResult:
    """Greedy BPE over pre-split words ``symbols -> frequency``.

    The most frequent adjacent pair is merged at each step; equal counts go
    to the lexicographically smallest ``(left, right)``.  Learning stops when
    no pair occurs at least twice.
    """
    vocab = [list(w) for w in words]
    freqs = list(words.values())

    pair_counts: dict[tuple[str, str], int] = defaultdict(int)
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    symbol_occ: Counter = Counter()
    for idx, symbols in enumerate(vocab):
        f = freqs[idx]
        for pair in zip(symbols, symbols[1:]):
            pair_counts[pair] += f
            where[pair].add(idx)
        symbol_occ.update(_strip_symbol(s) for s in symbols)

    heap = [(-c, p) for p, c in pair_counts.items()]
    heapq.heapify(heap)

    merges: list[MergeRule] = []
    sizes = [len(symbol_occ)]
    while len(merges) < num_merges and heap:
        neg, pair = heapq.heappop(heap)
        count = pair_counts.get(pair, 0)
        if -neg != count:
            # stale entry; the live count was pushed separately
            continue
        if count < 2:
            break
        left, right = pair
        merges.append(MergeRule(left, right))
        touched: dict[tuple[str, str], int] = {}
        for idx in sorted(where.pop(pair, ())):
            old = vocab[idx]
            new = _merge_word(old, left, right)
            if len(new) == len(old):
                continue
            f = freqs[idx]
            for p in zip(old, old[1:]):
                pair_counts[p] -= f
                touched[p] = pair_counts[p]
            for p in zip(new, new[1:]):
                pair_counts[p] += f
                touched[p] = pair_counts[p]
                where[p].add(idx)
            for s in old:
                s = _strip_symbol(s)
                symbol_occ[s] -= 1
                if not symbol_occ[s]:
                    del symbol_occ[s]
            for s in new:
                symbol_occ[_strip_symbol(s)] += 1
            vocab[idx] = new
        for p, c in touched.items():
            if c <= 0:
                pair_counts.pop(p, None)
                where.pop(p, None)
            elif p != pair:
                heapq.heappush(heap, (-c, p))
        pair_counts.pop(pair, None)
        sizes.append(len(symbol_occ))
    return LearnResult(merges, sizes, frozenset(symbol_occ))


def _token_words(freq: Counter) -> dict[tuple[str, ...], int]:
    words = {}
    for word in sorted(freq):
        if not word:
            continue
        _check_reserved(word, DEFAULT_BOUNDARY)
        words[_initial_symbols(word, TOKEN, DEFAULT_BOUNDARY)] = freq[word]
    return words


def learn_bpe_token(freq: Counter, num_merges: int, seed: int = 0) -> BpeModel:
    """Learn token-level merges from a word frequency table.

    For a joint source/target model pass the sum of both tables.  BPE is
    deterministic, so ``seed`` has no effect; it is accepted so every learner
    shares one signature.
    """
    if not freq:
        raise ValueError("cannot learn BPE from an empty frequency table")
    if num_merges < 0:
        raise ValueError("num_merges must be non-negative")
    result = learn_merges(_token_words(freq), num_merges)
    return BpeModel(tuple(result.merges), TOKEN, num_merges, result.vocabulary)


def _sentence_words(corpus, marker: str) -> dict[tuple[str, ...], int]:
    counts = Counter()
    for sent in corpus:
        if isinstance(sent, str):
            sent = sent.split()
        counts.update(sent)
    words = {}
    for word in sorted(counts):
        _check_reserved(word, marker)
        words[_initial_symbols(word, SENTENCE, marker)] = counts[word]
    return words


def learn_bpe_sentence(
    corpus: Iterable, num_merges: int, seed: int = 0, marker: str = DEFAULT_BOUNDARY
) -> BpeModel:
    """Learn merges from sentences, with whitespace carried by ``marker``.

    Every word starts with a marker-prefixed symbol, so no merge can reach
    across a word boundary.
    """
    words = _sentence_words(corpus, marker)
    if not words:
        raise ValueError("cannot learn BPE from an empty corpus")
    if num_merges < 0:
        raise ValueError("num_merges must be non-negative")
    result = learn_merges(words, num_merges)
    return BpeModel(tuple(result.merges), SENTENCE, num_merges, result.vocabulary, marker)


def training_vocabulary(model: BpeModel, words: Iterable[str]) -> frozenset[str]:
    """Marker-free pieces ``model`` produces on ``words``."""
    vocab = set()
    for word in words:
        vocab.update(_strip_symbol(s) for s in model._symbols(word))
    return frozenset(vocab)


def sweep_merge_counts(data, counts: list[int], mode: str = TOKEN, seed: int = 0) -> list[BpeModel]:
    """One model per merge count.

    Greedy learning makes every smaller model a prefix of a larger one, so
    only the largest count is learned and the rest are truncations.
    """
    if not counts:
        return []
    top = max(counts)
    if mode == TOKEN:
        full = learn_bpe_token(data, top, seed)
        words = list(data)
    else:
        full = learn_bpe_sentence(data, top, seed)
        words = sorted({w for sent in data for w in (sent.split() if isinstance(sent, str) else sent)})
    models = []
    for k in counts:
        if k < 0:
            raise ValueError("merge counts must be non-negative")
        small = full.truncated(k)
        models.append(
            BpeModel(small.merges, mode, k, training_vocabulary(small, words), full.marker)
        )
    return models


def apply_bpe(model: BpeModel, text: str) -> list[str]:
    """Segment a token (token mode) or a sentence (sentence mode)."""
    return model.segment(text)


def detokenize(pieces: list[str], mode: str = TOKEN, marker: str = DEFAULT_BOUNDARY) -> str:
    """Invert :func:`apply_bpe`."""
    if not pieces:
        return ""
    if mode == TOKEN:
        if pieces[-1].endswith(CONTINUATION):
            raise MarkerError("final piece carries a continuation marker")
        out = []
        for piece in pieces:
            if piece.endswith(CONTINUATION):
                out.append(piece[: -len(CONTINUATION)])
            else:
                out.append(piece + " ")
        return "".join(out)[:-1]
    if mode == SENTENCE:
        if not pieces[0].startswith(marker):
            raise MarkerError("sentence does not start with a boundary-marked piece")
        out = []
        for piece in pieces:
            if piece.startswith(marker):
                out.append(" " + piece[1:])
            else:
                out.append(piece)
        return "".join(out)[1:]
    raise ValueError(f"unknown BPE mode {mode!r}")

"""Stem BPE combined with suffix analyses.

Words are analyzed as a stem plus ordered suffixes.  BPE is learned on the
stems only, and each suffix is emitted as a single ``+``-prefixed piece::

    algebraic = algebra + ic  ->  al@@ ge@@ br@@ a +ic

The number of stem merges is chosen so that the stem pieces together with
the suffix pieces stay strictly below a vocabulary budget.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .bpe import (
    CONTINUATION,
    TOKEN,
    BpeModel,
    MarkerError,
    _token_words,
    learn_merges,
    parse_bpe_lines,
    parse_header,
    training_vocabulary,
)
from .corpus import Analysis

SUFFIX_MARKER = "+"
HEADER_PREFIX = "#subwordbench-hybrid"
SUFFIX_SECTION = "#suffixes"
ANALYSIS_SECTION = "#analyses"
MAX_SUFFIX_LEN = 5


@dataclass(frozen=True)
class HybridModel:
    stem_bpe: BpeModel
    suffix_set: frozenset[str]
    analyses: Mapping[str, Analysis]
    vocab_budget: int

    def __post_init__(self):
        if self.stem_bpe.mode != TOKEN:
            raise ValueError("stem BPE must be a token-mode model")
        if self.vocab_budget < 1:
            raise ValueError("vocab_budget must be positive")
        for s in self.suffix_set:
            _check_suffix(s)
        for word, a in self.analyses.items():
            missing = set(a.suffixes) - self.suffix_set
            if missing:
                raise ValueError(f"analysis of {word!r} uses unknown suffixes {sorted(missing)}")
        if self.stem_bpe.vocabulary is not None and self.vocab_size >= self.vocab_budget:
            raise ValueError(f"{self.vocab_size} symbols do not fit a budget of {self.vocab_budget}")

    @property
    def vocab_size(self) -> int:
        """Stem pieces plus suffix pieces; unknown for loaded models (-1)."""
        if self.stem_bpe.vocabulary is None:
            return -1
        return len(self.stem_bpe.vocabulary) + len(self.suffix_set)

    def segment(self, text: str) -> list[str]:
        pieces: list[str] = []
        for word in text.split():
            pieces.extend(segment_hybrid(self, word))
        return pieces

    # -- serialization ----------------------------------------------------

    def dumps(self) -> str:
        head = (
            f"{HEADER_PREFIX} v1 budget={self.vocab_budget} "
            f"suffixes={len(self.suffix_set)} analyses={len(self.analyses)}"
        )
        lines = [head, self.stem_bpe.dumps().rstrip("\n"), SUFFIX_SECTION]
        lines.extend(sorted(self.suffix_set))
        lines.append(ANALYSIS_SECTION)
        for word in sorted(self.analyses):
            a = self.analyses[word]
            lines.append(f"{word}\t{a.stem}\t{' '.join(a.suffixes)}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> HybridModel:
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty hybrid model file")
        fields = parse_header(lines[0], HEADER_PREFIX)
        try:
            budget = int(fields["budget"])
            n_suffixes = int(fields.get("suffixes", "0"))
            n_analyses = int(fields.get("analyses", "0"))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"malformed hybrid header {lines[0]!r}") from exc
        stem_bpe, rest = parse_bpe_lines(lines[1:])
        if len(rest) < n_suffixes + n_analyses + 2 or rest[0] != SUFFIX_SECTION:
            raise ValueError(f"expected a {SUFFIX_SECTION} section after the stem merges")
        suffixes = rest[1 : 1 + n_suffixes]
        rest = rest[1 + n_suffixes :]
        if rest[0] != ANALYSIS_SECTION:
            raise ValueError(f"expected a {ANALYSIS_SECTION} section after the suffixes")
        analyses = {}
        for line in rest[1 : 1 + n_analyses]:
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValueError(f"malformed analysis line {line!r}")
            a = Analysis(fields[1], tuple(fields[2].split()))
            if a.word != fields[0] or not a.stem:
                raise ValueError(f"analysis does not spell {fields[0]!r}")
            analyses[fields[0]] = a
        if any(line.strip() for line in rest[1 + n_analyses :]):
            raise ValueError("trailing content after analyses")
        return cls(stem_bpe, frozenset(suffixes), analyses, budget)

    @classmethod
    def load(cls, path) -> HybridModel:
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def _check_suffix(suffix: str) -> None:
    if not suffix or CONTINUATION in suffix or any(ch.isspace() for ch in suffix):
        raise ValueError(f"invalid suffix {suffix!r}")


def stem_frequencies(analyses: Mapping[str, Analysis], freq: Mapping[str, int]) -> Counter:
    """Stem -> summed frequency of the words that share it.

    Unanalyzed words count as their own stem.  Analyzed words that do not
    occur in ``freq`` contribute weight 1 so their stems stay producible.
    """
    stems: Counter = Counter()
    for word, count in freq.items():
        a = analyses.get(word)
        stems[a.stem if a else word] += count
    for word, a in analyses.items():
        if word not in freq:
            stems[a.stem] += 1
    return stems


def build_hybrid(
    analyses: Mapping[str, Analysis],
    freq: Mapping[str, int],
    vocab_budget: int = 2500,
    max_merges: int | None = None,
) -> HybridModel:
    """Learn stem BPE with as many merges as the budget allows.

    Merges are learned once, up to ``max_merges`` (default: the budget),
    and the largest prefix whose stem vocabulary plus suffix inventory stays
    below ``vocab_budget`` is kept.
    """
    if vocab_budget < 1:
        raise ValueError("vocab_budget must be positive")
    stems = stem_frequencies(analyses, freq)
    if not stems:
        raise ValueError("no words to build a hybrid model from")
    suffixes = frozenset(s for a in analyses.values() for s in a.suffixes)
    alphabet = {ch for stem in stems for ch in stem}
    if len(suffixes) + len(alphabet) >= vocab_budget:
        raise ValueError(
            f"budget {vocab_budget} leaves no room: {len(alphabet)} stem characters "
            f"+ {len(suffixes)} suffixes"
        )
    cap = vocab_budget if max_merges is None else max_merges
    result = learn_merges(_token_words(stems), cap)
    # Vocabulary size is not monotone in the merge count (a merge can retire
    # both of its parts), so scan every prefix rather than bisecting.
    best = max(k for k, size in enumerate(result.vocab_sizes) if size + len(suffixes) < vocab_budget)
    model = BpeModel(tuple(result.merges[:best]), TOKEN, best)
    model = BpeModel(model.merges, TOKEN, best, training_vocabulary(model, stems))
    return HybridModel(model, suffixes, dict(analyses), vocab_budget)


def segment_hybrid(model: HybridModel, word: str) -> list[str]:
    """Stem pieces with ``@@`` continuations, then one ``+suffix`` per suffix."""
    a = model.analyses.get(word)
    if a is None:
        return model.stem_bpe.segment_word(word)
    pieces = model.stem_bpe.segment_word(a.stem)
    pieces.extend(SUFFIX_MARKER + s for s in a.suffixes)
    return pieces


def _is_suffix_piece(piece: str) -> bool:
    return len(piece) > 1 and piece.startswith(SUFFIX_MARKER)


def _group_words(pieces: Sequence[str]) -> list[str]:
    words: list[list[str]] = []
    pending = False
    for piece in pieces:
        if _is_suffix_piece(piece):
            if not words:
                raise MarkerError(f"suffix piece {piece!r} has no stem")
            if pending:
                raise MarkerError(f"suffix piece {piece!r} follows a '@@' piece")
            if piece.endswith(CONTINUATION):
                raise MarkerError(f"suffix piece {piece!r} carries '@@'")
            words[-1].append(piece[1:])
            continue
        body = piece.removesuffix(CONTINUATION)
        if not body:
            raise MarkerError("bare '@@' piece")
        if pending:
            words[-1].append(body)
        else:
            words.append([body])
        pending = piece.endswith(CONTINUATION)
    if pending:
        raise MarkerError("trailing '@@' piece")
    return ["".join(w) for w in words]


def detokenize_hybrid(pieces: Sequence[str]) -> str:
    """Invert :func:`segment_hybrid` for a single word."""
    words = _group_words(pieces)
    if len(words) != 1:
        seen_suffix = False
        for piece in pieces:
            if _is_suffix_piece(piece):
                seen_suffix = True
            elif seen_suffix and piece.endswith(CONTINUATION):
                raise MarkerError(f"suffix piece precedes '@@' piece {piece!r}")
        raise MarkerError(f"pieces spell {len(words)} words, expected one")
    return words[0]


def detokenize_hybrid_text(pieces: Sequence[str]) -> str:
    """Invert :meth:`HybridModel.segment` for a whole sentence."""
    return " ".join(_group_words(pieces))


def learn_fallback_analyzer(freq: Mapping[str, int], max_suffixes: int) -> dict[str, Analysis]:
    """Induce a small suffix inventory and single-suffix analyses.

    A candidate suffix ``s`` scores one point for every word type ``stem+s``
    whose non-empty ``stem`` is also a word type.  The ``max_suffixes`` best
    (ties by string) are kept, and each word is analyzed with its longest
    kept suffix that leaves an attested stem.
    """
    if not freq:
        raise ValueError("cannot induce suffixes from an empty frequency table")
    if max_suffixes <= 0:
        return {}
    types = set(freq)
    scores: Counter = Counter()
    for word in types:
        for k in range(1, min(MAX_SUFFIX_LEN, len(word) - 1) + 1):
            if word[:-k] in types:
                scores[word[-k:]] += 1
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    inventory = {s for s, _ in ranked[:max_suffixes] if CONTINUATION not in s}
    table = {}
    for word in sorted(types):
        for k in range(min(MAX_SUFFIX_LEN, len(word) - 1), 0, -1):
            if word[-k:] in inventory and word[:-k] in types:
                table[word] = Analysis(word[:-k], (word[-k:],))
                break
    return table

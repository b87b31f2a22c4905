"""MDL morphological segmentation in the style of Morfessor Baseline.

The objective is a two-part code length in nats::

    cost = corpus_cost + alpha * lexicon_cost
    corpus_cost  = -sum over morph tokens of log(count(m) / N)
    lexicon_cost = sum over lexicon morphs of len(m) * (log|A| + log 2)

``|A|`` is the training alphabet size and ``log 2`` per character is the code
length of a geometric(0.5) length prior.  A larger ``alpha`` makes lexicon
entries more expensive and therefore favours shorter, shared morphs.

The vocabulary-constrained variant (:func:`constrain_vocab`) is used as a
stand-in for LMVR; it does not model morph categories.
"""

from __future__ import annotations

import heapq
import logging
import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from .bpe import parse_header

logger = logging.getLogger(__name__)

HEADER_PREFIX = "#subwordbench-mdl"
LMVR_MARKER = "+"
DEFAULT_ALPHA_GRID = (0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
BEST_MATCH, FIRST = "best-match", "first"

_EPS = 1e-9
# prefix sliding is quadratic-ish in lexicon size; skipped on large lexicons
SLIDE_LIMIT = 5000
# weight multipliers of the continuation start, ending at the target weight
CONTINUATION_FACTORS = (32.0, 16.0, 8.0, 4.0, 2.0)


def char_code_length(alphabet_size: int) -> float:
    return math.log(max(alphabet_size, 1)) + math.log(2)


class _CostState:
    """Running cost with O(1) updates as morph counts change."""

    def __init__(self, alphabet_size: int, alpha: float):
        self.counts: dict[str, int] = {}
        self.tokens = 0
        self.sum_clogc = 0.0
        self.lex_chars = 0
        self.alpha = alpha
        self.per_char = char_code_length(alphabet_size)

    def add(self, morph: str, n: int) -> None:
        c = self.counts.get(morph, 0)
        if c:
            self.sum_clogc -= c * math.log(c)
        else:
            self.lex_chars += len(morph)
        c += n
        self.counts[morph] = c
        self.sum_clogc += c * math.log(c)
        self.tokens += n

    def remove(self, morph: str, n: int) -> None:
        c = self.counts[morph]
        self.sum_clogc -= c * math.log(c)
        c -= n
        self.tokens -= n
        if c:
            self.counts[morph] = c
            self.sum_clogc += c * math.log(c)
        else:
            del self.counts[morph]
            self.lex_chars -= len(morph)

    def cost(self) -> float:
        corpus = self.tokens * math.log(self.tokens) - self.sum_clogc if self.tokens else 0.0
        return corpus + self.alpha * self.lex_chars * self.per_char


def total_cost(lexicon: Mapping[str, int], alphabet_size: int, alpha: float) -> float:
    """Exact objective for a morph count table."""
    n = sum(lexicon.values())
    corpus = sum(-c * math.log(c / n) for c in lexicon.values() if c > 0)
    lex = sum(len(m) for m, c in lexicon.items() if c > 0) * char_code_length(alphabet_size)
    return corpus + alpha * lex


@dataclass(frozen=True, eq=False)
class MdlModel:
    lexicon: dict[str, int]
    corpusweight: float
    alphabet: frozenset[str]
    # training word -> morphs; empty for models read from disk
    segmentations: dict[str, tuple[str, ...]] = field(default_factory=dict)
    word_freq: dict[str, int] = field(default_factory=dict)
    # set when the lexicon was pruned to a budget (LMVR stand-in)
    vocab_budget: int | None = None
    total_cost: float = field(init=False)
    _tokens: int = field(init=False, repr=False)
    _maxlen: int = field(init=False, repr=False)

    def __post_init__(self):
        if self.corpusweight <= 0:
            raise ValueError("corpusweight must be positive")
        object.__setattr__(
            self, "total_cost", total_cost(self.lexicon, len(self.alphabet), self.corpusweight)
        )
        object.__setattr__(self, "_tokens", sum(self.lexicon.values()))
        object.__setattr__(self, "_maxlen", max(map(len, self.lexicon), default=1))

    @property
    def label(self) -> str:
        if self.vocab_budget is None:
            return "mdl"
        return f"mdl-constrained(LMVR stand-in, budget={self.vocab_budget})"

    def morph_cost(self, morph: str) -> float:
        """Viterbi cost of one morph; inf if it cannot be used."""
        c = self.lexicon.get(morph, 0)
        if c > 0:
            return math.log(self._tokens) - math.log(c)
        if len(morph) == 1:
            return self.fallback_cost
        return math.inf

    @property
    def fallback_cost(self) -> float:
        # a single character outside the lexicon, as if newly added once
        return math.log(self._tokens + 1) + self.corpusweight * char_code_length(
            len(self.alphabet) + 1
        )

    def segment(self, word: str) -> list[str]:
        return segment_mdl(self, word)

    # -- serialization ----------------------------------------------------

    def dumps(self) -> str:
        lines = [f"{HEADER_PREFIX} v1 alpha={self.corpusweight!r} vocab={len(self.lexicon)}"]
        if self.vocab_budget is not None:
            lines[0] += f" budget={self.vocab_budget}"
        for morph, count in sorted(self.lexicon.items(), key=lambda kv: (-kv[1], kv[0])):
            lines.append(f"{morph}\t{count}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> MdlModel:
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty MDL model file")
        fields = parse_header(lines[0], HEADER_PREFIX)
        alpha = float(fields["alpha"])
        lexicon = {}
        for line in lines[1:]:
            if not line:
                continue
            morph, sep, count = line.rpartition("\t")
            if not sep or not morph:
                raise ValueError(f"malformed lexicon line {line!r}")
            lexicon[morph] = int(count)
        if "vocab" in fields and int(fields["vocab"]) != len(lexicon):
            raise ValueError("lexicon size does not match header")
        alphabet = frozenset(ch for m in lexicon for ch in m)
        budget = int(fields["budget"]) if "budget" in fields else None
        return cls(lexicon, alpha, alphabet, vocab_budget=budget)

    @classmethod
    def load(cls, path) -> MdlModel:
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


# -- training -----------------------------------------------------------------


class _Search:
    """Segmentations of all word types plus the running cost."""

    def __init__(self, freq, alphabet_size: int, alpha: float):
        self.freq = freq
        self.state = _CostState(alphabet_size, alpha)
        self.seg: dict[str, tuple[str, ...]] = {}
        self.users: dict[str, set[str]] = defaultdict(set)
        self.right = 0

    def cost(self) -> float:
        return self.state.cost()

    def assign(self, w: str, morphs: Sequence[str]) -> None:
        f = self.freq[w]
        self.seg[w] = tuple(morphs)
        self.right += f * sum(boundaries(morphs))
        for m in morphs:
            self.state.add(m, f)
            self.users[m].add(w)

    def unassign(self, w: str) -> tuple[str, ...]:
        f = self.freq[w]
        old = self.seg.pop(w)
        self.right -= f * sum(boundaries(old))
        for m in old:
            self.state.remove(m, f)
            if m not in self.state.counts:
                self.users.pop(m, None)
            else:
                self.users[m].discard(w)
        return old

    def tie_key(self) -> tuple:
        # among equal costs: fewer morph tokens, then boundaries further right
        return (self.state.tokens, -self.right)

    # -- moves ------------------------------------------------------------

    def resegment_word(self, w: str) -> bool:
        """Re-choose one word's analysis by dynamic programming."""
        before = self.cost()
        before_key = self.tie_key() if len(w) > 1 else None
        old = self.unassign(w)
        new = self._dp(w)
        self.assign(w, new)
        if new == old:
            return False
        after = self.cost()
        tol = _EPS * max(1.0, abs(before))
        if after < before - tol or (abs(after - before) <= tol and self.tie_key() < before_key):
            return True
        self.unassign(w)
        self.assign(w, old)
        return False

    def _dp(self, w: str) -> tuple[str, ...]:
        st = self.state
        f = self.freq[w]
        n = len(w)
        # additive approximation of the marginal cost of each morph token
        per_token = f * (math.log(st.tokens + f) + 1.0)
        lex = st.alpha * st.per_char
        best = [0.0] + [math.inf] * n
        back = [0] * (n + 1)
        for end in range(1, n + 1):
            for start in range(end - 1, -1, -1):
                m = w[start:end]
                c = st.counts.get(m, 0)
                g = per_token - (c + f) * math.log(c + f)
                if c:
                    g += c * math.log(c)
                else:
                    g += lex * len(m)
                v = best[start] + g
                if v < best[end] - 1e-12:
                    best[end], back[end] = v, start
        morphs = []
        end = n
        while end:
            morphs.append(w[back[end] : end])
            end = back[end]
        return tuple(reversed(morphs))

    def split_type(self, m: str) -> bool:
        """Split every occurrence of morph ``m`` at the best position."""
        st = self.state
        c = st.counts.get(m, 0)
        if not c or len(m) < 2:
            return False
        before = st.cost()
        best = (before - _EPS * max(1.0, abs(before)), 0)
        st.remove(m, c)
        for i in range(1, len(m)):
            st.add(m[:i], c)
            st.add(m[i:], c)
            v = st.cost()
            st.remove(m[:i], c)
            st.remove(m[i:], c)
            if v < best[0]:
                best = (v, i)
        st.add(m, c)
        if not best[1]:
            return False
        i = best[1]
        for w in sorted(self.users.get(m, ())):
            old = self.unassign(w)
            new = []
            for x in old:
                new.extend((x[:i], x[i:]) if x == m else (x,))
            self.assign(w, new)
        return True

    def join_pairs(self) -> int:
        """Fuse adjacent morph pairs across all words where that pays off."""
        pairs: Counter = Counter()
        for w, morphs in self.seg.items():
            f = self.freq[w]
            for x, y in zip(morphs, morphs[1:]):
                pairs[(x, y)] += f
        joined = 0
        st = self.state
        for (x, y), _ in sorted(pairs.items(), key=lambda kv: (-kv[1], kv[0])):
            if x not in st.counts or y not in st.counts:
                continue
            ws = sorted(self.users[x] & self.users[y])
            new_segs = {}
            n = 0
            for w in ws:
                morphs = self.seg[w]
                out = []
                k = 0
                while k < len(morphs):
                    if k + 1 < len(morphs) and morphs[k] == x and morphs[k + 1] == y:
                        out.append(x + y)
                        k += 2
                    else:
                        out.append(morphs[k])
                        k += 1
                if len(out) != len(morphs):
                    new_segs[w] = out
                    n += 1
            if not n:
                continue
            before = self.cost()
            saved = {w: self.unassign(w) for w in new_segs}
            for w, morphs in new_segs.items():
                self.assign(w, morphs)
            if self.cost() < before - _EPS * max(1.0, abs(before)):
                joined += 1
                continue
            for w in new_segs:
                self.unassign(w)
                self.assign(w, saved[w])
        return joined


    def slide_prefixes(self) -> int:
        """Move a shared prefix of right-hand morphs onto their left neighbours.

        ``(w, alked) (t, alking)`` becomes ``(walk, ed) (talk, ing)`` when
        the sliding string ``alk`` starts at least two right-hand morph types.
        Kept when the cost drops, or stays equal with boundaries further
        right.
        """
        right_types: dict[str, set[str]] = defaultdict(set)
        for morphs in self.seg.values():
            for y in morphs[1:]:
                for j in range(1, len(y)):
                    right_types[y[:j]].add(y)
        moved = 0
        for pre in sorted(p for p, ys in right_types.items() if len(ys) > 1):
            new_segs = {}
            affected = set()
            for y in right_types[pre]:
                affected.update(self.users.get(y, ()))
            for w in sorted(affected):
                morphs = self.seg[w]
                out = list(morphs)
                hit = False
                for k in range(1, len(out)):
                    y = out[k]
                    if len(y) > len(pre) and y.startswith(pre):
                        out[k - 1] += pre
                        out[k] = y[len(pre):]
                        hit = True
                if hit:
                    new_segs[w] = out
            if not new_segs:
                continue
            before = self.cost()
            before_key = self.tie_key()
            saved = {w: self.unassign(w) for w in new_segs}
            for w, morphs in new_segs.items():
                self.assign(w, morphs)
            after = self.cost()
            tol = _EPS * max(1.0, abs(before))
            if after < before - tol or (abs(after - before) <= tol and self.tie_key() < before_key):
                moved += 1
                continue
            for w in new_segs:
                self.unassign(w)
                self.assign(w, saved[w])
        return moved


def _local_search(search: _Search, rng: random.Random, max_epochs: int, trace) -> None:
    for epoch in range(max_epochs):
        start = search.cost()
        start_key = search.tie_key()
        order = sorted(search.seg)
        rng.shuffle(order)
        for w in order:
            search.resegment_word(w)
            if trace is not None:
                trace.append(search.cost())
        for m in sorted(search.state.counts, key=lambda m: (-len(m), m)):
            search.split_type(m)
        if trace is not None:
            trace.append(search.cost())
        search.join_pairs()
        if trace is not None:
            trace.append(search.cost())
        if len(search.state.counts) <= SLIDE_LIMIT:
            search.slide_prefixes()
            if trace is not None:
                trace.append(search.cost())
        end = search.cost()
        logger.debug("epoch %d: cost %.4f -> %.4f", epoch, start, end)
        if start - end <= _EPS * max(1.0, abs(start)) and search.tie_key() == start_key:
            break


def train_mdl(
    freq: Mapping[str, int],
    corpusweight: float = 1.0,
    seed: int = 0,
    restarts: int = 2,
    max_epochs: int = 30,
    trace: list[float] | None = None,
) -> MdlModel:
    """Multi-start local search for the minimum-cost segmentation.

    Starts: whole words; a continuation path that begins from single
    characters at ``32 * corpusweight`` and halves the weight stage by stage
    down to the target (shared morphs form while the lexicon is expensive);
    and ``restarts`` seeded random segmentations.  Each start is improved by
    re-segmenting single words by dynamic programming, splitting a morph
    everywhere it occurs, fusing an adjacent morph pair everywhere, and
    sliding shared prefixes onto left neighbours.  A move is kept only if the
    exact cost does not rise, so at the target weight each run's cost
    sequence is non-increasing; ``trace`` receives that sequence for the
    returned run.  Equal-cost results are ranked by fewer morph tokens, then
    by boundaries placed further right.
    """
    if not freq:
        raise ValueError("cannot train on an empty frequency table")
    if corpusweight <= 0:
        raise ValueError("corpusweight must be positive")
    words = sorted(w for w in freq if w)
    freq = {w: int(freq[w]) for w in words}
    alphabet = frozenset(ch for w in words for ch in w)
    rng = random.Random(seed)

    starts = [({w: (w,) for w in words}, ())]
    starts.append(({w: tuple(w) for w in words}, CONTINUATION_FACTORS))
    for _ in range(restarts):
        sub = random.Random(rng.getrandbits(64))
        init = {w: tuple(_cut(w, [i for i in range(1, len(w)) if sub.random() < 0.5])) for w in words}
        starts.append((init, ()))

    best = None
    for k, (init, schedule) in enumerate(starts):
        seg = init
        for factor in schedule:
            warm = _Search(freq, len(alphabet), corpusweight * factor)
            for w in words:
                warm.assign(w, seg[w])
            _local_search(warm, random.Random(rng.getrandbits(64)), max_epochs, None)
            seg = warm.seg
        search = _Search(freq, len(alphabet), corpusweight)
        for w in words:
            search.assign(w, seg[w])
        run_trace = [search.cost()] if trace is not None else None
        _local_search(search, random.Random(rng.getrandbits(64)), max_epochs, run_trace)
        cost = search.cost()
        if best is None:
            better = True
        else:
            tol = _EPS * max(1.0, abs(best[0]))
            better = cost < best[0] - tol or (
                abs(cost - best[0]) <= tol and search.tie_key() < best[1].tie_key()
            )
        if better:
            best = (cost, search, run_trace)
        logger.debug("start %d: cost %.4f", k, cost)
    _, search, run_trace = best
    if trace is not None:
        trace.extend(run_trace)
    lexicon = dict(sorted(search.state.counts.items()))
    seg = {w: search.seg[w] for w in words}
    return MdlModel(lexicon, float(corpusweight), alphabet, seg, dict(freq))


def _cut(word: str, cuts: list[int]) -> list[str]:
    bounds = [0] + cuts + [len(word)]
    return [word[a:b] for a, b in zip(bounds, bounds[1:])]


# -- segmentation -------------------------------------------------------------


def viterbi_segment(model: MdlModel, word: str) -> tuple[list[str], float]:
    """Cheapest segmentation under the fixed lexicon, and its cost."""
    n = len(word)
    if not n:
        return [], 0.0
    best = [0.0] + [math.inf] * n
    back = [0] * (n + 1)
    maxlen = model._maxlen
    for end in range(1, n + 1):
        for start in range(max(0, end - maxlen), end):
            if best[start] == math.inf:
                continue
            c = best[start] + model.morph_cost(word[start:end])
            if c < best[end] - 1e-12:
                best[end], back[end] = c, start
    morphs = []
    end = n
    while end > 0:
        morphs.append(word[back[end] : end])
        end = back[end]
    return morphs[::-1], best[n]


def segmentation_cost(model: MdlModel, morphs: Sequence[str]) -> float:
    return sum(model.morph_cost(m) for m in morphs)


def segment_mdl(model: MdlModel, word: str) -> list[str]:
    """Stored analysis for training words, Viterbi for everything else."""
    stored = model.segmentations.get(word)
    if stored is not None:
        return list(stored)
    return viterbi_segment(model, word)[0]


# -- evaluation ---------------------------------------------------------------


class F1Report(NamedTuple):
    precision: float
    recall: float
    f1: float
    predicted: int
    gold: int
    matched: int


def boundaries(morphs: Sequence[str]) -> set[int]:
    """Internal split offsets, e.g. ``walk|ed`` -> {4}."""
    out = set()
    pos = 0
    for m in morphs[:-1]:
        pos += len(m)
        out.add(pos)
    return out


def _prf(predicted: int, gold: int, matched: int) -> tuple[float, float, float]:
    # both sides empty counts as a perfect match
    if predicted == 0 and gold == 0:
        return 1.0, 1.0, 1.0
    p = matched / predicted if predicted else 0.0
    r = matched / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def boundary_f1(
    predicted: Mapping[str, Sequence[str]],
    gold: Mapping[str, Sequence[Sequence[str]]],
    alternative_policy: str = BEST_MATCH,
) -> F1Report:
    """Micro-averaged boundary precision, recall and F1.

    With ``best-match`` each word is scored against the gold alternative with
    the highest per-word F1 (first one on ties); ``first`` always uses the
    first alternative.
    """
    if alternative_policy not in (BEST_MATCH, FIRST):
        raise ValueError(f"unknown alternative policy {alternative_policy!r}")
    tp = tg = tm = 0
    for word, alternatives in gold.items():
        if word not in predicted:
            raise KeyError(f"no prediction for gold word {word!r}")
        pred = boundaries(predicted[word])
        candidates = alternatives if alternative_policy == BEST_MATCH else alternatives[:1]
        best = None
        for alt in candidates:
            ref = boundaries(alt)
            m = len(pred & ref)
            score = _prf(len(pred), len(ref), m)[2]
            if best is None or score > best[0]:
                best = (score, len(ref), m)
        tp += len(pred)
        tg += best[1]
        tm += best[2]
    p, r, f = _prf(tp, tg, tm)
    return F1Report(p, r, f, tp, tg, tm)


def tune_corpusweight(
    freq: Mapping[str, int],
    gold: Mapping[str, Sequence[Sequence[str]]],
    grid: Iterable[float] = DEFAULT_ALPHA_GRID,
    seed: int = 0,
    alternative_policy: str = BEST_MATCH,
) -> tuple[float, list[tuple[float, F1Report]]]:
    """Train one model per grid value and keep the best boundary F1.

    Ties go to the smallest alpha.  The report lists grid points in order.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty corpusweight grid")
    rows = []
    for alpha in grid:
        model = train_mdl(freq, alpha, seed)
        predicted = {w: segment_mdl(model, w) for w in gold}
        rows.append((alpha, boundary_f1(predicted, gold, alternative_policy)))
    best_alpha = min(rows, key=lambda row: (-row[1].f1, row[0]))[0]
    return best_alpha, rows


# -- vocabulary budget --------------------------------------------------------


def _constrained_viterbi(word, counts, tokens, alpha, alphabet_size, maxlen):
    n = len(word)
    fallback = math.log(tokens + 1) + alpha * char_code_length(alphabet_size + 1)
    best = [0.0] + [math.inf] * n
    back = [0] * (n + 1)
    log_n = math.log(tokens) if tokens else 0.0
    for end in range(1, n + 1):
        for start in range(max(0, end - maxlen), end):
            m = word[start:end]
            c = counts.get(m, 0)
            if c > 0:
                cost = log_n - math.log(c)
            elif end - start == 1:
                cost = fallback
            else:
                continue
            if best[start] + cost < best[end] - 1e-12:
                best[end], back[end] = best[start] + cost, start
    morphs = []
    end = n
    while end > 0:
        morphs.append(word[back[end] : end])
        end = back[end]
    return tuple(morphs[::-1])


def constrain_vocab(model: MdlModel, max_vocab: int) -> MdlModel:
    """Prune the lexicon to at most ``max_vocab`` distinct morphs.

    The rarest multi-character morph is dropped first (ties: longest, then
    lexicographic) and the words using it are re-segmented with what remains.
    Single characters are never dropped, so every word stays segmentable.
    Every distinct morph, character fallbacks included, counts against the
    budget.
    """
    if max_vocab < len(model.alphabet):
        raise ValueError(
            f"budget {max_vocab} is below the alphabet size {len(model.alphabet)}"
        )
    if len(model.lexicon) <= max_vocab:
        return model
    if not model.segmentations:
        raise ValueError("pruning needs a model with training segmentations")
    word_freq = model.word_freq
    seg = dict(model.segmentations)
    counts: Counter = Counter()
    users: dict[str, set[str]] = defaultdict(set)
    for w, morphs in seg.items():
        for m in morphs:
            users[m].add(w)
            counts[m] += word_freq[w]
    tokens = sum(counts.values())
    banned: set[str] = set()
    heap = [(c, -len(m), m) for m, c in counts.items() if len(m) > 1]
    heapq.heapify(heap)
    alphabet_size = len(model.alphabet)
    maxlen = max(map(len, counts))
    while len(counts) > max_vocab and heap:
        c, _, morph = heapq.heappop(heap)
        if morph in banned or counts.get(morph, 0) != c:
            continue
        banned.add(morph)
        del counts[morph]
        tokens -= c
        changed = Counter()
        for w in sorted(users.pop(morph, ())):
            f = word_freq[w]
            for m in seg[w]:
                if m != morph:
                    counts[m] -= f
                    tokens -= f
                    changed[m] += 1
                    if counts[m] <= 0:
                        del counts[m]
                        users.pop(m, None)
                    else:
                        users[m].discard(w)
            new = _constrained_viterbi(w, counts, tokens, model.corpusweight, alphabet_size, maxlen)
            seg[w] = new
            for m in new:
                counts[m] += f
                tokens += f
                users[m].add(w)
                changed[m] += 1
        for m in changed:
            if len(m) > 1 and m in counts:
                heapq.heappush(heap, (counts[m], -len(m), m))
    lexicon = dict(sorted(counts.items()))
    return MdlModel(
        lexicon, model.corpusweight, model.alphabet, seg, dict(word_freq), vocab_budget=max_vocab
    )


# -- LMVR-style rendering -----------------------------------------------------


def render_lmvr_style(morphs: Sequence[str]) -> list[str]:
    """``[s, low, ly]`` -> ``[s, +low, +ly]``."""
    return [m if i == 0 else LMVR_MARKER + m for i, m in enumerate(morphs)]


def unrender_lmvr_style(pieces: Sequence[str]) -> str:
    return "".join(p[1:] if i and p.startswith(LMVR_MARKER) else p for i, p in enumerate(pieces))

import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from subwordbench.bpe import BpeModel, MarkerError, MergeRule
from subwordbench.corpus import Analysis
from subwordbench.hybrid import (
    HybridModel,
    build_hybrid,
    detokenize_hybrid,
    detokenize_hybrid_text,
    learn_fallback_analyzer,
    segment_hybrid,
)

ALGEBRA_BPE = BpeModel((MergeRule("a", "l"), MergeRule("g", "e"), MergeRule("b", "r")))


def random_table(rng, n=40, alphabet="abcdef"):
    freq = Counter()
    for _ in range(n):
        w = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 7)))
        freq[w] += rng.randint(1, 20)
    return freq


def test_algebraic_example():
    model = HybridModel(ALGEBRA_BPE, frozenset({"ic"}), {"algebraic": Analysis("algebra", ("ic",))}, 100)
    pieces = segment_hybrid(model, "algebraic")
    assert pieces == ["al@@", "ge@@", "br@@", "a", "+ic"]
    assert " ".join(pieces) == "al@@ ge@@ br@@ a +ic"
    assert detokenize_hybrid(pieces) == "algebraic"


def test_start_ed_shape():
    freq = Counter({"start": 50, "started": 20, "stop": 5})
    model = build_hybrid({"started": Analysis("start", ("ed",))}, freq, 100)
    assert segment_hybrid(model, "started") == ["start", "+ed"]


def test_unanalyzed_word_has_no_suffix_pieces():
    freq = Counter({"dog": 30, "dogs": 5})
    model = build_hybrid({}, freq, 100)
    assert segment_hybrid(model, "dog") == ["dog"]
    assert not any(p.startswith("+") for p in segment_hybrid(model, "dogs"))


def test_suffix_set_and_stem_table():
    analyses = {"walked": Analysis("walk", ("ed",)), "walking": Analysis("walk", ("ing",))}
    model = build_hybrid(analyses, Counter(walked=3, walking=2, talk=4), 50)
    assert model.suffix_set == {"ed", "ing"}
    assert model.stem_bpe.vocabulary <= {"walk", "talk", "w", "t", "a", "l", "k", "wa", "ta", "al", "alk", "lk"}


def test_tiny_budget_forces_characters():
    # every merge here adds a symbol, so budget = alphabet + suffixes + 1
    # leaves no room for any merge
    freq = Counter({"ab": 10, "ba": 10, "a": 1, "b": 1, "abx": 2})
    analyses = {"abx": Analysis("ab", ("x",))}
    budget = 2 + 1 + 1
    model = build_hybrid(analyses, freq, budget)
    assert model.vocab_size < budget
    assert model.stem_bpe.merges == ()
    assert segment_hybrid(model, "ba") == ["b@@", "a"]


def test_tiny_budget_may_keep_vocabulary_neutral_merges():
    # a and b only ever occur as "ab", so merging them does not grow the
    # vocabulary and the merge fits the minimal budget
    freq = Counter({"abcd": 10, "abce": 10, "abx": 3})
    analyses = {"abx": Analysis("ab", ("x",))}
    budget = 5 + 1 + 1
    model = build_hybrid(analyses, freq, budget)
    assert model.vocab_size < budget
    assert MergeRule("a", "b") in model.stem_bpe.merges


def test_budget_too_small():
    freq = Counter({"abc": 3})
    with pytest.raises(ValueError):
        build_hybrid({"abc": Analysis("ab", ("c",))}, freq, 3)
    with pytest.raises(ValueError):
        build_hybrid({}, Counter(), 10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(8, 60))
def test_budget_invariant(seed, budget):
    rng = random.Random(seed)
    freq = random_table(rng)
    analyses = learn_fallback_analyzer(freq, 5)
    try:
        model = build_hybrid(analyses, freq, budget)
    except ValueError:
        alphabet = {ch for w in freq for ch in w}
        suffixes = {s for a in analyses.values() for s in a.suffixes}
        assert len(alphabet) + len(suffixes) >= budget
        return
    produced = set()
    for w in freq:
        for p in segment_hybrid(model, w):
            produced.add(p.removesuffix("@@"))
    assert len(produced) < budget
    assert model.vocab_size < budget


def test_more_budget_never_fewer_merges():
    rng = random.Random(5)
    freq = random_table(rng, n=200)
    counts = [len(build_hybrid({}, freq, b).stem_bpe.merges) for b in (10, 20, 40, 80)]
    assert counts == sorted(counts)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.text("abcdefgh", min_size=1, max_size=9), max_size=20))
def test_roundtrip(seed, unseen):
    rng = random.Random(seed)
    freq = random_table(rng)
    model = build_hybrid(learn_fallback_analyzer(freq, 4), freq, 30)
    for w in list(freq) + unseen:
        pieces = segment_hybrid(model, w)
        assert detokenize_hybrid(pieces) == w
        # marker grammar: no '@@' after a suffix piece, last stem piece bare
        stem = [p for p in pieces if not p.startswith("+")]
        assert pieces[: len(stem)] == stem
        assert not stem[-1].endswith("@@")
    text = " ".join(list(freq)[:10] + unseen)
    assert detokenize_hybrid_text(model.segment(text)) == " ".join(text.split())


@pytest.mark.parametrize(
    "pieces",
    [
        ["al@@", "ge@@"],
        ["a", "+ic", "b@@", "c"],
        ["al@@", "+ic"],
        ["+ic"],
        ["dog", "cat"],
    ],
)
def test_detokenize_errors(pieces):
    with pytest.raises(MarkerError):
        detokenize_hybrid(pieces)


def test_detokenize_simple():
    assert detokenize_hybrid(["dog"]) == "dog"
    assert detokenize_hybrid(["walk", "+ed", "+ing"]) == "walkeding"
    assert detokenize_hybrid_text(["the", "walk", "+ed", "do@@", "g"]) == "the walked dog"


def test_fallback_analyzer_toy():
    table = learn_fallback_analyzer(Counter(walk=10, walked=10, talk=10, talked=10), 3)
    assert table == {"walked": Analysis("walk", ("ed",)), "talked": Analysis("talk", ("ed",))}


def test_fallback_analyzer_trivial():
    assert learn_fallback_analyzer(Counter(tree=3, house=2, river=1), 10) == {}
    assert learn_fallback_analyzer(Counter(walk=1, walked=1), 0) == {}
    with pytest.raises(ValueError):
        learn_fallback_analyzer(Counter(), 3)


def test_fallback_prefers_longest_suffix():
    freq = Counter({"walk": 1, "walke": 1, "walked": 1, "talk": 1, "talked": 1, "jump": 1, "jumped": 1})
    table = learn_fallback_analyzer(freq, 5)
    assert table["walked"] == Analysis("walk", ("ed",))


def test_bundle_roundtrip(tmp_path):
    freq = Counter(walked=5, walking=4, walk=9, talk=3, talked=2)
    model = build_hybrid(learn_fallback_analyzer(freq, 2), freq, 30)
    path = tmp_path / "h.model"
    model.save(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("#subwordbench-hybrid v1 budget=30")
    assert lines[1].startswith("#subwordbench-bpe v1 mode=token")
    assert "#suffixes" in lines and "#analyses" in lines
    loaded = HybridModel.load(path)
    assert loaded.dumps() == model.dumps()
    for w in freq:
        assert segment_hybrid(loaded, w) == segment_hybrid(model, w)


def test_bundle_rejects_garbage():
    with pytest.raises(ValueError):
        HybridModel.loads("#subwordbench-hybrid v1 budget=5\n#subwordbench-bpe v1 mode=token merges=0\nnope\n")


def test_deterministic():
    rng = random.Random(1)
    freq = random_table(rng, n=100)
    a = build_hybrid(learn_fallback_analyzer(freq, 5), freq, 40).dumps()
    b = build_hybrid(learn_fallback_analyzer(Counter(dict(reversed(list(freq.items())))), 5),
                     Counter(dict(reversed(list(freq.items())))), 40).dumps()
    assert a == b


def test_unknown_suffix_rejected():
    with pytest.raises(ValueError):
        HybridModel(ALGEBRA_BPE, frozenset(), {"algebraic": Analysis("algebra", ("ic",))}, 100)

import json

import numpy as np
import pytest

from robustlm.corpus import (
    EOS_ID,
    UNK_ID,
    MixtureSpec,
    Sentence,
    Vocabulary,
    build_vocabulary,
    encode,
    filter_sentences,
    mix_corpora,
    read_corpus,
    tokenize,
    write_mixture,
)


class TestTokenize:
    def test_punctuation_split(self):
        assert tokenize("Great food, great prices!").tokens == (
            "great", "food", ",", "great", "prices", "!",
        )

    def test_empty(self):
        assert tokenize("").tokens == ()

    def test_whitespace_collapse(self):
        assert tokenize("A  B").tokens == ("a", "b")

    def test_deterministic(self):
        assert tokenize("Hello, world!") == tokenize("Hello, world!")


class TestFilterSentences:
    def test_short_dropped(self):
        kept = filter_sentences([tokenize("hi there"), tokenize("this is long enough")])
        assert [s.surface for s in kept] == ["this is long enough"]

    def test_empty(self):
        assert filter_sentences([]) == []

    def test_boundary_ten_chars_kept(self):
        assert len(filter_sentences([tokenize("0123456789")])) == 1
        assert len(filter_sentences([tokenize("012345678")])) == 0


class TestBuildVocabulary:
    def test_reserved_ids(self):
        vocab = build_vocabulary([[tokenize("aa bb cc dd ee ff gg hh")]], top_k=10)
        assert vocab.tokens[UNK_ID] == "<unk>"
        assert vocab.tokens[EOS_ID] == "<eos>"

    def test_small_corpus_size(self):
        vocab = build_vocabulary([[tokenize("xx yy zz xx")]], top_k=10)
        assert len(vocab) == 5  # 3 distinct + unk + eos

    def test_frequency_cutoff(self):
        corpus = [[Sentence(tokens=("a",) * 5 + ("b",) * 3 + ("c",), surface="x" * 20)]]
        vocab = build_vocabulary(corpus, top_k=2)
        assert set(vocab.tokens[2:]) == {"a", "b"}

    def test_union_bound(self):
        c1 = [Sentence(tokens=("shared", "only1"), surface="x" * 20)]
        c2 = [Sentence(tokens=("shared", "only2"), surface="x" * 20)]
        vocab = build_vocabulary([c1, c2], top_k=2)
        assert len(vocab) <= 2 * 2 + 2

    def test_tie_break_lexicographic(self):
        corpus = [[Sentence(tokens=("zeta", "beta"), surface="x" * 20)]]
        vocab = build_vocabulary(corpus, top_k=1)
        assert vocab.tokens[2:] == ("beta",)

    def test_empty_corpus_set(self):
        with pytest.raises(ValueError, match="empty corpus set"):
            build_vocabulary([[], []], top_k=5)

    def test_round_trip_bijection(self):
        rng = np.random.default_rng(0)
        words = [f"tok{i}" for i in rng.integers(0, 500, size=300)]
        corpus = [[Sentence(tokens=tuple(words), surface="x" * 20)]]
        vocab = build_vocabulary(corpus, top_k=1000)
        for i, token in enumerate(vocab.tokens):
            assert vocab.index[token] == i


class TestEncode:
    def test_unknown_maps_to_unk(self):
        vocab = build_vocabulary([[Sentence(tokens=("great",), surface="x" * 20)]], top_k=5)
        enc = encode(Sentence(tokens=("great", "zyxq"), surface=""), vocab)
        assert enc.ids == (vocab.id_of("great"), UNK_ID, EOS_ID)

    def test_empty_sentence(self):
        vocab = build_vocabulary([[Sentence(tokens=("a",), surface="x" * 20)]], top_k=5)
        assert encode(Sentence(tokens=(), surface=""), vocab).ids == (EOS_ID,)

    def test_all_known_has_no_unk(self):
        vocab = build_vocabulary([[Sentence(tokens=("a", "b", "c"), surface="x" * 20)]], top_k=5)
        enc = encode(Sentence(tokens=("a", "c", "b"), surface=""), vocab)
        assert UNK_ID not in enc.ids

    def test_label_carried(self):
        vocab = build_vocabulary([[Sentence(tokens=("a",), surface="x" * 20)]], top_k=5)
        enc = encode(Sentence(tokens=("a",), source_label="yelp", surface=""), vocab)
        assert enc.source_label == "yelp"


class TestVocabularyFile:
    def test_save_load_round_trip(self, tmp_path):
        vocab = build_vocabulary([[Sentence(tokens=("b", "a"), surface="x" * 20)]], top_k=5)
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "<unk>" and lines[1] == "<eos>"
        reloaded = Vocabulary.load(path)
        assert reloaded.tokens == vocab.tokens


class TestMixtureSpec:
    def test_paper_scale_nuisance_count(self):
        spec = MixtureSpec("t", "n", alpha_train=0.1, target_count=500_000, seed=0)
        assert spec.nuisance_count == 4_500_000

    def test_alpha_one_no_nuisance(self):
        assert MixtureSpec("t", "n", alpha_train=1.0, target_count=100, seed=0).nuisance_count == 0

    def test_alpha_range_validated(self):
        with pytest.raises(ValueError):
            MixtureSpec("t", "n", alpha_train=0.0, target_count=10, seed=0)
        with pytest.raises(ValueError):
            MixtureSpec("t", "n", alpha_train=1.5, target_count=10, seed=0)


@pytest.fixture
def corpus_files(tmp_path):
    target = tmp_path / "reviews.txt"
    nuisance = tmp_path / "news.txt"
    target.write_text("".join(f"review sentence number {i}\n" for i in range(300)))
    nuisance.write_text("".join(f"news sentence number {i}\n" for i in range(300)))
    return target, nuisance


class TestMixCorpora:
    def test_half_and_half(self, corpus_files):
        target, nuisance = corpus_files
        spec = MixtureSpec(str(target), str(nuisance), alpha_train=0.5, target_count=100, seed=3)
        mixed = mix_corpora(spec)
        assert len(mixed) == 200
        labels = [s.source_label for s in mixed]
        assert labels.count("reviews") == 100 and labels.count("news") == 100

    def test_proportion_within_rounding(self, corpus_files):
        target, nuisance = corpus_files
        spec = MixtureSpec(str(target), str(nuisance), alpha_train=0.7, target_count=140, seed=3)
        mixed = mix_corpora(spec)
        frac = sum(1 for s in mixed if s.source_label == "reviews") / len(mixed)
        assert abs(frac - 0.7) <= 1.0 / len(mixed) + 1e-12

    def test_alpha_one(self, corpus_files):
        target, nuisance = corpus_files
        spec = MixtureSpec(str(target), str(nuisance), alpha_train=1.0, target_count=50, seed=0)
        mixed = mix_corpora(spec)
        assert len(mixed) == 50
        assert all(s.source_label == "reviews" for s in mixed)

    def test_deterministic(self, corpus_files):
        target, nuisance = corpus_files
        spec = MixtureSpec(str(target), str(nuisance), alpha_train=0.5, target_count=80, seed=11)
        assert mix_corpora(spec) == mix_corpora(spec)

    def test_insufficient_names_corpus_and_shortfall(self, corpus_files):
        target, nuisance = corpus_files
        spec = MixtureSpec(str(target), str(nuisance), alpha_train=0.5, target_count=400, seed=0)
        with pytest.raises(ValueError, match=r"reviews.*400.*short by 100"):
            mix_corpora(spec)

    def test_write_mixture_manifest(self, corpus_files, tmp_path):
        target, nuisance = corpus_files
        spec = MixtureSpec(str(target), str(nuisance), alpha_train=0.5, target_count=60, seed=5)
        mixed = mix_corpora(spec)
        out = tmp_path / "mixed.txt"
        write_mixture(out, mixed, spec)
        manifest = json.loads((tmp_path / "mixed.txt.mixture.json").read_text())
        assert manifest["result_counts"] == {"news": 60, "reviews": 60}
        assert manifest["seed"] == 5
        labels = (tmp_path / "mixed.txt.labels").read_text().splitlines()
        assert len(labels) == 120
        reread = read_corpus(out, apply_filter=False)
        assert [s.tokens for s in reread] == [s.tokens for s in mixed]

"""Log-space algebra, sentences, and configuration invariants."""

import math

import pytest
from hypothesis import given, strategies as st

from pragmadecode.core import (
    NEG_INF,
    AllZeroSupport,
    LogDistribution,
    PragmaticsConfig,
    RolloutPolicy,
    Sentence,
    UnknownToken,
    Vocabulary,
    argmax,
    log_normalize,
    logsumexp,
)


class TestVocabulary:
    def test_from_words_appends_eos(self):
        vocab = Vocabulary.from_words(["a", "b"])
        assert vocab.surfaces == ("a", "b", "</s>")
        assert vocab.eos_id == 2
        assert len(vocab) == 3

    def test_duplicate_surfaces_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary.from_words(["a", "a"])

    def test_eos_must_be_last(self):
        with pytest.raises(ValueError):
            Vocabulary(("</s>", "a"))

    def test_token_lookup(self):
        vocab = Vocabulary.from_words(["a"])
        assert vocab.token(0).surface == "a"
        assert vocab.id_of("</s>") == 1
        with pytest.raises(UnknownToken):
            vocab.token(5)
        with pytest.raises(UnknownToken):
            vocab.id_of("zzz")


class TestSentence:
    def test_terminated_requires_final_eos(self):
        vocab = Vocabulary.from_words(["a"])
        Sentence((0, 1)).validate(vocab)
        with pytest.raises(ValueError):
            Sentence((1, 0)).validate(vocab)
        with pytest.raises(ValueError):
            Sentence((0,)).validate(vocab)

    def test_prefix_may_not_contain_eos(self):
        vocab = Vocabulary.from_words(["a"])
        with pytest.raises(ValueError):
            Sentence.prefix((1,)).validate(vocab)

    def test_parse_round_trip(self):
        vocab = Vocabulary.from_words(["the", "cat"])
        s = Sentence.parse("the cat", vocab)
        assert s.terminated
        assert s.text(vocab) == "the cat"
        assert s.content_tokens == (0, 1)


class TestLogNormalize:
    def test_symmetric_pair(self):
        dist = log_normalize({"a": math.log(0.2), "b": math.log(0.2)})
        assert dist.prob("a") == pytest.approx(0.5, abs=1e-12)
        assert dist.prob("b") == pytest.approx(0.5, abs=1e-12)

    def test_point_mass_with_exact_zero(self):
        dist = log_normalize({"a": 0.0, "b": NEG_INF})
        assert dist.logprob("a") == 0.0
        assert dist.logprob("b") == NEG_INF

    def test_already_normalized_is_identity(self):
        # Expected values checked by direct summation of the inputs.
        weights = {"a": math.log(0.6), "b": math.log(0.39), "c": math.log(0.01)}
        assert math.fsum(math.exp(w) for w in weights.values()) == pytest.approx(1.0, abs=1e-12)
        dist = log_normalize(weights)
        for key, w in weights.items():
            assert dist.logprob(key) == pytest.approx(w, abs=1e-12)

    def test_all_zero_support(self):
        with pytest.raises(AllZeroSupport):
            log_normalize({"a": NEG_INF, "b": NEG_INF})
        with pytest.raises(AllZeroSupport):
            log_normalize({})

    @given(
        st.dictionaries(
            st.integers(min_value=0, max_value=20),
            st.floats(min_value=-30, max_value=5),
            min_size=1,
            max_size=8,
        )
    )
    def test_normalization_and_shift_invariance(self, weights):
        dist = log_normalize(weights)
        total = math.fsum(math.exp(w) for w in dist.logweights)
        assert abs(total - 1.0) <= 1e-9
        # A uniform additive shift must not change the result.
        shifted = log_normalize({k: w + 3.7 for k, w in weights.items()})
        for key in weights:
            assert shifted.logprob(key) == pytest.approx(dist.logprob(key), abs=1e-9)

    @given(
        st.dictionaries(
            st.integers(min_value=0, max_value=20),
            st.floats(min_value=-30, max_value=0),
            min_size=1,
            max_size=8,
        )
    )
    def test_idempotent(self, weights):
        once = log_normalize(weights)
        twice = log_normalize(dict(once.items()))
        for key in weights:
            assert abs(twice.logprob(key) - once.logprob(key)) <= 1e-12


class TestArgmax:
    def test_plain_argmax(self):
        dist = log_normalize({"a": math.log(0.7), "b": math.log(0.3)})
        assert argmax(dist) == "a"

    def test_tie_breaks_to_lowest_key(self):
        dist = log_normalize({"b": math.log(0.5), "a": math.log(0.5)})
        assert argmax(dist) == "a"

    def test_argmax_invariant_under_normalization(self):
        weights = {"a": -4.0, "b": -1.0, "c": -9.0}
        assert argmax(log_normalize(weights)) == max(sorted(weights), key=lambda k: weights[k])

    def test_positive_scaling_preserves_argmax(self):
        weights = {"a": -4.0, "b": -1.0, "c": -9.0}
        base = argmax(log_normalize(weights))
        for beta in (0.1, 1.0, 7.5):
            scaled = {k: beta * w for k, w in weights.items()}
            assert max(sorted(scaled), key=lambda k: scaled[k]) == base


class TestLogDistributionInvariants:
    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            LogDistribution(("a", "b"), (math.log(0.5), math.log(0.2)))

    def test_rejects_unsorted_support(self):
        with pytest.raises(ValueError):
            LogDistribution(("b", "a"), (math.log(0.5), math.log(0.5)))

    def test_rejects_all_neg_inf(self):
        with pytest.raises(AllZeroSupport):
            LogDistribution(("a",), (NEG_INF,))

    def test_logsumexp_empty_is_neg_inf(self):
        assert logsumexp([]) == NEG_INF
        assert logsumexp([NEG_INF, NEG_INF]) == NEG_INF


class TestPragmaticsConfig:
    def test_defaults(self):
        config = PragmaticsConfig()
        assert config.alpha == 0.1
        assert config.candidate_width_k == 2
        assert config.rollout is RolloutPolicy.GREEDY

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": -0.1},
            {"candidate_width_k": 0},
            {"beam_width": 0},
            {"max_len": 0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            PragmaticsConfig(**kwargs)

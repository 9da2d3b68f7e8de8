"""Tabular models, the file format, and brute-force enumeration."""

import math
import random

import pytest

from pragmadecode.core import NEG_INF, Sentence, UnknownToken
from pragmadecode.fixtures import (
    ambig1_backward,
    ambig1_forward,
    chain1_forward,
    det1,
    random_model_pair,
    source_sentences,
)
from pragmadecode.models import (
    EnumerationTooLarge,
    MissingEntry,
    NormalizationError,
    ParseError,
    enumerate_continuations,
    enumerate_sentences,
    format_tabular,
    load_tabular,
    parse_tabular,
    save_tabular,
)


@pytest.fixture(scope="module")
def ambig1():
    return ambig1_forward()


def sent(text, vocab):
    return Sentence.parse(text, vocab)


class TestNextTokenDist:
    def test_det1_point_mass(self):
        model = det1()
        dist = model.next_token_dist(sent("s", model.source_vocab), Sentence.prefix())
        assert dist.prob(model.target_vocab.id_of("t")) == 1.0

    def test_ambig1_root_table(self, ambig1):
        dist = ambig1.next_token_dist(sent("A", ambig1.source_vocab), Sentence.prefix())
        tv = ambig1.target_vocab
        assert dist.prob(tv.id_of("u")) == pytest.approx(0.60, abs=1e-12)
        assert dist.prob(tv.id_of("x")) == pytest.approx(0.39, abs=1e-12)
        assert dist.prob(tv.id_of("y")) == pytest.approx(0.01, abs=1e-12)
        assert dist.logprob(tv.eos_id) == NEG_INF

    def test_ambig1_after_first_token_is_eos(self, ambig1):
        tv = ambig1.target_vocab
        dist = ambig1.next_token_dist(
            sent("A", ambig1.source_vocab), Sentence.prefix((tv.id_of("u"),))
        )
        assert dist.prob(tv.eos_id) == 1.0

    def test_unknown_token(self, ambig1):
        with pytest.raises(UnknownToken):
            ambig1.next_token_dist(Sentence((99, 2)), Sentence.prefix())

    def test_missing_entry_outside_closed_world(self, ambig1):
        tv = ambig1.target_vocab
        with pytest.raises(MissingEntry):
            ambig1.next_token_dist(
                sent("A", ambig1.source_vocab),
                Sentence.prefix((tv.id_of("u"), tv.id_of("x"))),
            )

    def test_terminated_prefix_rejected(self, ambig1):
        with pytest.raises(ValueError):
            ambig1.next_token_dist(
                sent("A", ambig1.source_vocab), sent("u", ambig1.target_vocab)
            )

    def test_normalized_for_all_entries(self, ambig1):
        for (src, pre), _ in ambig1.entries():
            dist = ambig1.next_token_dist(
                Sentence(src + (ambig1.source_vocab.eos_id,)), Sentence.prefix(pre)
            )
            total = math.fsum(math.exp(w) for w in dist.logweights if w > NEG_INF)
            assert abs(total - 1.0) <= 1e-9


class TestSequenceLogprob:
    def test_det1_probability_one(self):
        model = det1()
        assert model.sequence_logprob(
            sent("s", model.source_vocab), sent("t", model.target_vocab)
        ) == 0.0

    def test_ambig1_x_given_a(self, ambig1):
        lp = ambig1.sequence_logprob(
            sent("A", ambig1.source_vocab), sent("x", ambig1.target_vocab)
        )
        assert lp == pytest.approx(math.log(0.39), abs=1e-12)

    def test_ambig1_x_given_b(self, ambig1):
        lp = ambig1.sequence_logprob(
            sent("B", ambig1.source_vocab), sent("x", ambig1.target_vocab)
        )
        assert lp == pytest.approx(math.log(0.01), abs=1e-12)

    def test_unterminated_rejected(self, ambig1):
        with pytest.raises(ValueError):
            ambig1.sequence_logprob(sent("A", ambig1.source_vocab), Sentence.prefix((0,)))


class TestEnumerateSentences:
    def test_ambig1_full_support(self, ambig1):
        a = sent("A", ambig1.source_vocab)
        results = enumerate_sentences(ambig1, a, max_len=2)
        probs = {s.text(ambig1.target_vocab): math.exp(lp) for s, lp in results}
        assert probs == pytest.approx({"u": 0.60, "x": 0.39, "y": 0.01}, abs=1e-12)
        assert math.fsum(probs.values()) == pytest.approx(1.0, abs=1e-9)

    def test_det1(self):
        model = det1()
        results = enumerate_sentences(model, sent("s", model.source_vocab), max_len=3)
        assert len(results) == 1
        assert math.exp(results[0][1]) == pytest.approx(1.0)

    def test_immediate_eos_model(self):
        from pragmadecode.core import Vocabulary
        from pragmadecode.models import TabularModel

        src = Vocabulary.from_words(["s"])
        tgt = Vocabulary.from_words(["t"])
        model = TabularModel(src, tgt, {((0,), ()): {tgt.eos_id: 1.0}}, identity_tag="eps")
        results = enumerate_sentences(model, Sentence((0, 1)), max_len=3)
        assert [(s.tokens, math.exp(lp)) for s, lp in results] == [((tgt.eos_id,), 1.0)]

    def test_chain_rule_consistency(self, ambig1):
        # Every enumerated logprob must match sequence_logprob independently.
        a = sent("A", ambig1.source_vocab)
        for sentence, lp in enumerate_sentences(ambig1, a, max_len=2):
            assert ambig1.sequence_logprob(a, sentence) == pytest.approx(lp, abs=1e-12)

    def test_guard(self, ambig1):
        with pytest.raises(EnumerationTooLarge):
            enumerate_sentences(ambig1, sent("A", ambig1.source_vocab), max_len=50)

    def test_random_models_total_probability(self):
        rng = random.Random(7)
        for _ in range(10):
            fwd, _ = random_model_pair(rng, n_sources=2, n_target_words=3, max_len=3)
            for source in source_sentences(fwd):
                results = enumerate_sentences(fwd, source, max_len=3)
                total = math.fsum(math.exp(lp) for _, lp in results)
                assert total == pytest.approx(1.0, abs=1e-9)


class TestEnumerateContinuations:
    def test_chain1_continuations_of_p(self):
        fwd = chain1_forward()
        tv = fwd.target_vocab
        s = sent("S", fwd.source_vocab)
        conts = enumerate_continuations(fwd, s, Sentence.prefix((tv.id_of("p"),)), max_len=3)
        got = {tuple(tv.surfaces[t] for t in cont): math.exp(lp) for cont, lp in conts}
        assert got == pytest.approx({("</s>",): 0.51, ("q", "</s>"): 0.49}, abs=1e-12)

    def test_terminated_prefix_rejected(self):
        fwd = chain1_forward()
        with pytest.raises(ValueError):
            enumerate_continuations(fwd, sent("S", fwd.source_vocab), sent("q", fwd.target_vocab), 3)


class TestTabularFormat:
    def test_fixture_round_trip_bit_exact(self, tmp_path, ambig1):
        path = tmp_path / "m.tab"
        save_tabular(ambig1, str(path))
        reloaded = load_tabular(str(path))
        path2 = tmp_path / "m2.tab"
        save_tabular(reloaded, str(path2))
        again = load_tabular(str(path2))
        for (src, pre), _ in ambig1.entries():
            source = Sentence(src + (ambig1.source_vocab.eos_id,))
            prefix = Sentence.prefix(pre)
            d0 = ambig1.next_token_dist(source, prefix)
            d1 = reloaded.next_token_dist(source, prefix)
            d2 = again.next_token_dist(source, prefix)
            assert d0.logweights == d1.logweights == d2.logweights

    def test_unnormalized_table_rejected(self):
        text = "\n".join(
            ["pragma-tabular v1", "source:", "A", "target:", "u", "given A |:", "  u 0.9"]
        )
        with pytest.raises(NormalizationError):
            parse_tabular(text, identity_tag="bad")

    def test_empty_file_rejected(self):
        with pytest.raises(ParseError):
            parse_tabular("", identity_tag="empty")

    def test_missing_header_rejected(self):
        with pytest.raises(ParseError) as err:
            parse_tabular("source:\nA\n", identity_tag="x")
        assert err.value.line == 1

    def test_unknown_token_in_block(self):
        text = "\n".join(
            ["pragma-tabular v1", "source:", "A", "target:", "u", "given A |:", "  zz 1.0"]
        )
        with pytest.raises(ParseError):
            parse_tabular(text, identity_tag="x")

    def test_bad_probability_literal(self):
        text = "\n".join(
            ["pragma-tabular v1", "source:", "A", "target:", "u", "given A |:", "  u huh"]
        )
        with pytest.raises(ParseError):
            parse_tabular(text, identity_tag="x")

    def test_duplicate_block_rejected(self):
        text = "\n".join(
            [
                "pragma-tabular v1",
                "source:",
                "A",
                "target:",
                "u",
                "given A |:",
                "  u 1",
                "given A |:",
                "  u 1",
            ]
        )
        with pytest.raises(ParseError):
            parse_tabular(text, identity_tag="x")

    def test_identity_tag_defaults_to_stem(self, tmp_path, ambig1):
        path = tmp_path / "mymodel.tab"
        save_tabular(ambig1, str(path))
        assert load_tabular(str(path)).identity_tag == "mymodel"
        assert load_tabular(str(path), identity_tag="other").identity_tag == "other"

    def test_format_text_is_stable(self, ambig1):
        assert format_tabular(ambig1) == format_tabular(ambig1.retagged("z"))


class TestBackwardFixture:
    def test_backward_scores(self):
        bwd = ambig1_backward()
        sv, tv = bwd.source_vocab, bwd.target_vocab
        cases = {"u": 0.50, "x": 0.95, "y": 0.05}
        for surface, p_a in cases.items():
            lp = bwd.sequence_logprob(sent(surface, sv), sent("A", tv))
            assert math.exp(lp) == pytest.approx(p_a, abs=1e-12)
            lp_b = bwd.sequence_logprob(sent(surface, sv), sent("B", tv))
            assert math.exp(lp_b) == pytest.approx(1.0 - p_a, abs=1e-12)

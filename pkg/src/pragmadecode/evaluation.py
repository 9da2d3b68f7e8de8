"""BLEU scoring, the cycle-consistency harness, and the collision survey.

Corpus BLEU here is deliberately smoothing-free and hand-verifiable: the
effective n-gram order drops to the largest order for which the hypothesis
corpus has any n-grams at all, and a zero precision at any used order
zeroes the score.  Per-sentence scores in reports use add-one smoothing
for orders above 1 and are diagnostic only.

Cycle-consistency is only meaningful when the back-translator that scores
a system is organizationally separate from any backward model the system
decodes with; otherwise the system is graded by its own component.  That
separation is checked through opaque identity tags, not behavior.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

from .core import PragmaticsConfig, PragmaticsError, Sentence, Vocabulary
from .models import ConditionalSequenceModel
from .rsa import beam_decode, decode_s1_cip, greedy_decode

TokenSeq = Sequence[str]


class LengthMismatch(PragmaticsError):
    """Hypothesis and reference corpora differ in length."""


class EmptyCorpus(PragmaticsError):
    """An evaluation was asked to score zero sentence pairs."""


class SameBackTranslator(PragmaticsError):
    """The cycle evaluator shares an identity tag with the evaluated system."""


@dataclass(frozen=True)
class BleuConfig:
    max_order: int = 4
    case_sensitive: bool = True
    tokenizer: str = "whitespace"

    def __post_init__(self) -> None:
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")
        if self.tokenizer != "whitespace":
            raise ValueError(f"unknown tokenizer {self.tokenizer!r}")


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _fold_case(tokens: Sequence[str], config: BleuConfig) -> list[str]:
    return list(tokens) if config.case_sensitive else [t.lower() for t in tokens]


def _corpus_counts(
    hypotheses: Sequence[TokenSeq],
    references: Sequence[TokenSeq],
    config: BleuConfig,
) -> tuple[list[int], list[int], int, int]:
    """Clipped match and total counts per order, plus corpus lengths."""
    correct = [0] * config.max_order
    total = [0] * config.max_order
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp = _fold_case(hyp, config)
        ref = _fold_case(ref, config)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, config.max_order + 1):
            hyp_grams = _ngrams(hyp, n)
            if not hyp_grams:
                break
            ref_grams = _ngrams(ref, n)
            total[n - 1] += sum(hyp_grams.values())
            correct[n - 1] += sum(
                min(count, ref_grams[gram]) for gram, count in hyp_grams.items()
            )
    return correct, total, hyp_len, ref_len


def bleu_corpus(
    hypotheses: Sequence[TokenSeq],
    references: Sequence[TokenSeq],
    config: BleuConfig = BleuConfig(),
) -> float:
    """Corpus BLEU in [0, 100], one reference per hypothesis, no smoothing.

    Geometric mean of modified n-gram precisions up to the effective order
    (the largest n with at least one hypothesis n-gram corpus-wide), times
    the brevity penalty exp(min(0, 1 - r/c)).  Any zero precision at an
    effective order makes the score exactly 0.
    """
    if len(hypotheses) != len(references):
        raise LengthMismatch(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise EmptyCorpus("no sentence pairs to score")
    correct, total, hyp_len, ref_len = _corpus_counts(hypotheses, references, config)
    effective_order = 0
    for n in range(1, config.max_order + 1):
        if total[n - 1] > 0:
            effective_order = n
    if effective_order == 0:
        return 0.0
    if any(correct[n] == 0 for n in range(effective_order)):
        return 0.0
    log_precisions = [
        math.log(correct[n] / total[n]) for n in range(effective_order)
    ]
    brevity = min(0.0, 1.0 - ref_len / hyp_len)
    return 100.0 * math.exp(math.fsum(log_precisions) / effective_order + brevity)


def sentence_bleu_diagnostic(
    hypothesis: TokenSeq,
    reference: TokenSeq,
    config: BleuConfig = BleuConfig(),
) -> float:
    """Sentence-level BLEU with add-one smoothing on zero counts for n >= 2.

    Diagnostic only: unsmoothed sentence BLEU is almost always zero on
    short sentences, which makes per-sentence reports useless.
    """
    correct, total, hyp_len, ref_len = _corpus_counts([hypothesis], [reference], config)
    effective_order = 0
    for n in range(1, config.max_order + 1):
        if total[n - 1] > 0:
            effective_order = n
    if effective_order == 0:
        return 0.0
    log_precisions = []
    for n in range(effective_order):
        c, t = correct[n], total[n]
        if c == 0 and n == 0:
            return 0.0
        if c == 0:
            c, t = 1, t + 1
        log_precisions.append(math.log(c / t))
    brevity = min(0.0, 1.0 - ref_len / hyp_len)
    return 100.0 * math.exp(math.fsum(log_precisions) / effective_order + brevity)


# ---------------------------------------------------------------------------
# Translation systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Translator:
    """A sentence-to-sentence system plus the identities of its components.

    ``identity_tags`` lists every model the system consults internally, so
    the cycle harness can verify that its scorer is not one of them.
    """

    name: str
    source_vocab: Vocabulary
    target_vocab: Vocabulary
    identity_tags: frozenset[str]
    fn: Callable[[Sentence], Sentence]

    def __call__(self, sentence: Sentence) -> Sentence:
        return self.fn(sentence)


def s0_translator(model: ConditionalSequenceModel, config: PragmaticsConfig) -> Translator:
    """Greedy base decoding, no pragmatic reasoning."""
    eos = model.target_vocab.eos_id

    def fn(sentence: Sentence) -> Sentence:
        return greedy_decode(model.next_token_dist, sentence, config.max_len, eos)

    return Translator(
        name="s0",
        source_vocab=model.source_vocab,
        target_vocab=model.target_vocab,
        identity_tags=frozenset({model.identity_tag}),
        fn=fn,
    )


def s1_cip_translator(
    fwd: ConditionalSequenceModel,
    bwd: ConditionalSequenceModel,
    config: PragmaticsConfig,
) -> Translator:
    """Cycle-consistent incremental pragmatic decoding."""

    def fn(sentence: Sentence) -> Sentence:
        return decode_s1_cip(fwd, bwd, sentence, config)[0]

    return Translator(
        name="s1-cip",
        source_vocab=fwd.source_vocab,
        target_vocab=fwd.target_vocab,
        identity_tags=frozenset({fwd.identity_tag, bwd.identity_tag}),
        fn=fn,
    )


def back_translator(model: ConditionalSequenceModel, config: PragmaticsConfig) -> Translator:
    """Greedy argmax back-translation, for evaluation round trips."""
    return s0_translator(model, config)


# ---------------------------------------------------------------------------
# Cycle-consistency harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CycleRecord:
    index: int
    source: Sentence
    pivot: Sentence
    back_translation: Sentence
    sentence_bleu: float


@dataclass(frozen=True)
class CycleResult:
    score: float
    records: tuple[CycleRecord, ...]


def cycle_consistency(
    system: Translator,
    independent_bwd: Translator,
    corpus: Sequence[Sentence],
    bleu_config: BleuConfig = BleuConfig(),
) -> CycleResult:
    """Round-trip score: translate, back-translate, BLEU against the original.

    ``independent_bwd`` must not share an identity tag with any component
    of ``system``; a system scored by its own backward model can win
    without producing meaningful translations.
    """
    overlap = system.identity_tags & independent_bwd.identity_tags
    if overlap:
        raise SameBackTranslator(
            f"back-translator shares identity tags {sorted(overlap)} with the system"
        )
    if not corpus:
        raise EmptyCorpus("cycle consistency needs a nonempty corpus")
    records = []
    originals = []
    backs = []
    for i, source in enumerate(corpus):
        pivot = system(source)
        back = independent_bwd(pivot)
        orig_tokens = source.surfaces(system.source_vocab)
        back_tokens = back.surfaces(independent_bwd.target_vocab)
        records.append(
            CycleRecord(
                index=i,
                source=source,
                pivot=pivot,
                back_translation=back,
                sentence_bleu=sentence_bleu_diagnostic(back_tokens, orig_tokens, bleu_config),
            )
        )
        originals.append(orig_tokens)
        backs.append(back_tokens)
    score = bleu_corpus(backs, originals, bleu_config)
    return CycleResult(score=score, records=tuple(records))


# ---------------------------------------------------------------------------
# Many-to-one collision survey
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollisionPair:
    """Two distinct source sentences whose forward translations coincide.

    ``evidence`` holds the re-forward-translations that confirmed the
    collision, one per source, each equal to the pivot; re-running them
    must reproduce it.
    """

    source_a: Sentence
    source_b: Sentence
    pivot: Sentence
    evidence: tuple[tuple[Sentence, Sentence], ...]

    def __post_init__(self) -> None:
        if self.source_a == self.source_b:
            raise ValueError("collision pair must hold two distinct sentences")


def survey_many_to_one(
    fwd: ConditionalSequenceModel,
    bwd: ConditionalSequenceModel,
    corpus: Sequence[Sentence],
    n_back: int = 2,
    config: PragmaticsConfig = PragmaticsConfig(),
) -> list[CollisionPair]:
    """Find many-to-one forward translations via n-best back-translation.

    For each corpus sentence: forward-translate to a pivot, take the top
    ``n_back`` back-translations of the pivot from a backward beam, and
    report every unordered pair of distinct back-translations that both
    forward-translate (greedy argmax) to that same pivot.  Pairs are
    deduplicated corpus-wide.
    """
    fwd_eos = fwd.target_vocab.eos_id
    bwd_eos = bwd.target_vocab.eos_id
    pairs: list[CollisionPair] = []
    seen: set[tuple[Sentence, Sentence, Sentence]] = set()
    forward_memo: dict[Sentence, Sentence] = {}

    def forward(sentence: Sentence) -> Sentence:
        hit = forward_memo.get(sentence)
        if hit is None:
            hit = greedy_decode(fwd.next_token_dist, sentence, config.max_len, fwd_eos)
            forward_memo[sentence] = hit
        return hit

    for source in corpus:
        pivot = forward(source)
        if not pivot.terminated:
            continue
        n_best = beam_decode(bwd.next_token_dist, pivot, n_back, config.max_len, bwd_eos)
        backs = [s for s, _ in n_best]
        for i in range(len(backs)):
            for j in range(i + 1, len(backs)):
                a, b = sorted((backs[i], backs[j]))
                if a == b:
                    continue
                key = (a, b, pivot)
                if key in seen:
                    continue
                seen.add(key)
                fwd_a = forward(a)
                fwd_b = forward(b)
                if fwd_a == pivot and fwd_b == pivot:
                    pairs.append(
                        CollisionPair(
                            source_a=a,
                            source_b=b,
                            pivot=pivot,
                            evidence=((a, fwd_a), (b, fwd_b)),
                        )
                    )
    return pairs

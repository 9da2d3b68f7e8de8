"""Exact-vs-approximate agreement checks, runnable on demand.

For every source sentence of an enumerable model this compares three
routes to a pragmatic translation:

* the global route: rerank the fully enumerated utterance set by fluency
  plus backward reconstruction;
* the exact incremental route: decode with exact continuation marginals;
* the approximate incremental route: decode with single greedy rollouts.

Disagreements are reported, not hidden; the approximation gap between a
greedy rollout and the true continuation marginal is real and worth
seeing.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import PragmaticsConfig, Sentence
from .models import ConditionalSequenceModel, enumerate_sentences
from .rsa import CandidateSet, _CipCache, decode_s1_cip, s1_cgp_rerank, s1_word_c


@dataclass(frozen=True)
class OracleStep:
    index: int
    prefix_text: str
    approx_choice: str
    exact_choice: str
    agree: bool


@dataclass(frozen=True)
class OracleSentence:
    source_text: str
    global_argmax_text: str
    exact_decode_text: str
    approx_decode_text: str
    global_matches_exact: bool
    exact_matches_approx: bool
    steps: tuple[OracleStep, ...]


@dataclass(frozen=True)
class OracleReport:
    alpha: float
    max_len: int
    sentences: tuple[OracleSentence, ...]

    @property
    def all_agree(self) -> bool:
        return all(
            s.global_matches_exact and s.exact_matches_approx for s in self.sentences
        )


def run_oracle(
    fwd: ConditionalSequenceModel,
    bwd: ConditionalSequenceModel,
    alpha: float,
    max_len: int,
) -> OracleReport:
    """Compare global, exact-incremental, and approximate routes per source.

    Per-step records follow the exact decode's path: at each of its
    prefixes, the approximate next-word argmax is compared with the exact
    one.
    """
    config = PragmaticsConfig(alpha=alpha, max_len=max_len)
    tgt = fwd.target_vocab
    sentences = []
    for tok in range(fwd.source_vocab.eos_id):
        source = Sentence((tok, fwd.source_vocab.eos_id))
        candidates = CandidateSet.from_sentences(
            s for s, _ in enumerate_sentences(fwd, source, max_len)
        )
        global_argmax = s1_cgp_rerank(fwd, bwd, source, candidates, alpha)[0][0]
        exact_sentence, exact_trace = decode_s1_cip(fwd, bwd, source, config, exact=True)
        approx_sentence, _ = decode_s1_cip(fwd, bwd, source, config, exact=False)

        cache = _CipCache()
        steps = []
        for i, step in enumerate(exact_trace.steps):
            approx_dist, _ = s1_word_c(
                fwd, bwd, source, Sentence.prefix(step.prefix), config, cache
            )
            approx_choice = approx_dist.argmax()
            steps.append(
                OracleStep(
                    index=i,
                    prefix_text=" ".join(tgt.surfaces[t] for t in step.prefix),
                    approx_choice=tgt.surfaces[approx_choice],
                    exact_choice=tgt.surfaces[step.chosen],
                    agree=approx_choice == step.chosen,
                )
            )
        sentences.append(
            OracleSentence(
                source_text=source.text(fwd.source_vocab),
                global_argmax_text=global_argmax.text(tgt),
                exact_decode_text=exact_sentence.text(tgt),
                approx_decode_text=approx_sentence.text(tgt),
                global_matches_exact=global_argmax == exact_sentence,
                exact_matches_approx=exact_sentence == approx_sentence,
                steps=tuple(steps),
            )
        )
    return OracleReport(alpha=alpha, max_len=max_len, sentences=tuple(sentences))

"""Pragmatic speakers and listeners over a conditional sequence model.

The base speaker is any forward model scored with ``sequence_logprob``.
Listener-aware speakers come in two families:

* explicit-distractor speakers score a translation by how well a listener
  could pick the true source out of a supplied distractor set, either over
  whole sentences (global) or one next-word decision at a time
  (incremental);
* cycle-consistent speakers replace the distractor listener with a
  backward translation model, scoring a translation by how well the source
  can be reconstructed from it, again globally (rerank a candidate set) or
  incrementally (score next-word candidates through greedy completions).

Everything is deterministic: candidate selection, argmax, and ranking all
break ties toward the lowest token id or sentence key.  The rationality
weight ``alpha`` is applied as an exponent on the listener/backward term
of every combined score; ``alpha == 0`` disables the listener term exactly
(no ``0 * -inf`` artifacts), which collapses every speaker here onto the
base model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from .core import (
    NEG_INF,
    AllZeroSupport,
    CandidateRecord,
    DecodeStep,
    DecodeTrace,
    LogDistribution,
    PragmaticsConfig,
    RolloutPolicy,
    Sentence,
    log_normalize,
    logsumexp,
)
from .models import ConditionalSequenceModel, enumerate_continuations

StepFn = Callable[[Sentence, Sentence], LogDistribution]


def _combine(base_lp: float, listener_lp: float, alpha: float) -> float:
    """base + alpha * listener with exact handling of zeros.

    A zero-probability base can never be rescued by the listener, and
    alpha == 0 must ignore the listener entirely, even a -inf one.
    """
    if base_lp == NEG_INF:
        return NEG_INF
    if alpha == 0.0:
        return base_lp
    if listener_lp == NEG_INF:
        return NEG_INF
    return base_lp + alpha * listener_lp


def _require_content(sentence: Sentence) -> None:
    if not sentence.content_tokens:
        raise ValueError("source sentence must contain at least one content token")


def _check_directions(fwd: ConditionalSequenceModel, bwd: ConditionalSequenceModel) -> None:
    if (
        bwd.source_vocab.surfaces != fwd.target_vocab.surfaces
        or bwd.target_vocab.surfaces != fwd.source_vocab.surfaces
    ):
        raise ValueError("backward model vocabularies do not mirror the forward model")


# ---------------------------------------------------------------------------
# Distractors and candidate sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistractorSet:
    """The source sentences a translation must discriminate between.

    With a single sentence every pragmatic speaker degenerates to base
    behavior (the listener is always certain).  The prior defaults to
    uniform; supplying one makes the uniformity assumption explicit and
    testable.
    """

    sentences: tuple[Sentence, ...]
    prior: LogDistribution = None

    def __post_init__(self) -> None:
        if not self.sentences:
            raise ValueError("distractor set must not be empty")
        if len(set(self.sentences)) != len(self.sentences):
            raise ValueError("distractor sentences must be distinct")
        for s in self.sentences:
            if not s.terminated:
                raise ValueError("distractor sentences must be terminated")
            _require_content(s)
        if self.prior is None:
            object.__setattr__(
                self, "prior", log_normalize({s: 0.0 for s in self.sentences})
            )
        elif set(self.prior.support) != set(self.sentences):
            raise ValueError("prior support must equal the distractor sentences")

    def __contains__(self, sentence: Sentence) -> bool:
        return sentence in self.sentences


@dataclass(frozen=True)
class CandidateSet:
    """A finite stand-in for the (infinite) set of possible translations."""

    utterances: tuple[Sentence, ...]

    def __post_init__(self) -> None:
        if not self.utterances:
            raise ValueError("candidate set must not be empty")
        for u in self.utterances:
            if not u.terminated:
                raise ValueError("candidate utterances must be terminated")
        object.__setattr__(self, "utterances", tuple(sorted(set(self.utterances))))

    @classmethod
    def from_beam(
        cls, model: ConditionalSequenceModel, source: Sentence, config: PragmaticsConfig
    ) -> "CandidateSet":
        """Candidates from a base-model beam search."""
        hyps = beam_decode(
            model.next_token_dist,
            source,
            beam_width=config.beam_width,
            max_len=config.max_len,
            eos_id=model.target_vocab.eos_id,
        )
        if not hyps:
            raise AllZeroSupport("beam search produced no terminated candidates")
        return cls(tuple(s for s, _ in hyps))

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sentence]) -> "CandidateSet":
        return cls(tuple(sentences))


# ---------------------------------------------------------------------------
# Base decoding strategies
# ---------------------------------------------------------------------------


def _greedy_continue(
    step_fn: StepFn,
    source: Sentence,
    start: tuple[int, ...],
    max_len: int,
    eos_id: int,
) -> tuple[tuple[int, ...], bool]:
    """Greedy continuation after ``start``; returns (continuation, terminated)."""
    cont: tuple[int, ...] = ()
    tokens = start
    while len(tokens) < max_len:
        tok = step_fn(source, Sentence.prefix(tokens)).argmax()
        cont += (tok,)
        tokens += (tok,)
        if tok == eos_id:
            return cont, True
    return cont, False


def greedy_decode(step_fn: StepFn, source: Sentence, max_len: int, eos_id: int) -> Sentence:
    """Repeatedly append the argmax token until EOS or the length cap.

    A decode that hits ``max_len`` without EOS comes back unterminated.
    """
    cont, terminated = _greedy_continue(step_fn, source, (), max_len, eos_id)
    return Sentence(cont, terminated=terminated)


def beam_decode(
    step_fn: StepFn,
    source: Sentence,
    beam_width: int,
    max_len: int,
    eos_id: int,
) -> list[tuple[Sentence, float]]:
    """Beam search over step scores; EOS competes for beam slots.

    At every step all single-token expansions of the live hypotheses,
    EOS included, are ranked together and only the top ``beam_width``
    survive; a surviving EOS expansion becomes a finished hypothesis and
    frees its slot.  Up to ``beam_width`` terminated sentences come back
    best-first (total logprob descending, then lowest sentence).  With
    ``beam_width == 1`` the surviving expansion is exactly the greedy
    argmax, so the result equals :func:`greedy_decode` whenever greedy
    terminates.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    live: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    finals: list[tuple[tuple[int, ...], float]] = []
    while live:
        expansions: list[tuple[tuple[int, ...], float]] = []
        for tokens, lp in live:
            dist = step_fn(source, Sentence.prefix(tokens))
            for tok, tok_lp in dist.items():
                if tok_lp == NEG_INF:
                    continue
                # A non-EOS token at the length cap can never terminate.
                if tok == eos_id or len(tokens) + 2 <= max_len:
                    expansions.append((tokens + (tok,), lp + tok_lp))
        expansions.sort(key=lambda pair: (-pair[1], pair[0]))
        live = []
        for tokens, lp in expansions[:beam_width]:
            if tokens[-1] == eos_id:
                finals.append((tokens, lp))
            else:
                live.append((tokens, lp))
    finals.sort(key=lambda pair: (-pair[1], pair[0]))
    return [(Sentence(tokens), lp) for tokens, lp in finals[:beam_width]]


# ---------------------------------------------------------------------------
# Explicit-distractor speakers (global and incremental)
# ---------------------------------------------------------------------------


def l1_sentence(
    fwd: ConditionalSequenceModel, distractors: DistractorSet, utterance: Sentence
) -> LogDistribution:
    """Which source produced this utterance?  Bayes rule over the base speaker."""
    weights = {
        w: distractors.prior.logprob(w) + fwd.sequence_logprob(w, utterance)
        for w in distractors.sentences
    }
    return log_normalize(weights)


def s1_global(
    fwd: ConditionalSequenceModel,
    distractors: DistractorSet,
    source: Sentence,
    candidates: CandidateSet,
    alpha: float,
) -> LogDistribution:
    """Globally pragmatic speaker over a candidate set.

    Each candidate is scored by base fluency plus ``alpha`` times the
    sentence listener's belief in the true source, then normalized over
    the candidate set.
    """
    _require_content(source)
    if source not in distractors:
        raise ValueError("source must be a member of the distractor set")
    weights: dict[Sentence, float] = {}
    for u in candidates.utterances:
        base_lp = fwd.sequence_logprob(source, u)
        if base_lp == NEG_INF:
            weights[u] = NEG_INF
            continue
        try:
            listener_lp = l1_sentence(fwd, distractors, u).logprob(source)
        except AllZeroSupport:
            listener_lp = NEG_INF
        weights[u] = _combine(base_lp, listener_lp, alpha)
    return log_normalize(weights)


def l1_word(
    fwd: ConditionalSequenceModel,
    distractors: DistractorSet,
    token: int,
    prefix: Sentence,
) -> LogDistribution:
    """Word-level listener: which source makes this next word likely?"""
    weights = {
        w: distractors.prior.logprob(w) + fwd.next_token_dist(w, prefix).logprob(token)
        for w in distractors.sentences
    }
    return log_normalize(weights)


def _s1_word_parts(
    fwd: ConditionalSequenceModel,
    distractors: DistractorSet,
    source: Sentence,
    prefix: Sentence,
) -> dict[int, tuple[float, float]]:
    """(base, listener) logprobs per token; listener is -inf/0-safe."""
    dists = {w: fwd.next_token_dist(w, prefix) for w in distractors.sentences}
    base = dists[source]
    parts: dict[int, tuple[float, float]] = {}
    for tok in fwd.target_vocab.token_ids():
        base_lp = base.logprob(tok)
        if base_lp == NEG_INF:
            parts[tok] = (NEG_INF, NEG_INF)
            continue
        joint = {
            w: distractors.prior.logprob(w) + dists[w].logprob(tok)
            for w in distractors.sentences
        }
        listener_lp = joint[source] - logsumexp(joint.values())
        parts[tok] = (base_lp, listener_lp)
    return parts


def s1_word(
    fwd: ConditionalSequenceModel,
    distractors: DistractorSet,
    source: Sentence,
    prefix: Sentence,
    alpha: float,
) -> LogDistribution:
    """Word-level pragmatic speaker over the full target vocabulary.

    Tokens the base speaker rules out stay at -inf; the listener can
    reweight but never resurrect them.
    """
    _require_content(source)
    if source not in distractors:
        raise ValueError("source must be a member of the distractor set")
    parts = _s1_word_parts(fwd, distractors, source, prefix)
    return log_normalize(
        {tok: _combine(b, l, alpha) for tok, (b, l) in parts.items()}
    )


def decode_s1_ip(
    fwd: ConditionalSequenceModel,
    distractors: DistractorSet,
    source: Sentence,
    config: PragmaticsConfig,
) -> tuple[Sentence, DecodeTrace]:
    """Incremental pragmatic decode against explicit distractors.

    Applies the word-level pragmatic speaker at every next-word decision.
    With ``beam_width > 1`` the step scores drive a beam search instead of
    greedy selection and the trace replays the winning hypothesis.
    """
    _require_content(source)
    if source not in distractors:
        raise ValueError("source must be a member of the distractor set")
    eos = fwd.target_vocab.eos_id

    if config.beam_width > 1:

        def step_fn(w: Sentence, c: Sentence) -> LogDistribution:
            return s1_word(fwd, distractors, w, c, config.alpha)

        hyps = beam_decode(step_fn, source, config.beam_width, config.max_len, eos)
        if not hyps:
            raise AllZeroSupport("pragmatic beam produced no terminated hypothesis")
        best = hyps[0][0]
        steps = []
        for i, tok in enumerate(best.tokens):
            prefix = Sentence.prefix(best.tokens[:i])
            steps.append(_ip_step(fwd, distractors, source, prefix, config.alpha, chosen=tok))
        return best, DecodeTrace(tuple(steps))

    tokens: tuple[int, ...] = ()
    steps = []
    terminated = False
    while len(tokens) < config.max_len:
        prefix = Sentence.prefix(tokens)
        step = _ip_step(fwd, distractors, source, prefix, config.alpha, chosen=None)
        steps.append(step)
        tokens += (step.chosen,)
        if step.chosen == eos:
            terminated = True
            break
    return Sentence(tokens, terminated=terminated), DecodeTrace(tuple(steps))


def _ip_step(
    fwd: ConditionalSequenceModel,
    distractors: DistractorSet,
    source: Sentence,
    prefix: Sentence,
    alpha: float,
    chosen: int | None,
) -> DecodeStep:
    parts = _s1_word_parts(fwd, distractors, source, prefix)
    dist = log_normalize({tok: _combine(b, l, alpha) for tok, (b, l) in parts.items()})
    records = tuple(
        CandidateRecord(
            token=tok,
            base_logprob=b,
            continuation=None,
            listener_logprob=l,
            combined=dist.logprob(tok),
        )
        for tok, (b, l) in sorted(parts.items())
        if b > NEG_INF
    )
    return DecodeStep(prefix.tokens, records, dist.argmax() if chosen is None else chosen)


# ---------------------------------------------------------------------------
# Cycle-consistent speakers (global and incremental)
# ---------------------------------------------------------------------------


def s1_cgp_rerank(
    fwd: ConditionalSequenceModel,
    bwd: ConditionalSequenceModel,
    source: Sentence,
    candidates: CandidateSet,
    alpha: float,
) -> list[tuple[Sentence, float]]:
    """Rerank candidate translations by fluency plus reconstructability.

    Score is the forward sentence logprob plus ``alpha`` times the
    backward model's logprob of recovering the source from the candidate.
    Scores are not normalized; the ranking is what matters.
    """
    _require_content(source)
    _check_directions(fwd, bwd)
    scored = [
        (
            u,
            _combine(
                fwd.sequence_logprob(source, u),
                bwd.sequence_logprob(u, source),
                alpha,
            ),
        )
        for u in candidates.utterances
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored


@dataclass
class _CipCache:
    """Per-decode memo: greedy rollouts and backward scores are reused."""

    rollouts: dict[tuple[int, ...], tuple[tuple[int, ...], bool]] = field(default_factory=dict)
    backward: dict[tuple[tuple[int, ...], bool], float] = field(default_factory=dict)


def s1_word_c(
    fwd: ConditionalSequenceModel,
    bwd: ConditionalSequenceModel,
    source: Sentence,
    prefix: Sentence,
    config: PragmaticsConfig,
    cache: _CipCache | None = None,
) -> tuple[LogDistribution, DecodeStep]:
    """One cycle-consistent next-word decision.

    Takes the top ``candidate_width_k`` next tokens by base probability,
    completes each candidate greedily to a full sentence, and scores it by
    base probability plus ``alpha`` times the backward logprob of the
    source given the completed sentence.  The single greedy completion
    stands in for the full continuation marginal
    (:func:`s1_word_c_exact`); its own forward probability is not part of
    the score.  A completion that hits the length cap without EOS is
    flagged truncated and scored as-is.
    """
    _require_content(source)
    _check_directions(fwd, bwd)
    if config.rollout is not RolloutPolicy.GREEDY:
        raise ValueError(f"unsupported rollout policy {config.rollout!r}")
    if len(prefix) >= config.max_len:
        raise ValueError("prefix already at max_len")
    cache = cache if cache is not None else _CipCache()
    eos = fwd.target_vocab.eos_id
    base = fwd.next_token_dist(source, prefix)
    finite = [(tok, lp) for tok, lp in base.items() if lp > NEG_INF]
    finite.sort(key=lambda pair: (-pair[1], pair[0]))
    chosen_candidates = finite[: config.candidate_width_k]

    records: list[CandidateRecord] = []
    weights: dict[int, float] = {}
    for tok, base_lp in chosen_candidates:
        start = prefix.tokens + (tok,)
        if tok == eos:
            cont: tuple[int, ...] = ()
            terminated = True
        else:
            hit = cache.rollouts.get(start)
            if hit is None:
                hit = _greedy_continue(fwd.next_token_dist, source, start, config.max_len, eos)
                cache.rollouts[start] = hit
            cont, terminated = hit
        completion = Sentence(start + cont, terminated=terminated)
        bkey = (completion.tokens, completion.terminated)
        listener_lp = cache.backward.get(bkey)
        if listener_lp is None:
            listener_lp = bwd.sequence_logprob(completion, source)
            cache.backward[bkey] = listener_lp
        combined = _combine(base_lp, listener_lp, config.alpha)
        weights[tok] = combined
        records.append(
            CandidateRecord(
                token=tok,
                base_logprob=base_lp,
                continuation=cont,
                listener_logprob=listener_lp,
                combined=combined,
                rollout_truncated=not terminated,
            )
        )
    dist = log_normalize(weights)
    # Record normalized combined scores so trace and distribution agree.
    records = [
        CandidateRecord(
            token=r.token,
            base_logprob=r.base_logprob,
            continuation=r.continuation,
            listener_logprob=r.listener_logprob,
            combined=dist.logprob(r.token),
            rollout_truncated=r.rollout_truncated,
        )
        for r in records
    ]
    step = DecodeStep(prefix.tokens, tuple(sorted(records, key=lambda r: r.token)), dist.argmax())
    return dist, step


def s1_word_c_exact(
    fwd: ConditionalSequenceModel,
    bwd: ConditionalSequenceModel,
    source: Sentence,
    prefix: Sentence,
    alpha: float,
    max_len: int,
) -> LogDistribution:
    """Exact continuation marginal for one cycle-consistent decision.

    For every next token, sums over all terminating continuations of the
    extended prefix, weighting each full sentence's backward
    reconstruction score (raised to ``alpha``) by the forward probability
    of that continuation.  Enumerates exhaustively, so only viable on
    small models; serves as the oracle for :func:`s1_word_c`.

    Tokens with no terminating continuation within ``max_len`` get zero
    mass.
    """
    _require_content(source)
    _check_directions(fwd, bwd)
    eos = fwd.target_vocab.eos_id
    base = fwd.next_token_dist(source, prefix)
    weights: dict[int, float] = {}
    for tok, base_lp in base.items():
        if base_lp == NEG_INF:
            weights[tok] = NEG_INF
            continue
        if tok == eos:
            continuations: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
        else:
            continuations = enumerate_continuations(
                fwd, source, Sentence.prefix(prefix.tokens + (tok,)), max_len
            )
        terms = []
        for cont, cont_lp in continuations:
            if alpha == 0.0:
                terms.append(cont_lp)
                continue
            full = Sentence(prefix.tokens + (tok,) + cont, terminated=True)
            listener_lp = bwd.sequence_logprob(full, source)
            if listener_lp == NEG_INF:
                continue
            terms.append(alpha * listener_lp + cont_lp)
        marginal = logsumexp(terms) if terms else NEG_INF
        weights[tok] = base_lp + marginal if marginal > NEG_INF else NEG_INF
    return log_normalize(weights)


def decode_s1_cip(
    fwd: ConditionalSequenceModel,
    bwd: ConditionalSequenceModel,
    source: Sentence,
    config: PragmaticsConfig,
    exact: bool = False,
) -> tuple[Sentence, DecodeTrace]:
    """Cycle-consistent incremental decode.

    Greedy over :func:`s1_word_c` steps (or :func:`s1_word_c_exact` steps
    when ``exact`` is set, for oracle comparisons).  Decoding is always
    greedy here; ``config.beam_width`` only configures base-model
    candidate generation elsewhere.
    """
    _require_content(source)
    _check_directions(fwd, bwd)
    eos = fwd.target_vocab.eos_id
    cache = _CipCache()
    tokens: tuple[int, ...] = ()
    steps: list[DecodeStep] = []
    terminated = False
    while len(tokens) < config.max_len:
        prefix = Sentence.prefix(tokens)
        if exact:
            dist = s1_word_c_exact(fwd, bwd, source, prefix, config.alpha, config.max_len)
            base = fwd.next_token_dist(source, prefix)
            records = tuple(
                CandidateRecord(
                    token=tok,
                    base_logprob=base.logprob(tok),
                    continuation=None,
                    listener_logprob=None,
                    combined=lp,
                )
                for tok, lp in dist.items()
                if lp > NEG_INF
            )
            step = DecodeStep(prefix.tokens, records, dist.argmax())
        else:
            _, step = s1_word_c(fwd, bwd, source, prefix, config, cache)
        steps.append(step)
        tokens += (step.chosen,)
        if step.chosen == eos:
            terminated = True
            break
    return Sentence(tokens, terminated=terminated), DecodeTrace(tuple(steps))

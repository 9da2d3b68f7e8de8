"""Shared domain types and log-space probability algebra.

Everything downstream (toy models, pragmatic decoders, the evaluation
harness, the wire adapter) is built from the small vocabulary of values
defined here.  Two conventions hold throughout the package:

* all probability arithmetic happens in log space, and exact zeros are
  carried as ``-inf`` and never floored, so Bayes-rule identities stay
  exact for oracle comparisons;
* every argmax breaks ties toward the lowest key, so decoding is fully
  deterministic and reproducible.

All types here are immutable values and all functions are pure; they can
be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, ClassVar, Iterable, Iterator, Mapping

NEG_INF = float("-inf")

#: Reserved surface form of the end-of-sentence marker.  It is implicit in
#: vocabulary listings and may not be used as an ordinary word.
EOS_SURFACE = "</s>"


class PragmaticsError(Exception):
    """Base class for every error raised by this package."""


class AllZeroSupport(PragmaticsError):
    """A distribution would put zero mass on every item of its support."""


class UnknownToken(PragmaticsError):
    """A sentence or prefix contains a token id outside its vocabulary."""


# ---------------------------------------------------------------------------
# Vocabulary and sentences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    id: int
    surface: str


@dataclass(frozen=True)
class Vocabulary:
    """Finite token inventory. Ids are positions; EOS is always the last id.

    ``surfaces`` includes the EOS marker as its final entry, so a
    vocabulary of n words has size n + 1.
    """

    surfaces: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.surfaces:
            raise ValueError("vocabulary must not be empty")
        if len(set(self.surfaces)) != len(self.surfaces):
            raise ValueError("surface forms must be unique within a vocabulary")
        if self.surfaces[-1] != EOS_SURFACE:
            raise ValueError(f"the final vocabulary entry must be {EOS_SURFACE!r}")
        if EOS_SURFACE in self.surfaces[:-1]:
            raise ValueError(f"{EOS_SURFACE!r} may only appear as the final entry")

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "Vocabulary":
        """Build a vocabulary from ordinary words; EOS is appended."""
        return cls(tuple(words) + (EOS_SURFACE,))

    @property
    def eos_id(self) -> int:
        return len(self.surfaces) - 1

    def __len__(self) -> int:
        return len(self.surfaces)

    def __contains__(self, token_id: int) -> bool:
        return 0 <= token_id < len(self.surfaces)

    def token(self, token_id: int) -> Token:
        if token_id not in self:
            raise UnknownToken(f"token id {token_id} outside vocabulary of size {len(self)}")
        return Token(token_id, self.surfaces[token_id])

    def id_of(self, surface: str) -> int:
        try:
            return self.surfaces.index(surface)
        except ValueError:
            raise UnknownToken(f"unknown surface form {surface!r}") from None

    def token_ids(self) -> range:
        return range(len(self.surfaces))


@dataclass(frozen=True, order=True)
class Sentence:
    """An ordered run of token ids.

    ``terminated`` is true exactly when the final token is EOS.  A prefix
    (a partially decoded sentence) is a Sentence with ``terminated=False``
    and no EOS anywhere.  A decode that hits its length cap without
    emitting EOS also yields ``terminated=False``.
    """

    tokens: tuple[int, ...]
    terminated: bool = True

    @classmethod
    def prefix(cls, tokens: Iterable[int] = ()) -> "Sentence":
        return cls(tuple(tokens), terminated=False)

    @classmethod
    def from_surfaces(cls, surfaces: Iterable[str], vocab: Vocabulary) -> "Sentence":
        """Terminated sentence from word surfaces (EOS appended)."""
        ids = tuple(vocab.id_of(s) for s in surfaces)
        return cls(ids + (vocab.eos_id,), terminated=True)

    @classmethod
    def parse(cls, text: str, vocab: Vocabulary) -> "Sentence":
        """Terminated sentence from whitespace-separated surface text."""
        return cls.from_surfaces(text.split(), vocab)

    def validate(self, vocab: Vocabulary) -> None:
        for tok in self.tokens:
            if tok not in vocab:
                raise UnknownToken(f"token id {tok} outside vocabulary of size {len(vocab)}")
        eos = vocab.eos_id
        if self.terminated:
            if not self.tokens or self.tokens[-1] != eos:
                raise ValueError("a terminated sentence must end with EOS")
            if eos in self.tokens[:-1]:
                raise ValueError("EOS may appear only as the final token")
        elif eos in self.tokens:
            raise ValueError("a prefix may not contain EOS")

    @property
    def content_tokens(self) -> tuple[int, ...]:
        """Token ids without the trailing EOS (if any)."""
        if self.terminated and self.tokens:
            return self.tokens[:-1]
        return self.tokens

    def surfaces(self, vocab: Vocabulary) -> list[str]:
        """Surface forms of the content tokens (EOS stripped)."""
        return [vocab.surfaces[t] for t in self.content_tokens]

    def text(self, vocab: Vocabulary) -> str:
        return " ".join(self.surfaces(vocab))

    def __len__(self) -> int:
        return len(self.tokens)


# ---------------------------------------------------------------------------
# Log-space distributions
# ---------------------------------------------------------------------------


def logsumexp(logweights: Iterable[float]) -> float:
    """log(sum(exp(w))) computed stably; -inf entries contribute nothing."""
    ws = [w for w in logweights if w > NEG_INF]
    if not ws:
        return NEG_INF
    m = max(ws)
    return m + math.log(math.fsum(math.exp(w - m) for w in ws))


@dataclass(frozen=True)
class LogDistribution:
    """A normalized distribution over a finite support, stored in log space.

    The support is kept sorted ascending, which makes the lowest-key
    tie-break of :meth:`argmax` a plain left-to-right scan.  Instances are
    validated on construction: the exponentials of the logweights must sum
    to 1 within 1e-9 and at least one weight must be finite.  Construction
    hooks (see :meth:`add_hook`) let a test harness observe every
    distribution the package ever builds.
    """

    support: tuple[Any, ...]
    logweights: tuple[float, ...]
    _index: dict = field(init=False, repr=False, compare=False, default=None)

    _hooks: ClassVar[list[Callable[["LogDistribution"], None]]] = []

    def __post_init__(self) -> None:
        if len(self.support) != len(self.logweights):
            raise ValueError("support and logweights must have equal length")
        if not self.support:
            raise AllZeroSupport("empty support")
        if any(self.support[i] >= self.support[i + 1] for i in range(len(self.support) - 1)):
            raise ValueError("support must be strictly sorted ascending")
        if all(w == NEG_INF for w in self.logweights):
            raise AllZeroSupport("all logweights are -inf")
        if any(math.isnan(w) for w in self.logweights):
            raise ValueError("logweights must not be NaN")
        total = math.fsum(math.exp(w) for w in self.logweights if w > NEG_INF)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"distribution not normalized: probabilities sum to {total!r}")
        object.__setattr__(self, "_index", dict(zip(self.support, self.logweights)))
        for hook in LogDistribution._hooks:
            hook(self)

    @classmethod
    def add_hook(cls, hook: Callable[["LogDistribution"], None]) -> None:
        cls._hooks.append(hook)

    @classmethod
    def remove_hook(cls, hook: Callable[["LogDistribution"], None]) -> None:
        cls._hooks.remove(hook)

    def logprob(self, key: Any) -> float:
        return self._index[key]

    def prob(self, key: Any) -> float:
        return math.exp(self._index[key])

    def __contains__(self, key: Any) -> bool:
        return key in self._index

    def items(self) -> Iterator[tuple[Any, float]]:
        return iter(zip(self.support, self.logweights))

    def argmax(self) -> Any:
        """Key with maximal logweight; ties break toward the lowest key."""
        best_i = 0
        for i in range(1, len(self.support)):
            if self.logweights[i] > self.logweights[best_i]:
                best_i = i
        return self.support[best_i]


def log_normalize(weights: Mapping[Any, float]) -> LogDistribution:
    """Normalize a key->logweight mapping into a LogDistribution.

    Shifts every weight by a single additive constant (the log of the
    total mass), so ratios between entries are preserved exactly.  Raises
    :class:`AllZeroSupport` when every weight is -inf.
    """
    if not weights:
        raise AllZeroSupport("empty support")
    lse = logsumexp(weights.values())
    if lse == NEG_INF:
        raise AllZeroSupport("all weights are -inf")
    support = tuple(sorted(weights))
    shifted = tuple(weights[k] - lse if weights[k] > NEG_INF else NEG_INF for k in support)
    return LogDistribution(support, shifted)


def argmax(dist: LogDistribution) -> Any:
    """Key with maximal logweight, lowest key winning ties."""
    return dist.argmax()


# ---------------------------------------------------------------------------
# Inference configuration
# ---------------------------------------------------------------------------


class RolloutPolicy(str, Enum):
    """How a partial translation is completed when a full sentence is needed."""

    GREEDY = "greedy"


@dataclass(frozen=True)
class PragmaticsConfig:
    """Every inference knob in one place.

    alpha:             rationality weight; the exponent that trades
                       informativity against base fluency (0 disables all
                       pragmatic reasoning).
    candidate_width_k: next-word candidates considered per step by the
                       cycle-consistent incremental decoder.
    beam_width:        width for base-model beam search (candidate
                       generation and the n-best lists of the survey).
    max_len:           hard cap on decoded sentence length, EOS included.
    rollout:           policy used to complete partial sentences before
                       handing them to a backward scorer.
    """

    alpha: float = 0.1
    candidate_width_k: int = 2
    beam_width: int = 1
    max_len: int = 64
    rollout: RolloutPolicy = RolloutPolicy.GREEDY

    def __post_init__(self) -> None:
        if math.isnan(self.alpha) or self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.candidate_width_k < 1:
            raise ValueError("candidate_width_k must be >= 1")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if not isinstance(self.rollout, RolloutPolicy):
            raise ValueError(f"unknown rollout policy {self.rollout!r}")


# ---------------------------------------------------------------------------
# Decode traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateRecord:
    """One candidate token considered at one decode step.

    ``continuation`` is the greedy completion appended after the candidate
    (EOS included) when the step needed a full sentence for backward
    scoring; None when no rollout was involved.  ``listener_logprob`` is
    the informativity term (listener or backward-reconstruction score)
    before the rationality weight is applied.
    """

    token: int
    base_logprob: float
    continuation: tuple[int, ...] | None
    listener_logprob: float | None
    combined: float
    rollout_truncated: bool = False


@dataclass(frozen=True)
class DecodeStep:
    prefix: tuple[int, ...]
    candidates: tuple[CandidateRecord, ...]
    chosen: int


@dataclass(frozen=True)
class DecodeTrace:
    """Per-step audit trail of a pragmatic decode: one step per emitted token."""

    steps: tuple[DecodeStep, ...]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def any_rollout_truncated(self) -> bool:
        return any(c.rollout_truncated for s in self.steps for c in s.candidates)

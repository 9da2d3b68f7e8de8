"""Conditional sequence models: the abstract contract, exact toy tables,
and brute-force enumeration used as the verification oracle.

A :class:`ConditionalSequenceModel` is the sole contact point between the
pragmatic decoders and any concrete backend.  Backward (target-to-source)
translators are ordinary models with the vocabularies swapped; scoring a
source sentence under a backward model is just ``sequence_logprob`` in the
other direction, so one contract serves both directions.
"""

from __future__ import annotations

import abc
import math
import os
from typing import Iterable, Mapping

from .core import (
    NEG_INF,
    EOS_SURFACE,
    LogDistribution,
    PragmaticsError,
    Sentence,
    UnknownToken,
    Vocabulary,
)

TABULAR_HEADER = "pragma-tabular v1"

#: enumerate_sentences refuses vocab_size ** max_len beyond this.
ENUMERATION_GUARD = 10**7


class MissingEntry(PragmaticsError):
    """A closed-world tabular model was queried outside its tables."""


class EnumerationTooLarge(PragmaticsError):
    """The requested brute-force enumeration exceeds the safety guard."""


class ParseError(PragmaticsError):
    """A tabular model file is malformed; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NormalizationError(PragmaticsError):
    """A probability table does not sum to 1 within tolerance."""


class ConditionalSequenceModel(abc.ABC):
    """Next-token scoring contract shared by toy tables and remote backends.

    Scoring must be deterministic (identical inputs give identical
    distributions) and read-only, so a model can be shared across
    concurrent decodes.  ``identity_tag`` is an opaque organizational
    label used by the evaluation harness to check that a system is not
    scored by one of its own components.
    """

    source_vocab: Vocabulary
    target_vocab: Vocabulary
    identity_tag: str

    @abc.abstractmethod
    def next_token_dist(self, source: Sentence, prefix: Sentence) -> LogDistribution:
        """Distribution over the full target vocabulary (EOS included)."""

    def sequence_logprob(self, source: Sentence, sentence: Sentence) -> float:
        """Log probability of a complete sentence, EOS step included.

        The chain-rule product over next-token distributions.  Including
        the EOS step makes full-sentence masses sum to 1, which every
        listener normalization downstream relies on.
        """
        if not sentence.terminated:
            raise ValueError("sequence_logprob requires a terminated sentence")
        total = 0.0
        prefix: tuple[int, ...] = ()
        for tok in sentence.tokens:
            step = self.next_token_dist(source, Sentence.prefix(prefix))
            lp = step.logprob(tok)
            if lp == NEG_INF:
                # Zero-probability step: later prefixes may sit outside a
                # closed world, so stop rather than keep querying.
                return NEG_INF
            total += lp
            prefix += (tok,)
        return total

    def _check_query(self, source: Sentence, prefix: Sentence) -> None:
        source.validate(self.source_vocab)
        prefix.validate(self.target_vocab)
        if prefix.terminated:
            raise ValueError("cannot extend a terminated prefix")


class TabularModel(ConditionalSequenceModel):
    """Exact finite toy model backed by explicit probability tables.

    Tables are keyed by (source content tokens, prefix tokens) and are a
    closed world: querying an unlisted pair raises :class:`MissingEntry`
    rather than smoothing silently, so oracle tests cannot be corrupted by
    invented mass.
    """

    def __init__(
        self,
        source_vocab: Vocabulary,
        target_vocab: Vocabulary,
        tables: Mapping[tuple[tuple[int, ...], tuple[int, ...]], Mapping[int, float]],
        identity_tag: str,
    ):
        self.source_vocab = source_vocab
        self.target_vocab = target_vocab
        self.identity_tag = identity_tag
        self._probs: dict[tuple[tuple[int, ...], tuple[int, ...]], dict[int, float]] = {}
        self._dists: dict[tuple[tuple[int, ...], tuple[int, ...]], LogDistribution] = {}
        for key, table in tables.items():
            probs = dict(table)
            total = math.fsum(probs.values())
            if abs(total - 1.0) > 1e-9:
                raise NormalizationError(
                    f"table for {self._describe_key(key)} sums to {total!r}, not 1"
                )
            if any(p < 0 for p in probs.values()):
                raise NormalizationError(
                    f"table for {self._describe_key(key)} has a negative probability"
                )
            self._probs[key] = probs

    def _describe_key(self, key: tuple[tuple[int, ...], tuple[int, ...]]) -> str:
        src, pre = key
        try:
            src_s = " ".join(self.source_vocab.surfaces[t] for t in src)
            pre_s = " ".join(self.target_vocab.surfaces[t] for t in pre)
        except IndexError:
            return f"{key}"
        return f"'given {src_s} | {pre_s}'"

    @staticmethod
    def _source_key(source: Sentence) -> tuple[int, ...]:
        # Sources are keyed without the trailing EOS so that truncated
        # rollouts (no EOS) can still be looked up.
        return source.content_tokens

    def next_token_dist(self, source: Sentence, prefix: Sentence) -> LogDistribution:
        self._check_query(source, prefix)
        key = (self._source_key(source), prefix.tokens)
        dist = self._dists.get(key)
        if dist is None:
            probs = self._probs.get(key)
            if probs is None:
                raise MissingEntry(f"no table for {self._describe_key(key)}")
            logweights = tuple(
                math.log(p) if (p := probs.get(tok, 0.0)) > 0.0 else NEG_INF
                for tok in self.target_vocab.token_ids()
            )
            dist = LogDistribution(tuple(self.target_vocab.token_ids()), logweights)
            self._dists[key] = dist
        return dist

    def entries(self) -> Iterable[tuple[tuple[tuple[int, ...], tuple[int, ...]], dict[int, float]]]:
        """Table entries in deterministic (source, prefix) order."""
        return sorted(self._probs.items())

    def retagged(self, identity_tag: str) -> "TabularModel":
        """Same tables under a new organizational identity."""
        return TabularModel(self.source_vocab, self.target_vocab, self._probs, identity_tag)


# ---------------------------------------------------------------------------
# Brute-force enumeration (the oracle side of every dual-route check)
# ---------------------------------------------------------------------------


def _check_guard(vocab_size: int, depth: int) -> None:
    if depth > 0 and vocab_size ** depth > ENUMERATION_GUARD:
        raise EnumerationTooLarge(
            f"{vocab_size}^{depth} sentences exceed the enumeration guard"
        )


def enumerate_sentences(
    model: ConditionalSequenceModel, source: Sentence, max_len: int
) -> list[tuple[Sentence, float]]:
    """All terminated sentences of length <= max_len with their logprobs.

    Walks every prefix the model assigns nonzero mass, so the total
    returned probability is 1 (within float noise) whenever the model
    always terminates by ``max_len``.  Results are sorted best-first with
    the usual lowest-key tie-break.
    """
    _check_guard(len(model.target_vocab), max_len)
    eos = model.target_vocab.eos_id
    results: list[tuple[Sentence, float]] = []

    def walk(prefix: tuple[int, ...], lp: float) -> None:
        dist = model.next_token_dist(source, Sentence.prefix(prefix))
        for tok, tok_lp in dist.items():
            if tok_lp == NEG_INF:
                continue
            if tok == eos:
                results.append((Sentence(prefix + (tok,)), lp + tok_lp))
            elif len(prefix) + 2 <= max_len:
                # Room for this token plus at least the closing EOS.
                walk(prefix + (tok,), lp + tok_lp)

    walk((), 0.0)
    results.sort(key=lambda pair: (-pair[1], pair[0]))
    return results


def enumerate_continuations(
    model: ConditionalSequenceModel,
    source: Sentence,
    prefix: Sentence,
    max_len: int,
) -> list[tuple[tuple[int, ...], float]]:
    """All terminating continuations of a prefix, with continuation logprobs.

    Each continuation includes its final EOS; its logprob covers only the
    continuation steps (conditioned on the prefix), not the prefix itself.
    A prefix that is already a complete sentence is not representable here:
    prefixes are unterminated by construction.
    """
    if prefix.terminated:
        raise ValueError("continuations extend unterminated prefixes")
    _check_guard(len(model.target_vocab), max_len - len(prefix))
    if len(prefix) >= max_len:
        return []
    eos = model.target_vocab.eos_id
    results: list[tuple[tuple[int, ...], float]] = []

    def walk(cont: tuple[int, ...], lp: float) -> None:
        dist = model.next_token_dist(source, Sentence.prefix(prefix.tokens + cont))
        for tok, tok_lp in dist.items():
            if tok_lp == NEG_INF:
                continue
            if tok == eos:
                results.append((cont + (tok,), lp + tok_lp))
            elif len(prefix) + len(cont) + 2 <= max_len:
                walk(cont + (tok,), lp + tok_lp)

    walk((), 0.0)
    results.sort(key=lambda pair: (-pair[1], pair[0]))
    return results


# ---------------------------------------------------------------------------
# Tabular model file format
# ---------------------------------------------------------------------------
#
# Text, UTF-8, versioned:
#
#   pragma-tabular v1
#   source:
#   <one surface form per line>
#   target:
#   <one surface form per line>
#   given <source tokens> | <prefix tokens>:
#     <token> <probability>
#     ...
#
# EOS is implicit in the vocabulary sections (its id follows the listed
# words) and is written as "</s>" inside entry blocks.  Unlisted tokens in
# a block have probability zero.  Each block must sum to 1 within 1e-9.
# Full-line "#" comments are ignored.


def load_tabular(path: str, identity_tag: str | None = None) -> TabularModel:
    """Load a pragma-tabular v1 file.

    ``identity_tag`` defaults to the file's stem; pass an explicit tag when
    the same tables must act as organizationally distinct models (for
    example, an evaluation-side back-translator).
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    tag = identity_tag if identity_tag is not None else os.path.splitext(os.path.basename(path))[0]
    return parse_tabular(text, identity_tag=tag)


def parse_tabular(text: str, identity_tag: str) -> TabularModel:
    lines = text.splitlines()
    pos = 0

    def next_meaningful(start: int) -> int:
        i = start
        while i < len(lines) and (not lines[i].strip() or lines[i].lstrip().startswith("#")):
            i += 1
        return i

    pos = next_meaningful(0)
    if pos >= len(lines):
        raise ParseError("empty file", line=1)
    if lines[pos].strip() != TABULAR_HEADER:
        raise ParseError(f"expected header {TABULAR_HEADER!r}", line=pos + 1)
    pos += 1

    def read_vocab(section: str, start: int) -> tuple[Vocabulary, int]:
        i = next_meaningful(start)
        if i >= len(lines) or lines[i].strip() != f"{section}:":
            raise ParseError(f"expected '{section}:' section", line=i + 1)
        i += 1
        words: list[str] = []
        while True:
            j = next_meaningful(i)
            if j >= len(lines):
                break
            stripped = lines[j].strip()
            if stripped.endswith(":") or lines[j][:1].isspace():
                break
            if len(stripped.split()) != 1:
                raise ParseError("vocabulary lines hold a single surface form", line=j + 1)
            if stripped == EOS_SURFACE:
                raise ParseError("EOS is implicit and may not be listed", line=j + 1)
            if "|" in stripped:
                raise ParseError("'|' is reserved and may not appear in a surface form", line=j + 1)
            words.append(stripped)
            i = j + 1
        if not words:
            raise ParseError(f"'{section}:' section lists no words", line=i + 1)
        try:
            return Vocabulary.from_words(words), i
        except ValueError as exc:
            raise ParseError(str(exc), line=i) from None

    source_vocab, pos = read_vocab("source", pos)
    target_vocab, pos = read_vocab("target", pos)

    def surface_id(vocab: Vocabulary, surface: str, line: int) -> int:
        try:
            return vocab.id_of(surface)
        except UnknownToken:
            raise ParseError(f"unknown token {surface!r}", line=line) from None

    tables: dict[tuple[tuple[int, ...], tuple[int, ...]], dict[int, float]] = {}
    block_names: dict[tuple[tuple[int, ...], tuple[int, ...]], str] = {}
    current: dict[int, float] | None = None

    pos = next_meaningful(pos)
    while pos < len(lines):
        raw = lines[pos]
        stripped = raw.strip()
        if raw[:1].isspace():
            if current is None:
                raise ParseError("entry line outside a 'given' block", line=pos + 1)
            parts = stripped.split()
            if len(parts) != 2:
                raise ParseError("entry lines are '<token> <probability>'", line=pos + 1)
            surface, prob_text = parts
            if surface == EOS_SURFACE:
                tok = target_vocab.eos_id
            else:
                tok = surface_id(target_vocab, surface, pos + 1)
            try:
                prob = float(prob_text)
            except ValueError:
                raise ParseError(f"bad probability literal {prob_text!r}", line=pos + 1) from None
            if math.isnan(prob) or math.isinf(prob) or prob < 0:
                raise ParseError(f"probability {prob_text!r} out of range", line=pos + 1)
            if tok in current:
                raise ParseError(f"duplicate token {surface!r} in block", line=pos + 1)
            current[tok] = prob
        else:
            if not stripped.startswith("given ") or not stripped.endswith(":"):
                raise ParseError("expected a 'given <source> | <prefix>:' block", line=pos + 1)
            body = stripped[len("given "):-1]
            if body.count("|") != 1:
                raise ParseError("block header needs exactly one '|'", line=pos + 1)
            src_text, pre_text = body.split("|")
            src = tuple(surface_id(source_vocab, s, pos + 1) for s in src_text.split())
            pre = tuple(surface_id(target_vocab, s, pos + 1) for s in pre_text.split())
            if not src:
                raise ParseError("a block needs at least one source token", line=pos + 1)
            if source_vocab.eos_id in src or target_vocab.eos_id in pre:
                raise ParseError("EOS may not appear in a block header", line=pos + 1)
            key = (src, pre)
            if key in tables:
                raise ParseError(f"duplicate block 'given {body.strip()}'", line=pos + 1)
            current = {}
            tables[key] = current
            block_names[key] = stripped[:-1]
        pos = next_meaningful(pos + 1)

    if not tables:
        raise ParseError("file defines no entry blocks", line=len(lines))
    for key, table in tables.items():
        total = math.fsum(table.values())
        if abs(total - 1.0) > 1e-9:
            raise NormalizationError(
                f"block '{block_names[key]}' sums to {total!r}, not 1"
            )
    return TabularModel(source_vocab, target_vocab, tables, identity_tag=identity_tag)


def save_tabular(model: TabularModel, path: str) -> None:
    """Write a TabularModel back to its file format.

    Probabilities are emitted with repr, so a save/load round trip parses
    to bit-identical floats and therefore bit-identical logweights.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_tabular(model))


def format_tabular(model: TabularModel) -> str:
    out: list[str] = [TABULAR_HEADER, "source:"]
    out.extend(model.source_vocab.surfaces[:-1])
    out.append("target:")
    out.extend(model.target_vocab.surfaces[:-1])
    for (src, pre), table in model.entries():
        src_s = " ".join(model.source_vocab.surfaces[t] for t in src)
        pre_s = " ".join(model.target_vocab.surfaces[t] for t in pre)
        header = f"given {src_s} | {pre_s}:" if pre_s else f"given {src_s} |:"
        out.append(header)
        for tok in sorted(table):
            if table[tok] == 0.0:
                continue
            out.append(f"  {model.target_vocab.surfaces[tok]} {table[tok]!r}")
    return "\n".join(out) + "\n"

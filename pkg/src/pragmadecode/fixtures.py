"""Canonical toy models and deterministic random model generators.

The shipped fixtures are small enough to verify by hand yet exercise every
interesting decoding behavior:

* AMBIG-1: two sources whose base argmax translations collide on the same
  target sentence, while lower-probability alternatives are far easier to
  back-translate correctly.  The canonical many-to-one example.
* CHAIN-1: a multi-step model built so that a single greedy rollout and
  exact continuation marginalization disagree at the first decode step,
  making the approximation gap observable.
* DET-1: a deterministic one-word chain, the degenerate smoke case.

The random generators below always produce valid closed-world models that
terminate within their length bound, so brute-force oracles can enumerate
them exhaustively.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import Sentence, Vocabulary
from .models import TabularModel, parse_tabular

TableKey = tuple[tuple[int, ...], tuple[int, ...]]


def data_path(name: str) -> Path:
    """Filesystem path of a shipped fixture file."""
    path = Path(str(resources.files(__package__).joinpath("data", name)))
    if not path.is_file():
        raise FileNotFoundError(f"fixture data file {name!r} not found")
    return path


def _load_data(name: str, tag: str) -> TabularModel:
    text = resources.files(__package__).joinpath("data", name).read_text(encoding="utf-8")
    return parse_tabular(text, identity_tag=tag)


def ambig1_forward(tag: str = "ambig1-fwd") -> TabularModel:
    return _load_data("ambig1_fwd.tab", tag)


def ambig1_backward(tag: str = "ambig1-bwd") -> TabularModel:
    return _load_data("ambig1_bwd.tab", tag)


def chain1_forward(tag: str = "chain1-fwd") -> TabularModel:
    return _load_data("chain1_fwd.tab", tag)


def chain1_backward(tag: str = "chain1-bwd") -> TabularModel:
    return _load_data("chain1_bwd.tab", tag)


def det1(tag: str = "det1") -> TabularModel:
    """Deterministic chain: source 's' always translates to [t, EOS]."""
    src = Vocabulary.from_words(["s"])
    tgt = Vocabulary.from_words(["t"])
    t = tgt.id_of("t")
    tables: dict[TableKey, dict[int, float]] = {
        ((src.id_of("s"),), ()): {t: 1.0},
        ((src.id_of("s"),), (t,)): {tgt.eos_id: 1.0},
    }
    return TabularModel(src, tgt, tables, identity_tag=tag)


def injective_forward(tag: str = "injective-fwd") -> TabularModel:
    """AMBIG-1 variant whose greedy map is injective (A->x, B->y)."""
    src = Vocabulary.from_words(["A", "B"])
    tgt = Vocabulary.from_words(["u", "x", "y"])
    u, x, y = (tgt.id_of(s) for s in "uxy")
    a, b = (src.id_of(s) for s in "AB")
    tables: dict[TableKey, dict[int, float]] = {
        ((a,), ()): {x: 0.60, u: 0.39, y: 0.01},
        ((b,), ()): {y: 0.60, u: 0.39, x: 0.01},
    }
    for s in (a, b):
        for t in (u, x, y):
            tables[((s,), (t,))] = {tgt.eos_id: 1.0}
    return TabularModel(src, tgt, tables, identity_tag=tag)


def source_sentences(model: TabularModel) -> list[Sentence]:
    """Single-token source sentences of a toy model, in id order."""
    return [
        Sentence((tok, model.source_vocab.eos_id))
        for tok in range(model.source_vocab.eos_id)
    ]


# ---------------------------------------------------------------------------
# Random model generation
# ---------------------------------------------------------------------------


def _random_table(rng: random.Random, support: list[int], zero_rate: float = 0.25) -> dict[int, float]:
    """Random distribution over the given token ids; at least one nonzero."""
    weights = {tok: 0.0 if rng.random() < zero_rate else rng.random() for tok in support}
    if all(w == 0.0 for w in weights.values()):
        weights[rng.choice(support)] = rng.random() + 0.1
    total = sum(weights.values())
    return {tok: w / total for tok, w in weights.items() if w > 0.0}


def random_model_pair(
    rng: random.Random,
    n_sources: int = 2,
    n_target_words: int = 3,
    max_len: int = 3,
) -> tuple[TabularModel, TabularModel]:
    """A random forward model and a matching full-closed-world backward model.

    The forward model always terminates by ``max_len`` (EOS is forced at
    the depth bound) and never emits an empty translation (no EOS mass at
    the empty prefix).  The backward model has entries for every possible
    target-side sentence, so any rollout a decoder can produce is
    scorable.
    """
    src_vocab = Vocabulary.from_words([f"s{i}" for i in range(n_sources)])
    tgt_vocab = Vocabulary.from_words([f"t{i}" for i in range(n_target_words)])
    words = list(range(n_target_words))
    eos = tgt_vocab.eos_id

    fwd_tables: dict[TableKey, dict[int, float]] = {}
    for i in range(n_sources):
        src_key = (i,)

        def fill(prefix: tuple[int, ...]) -> None:
            if len(prefix) == max_len - 1:
                fwd_tables[(src_key, prefix)] = {eos: 1.0}
                return
            support = words + [eos] if prefix else words
            fwd_tables[(src_key, prefix)] = _random_table(rng, support)
            for w in words:
                fill(prefix + (w,))

        fill(())
    fwd = TabularModel(src_vocab, tgt_vocab, fwd_tables, identity_tag=f"random-fwd-{rng.random():.6f}")

    source_ids = list(range(n_sources))
    bwd_tables: dict[TableKey, dict[int, float]] = {}

    def add_bwd_entry(content: tuple[int, ...]) -> None:
        bwd_tables[(content, ())] = _random_table(rng, source_ids, zero_rate=0.1)
        for s in source_ids:
            bwd_tables[(content, (s,))] = {src_vocab.eos_id: 1.0}

    def contents(prefix: tuple[int, ...]) -> None:
        if prefix:
            add_bwd_entry(prefix)
        if len(prefix) + 1 <= max_len - 1:
            for w in words:
                contents(prefix + (w,))

    contents(())
    bwd = TabularModel(tgt_vocab, src_vocab, bwd_tables, identity_tag=f"random-bwd-{rng.random():.6f}")
    return fwd, bwd


@dataclass(frozen=True)
class CyclePairFixture:
    """A two-source model family member for cycle-consistency experiments.

    ``collides`` marks members built so the base greedy decoder maps both
    sources to the same target sentence while the pragmatic decoder can
    still tell them apart.  ``eval_bwd`` is an organizationally separate
    back-translator for scoring round trips.
    """

    fwd: TabularModel
    bwd: TabularModel
    eval_bwd: TabularModel
    corpus: tuple[Sentence, ...]
    collides: bool
    max_len: int = 4


def ambiguous_pair_family(n_models: int, seed: int = 20240) -> list[CyclePairFixture]:
    """Deterministic family of two-source fixtures, mostly colliding.

    Colliding members put nearly tied mass on a shared top translation and
    a source-specific runner-up that back-translates decisively, so even a
    small rationality weight (0.1) flips the decision.  Roughly a quarter
    of the members are injective controls.
    """
    rng = random.Random(seed)
    out: list[CyclePairFixture] = []
    for idx in range(n_models):
        collides = idx % 4 != 3
        out.append(_build_pair_fixture(rng, idx, collides))
    return out


def _build_pair_fixture(rng: random.Random, idx: int, collides: bool) -> CyclePairFixture:
    src = Vocabulary.from_words(["A", "B"])
    tgt = Vocabulary.from_words(["u", "x", "y"])
    u, x, y = (tgt.id_of(s) for s in "uxy")
    a, b = (src.id_of(s) for s in "AB")

    def root(top: int, second: int, third: int, top_p: float, gap: float) -> dict[int, float]:
        # top_p and gap are drawn so the remainder stays strictly positive.
        second_p = top_p - gap
        return {top: top_p, second: second_p, third: 1.0 - top_p - second_p}

    if collides:
        # Shared argmax u with a nearly tied, source-specific runner-up
        # (x for A, y for B), so even alpha=0.1 flips the decision once the
        # backward model weighs in.
        table_a = root(u, x, y, rng.uniform(0.42, 0.48), rng.uniform(0.005, 0.02))
        table_b = root(u, y, x, rng.uniform(0.42, 0.48), rng.uniform(0.005, 0.02))
    else:
        table_a = root(x, u, y, rng.uniform(0.45, 0.55), rng.uniform(0.15, 0.25))
        table_b = root(y, u, x, rng.uniform(0.45, 0.55), rng.uniform(0.15, 0.25))

    fwd_tables: dict[TableKey, dict[int, float]] = {((a,), ()): table_a, ((b,), ()): table_b}
    for s in (a, b):
        for t in (u, x, y):
            fwd_tables[((s,), (t,))] = {tgt.eos_id: 1.0}
    fwd = TabularModel(src, tgt, fwd_tables, identity_tag=f"fam{idx}-fwd")

    def bwd_model(tag: str, pa_u: float, pa_x: float, pb_y: float) -> TabularModel:
        tables: dict[TableKey, dict[int, float]] = {
            ((u,), ()): {a: pa_u, b: 1.0 - pa_u},
            ((x,), ()): {a: pa_x, b: 1.0 - pa_x},
            ((y,), ()): {a: 1.0 - pb_y, b: pb_y},
        }
        for t in (u, x, y):
            for s in (a, b):
                tables[((t,), (s,))] = {src.eos_id: 1.0}
        return TabularModel(tgt, src, tables, identity_tag=tag)

    bwd = bwd_model(f"fam{idx}-bwd", 0.5, rng.uniform(0.9, 0.98), rng.uniform(0.9, 0.98))
    eval_bwd = bwd_model(
        f"fam{idx}-eval-bwd",
        rng.uniform(0.55, 0.7),
        rng.uniform(0.85, 0.95),
        rng.uniform(0.85, 0.95),
    )
    corpus = (Sentence((a, src.eos_id)), Sentence((b, src.eos_id)))
    return CyclePairFixture(fwd, bwd, eval_bwd, corpus, collides)

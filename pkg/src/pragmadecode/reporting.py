"""Report and manifest writers: stable, delimited, reproducible.

Reports are tab-separated records with a fixed column order, preceded by
``#`` header comments.  Manifests are JSON with sorted keys; everything
except the ``timing`` block is deterministic for identical invocations.
"""

from __future__ import annotations

import json
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from .core import DecodeTrace, PragmaticsConfig, Sentence, UnknownToken, Vocabulary
from .evaluation import CollisionPair, CycleResult
from .oracle import OracleReport


def read_corpus(path: str | Path, vocab: Vocabulary) -> list[Sentence]:
    """One sentence per line, whitespace-tokenized surface forms."""
    sentences = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            sentences.append(Sentence.parse(line, vocab))
        except UnknownToken as exc:
            raise UnknownToken(f"{path}:{lineno}: {exc}") from None
    return sentences


def read_distractor_groups(
    path: str | Path, vocab: Vocabulary
) -> list[tuple[Sentence, list[Sentence]]]:
    """Distractor file: per line, a source sentence and its distractors, tab-separated.

    The returned group includes the source itself, so it can be used as
    the listener's hypothesis set directly.
    """
    groups = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cells = [c for c in line.split("\t") if c.strip()]
        if len(cells) < 2:
            raise ValueError(
                f"{path}:{lineno}: expected a source and at least one distractor, tab-separated"
            )
        try:
            source = Sentence.parse(cells[0], vocab)
            others = [Sentence.parse(c, vocab) for c in cells[1:]]
        except UnknownToken as exc:
            raise UnknownToken(f"{path}:{lineno}: {exc}") from None
        group = [source] + [s for s in others if s != source]
        groups.append((source, group))
    return groups


def write_sentences(sentences: Iterable[Sentence], vocab: Vocabulary, path: str | Path) -> None:
    lines = [s.text(vocab) for s in sentences]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


def trace_to_jsonable(trace: DecodeTrace, vocab: Vocabulary) -> dict:
    def tok(t: int) -> str:
        return vocab.surfaces[t]

    def lp(value: float | None):
        # Zero probability travels as null, matching the wire convention.
        return None if value is not None and value == float("-inf") else value

    return {
        "steps": [
            {
                "prefix": [tok(t) for t in step.prefix],
                "chosen": tok(step.chosen),
                "candidates": [
                    {
                        "token": tok(c.token),
                        "base_logprob": lp(c.base_logprob),
                        "continuation": None
                        if c.continuation is None
                        else [tok(t) for t in c.continuation],
                        "listener_logprob": lp(c.listener_logprob),
                        "combined": lp(c.combined),
                        "rollout_truncated": c.rollout_truncated,
                    }
                    for c in step.candidates
                ],
            }
            for step in trace.steps
        ]
    }


def write_traces(
    traces: Sequence[DecodeTrace], vocab: Vocabulary, path: str | Path
) -> None:
    """One JSON object per line, aligned with the input corpus order."""
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace_to_jsonable(trace, vocab), sort_keys=True))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Delimited reports
# ---------------------------------------------------------------------------


def _write_report(path: str | Path, comments: list[str], header: list[str], rows: list[list[str]]) -> None:
    lines = [f"# {c}" for c in comments]
    lines.append("\t".join(header))
    lines.extend("\t".join(row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_cycle_report(
    result: CycleResult,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    system_name: str,
    path: str | Path,
) -> None:
    rows = [
        [
            str(r.index),
            r.source.text(source_vocab),
            r.pivot.text(target_vocab),
            r.back_translation.text(source_vocab),
            f"{r.sentence_bleu:.6f}",
        ]
        for r in result.records
    ]
    _write_report(
        path,
        [
            "pragmadecode cycle report",
            f"system: {system_name}",
            f"corpus_bleu: {result.score:.6f}",
            "sentence_bleu is diagnostic only (add-one smoothed above order 1)",
        ],
        ["index", "source", "pivot", "back_translation", "sentence_bleu"],
        rows,
    )


def write_bleu_report(
    scores: Sequence[float],
    hyp_lines: Sequence[str],
    ref_lines: Sequence[str],
    corpus_score: float,
    path: str | Path,
) -> None:
    rows = [
        [str(i), hyp, ref, f"{score:.6f}"]
        for i, (hyp, ref, score) in enumerate(zip(hyp_lines, ref_lines, scores))
    ]
    _write_report(
        path,
        [
            "pragmadecode bleu report",
            f"corpus_bleu: {corpus_score:.6f}",
            "sentence_bleu is diagnostic only (add-one smoothed above order 1)",
        ],
        ["index", "hypothesis", "reference", "sentence_bleu"],
        rows,
    )


def write_survey_report(
    pairs: Sequence[CollisionPair],
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    path: str | Path,
) -> None:
    rows = []
    for i, pair in enumerate(pairs):
        (_, refwd_a), (_, refwd_b) = pair.evidence
        rows.append(
            [
                str(i),
                pair.source_a.text(source_vocab),
                pair.source_b.text(source_vocab),
                pair.pivot.text(target_vocab),
                refwd_a.text(target_vocab),
                refwd_b.text(target_vocab),
            ]
        )
    _write_report(
        path,
        ["pragmadecode many-to-one survey", f"collisions: {len(pairs)}"],
        ["index", "source_a", "source_b", "pivot", "refwd_a", "refwd_b"],
        rows,
    )


def write_oracle_report(report: OracleReport, path: str | Path) -> None:
    comments = [
        "pragmadecode oracle report",
        f"alpha: {report.alpha!r}",
        f"max_len: {report.max_len}",
    ]
    for s in report.sentences:
        comments.append(
            f"source {s.source_text}: global={s.global_argmax_text}"
            f" exact={s.exact_decode_text} approx={s.approx_decode_text}"
            f" global_vs_exact={'agree' if s.global_matches_exact else 'DISAGREE'}"
            f" exact_vs_approx={'agree' if s.exact_matches_approx else 'DISAGREE'}"
        )
    rows = [
        [
            s.source_text,
            str(step.index),
            step.prefix_text or ":",
            step.approx_choice,
            step.exact_choice,
            "yes" if step.agree else "no",
        ]
        for s in report.sentences
        for step in s.steps
    ]
    _write_report(
        path,
        comments,
        ["source", "step", "prefix", "approx_argmax", "exact_argmax", "agree"],
        rows,
    )


# ---------------------------------------------------------------------------
# Run manifests
# ---------------------------------------------------------------------------


def build_manifest(
    command: str,
    config: PragmaticsConfig,
    models: dict[str, str],
    inputs: dict[str, str],
    outputs: dict[str, str],
    outcomes: list[dict[str, Any]],
    started_utc: str,
    elapsed_seconds: float,
) -> dict:
    """Everything needed to reproduce a run; timing is isolated so that
    the rest of the manifest is byte-identical across identical runs."""
    snapshot = asdict(config) if is_dataclass(config) else dict(config)
    if "rollout" in snapshot:
        snapshot["rollout"] = str(getattr(snapshot["rollout"], "value", snapshot["rollout"]))
    return {
        "command": command,
        "config": snapshot,
        "models": models,
        "inputs": inputs,
        "outputs": outputs,
        "outcomes": outcomes,
        "timing": {"started_utc": started_utc, "elapsed_seconds": elapsed_seconds},
    }


def write_manifest(manifest: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

"""Matplotlib renderings of the delimited reports.

Each function mirrors one report writer and saves a single PNG next to
the report.  Rendering is headless (Agg) and deterministic.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import CollisionPair, CycleResult
from .oracle import OracleReport


def _finish(fig, path: str | Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cycle_figure(result: CycleResult, system_name: str, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    xs = [r.index for r in result.records]
    ax.bar(xs, [r.sentence_bleu for r in result.records], color="#4878cf")
    ax.axhline(result.score, color="#d65f5f", linestyle="--",
               label=f"corpus BLEU {result.score:.2f}")
    ax.set_xlabel("sentence index")
    ax.set_ylabel("sentence BLEU (diagnostic)")
    ax.set_ylim(0, 105)
    ax.set_title(f"cycle-consistency: {system_name}")
    ax.legend(loc="lower right")
    _finish(fig, path)


def bleu_figure(scores: Sequence[float], corpus_score: float, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(range(len(scores)), list(scores), color="#4878cf")
    ax.axhline(corpus_score, color="#d65f5f", linestyle="--",
               label=f"corpus BLEU {corpus_score:.2f}")
    ax.set_xlabel("sentence index")
    ax.set_ylabel("sentence BLEU (diagnostic)")
    ax.set_ylim(0, 105)
    ax.set_title("BLEU")
    ax.legend(loc="lower right")
    _finish(fig, path)


def survey_figure(pairs: Sequence[CollisionPair], pivot_texts: Sequence[str], path: str | Path) -> None:
    counts: dict[str, int] = {}
    for text in pivot_texts:
        counts[text] = counts.get(text, 0) + 1
    fig, ax = plt.subplots(figsize=(7, 3.5))
    if counts:
        labels = sorted(counts)
        ax.bar(range(len(labels)), [counts[k] for k in labels], color="#6acc65")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("colliding pairs")
    ax.set_title(f"many-to-one survey: {len(pairs)} pair(s)")
    _finish(fig, path)


def oracle_figure(report: OracleReport, path: str | Path) -> None:
    agree = sum(1 for s in report.sentences for st in s.steps if st.agree)
    disagree = sum(1 for s in report.sentences for st in s.steps if not st.agree)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar([0, 1], [agree, disagree], color=["#6acc65", "#d65f5f"])
    ax.set_xticks([0, 1])
    ax.set_xticklabels(["agree", "disagree"])
    ax.set_ylabel("decode steps")
    ax.set_title(f"greedy rollout vs exact marginal (alpha={report.alpha:g})")
    _finish(fig, path)

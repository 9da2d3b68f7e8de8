"""Command-line surface for batch translation, evaluation, and surveys.

Model arguments accept three spellings:

* ``path/to/model.tab``      a tabular model file
* ``stdio:<command line>``   a scoring server spawned as a subprocess
* ``tcp:host:port``          a scoring server reached over TCP

Exit codes are a stable contract: 0 success, 1 runtime or model failure,
2 usage error.  Every run writes a manifest sufficient to reproduce it;
identical invocations produce byte-identical outputs and manifests except
for the manifest's timing block.
"""

from __future__ import annotations

import argparse
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from . import adapter, figures, fixtures, reporting
from .core import PragmaticsConfig, PragmaticsError, Sentence
from .evaluation import (
    BleuConfig,
    SameBackTranslator,
    Translator,
    back_translator,
    bleu_corpus,
    cycle_consistency,
    s0_translator,
    s1_cip_translator,
    sentence_bleu_diagnostic,
    survey_many_to_one,
)
from .models import ConditionalSequenceModel, load_tabular
from .oracle import run_oracle
from .rsa import (
    CandidateSet,
    DistractorSet,
    decode_s1_cip,
    decode_s1_ip,
    greedy_decode,
    s1_cgp_rerank,
    s1_global,
)

MODES = ("s0", "s1-ip", "s1-gp", "s1-cgp", "s1-cip")


class UsageError(Exception):
    """Bad invocation; maps to exit code 2."""


class MissingDistractors(UsageError):
    """The selected mode needs a distractor file."""


class MissingBackwardModel(UsageError):
    """The selected mode needs a backward model."""


def resolve_model(spec: str, timeout_ms: int, tag: str | None) -> ConditionalSequenceModel:
    if spec.startswith("stdio:"):
        command = spec[len("stdio:"):]
        endpoint = adapter.ScorerEndpoint(
            "stdio-subprocess", command, timeout_ms, tag or command
        )
        return adapter.connect(endpoint)
    if spec.startswith("tcp:"):
        address = spec[len("tcp:"):]
        endpoint = adapter.ScorerEndpoint("tcp", address, timeout_ms, tag or address)
        return adapter.connect(endpoint)
    return load_tabular(spec, identity_tag=tag)


def _close_models(models: list[ConditionalSequenceModel]) -> None:
    for model in models:
        close = getattr(model, "close", None)
        if close is not None:
            close()


def _config(args: argparse.Namespace) -> PragmaticsConfig:
    try:
        return PragmaticsConfig(
            alpha=args.alpha,
            candidate_width_k=args.candidates,
            beam_width=args.beam,
            max_len=args.max_len,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _manifest_path(args: argparse.Namespace, primary_output: str | None) -> Path:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    if primary_output:
        return Path(str(primary_output) + ".manifest.json")
    return Path("run.manifest.json")


def _figure_path(args: argparse.Namespace) -> Path | None:
    if getattr(args, "no_figure", False):
        return None
    if getattr(args, "figure", None):
        return Path(args.figure)
    if getattr(args, "report", None):
        return Path(args.report).with_suffix(".png")
    return None


# ---------------------------------------------------------------------------
# translate
# ---------------------------------------------------------------------------


def cmd_translate(args: argparse.Namespace) -> int:
    config = _config(args)
    started = _now()
    t0 = time.perf_counter()
    models: list[ConditionalSequenceModel] = []
    try:
        if not args.fwd:
            raise UsageError("translate requires --fwd")
        fwd = resolve_model(args.fwd, args.timeout_ms, args.fwd_tag)
        models.append(fwd)
        bwd = None
        if args.mode in ("s1-cgp", "s1-cip"):
            if not args.bwd:
                raise MissingBackwardModel(f"mode {args.mode} requires --bwd")
            bwd = resolve_model(args.bwd, args.timeout_ms, args.bwd_tag)
            models.append(bwd)

        groups = None
        if args.mode in ("s1-ip", "s1-gp"):
            if not args.distractors:
                raise MissingDistractors(f"mode {args.mode} requires --distractors")
            groups = reporting.read_distractor_groups(args.distractors, fwd.source_vocab)
            corpus = [source for source, _ in groups]
        else:
            if not args.corpus:
                raise UsageError(f"mode {args.mode} requires --corpus")
            corpus = reporting.read_corpus(args.corpus, fwd.source_vocab)

        eos = fwd.target_vocab.eos_id
        outputs: list[Sentence] = []
        traces = []
        outcomes: list[dict[str, Any]] = []
        failed = False
        for i, source in enumerate(corpus):
            try:
                trace = None
                if args.mode == "s0":
                    out = greedy_decode(fwd.next_token_dist, source, config.max_len, eos)
                elif args.mode == "s1-ip":
                    distractors = DistractorSet(tuple(groups[i][1]))
                    out, trace = decode_s1_ip(fwd, distractors, source, config)
                elif args.mode == "s1-gp":
                    distractors = DistractorSet(tuple(groups[i][1]))
                    candidates = CandidateSet.from_beam(fwd, source, config)
                    out = s1_global(fwd, distractors, source, candidates, config.alpha).argmax()
                elif args.mode == "s1-cgp":
                    candidates = CandidateSet.from_beam(fwd, source, config)
                    out = s1_cgp_rerank(fwd, bwd, source, candidates, config.alpha)[0][0]
                else:
                    out, trace = decode_s1_cip(fwd, bwd, source, config)
                outputs.append(out)
                traces.append(trace)
                outcomes.append(
                    {"index": i, "status": "ok", "output": out.text(fwd.target_vocab)}
                )
            except PragmaticsError as exc:
                failed = True
                outcomes.append({"index": i, "status": "error", "error": str(exc)})
                print(f"error: line {i + 1}: {exc}", file=sys.stderr)

        output_paths: dict[str, str] = {}
        if not failed:
            lines = [s.text(fwd.target_vocab) for s in outputs]
            if args.out:
                Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
                output_paths["translations"] = str(args.out)
            else:
                for line in lines:
                    print(line)
            if args.trace:
                kept = [t for t in traces if t is not None]
                reporting.write_traces(kept, fwd.target_vocab, args.trace)
                output_paths["traces"] = str(args.trace)

        manifest_path = _manifest_path(args, args.out)
        manifest = reporting.build_manifest(
            command=f"translate --mode {args.mode}",
            config=config,
            models={"fwd": fwd.identity_tag, **({"bwd": bwd.identity_tag} if bwd else {})},
            inputs={
                k: str(v)
                for k, v in {
                    "corpus": args.corpus,
                    "distractors": args.distractors,
                }.items()
                if v
            },
            outputs=output_paths,
            outcomes=outcomes,
            started_utc=started,
            elapsed_seconds=round(time.perf_counter() - t0, 6),
        )
        reporting.write_manifest(manifest, manifest_path)
        return 1 if failed else 0
    finally:
        _close_models(models)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval_bleu(args: argparse.Namespace) -> int:
    started = _now()
    t0 = time.perf_counter()
    bleu_config = BleuConfig(max_order=args.max_order, case_sensitive=not args.lowercase)
    hyp_lines = Path(args.hyp).read_text(encoding="utf-8").splitlines()
    ref_lines = Path(args.ref).read_text(encoding="utf-8").splitlines()
    hyps = [line.split() for line in hyp_lines]
    refs = [line.split() for line in ref_lines]
    score = bleu_corpus(hyps, refs, bleu_config)
    print(f"corpus_bleu: {score:.6f}")
    outputs: dict[str, str] = {}
    if args.report:
        per_sentence = [
            sentence_bleu_diagnostic(h, r, bleu_config) for h, r in zip(hyps, refs)
        ]
        reporting.write_bleu_report(per_sentence, hyp_lines, ref_lines, score, args.report)
        outputs["report"] = str(args.report)
        figure = _figure_path(args)
        if figure:
            figures.bleu_figure(per_sentence, score, figure)
            outputs["figure"] = str(figure)
    manifest = reporting.build_manifest(
        command="eval bleu",
        config=PragmaticsConfig(),
        models={},
        inputs={"hyp": str(args.hyp), "ref": str(args.ref)},
        outputs=outputs,
        outcomes=[{"corpus_bleu": score}],
        started_utc=started,
        elapsed_seconds=round(time.perf_counter() - t0, 6),
    )
    reporting.write_manifest(manifest, _manifest_path(args, args.report))
    return 0


def _make_system(
    mode: str,
    fwd: ConditionalSequenceModel,
    bwd: ConditionalSequenceModel | None,
    groups: list[tuple[Sentence, list[Sentence]]] | None,
    config: PragmaticsConfig,
) -> Translator:
    if mode == "s0":
        return s0_translator(fwd, config)
    if mode == "s1-cip":
        return s1_cip_translator(fwd, bwd, config)
    if mode == "s1-cgp":

        def cgp(sentence: Sentence) -> Sentence:
            candidates = CandidateSet.from_beam(fwd, sentence, config)
            return s1_cgp_rerank(fwd, bwd, sentence, candidates, config.alpha)[0][0]

        return Translator(
            name="s1-cgp",
            source_vocab=fwd.source_vocab,
            target_vocab=fwd.target_vocab,
            identity_tags=frozenset({fwd.identity_tag, bwd.identity_tag}),
            fn=cgp,
        )
    by_source = {source: DistractorSet(tuple(group)) for source, group in groups}

    def lookup(sentence: Sentence) -> DistractorSet:
        try:
            return by_source[sentence]
        except KeyError:
            raise PragmaticsError(
                "sentence has no distractor group in the distractor file"
            ) from None

    if mode == "s1-ip":

        def ip(sentence: Sentence) -> Sentence:
            return decode_s1_ip(fwd, lookup(sentence), sentence, config)[0]

        fn = ip
    else:

        def gp(sentence: Sentence) -> Sentence:
            candidates = CandidateSet.from_beam(fwd, sentence, config)
            return s1_global(fwd, lookup(sentence), sentence, candidates, config.alpha).argmax()

        fn = gp
    return Translator(
        name=mode,
        source_vocab=fwd.source_vocab,
        target_vocab=fwd.target_vocab,
        identity_tags=frozenset({fwd.identity_tag}),
        fn=fn,
    )


def cmd_eval_cycle(args: argparse.Namespace) -> int:
    config = _config(args)
    started = _now()
    t0 = time.perf_counter()
    models: list[ConditionalSequenceModel] = []
    try:
        if not args.fwd or not args.cycle_bwd:
            raise UsageError("cycle evaluation requires --fwd and --cycle-bwd")
        fwd = resolve_model(args.fwd, args.timeout_ms, args.fwd_tag)
        models.append(fwd)
        bwd = None
        if args.mode in ("s1-cgp", "s1-cip"):
            if not args.bwd:
                raise MissingBackwardModel(f"mode {args.mode} requires --bwd")
            bwd = resolve_model(args.bwd, args.timeout_ms, args.bwd_tag)
            models.append(bwd)
        groups = None
        if args.mode in ("s1-ip", "s1-gp"):
            if not args.distractors:
                raise MissingDistractors(f"mode {args.mode} requires --distractors")
            groups = reporting.read_distractor_groups(args.distractors, fwd.source_vocab)
            corpus = [source for source, _ in groups]
        else:
            if not args.corpus:
                raise UsageError("cycle evaluation requires --corpus")
            corpus = reporting.read_corpus(args.corpus, fwd.source_vocab)

        cycle_model = resolve_model(args.cycle_bwd, args.timeout_ms, args.cycle_bwd_tag)
        models.append(cycle_model)
        independent = back_translator(cycle_model, config)
        system = _make_system(args.mode, fwd, bwd, groups, config)
        result = cycle_consistency(system, independent, corpus)
        print(f"cycle_bleu: {result.score:.6f}")

        outputs: dict[str, str] = {}
        if args.report:
            reporting.write_cycle_report(
                result, fwd.source_vocab, fwd.target_vocab, system.name, args.report
            )
            outputs["report"] = str(args.report)
            figure = _figure_path(args)
            if figure:
                figures.cycle_figure(result, system.name, figure)
                outputs["figure"] = str(figure)
        manifest = reporting.build_manifest(
            command=f"eval cycle --mode {args.mode}",
            config=config,
            models={
                "fwd": fwd.identity_tag,
                **({"bwd": bwd.identity_tag} if bwd else {}),
                "cycle_bwd": cycle_model.identity_tag,
            },
            inputs={
                k: str(v)
                for k, v in {
                    "corpus": args.corpus,
                    "distractors": args.distractors,
                }.items()
                if v
            },
            outputs=outputs,
            outcomes=[
                {
                    "index": r.index,
                    "back_translation": r.back_translation.text(fwd.source_vocab),
                    "pivot": r.pivot.text(fwd.target_vocab),
                    "sentence_bleu": r.sentence_bleu,
                }
                for r in result.records
            ],
            started_utc=started,
            elapsed_seconds=round(time.perf_counter() - t0, 6),
        )
        reporting.write_manifest(manifest, _manifest_path(args, args.report))
        return 0
    finally:
        _close_models(models)


# ---------------------------------------------------------------------------
# survey
# ---------------------------------------------------------------------------


def cmd_survey(args: argparse.Namespace) -> int:
    config = _config(args)
    started = _now()
    t0 = time.perf_counter()
    models: list[ConditionalSequenceModel] = []
    try:
        if not args.fwd or not args.bwd:
            raise UsageError("survey requires --fwd and --bwd")
        fwd = resolve_model(args.fwd, args.timeout_ms, args.fwd_tag)
        bwd = resolve_model(args.bwd, args.timeout_ms, args.bwd_tag)
        models.extend([fwd, bwd])
        corpus = reporting.read_corpus(args.corpus, fwd.source_vocab)
        pairs = survey_many_to_one(fwd, bwd, corpus, n_back=args.n_back, config=config)
        print(f"collisions: {len(pairs)}")

        outputs: dict[str, str] = {}
        if args.report:
            reporting.write_survey_report(pairs, fwd.source_vocab, fwd.target_vocab, args.report)
            outputs["report"] = str(args.report)
            figure = _figure_path(args)
            if figure:
                figures.survey_figure(
                    pairs, [p.pivot.text(fwd.target_vocab) for p in pairs], figure
                )
                outputs["figure"] = str(figure)
        manifest = reporting.build_manifest(
            command="survey",
            config=config,
            models={"fwd": fwd.identity_tag, "bwd": bwd.identity_tag},
            inputs={"corpus": str(args.corpus), "n_back": str(args.n_back)},
            outputs=outputs,
            outcomes=[
                {
                    "index": i,
                    "source_a": p.source_a.text(fwd.source_vocab),
                    "source_b": p.source_b.text(fwd.source_vocab),
                    "pivot": p.pivot.text(fwd.target_vocab),
                }
                for i, p in enumerate(pairs)
            ],
            started_utc=started,
            elapsed_seconds=round(time.perf_counter() - t0, 6),
        )
        reporting.write_manifest(manifest, _manifest_path(args, args.report))
        return 0
    finally:
        _close_models(models)


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def cmd_oracle(args: argparse.Namespace) -> int:
    started = _now()
    t0 = time.perf_counter()
    models: list[ConditionalSequenceModel] = []
    try:
        if args.fixture:
            if args.fixture == "ambig1":
                fwd, bwd = fixtures.ambig1_forward(), fixtures.ambig1_backward()
            else:
                fwd, bwd = fixtures.chain1_forward(), fixtures.chain1_backward()
        else:
            if not args.fwd or not args.bwd:
                raise UsageError("oracle needs --fixture or both --fwd and --bwd")
            fwd = resolve_model(args.fwd, args.timeout_ms, args.fwd_tag)
            bwd = resolve_model(args.bwd, args.timeout_ms, args.bwd_tag)
            models.extend([fwd, bwd])
        report = run_oracle(fwd, bwd, alpha=args.alpha, max_len=args.max_len)
        total = sum(len(s.steps) for s in report.sentences)
        agree = sum(1 for s in report.sentences for st in s.steps if st.agree)
        for s in report.sentences:
            print(
                f"source {s.source_text}: global={s.global_argmax_text!r}"
                f" exact={s.exact_decode_text!r} approx={s.approx_decode_text!r}"
                f" global_vs_exact={'agree' if s.global_matches_exact else 'DISAGREE'}"
                f" exact_vs_approx={'agree' if s.exact_matches_approx else 'DISAGREE'}"
            )
        print(f"steps_agreeing: {agree}/{total}")

        outputs: dict[str, str] = {}
        if args.report:
            reporting.write_oracle_report(report, args.report)
            outputs["report"] = str(args.report)
            figure = _figure_path(args)
            if figure:
                figures.oracle_figure(report, figure)
                outputs["figure"] = str(figure)
        manifest = reporting.build_manifest(
            command="oracle",
            config=PragmaticsConfig(alpha=args.alpha, max_len=args.max_len),
            models={"fwd": fwd.identity_tag, "bwd": bwd.identity_tag},
            inputs={"fixture": str(args.fixture)} if args.fixture else {},
            outputs=outputs,
            outcomes=[
                {
                    "source": s.source_text,
                    "global_vs_exact": s.global_matches_exact,
                    "exact_vs_approx": s.exact_matches_approx,
                }
                for s in report.sentences
            ],
            started_utc=started,
            elapsed_seconds=round(time.perf_counter() - t0, 6),
        )
        reporting.write_manifest(manifest, _manifest_path(args, args.report))
        return 0
    finally:
        _close_models(models)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_config_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--alpha", type=float, default=0.1, help="rationality weight")
    sp.add_argument("--candidates", type=int, default=2,
                    help="next-word candidates per cycle-consistent step")
    sp.add_argument("--beam", type=int, default=1, help="base-model beam width")
    sp.add_argument("--max-len", type=int, default=64, help="decoded length cap (EOS included)")


def _add_model_flags(sp: argparse.ArgumentParser, *names: str) -> None:
    for name in names:
        sp.add_argument(f"--{name}", help=f"{name} model: file path, stdio:CMD, or tcp:HOST:PORT")
        sp.add_argument(f"--{name}-tag", help=f"identity tag override for --{name}")
    sp.add_argument("--timeout-ms", type=int, default=10000, help="remote scoring timeout")


def _add_report_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--report", help="write a per-record TSV report here")
    sp.add_argument("--figure", help="figure path (default: report path with .png)")
    sp.add_argument("--no-figure", action="store_true", help="skip figure rendering")
    sp.add_argument("--manifest", help="manifest path (default: derived from outputs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pragmadecode",
        description="Pragmatic decoding, cycle-consistency evaluation, and collision surveys",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("translate", help="translate a corpus with a chosen decoder")
    tr.add_argument("--mode", choices=MODES, required=True)
    _add_model_flags(tr, "fwd", "bwd")
    tr.add_argument("--corpus", help="source corpus, one sentence per line")
    tr.add_argument("--distractors",
                    help="per-line: source TAB distractor [TAB distractor ...]")
    tr.add_argument("--out", help="write translations here (default: stdout)")
    tr.add_argument("--trace", help="write per-sentence decode traces (JSON lines)")
    tr.add_argument("--manifest", help="manifest path (default: derived from outputs)")
    _add_config_flags(tr)
    tr.set_defaults(func=cmd_translate)

    ev = sub.add_parser("eval", help="score translations")
    ev_sub = ev.add_subparsers(dest="kind", required=True)

    bl = ev_sub.add_parser("bleu", help="corpus BLEU of a hypothesis file against a reference file")
    bl.add_argument("--hyp", required=True)
    bl.add_argument("--ref", required=True)
    bl.add_argument("--max-order", type=int, default=4)
    bl.add_argument("--lowercase", action="store_true")
    _add_report_flags(bl)
    bl.set_defaults(func=cmd_eval_bleu)

    cy = ev_sub.add_parser("cycle", help="round-trip BLEU through an independent back-translator")
    cy.add_argument("--mode", choices=MODES, required=True)
    _add_model_flags(cy, "fwd", "bwd", "cycle-bwd")
    cy.add_argument("--corpus")
    cy.add_argument("--distractors")
    _add_config_flags(cy)
    _add_report_flags(cy)
    cy.set_defaults(func=cmd_eval_cycle)

    sv = sub.add_parser("survey", help="find many-to-one collisions on a corpus")
    _add_model_flags(sv, "fwd", "bwd")
    sv.add_argument("--corpus", required=True)
    sv.add_argument("--n-back", type=int, default=2,
                    help="back-translations considered per pivot")
    _add_config_flags(sv)
    _add_report_flags(sv)
    sv.set_defaults(func=cmd_survey)

    orc = sub.add_parser("oracle", help="exact-vs-approximate agreement report")
    orc.add_argument("--fixture", choices=("ambig1", "chain1"))
    _add_model_flags(orc, "fwd", "bwd")
    orc.add_argument("--alpha", type=float, default=1.0)
    orc.add_argument("--max-len", type=int, default=4)
    _add_report_flags(orc)
    orc.set_defaults(func=cmd_oracle)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SameBackTranslator as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PragmaticsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end command-line behavior: modes, reports, exit codes, manifests."""

import json
from pathlib import Path

import pytest

from pragmadecode.cli import main
from pragmadecode.fixtures import data_path

FWD = str(data_path("ambig1_fwd.tab"))
BWD = str(data_path("ambig1_bwd.tab"))
CHAIN_FWD = str(data_path("chain1_fwd.tab"))
CHAIN_BWD = str(data_path("chain1_bwd.tab"))


@pytest.fixture
def corpus(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("A\nB\n", encoding="utf-8")
    return str(path)


@pytest.fixture
def distractors(tmp_path):
    path = tmp_path / "distractors.tsv"
    path.write_text("A\tB\nB\tA\n", encoding="utf-8")
    return str(path)


def run(argv):
    return main(argv)


class TestTranslate:
    def test_s0_collides(self, corpus, tmp_path, capsys):
        assert run(["translate", "--mode", "s0", "--fwd", FWD, "--corpus", corpus,
                    "--manifest", str(tmp_path / "m.json")]) == 0
        assert capsys.readouterr().out.splitlines() == ["u", "u"]

    def test_s1_cip_separates(self, corpus, tmp_path, capsys):
        assert run(["translate", "--mode", "s1-cip", "--fwd", FWD, "--bwd", BWD,
                    "--corpus", corpus, "--alpha", "1", "--max-len", "2",
                    "--manifest", str(tmp_path / "m.json")]) == 0
        assert capsys.readouterr().out.splitlines() == ["x", "y"]

    def test_s1_ip_with_distractor_file(self, distractors, tmp_path, capsys):
        assert run(["translate", "--mode", "s1-ip", "--fwd", FWD,
                    "--distractors", distractors, "--alpha", "1",
                    "--manifest", str(tmp_path / "m.json")]) == 0
        assert capsys.readouterr().out.splitlines() == ["x", "y"]

    def test_s1_gp_with_beam_candidates(self, distractors, tmp_path, capsys):
        assert run(["translate", "--mode", "s1-gp", "--fwd", FWD,
                    "--distractors", distractors, "--alpha", "1", "--beam", "3",
                    "--max-len", "2", "--manifest", str(tmp_path / "m.json")]) == 0
        assert capsys.readouterr().out.splitlines() == ["x", "y"]

    def test_s1_cgp_reranks_beam(self, corpus, tmp_path, capsys):
        assert run(["translate", "--mode", "s1-cgp", "--fwd", FWD, "--bwd", BWD,
                    "--corpus", corpus, "--alpha", "1", "--beam", "3",
                    "--max-len", "2", "--manifest", str(tmp_path / "m.json")]) == 0
        assert capsys.readouterr().out.splitlines() == ["x", "y"]

    def test_missing_distractors_is_usage_error(self, corpus, capsys):
        assert run(["translate", "--mode", "s1-ip", "--fwd", FWD, "--corpus", corpus]) == 2
        assert "distractors" in capsys.readouterr().err

    def test_missing_backward_model_is_usage_error(self, corpus, capsys):
        assert run(["translate", "--mode", "s1-cip", "--fwd", FWD, "--corpus", corpus]) == 2
        assert "bwd" in capsys.readouterr().err

    def test_out_and_trace_files(self, corpus, tmp_path):
        out = tmp_path / "out.txt"
        trace = tmp_path / "trace.jsonl"
        assert run(["translate", "--mode", "s1-cip", "--fwd", FWD, "--bwd", BWD,
                    "--corpus", corpus, "--alpha", "1", "--max-len", "2",
                    "--out", str(out), "--trace", str(trace)]) == 0
        assert out.read_text(encoding="utf-8") == "x\ny\n"
        records = [json.loads(line) for line in trace.read_text(encoding="utf-8").splitlines()]
        assert len(records) == 2
        step0 = records[0]["steps"][0]
        assert step0["chosen"] == "x"
        assert {c["token"] for c in step0["candidates"]} == {"u", "x"}

    def test_manifest_written_and_deterministic(self, corpus, tmp_path):
        out = tmp_path / "out.txt"
        manifests = []
        for name in ("m1.json", "m2.json"):
            path = tmp_path / name
            assert run(["translate", "--mode", "s1-cip", "--fwd", FWD, "--bwd", BWD,
                        "--corpus", corpus, "--alpha", "1", "--max-len", "2",
                        "--out", str(out), "--manifest", str(path)]) == 0
            manifests.append(json.loads(path.read_text(encoding="utf-8")))
        for manifest in manifests:
            assert manifest.pop("timing")
        assert manifests[0] == manifests[1]
        assert manifests[0]["models"] == {"fwd": "ambig1_fwd", "bwd": "ambig1_bwd"}
        assert [o["status"] for o in manifests[0]["outcomes"]] == ["ok", "ok"]

    def test_unknown_corpus_token_is_runtime_error(self, tmp_path, capsys):
        corpus = tmp_path / "bad.txt"
        corpus.write_text("A\nZZZ\n", encoding="utf-8")
        assert run(["translate", "--mode", "s0", "--fwd", FWD, "--corpus", str(corpus),
                    "--manifest", str(tmp_path / "m.json")]) == 1


class TestEvalBleu:
    def test_identity_scores_100(self, tmp_path, capsys):
        hyp = tmp_path / "hyp.txt"
        ref = tmp_path / "ref.txt"
        hyp.write_text("a b c d\n", encoding="utf-8")
        ref.write_text("a b c d\n", encoding="utf-8")
        assert run(["eval", "bleu", "--hyp", str(hyp), "--ref", str(ref),
                    "--manifest", str(tmp_path / "m.json")]) == 0
        assert "corpus_bleu: 100.000000" in capsys.readouterr().out

    def test_report_and_figure_rendered(self, tmp_path, capsys):
        hyp = tmp_path / "hyp.txt"
        ref = tmp_path / "ref.txt"
        hyp.write_text("a b c\na b\n", encoding="utf-8")
        ref.write_text("a b c d\na b\n", encoding="utf-8")
        report = tmp_path / "bleu.tsv"
        assert run(["eval", "bleu", "--hyp", str(hyp), "--ref", str(ref),
                    "--report", str(report), "--manifest", str(tmp_path / "m.json")]) == 0
        lines = report.read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("# pragmadecode bleu report")
        header_idx = next(i for i, l in enumerate(lines) if not l.startswith("#"))
        assert lines[header_idx].split("\t") == ["index", "hypothesis", "reference", "sentence_bleu"]
        figure = report.with_suffix(".png")
        assert figure.is_file() and figure.stat().st_size > 0


class TestEvalCycle:
    def test_s0_vs_s1_cip_scores(self, corpus, tmp_path, capsys):
        args = ["eval", "cycle", "--fwd", FWD, "--corpus", corpus,
                "--cycle-bwd", BWD, "--cycle-bwd-tag", "external-bwd",
                "--max-len", "2", "--manifest", str(tmp_path / "m.json")]
        assert run(args + ["--mode", "s0"]) == 0
        s0_score = float(capsys.readouterr().out.split("cycle_bleu:")[1])
        assert run(args + ["--mode", "s1-cip", "--bwd", BWD, "--alpha", "1"]) == 0
        cip_score = float(capsys.readouterr().out.split("cycle_bleu:")[1])
        assert cip_score >= s0_score
        assert cip_score == pytest.approx(100.0)
        assert s0_score == pytest.approx(50.0)

    def test_same_tag_rejected_with_exit_2(self, corpus, tmp_path, capsys):
        assert run(["eval", "cycle", "--mode", "s1-cip", "--fwd", FWD, "--bwd", BWD,
                    "--corpus", corpus, "--cycle-bwd", BWD,
                    "--alpha", "1", "--max-len", "2",
                    "--manifest", str(tmp_path / "m.json")]) == 2
        assert "identity tags" in capsys.readouterr().err

    def test_report_and_figure(self, corpus, tmp_path, capsys):
        report = tmp_path / "cycle.tsv"
        assert run(["eval", "cycle", "--mode", "s1-cip", "--fwd", FWD, "--bwd", BWD,
                    "--corpus", corpus, "--cycle-bwd", BWD, "--cycle-bwd-tag", "ext",
                    "--alpha", "1", "--max-len", "2", "--report", str(report),
                    "--manifest", str(tmp_path / "m.json")]) == 0
        text = report.read_text(encoding="utf-8")
        assert "corpus_bleu: 100.000000" in text
        rows = [l.split("\t") for l in text.splitlines() if l and not l.startswith("#")]
        assert rows[0] == ["index", "source", "pivot", "back_translation", "sentence_bleu"]
        assert rows[1][:4] == ["0", "A", "x", "A"]
        assert rows[2][:4] == ["1", "B", "y", "B"]
        assert report.with_suffix(".png").is_file()


class TestSurvey:
    def test_ambig1_reports_one_collision(self, corpus, tmp_path, capsys):
        report = tmp_path / "survey.tsv"
        assert run(["survey", "--fwd", FWD, "--bwd", BWD, "--corpus", corpus,
                    "--n-back", "2", "--max-len", "2", "--report", str(report),
                    "--manifest", str(tmp_path / "m.json")]) == 0
        assert "collisions: 1" in capsys.readouterr().out
        rows = [l.split("\t") for l in report.read_text(encoding="utf-8").splitlines()
                if l and not l.startswith("#")]
        assert rows[1] == ["0", "A", "B", "u", "u", "u"]
        assert report.with_suffix(".png").is_file()

    def test_n_back_one_reports_zero(self, corpus, tmp_path, capsys):
        assert run(["survey", "--fwd", FWD, "--bwd", BWD, "--corpus", corpus,
                    "--n-back", "1", "--max-len", "2",
                    "--manifest", str(tmp_path / "m.json")]) == 0
        assert "collisions: 0" in capsys.readouterr().out


class TestOracle:
    def test_ambig1_full_agreement(self, tmp_path, capsys):
        assert run(["oracle", "--fixture", "ambig1", "--alpha", "1", "--max-len", "2",
                    "--manifest", str(tmp_path / "m.json")]) == 0
        out = capsys.readouterr().out
        assert "DISAGREE" not in out
        assert "steps_agreeing: 4/4" in out

    def test_chain1_reports_disagreement(self, tmp_path, capsys):
        report = tmp_path / "oracle.tsv"
        assert run(["oracle", "--fixture", "chain1", "--alpha", "1", "--max-len", "3",
                    "--report", str(report), "--manifest", str(tmp_path / "m.json")]) == 0
        out = capsys.readouterr().out
        assert "exact_vs_approx=DISAGREE" in out
        assert "global_vs_exact=agree" in out
        text = report.read_text(encoding="utf-8")
        assert "\tno" in text
        assert report.with_suffix(".png").is_file()

    def test_alpha0_steps_fully_agree_on_chain1(self, tmp_path, capsys):
        # At alpha=0 both incremental routes collapse to base greedy, so
        # every step agrees.  The global argmax (most probable complete
        # sentence) may still differ from a greedy decode; that gap is
        # inherent to greedy search, not to the rollout approximation.
        assert run(["oracle", "--fixture", "chain1", "--alpha", "0", "--max-len", "3",
                    "--manifest", str(tmp_path / "m.json")]) == 0
        out = capsys.readouterr().out
        assert "exact_vs_approx=agree" in out
        assert "steps_agreeing: 2/2" in out


class TestDeterminism:
    def test_identical_invocations_byte_identical(self, corpus, tmp_path):
        outs = []
        for i in (1, 2):
            out = tmp_path / f"out{i}.txt"
            report = tmp_path / f"cycle{i}.tsv"
            assert run(["translate", "--mode", "s1-cip", "--fwd", FWD, "--bwd", BWD,
                        "--corpus", corpus, "--alpha", "1", "--max-len", "2",
                        "--out", str(out), "--manifest", str(tmp_path / f"m{i}.json")]) == 0
            assert run(["eval", "cycle", "--mode", "s0", "--fwd", FWD, "--corpus", corpus,
                        "--cycle-bwd", BWD, "--cycle-bwd-tag", "ext", "--max-len", "2",
                        "--report", str(report), "--no-figure",
                        "--manifest", str(tmp_path / f"cm{i}.json")]) == 0
            outs.append((out.read_bytes(), report.read_bytes()))
        assert outs[0] == outs[1]

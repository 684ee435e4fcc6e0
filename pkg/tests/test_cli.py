import json

import pytest

from analogybench import cli
from analogybench.datasets import save_dataset
from analogybench.gateway import ENV_API_BASE, ENV_API_KEY


@pytest.fixture
def fixture_dir(tmp_path):
    out = tmp_path / "fixtures"
    assert cli.main(["fixtures", "--out", str(out)]) == 0
    return out


@pytest.fixture
def toy_dataset_path(tmp_path, toy_dataset):
    path = tmp_path / "toy.jsonl"
    save_dataset(toy_dataset, path)
    return path


def _generate(tmp_path, toy_dataset_path, out_name="run", extra=()):
    out = tmp_path / out_name
    code = cli.main(
        [
            "generate",
            "--dataset", str(toy_dataset_path),
            "--setting", "no_src",
            "--preset", "tl",
            "--models", "mock-model",
            "--backend", "mock",
            "--cache", str(tmp_path / "cache"),
            "--out", str(out),
            *extra,
        ]
    )
    return code, out


class TestGenerate:
    def test_writes_manifest_and_generations(self, tmp_path, toy_dataset_path):
        code, out = _generate(tmp_path, toy_dataset_path)
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["planned_records"] == 25
        assert manifest["setting"] == "no_src"
        assert manifest["dataset_sha256"]
        lines = (out / "generations.jsonl").read_text().strip().split("\n")
        assert len(lines) == 25

    def test_dry_run_writes_manifest_only(self, tmp_path, toy_dataset_path, capsys):
        code, out = _generate(tmp_path, toy_dataset_path, "dry", ["--dry-run"])
        assert code == 0
        assert (out / "manifest.json").exists()
        assert not (out / "generations.jsonl").exists()
        assert "planned 25" in capsys.readouterr().out

    def test_prompt_subset(self, tmp_path, toy_dataset_path):
        code, out = _generate(tmp_path, toy_dataset_path, "subset", ["--prompts", "P3,P5"])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["prompt_ids"] == ["NO_SRC.P3", "NO_SRC.P5"]
        assert manifest["planned_records"] == 10

    def test_unknown_prompt_id(self, tmp_path, toy_dataset_path, capsys):
        code, _ = _generate(tmp_path, toy_dataset_path, "bad", ["--prompts", "P9"])
        assert code == 1
        assert capsys.readouterr().err.startswith("E_USAGE")

    def test_http_backend_without_credentials(self, tmp_path, toy_dataset_path, monkeypatch, capsys):
        monkeypatch.delenv(ENV_API_BASE, raising=False)
        monkeypatch.delenv(ENV_API_KEY, raising=False)
        code, _ = _generate(tmp_path, toy_dataset_path, "live", ["--backend", "http"])
        assert code == 1
        assert capsys.readouterr().err.startswith("E_AUTH")

    def test_missing_required_flag(self, tmp_path, capsys):
        code = cli.main(["generate", "--setting", "no_src", "--out", str(tmp_path / "x")])
        assert code == 1
        assert "E_USAGE" in capsys.readouterr().err

    def test_rerun_from_cache_is_byte_identical(self, tmp_path, toy_dataset_path):
        code, out1 = _generate(tmp_path, toy_dataset_path, "r1")
        assert code == 0
        code, out2 = _generate(tmp_path, toy_dataset_path, "r2")
        assert code == 0
        assert (out1 / "generations.jsonl").read_bytes() == (out2 / "generations.jsonl").read_bytes()

    def test_config_file_provides_defaults(self, tmp_path, toy_dataset_path):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({
            "dataset": str(toy_dataset_path),
            "setting": "no_src",
            "preset": "tl",
            "models": "mock-model",
            "backend": "mock",
            "out": str(tmp_path / "from_config"),
        }), encoding="utf-8")
        assert cli.main(["generate", "--config", str(config), "--dry-run"]) == 0
        assert (tmp_path / "from_config" / "manifest.json").exists()

    def test_toml_config(self, tmp_path, toy_dataset_path):
        config = tmp_path / "run.toml"
        config.write_text(
            f'dataset = "{toy_dataset_path}"\nsetting = "no_src"\n'
            f'out = "{tmp_path / "from_toml"}"\n',
            encoding="utf-8",
        )
        assert cli.main(["generate", "--config", str(config), "--dry-run"]) == 0


class TestScoreAndDownstream:
    @pytest.fixture
    def scored(self, tmp_path, toy_dataset_path):
        _, out = _generate(tmp_path, toy_dataset_path)
        scores = out / "scores.csv"
        code = cli.main(
            [
                "score",
                "--dataset", str(toy_dataset_path),
                "--generations", str(out / "generations.jsonl"),
                "--metrics", "rouge_l,meteor",
                "--ref-modes", "matched,random",
                "--seed", "3",
                "--out", str(scores),
            ]
        )
        assert code == 0
        return scores

    def test_score_output_loads(self, scored):
        text = scored.read_text()
        assert text.startswith("concept_id,prompt_id,preset")
        assert "rouge_l" in text and "meteor" in text

    def test_sanity_on_packaged_fixture(self, fixture_dir, capsys):
        code = cli.main(
            ["sanity", "--scores", str(fixture_dir / "sanity_scores.csv"),
             "--metric", "external:bleurt"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "OT [external:bleurt]: PASS" in out
        assert "RPT [external:bleurt]: PASS" in out

    def test_sanity_json_report(self, fixture_dir, tmp_path):
        report_path = tmp_path / "sanity.json"
        code = cli.main(
            ["sanity", "--scores", str(fixture_dir / "sanity_scores.csv"),
             "--metric", "external:bleurt", "--out", str(report_path)]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["ot"]["pass"] is True
        assert report["rpt"]["pass"] is True
        assert report["means"]["WSRC/matched"] == pytest.approx(0.515)

    def test_sanity_single_setting_skips_ot(self, scored, capsys):
        code = cli.main(["sanity", "--scores", str(scored), "--metric", "rouge_l"])
        assert code == 0
        out = capsys.readouterr().out
        assert "OT [rouge_l]: SKIPPED" in out
        assert "RPT [rouge_l]:" in out

    def test_compare(self, scored, tmp_path, capsys):
        out_dir = tmp_path / "cmp"
        code = cli.main(
            ["compare", "--scores", str(scored), "--metrics", "rouge_l,meteor",
             "--out", str(out_dir), "--trace"]
        )
        assert code == 0
        assert (out_dir / "comparison.csv").exists()
        assert (out_dir / "comparison.json").exists()
        assert (out_dir / "comparison_trace.json").exists()

    def test_report_tau_all_formats(self, scored, tmp_path):
        out_dir = tmp_path / "rep"
        code = cli.main(
            ["report", "--scores", str(scored), "--kind", "tau", "--metric", "rouge_l",
             "--formats", "csv,json,svg", "--out", str(out_dir)]
        )
        assert code == 0
        for suffix in ("csv", "json", "svg"):
            assert (out_dir / f"tau.{suffix}").exists()

    def test_report_lengths(self, tmp_path, toy_dataset_path):
        _, out = _generate(tmp_path, toy_dataset_path, "lenrun")
        out_dir = tmp_path / "lenrep"
        code = cli.main(
            ["report", "--generations", str(out / "generations.jsonl"),
             "--kind", "lengths", "--out", str(out_dir)]
        )
        assert code == 0
        assert (out_dir / "lengths.csv").read_text().startswith("prompt_id,preset,mean_words,n")

    def test_report_model_size_needs_labels(self, scored, tmp_path, capsys):
        code = cli.main(
            ["report", "--scores", str(scored), "--kind", "model-size",
             "--metric", "rouge_l", "--out", str(tmp_path / "ms")]
        )
        assert code == 1
        assert "E_NO_SIZE_LABEL" in capsys.readouterr().err

    def test_report_model_size_with_labels(self, scored, tmp_path):
        out_dir = tmp_path / "ms"
        code = cli.main(
            ["report", "--scores", str(scored), "--kind", "model-size",
             "--metric", "rouge_l", "--sizes", "mock-model=1.3B",
             "--formats", "csv,json,svg", "--out", str(out_dir)]
        )
        assert code == 0
        assert (out_dir / "model_size.svg").exists()


class TestHumanEval:
    def test_aggregates_fixture(self, fixture_dir, tmp_path, capsys):
        out_dir = tmp_path / "he"
        code = cli.main(
            ["human-eval", "--annotations", str(fixture_dir / "toy_annotations.csv"),
             "--out", str(out_dir)]
        )
        assert code == 0
        report = json.loads((out_dir / "human_eval.json").read_text())
        assert report["items"] == 8
        assert report["percent_meaningful"]["davinci/no_src"] == 100.0
        assert report["percent_meaningful"]["ada/no_src"] == 0.0
        assert "no_src" in report["fleiss_kappa"]
        votes = (out_dir / "votes.csv").read_text()
        assert votes.startswith("analogy_id,model_id,setting,outcome")

    def test_malformed_verdict(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text(
            "analogy_id,worker_id,verdict,rationale\na1,w1,maybe,why\n", encoding="utf-8"
        )
        code = cli.main(["human-eval", "--annotations", str(path), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "E_SCHEMA" in capsys.readouterr().err


class TestTopLevel:
    def test_error_lines_are_machine_parsable(self, tmp_path, capsys):
        code = cli.main(["score", "--dataset", str(tmp_path / "missing.jsonl"),
                         "--generations", "x", "--out", str(tmp_path / "s.csv")])
        assert code == 1
        err = capsys.readouterr().err.strip()
        assert len(err.splitlines()) == 1
        assert err.split(":")[0] in {"E_IO", "E_USAGE"}

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["--version"])
        assert excinfo.value.code == 0

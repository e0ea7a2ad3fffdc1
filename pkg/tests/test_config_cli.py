from __future__ import annotations

import json

import pytest

from kgverify.bench import LabeledTriple, read_testset, write_testset
from kgverify.cli import EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, main
from kgverify.config import ConfigError, RunConfig, config_from_mapping, load_config
from kgverify.fixtures import ELON_CEO_TESLA, KEMP_PARENT_GLIRICIDIA, fixture_config, fixture_dir


@pytest.fixture
def cfg_file(tmp_path):
    d = fixture_config().as_dict()
    d.update(out_dir=str(tmp_path / "runs"), cache=str(tmp_path / "graph.kgcache"))
    p = tmp_path / "config.json"
    p.write_text(json.dumps(d))
    return p


class TestConfig:
    def test_defaults(self):
        c = RunConfig()
        assert (c.alpha, c.k_memory, c.t_max, c.concurrency, c.n, c.tau) == (0.5, 3, 10, 50, 1000, 50)
        assert len(c.checksum()) == 16 and c.checksum() == RunConfig().checksum()
        assert c.with_overrides({"seed": 1}).checksum() != c.checksum()

    def test_relative_paths_resolve_against_file(self):
        c = load_config(fixture_dir() / "config.yaml")
        assert c.triples == str((fixture_dir() / "triples.tsv").resolve())

    @pytest.mark.parametrize("bad", [{"alpha": 2}, {"mode": "x"}, {"ablate": ["brain"]}, {"bogus": 1},
                                     {"wiki": "offline"}, {"t_max": 0}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            config_from_mapping(bad)

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.yaml")
        (tmp_path / "list.yaml").write_text("- a\n- b\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(tmp_path / "list.yaml")
        assert load_config(None) == RunConfig()


class TestCli:
    def test_usage_errors_exit_1(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["verify"])
        assert e.value.code == EXIT_USAGE
        with pytest.raises(SystemExit) as e:
            main(["frobnicate"])
        assert e.value.code == EXIT_USAGE
        capsys.readouterr()
        assert main(["ingest"]) == EXIT_USAGE
        assert "no dataset configured" in capsys.readouterr().err

    def test_ingest_cache(self, cfg_file, capsys):
        assert main(["ingest", "--config", str(cfg_file)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "30 entities / 10 relations / 30 triples" in out and "cache: written" in out
        assert main(["ingest", "--config", str(cfg_file)]) == EXIT_OK
        assert "cache: hit" in capsys.readouterr().out

    def test_dataset_directory(self, tmp_path, capsys):
        cache = tmp_path / "fx.kgcache"
        assert main(["ingest", "--dataset", str(fixture_dir()), "--out", str(cache)]) == EXIT_OK
        assert cache.exists()
        assert main(["ingest", "--dataset", str(tmp_path / "nope")]) == EXIT_USAGE
        assert main(["verify", "--dataset", str(fixture_dir()), "--triple", "Q5|P31|Q5"]) == EXIT_USAGE
        assert "scripted llm needs a script file" in capsys.readouterr().err

    def test_sample_is_deterministic(self, cfg_file, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(["sample", "--config", str(cfg_file), "--out", str(a)]) == EXIT_OK
        assert main(["sample", "--config", str(cfg_file), "--out", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
        items, sums = read_testset(a)
        assert len(items) == 6 and sum(i.label for i in items) == 3 and len(sums) == 1
        side = json.loads((tmp_path / "a.jsonl.config.json").read_text())
        assert side["checksum"] in sums
        assert main(["sample", "--config", str(cfg_file), "--n", "99", "--out", str(a)]) == EXIT_USAGE

    def test_verify_single_triple(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "s.jsonl"
        code = main(["verify", "--config", str(cfg_file), "--triple", "Elon Musk|CEO|Tesla", "--out", str(out)])
        text = capsys.readouterr().out
        assert code == EXIT_OK
        assert "Verdict: Correct" in text and "[evidence 3]" in text
        assert main(["verify", "--config", str(cfg_file), "--triple", "only|two"]) == EXIT_USAGE

    def test_verify_and_report(self, cfg_file, tmp_path, capsys):
        ts = tmp_path / "hand.jsonl"
        write_testset(ts, [LabeledTriple(ELON_CEO_TESLA, True),
                           LabeledTriple(KEMP_PARENT_GLIRICIDIA, False, "corrupted-tail", KEMP_PARENT_GLIRICIDIA)])
        s1, s2 = tmp_path / "s1.jsonl", tmp_path / "s2.jsonl"
        assert main(["verify", "--config", str(cfg_file), "--input", str(ts), "--out", str(s1)]) == EXIT_OK
        capsys.readouterr()
        report = tmp_path / "report.json"
        assert main(["report", "--config", str(cfg_file), "--sessions", str(s1), "--testset", str(ts),
                     "--out", str(report)]) == EXIT_OK
        assert "100.0" in capsys.readouterr().out
        data = json.loads(report.read_text())
        assert data["metrics"]["accuracy"] == 1.0
        tools = {r["tool"]: r["count"] for r in data["stats"] if r["kind"] == "tool"}
        assert tools["KG_Path"] == 2

        assert main(["verify", "--config", str(cfg_file), "--seed", "99", "--input", str(ts), "--out", str(s2)]) == EXIT_OK
        assert main(["report", "--config", str(cfg_file), "--sessions", str(s1), str(s2), "--testset", str(ts)]) == EXIT_USAGE
        assert "mix config checksums" in capsys.readouterr().err
        assert main(["report", "--config", str(cfg_file), "--sessions", str(s1), str(s2), "--testset", str(ts),
                     "--force"]) == EXIT_OK

    def test_report_misaligned_and_empty(self, cfg_file, tmp_path, capsys):
        ts = tmp_path / "t.jsonl"
        write_testset(ts, [LabeledTriple(KEMP_PARENT_GLIRICIDIA, True), LabeledTriple(ELON_CEO_TESLA, True)])
        s = tmp_path / "s.jsonl"
        main(["verify", "--config", str(cfg_file), "--triple", "Elon Musk|CEO|Tesla", "--out", str(s)])
        assert main(["report", "--config", str(cfg_file), "--sessions", str(s), "--testset", str(ts)]) == EXIT_USAGE
        assert main(["report", "--config", str(cfg_file), "--sessions", str(s)]) == EXIT_USAGE
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        capsys.readouterr()
        assert main(["report", "--config", str(cfg_file), "--sessions", str(empty)]) == EXIT_OK
        assert "no sessions to report" in capsys.readouterr().out

    def test_partial_failures_exit_2(self, cfg_file, tmp_path):
        ts = tmp_path / "t.jsonl"
        assert main(["sample", "--config", str(cfg_file), "--out", str(ts)]) == EXIT_OK
        assert main(["verify", "--config", str(cfg_file), "--input", str(ts), "--out", str(tmp_path / "s.jsonl")]) == EXIT_PARTIAL

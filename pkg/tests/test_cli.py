import json

import pytest

from msg import TrainConfig
from msg.cli import EXIT_CONFIG, EXIT_DATA, EXIT_MISSING, EXIT_OK, EXIT_USAGE, build_parser, resolve_config, run
from msg.cli.fixtures import TASKS, make_fixture, word_inventory

SMALL = ["--emb-dim", "8", "--hidden", "6", "--dec-hidden", "8", "--attn-dim", "6", "--batch-size", "4",
         "--dropout", "0"]


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.setenv("MSG_DATA_ROOT", str(tmp_path))
    return tmp_path


def _fixture(workdir, name, task="copy", size=6, **kw):
    extra = [f"--{k}={v}" for k, v in kw.items()]
    assert run(["make-fixtures", "--task", task, "--size", str(size), "--out", name, *extra]) == EXIT_OK
    return workdir / name


class TestConfigResolution:
    def test_flag_overrides_file(self, tmp_path, capsys):
        path = tmp_path / "c.cfg"
        TrainConfig(hops=1, lr=0.2).save(path)
        args = build_parser().parse_args(["train", "--train", "x", "--out-dir", "o", "--config", str(path),
                                          "--hops", "3"])
        cfg = resolve_config(args)
        assert cfg.hops == 3 and cfg.lr == 0.2
        assert "hops = 3" in capsys.readouterr().err

    def test_boolean_flags(self):
        args = build_parser().parse_args(["train", "--train", "x", "--out-dir", "o", "--mar-unit", "off"])
        assert resolve_config(args).mar_unit is False

    def test_unknown_flag_rejected(self, capsys):
        assert run(["train", "--train", "x", "--out-dir", "o", "--hopz", "3"]) == EXIT_USAGE

    def test_invalid_value_is_config_error(self, workdir):
        _fixture(workdir, "t.jsonl")
        assert run(["train", "--train", "t.jsonl", "--out-dir", "o", "--lambda-mar", "2"]) == EXIT_CONFIG
        assert run(["train", "--train", "t.jsonl", "--out-dir", "o", "--hops", "three"]) == EXIT_CONFIG


class TestFixtures:
    @pytest.mark.parametrize("task", TASKS)
    def test_byte_reproducible(self, workdir, task):
        a = _fixture(workdir, "a.jsonl", task, 64, seed=7).read_bytes()
        b = _fixture(workdir, "b.jsonl", task, 64, seed=7).read_bytes()
        assert a == b
        assert a != _fixture(workdir, "c.jsonl", task, 64, seed=8).read_bytes()

    def test_offset_gives_disjoint_ids(self):
        train_ids = {e.id for e in make_fixture("multihop", 16)}
        test_ids = {e.id for e in make_fixture("multihop", 16, offset=16)}
        assert not train_ids & test_ids

    def test_multihop_structure(self):
        for ex in make_fixture("multihop", 32, seed=2):
            key = ex.question.split()[2]
            first, second = [s for s in ex.document if s in ex.answer]
            a = next(s for s in ex.document if key in s.split())
            shared = set(a.split()) & set(next(s for s in (first, second) if s != a).split()) - {"."}
            assert ex.answer.startswith(a) and len(shared) == 1
            assert key not in ex.answer.split()[len(a.split()):]

    def test_inventory_is_seed_free(self):
        assert word_inventory(5) == word_inventory(5) and len(set(word_inventory(200))) == 200


class TestPipeline:
    def test_train_generate_evaluate(self, workdir):
        _fixture(workdir, "train.jsonl", size=8)
        assert run(["build-vocab", "--train", "train.jsonl", "--out", "vocab.tsv"]) == EXIT_OK
        assert run(["train", "--train", "train.jsonl", "--vocab", "vocab.tsv", "--out-dir", "run",
                    "--phase1-epochs", "1", "--phase2-epochs", "1", "--hops", "2", *SMALL]) == EXIT_OK
        ckpt = workdir / "run" / "epoch002.npz"
        assert ckpt.exists() and (workdir / "run" / "best.npz").exists()
        log = [json.loads(x) for x in (workdir / "run" / "train_log.jsonl").read_text().splitlines()]
        assert {r["phase"] for r in log} == {1, 2}
        assert "hops = 2" in (workdir / "run" / "config.cfg").read_text()

        assert run(["generate", "--checkpoint", str(ckpt), "--data", "train.jsonl", "--out", "pred.jsonl",
                    "--beam-size", "1", "--max-len", "6"]) == EXIT_OK
        preds = [json.loads(x) for x in (workdir / "pred.jsonl").read_text().splitlines()]
        assert len(preds) == 8 and len(preds[0]["justification"]) == 2

        assert run(["evaluate", "--predictions", "pred.jsonl", "--references", "train.jsonl",
                    "--report", "report.json"]) == EXIT_OK
        report = json.loads((workdir / "report.json").read_text())
        assert set(report["rouge"]) == {"r1", "r2", "rl"}
        assert set(report["duplication"]) == {"1", "2", "3", "4"}
        assert {"lead3", "mmr"} <= set(report["baselines"])
        assert len(report["rows"]) == 8

        assert run(["trace-hops", "--checkpoint", str(ckpt), "--data", "train.jsonl", "--out", "trace.jsonl"]) == 0
        recs = [json.loads(x) for x in (workdir / "trace.jsonl").read_text().splitlines()]
        assert {r["hop"] for r in recs} == {1, 2}

    def test_resume_continues_epochs(self, workdir):
        _fixture(workdir, "train.jsonl", size=4)
        base = ["train", "--train", "train.jsonl", "--phase1-epochs", "2", "--phase2-epochs", "0", *SMALL]
        assert run([*base, "--out-dir", "full"]) == EXIT_OK
        assert run([*base, "--out-dir", "part", "--phase1-epochs", "1"]) == EXIT_OK
        assert run([*base, "--out-dir", "part", "--resume", "part/epoch001.npz"]) == EXIT_OK
        full = (workdir / "full" / "train_log.jsonl").read_text().splitlines()
        part = (workdir / "part" / "train_log.jsonl").read_text().splitlines()
        assert full == part

    def test_idempotent_evaluate(self, workdir, capsys):
        refs = _fixture(workdir, "refs.jsonl", size=3)
        (workdir / "pred.jsonl").write_text("".join(json.dumps({"id": e["id"], "answer": e["answer"]}) + "\n"
                                                    for e in map(json.loads, refs.read_text().splitlines())))
        capsys.readouterr()
        outs = []
        for _ in range(2):
            assert run(["evaluate", "--predictions", "pred.jsonl", "--references", "refs.jsonl"]) == EXIT_OK
            outs.append(capsys.readouterr().out)
        assert outs[0] == outs[1]
        assert json.loads(outs[0])["rouge"]["rl"] == 1.0


class TestExitCodes:
    def test_missing_file(self, workdir):
        assert run(["build-vocab", "--train", "nope.jsonl", "--out", "v.tsv"]) == EXIT_MISSING

    def test_bad_predictions(self, workdir):
        _fixture(workdir, "refs.jsonl", size=2)
        (workdir / "pred.jsonl").write_text("{broken\n")
        assert run(["evaluate", "--predictions", "pred.jsonl", "--references", "refs.jsonl"]) == EXIT_DATA

    def test_no_command(self):
        assert run([]) == EXIT_USAGE

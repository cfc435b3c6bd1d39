"""End-to-end command-line behavior: files, exit codes, determinism."""

import json

import numpy as np
import pytest

from gcdlib.cli import INSPECT_COLUMNS, main
from gcdlib.data import load_embeddings

FAST_CONFIG = """
epochs=2
iters_per_epoch=3
batch_size=8
lr=0.1
seed=4
rep_dim=16
sdl_dim=16
eval_every=2
"""


def write_config(tmp_path, text=FAST_CONFIG):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def synth_args(prefix, classes=4, old=2, per_class=12, dim=16, sigma=0.15, seed=1):
    return ["synth", "--out", prefix, "--classes", str(classes), "--old", str(old),
            "--per-class", str(per_class), "--dim", str(dim), "--sigma", str(sigma),
            "--seed", str(seed)]


class TestSynth:
    def test_writes_pair_and_summary(self, tmp_path, capsys):
        prefix = str(tmp_path / "toy")
        assert main(synth_args(prefix)) == 0
        out = capsys.readouterr().out
        assert "K=4" in out and "M=2" in out
        ds = load_embeddings(prefix + ".dgce", prefix + ".dgcl")
        assert ds.num_rows == 48

    def test_all_old_degenerate_is_legal(self, tmp_path):
        prefix = str(tmp_path / "allold")
        assert main(synth_args(prefix, classes=2, old=2)) == 0
        ds = load_embeddings(prefix + ".dgce", prefix + ".dgcl")
        assert ds.num_old_classes == ds.num_total_classes == 2

    def test_same_seed_identical_files(self, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        main(synth_args(a, seed=9))
        main(synth_args(b, seed=9))
        assert (tmp_path / "a.dgce").read_bytes() == (tmp_path / "b.dgce").read_bytes()
        assert (tmp_path / "a.dgcl").read_bytes() == (tmp_path / "b.dgcl").read_bytes()

    def test_usage_error_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["synth"])  # missing --out
        assert exc.value.code == 2


@pytest.fixture
def trained(tmp_path):
    prefix = str(tmp_path / "toy")
    main(synth_args(prefix))
    cfg = write_config(tmp_path)
    out_dir = tmp_path / "run"
    code = main(["train", "--features", prefix + ".dgce", "--labels", prefix + ".dgcl",
                 "--config", cfg, "--out-dir", str(out_dir)])
    assert code == 0
    return prefix, cfg, out_dir


class TestTrain:
    def test_outputs_exist(self, trained, capsys):
        prefix, _, out_dir = trained
        assert (out_dir / "model.dgck").exists()
        assert (out_dir / "train_log.jsonl").exists()
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(out_dir / "model.dgck"),
                     "--features", prefix + ".dgce", "--labels", prefix + ".dgcl"]) == 0
        report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert set(report) >= {"acc_all", "acc_old", "acc_new", "auroc"}

    def test_logged_step_count_matches_config(self, trained):
        _, _, out_dir = trained
        lines = (out_dir / "train_log.jsonl").read_text().splitlines()
        records = [json.loads(line) for line in lines]
        assert sum(r["type"] == "step" for r in records) == 6  # 2 epochs x 3 iters
        assert sum(r["type"] == "epoch" for r in records) == 2

    def test_missing_config_key_exit_1(self, tmp_path, capsys):
        prefix = str(tmp_path / "toy2")
        main(synth_args(prefix))
        bad_cfg = tmp_path / "bad.cfg"
        bad_cfg.write_text("epochs=1\nbatch_size=8\nlr=0.1\n")  # no seed
        code = main(["train", "--features", prefix + ".dgce", "--labels", prefix + ".dgcl",
                     "--config", str(bad_cfg), "--out-dir", str(tmp_path / "x")])
        assert code == 1
        assert "seed" in capsys.readouterr().err

    def test_train_determinism_bytes(self, tmp_path):
        prefix = str(tmp_path / "toy3")
        main(synth_args(prefix))
        cfg = write_config(tmp_path)
        blobs = []
        for name in ("r1", "r2"):
            out_dir = tmp_path / name
            main(["train", "--features", prefix + ".dgce", "--labels", prefix + ".dgcl",
                  "--config", cfg, "--out-dir", str(out_dir)])
            blobs.append((
                (out_dir / "model.dgck").read_bytes(),
                (out_dir / "train_log.jsonl").read_bytes(),
            ))
        assert blobs[0] == blobs[1]


class TestEval:
    def test_eval_deterministic(self, trained, capsys):
        prefix, _, out_dir = trained
        capsys.readouterr()
        args = ["eval", "--checkpoint", str(out_dir / "model.dgck"),
                "--features", prefix + ".dgce", "--labels", prefix + ".dgcl"]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        second = capsys.readouterr().out
        assert first == second
        json.loads(first)

    def test_dim_mismatch_exit_1(self, trained, tmp_path, capsys):
        _, _, out_dir = trained
        other = str(tmp_path / "otherdim")
        main(synth_args(other, dim=32))
        capsys.readouterr()
        code = main(["eval", "--checkpoint", str(out_dir / "model.dgck"),
                     "--features", other + ".dgce", "--labels", other + ".dgcl"])
        assert code == 1
        assert "dim" in capsys.readouterr().err


class TestInspect:
    def test_empty_log_header_only(self, tmp_path, capsys):
        log = tmp_path / "empty.jsonl"
        log.write_text("")
        assert main(["inspect", "--log", str(log)]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out == [",".join(INSPECT_COLUMNS)]

    def test_row_per_epoch_and_column_order(self, trained, capsys):
        _, _, out_dir = trained
        capsys.readouterr()
        assert main(["inspect", "--log", str(out_dir / "train_log.jsonl")]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == ",".join(INSPECT_COLUMNS)
        assert len(lines) == 3  # header + 2 epochs
        first = lines[1].split(",")
        assert first[0] == "0"
        assert len(first) == len(INSPECT_COLUMNS)

    def test_malformed_line_skipped_with_warning(self, trained, capsys):
        _, _, out_dir = trained
        log = out_dir / "train_log.jsonl"
        log.write_text(log.read_text() + "{not json}\n")
        capsys.readouterr()
        assert main(["inspect", "--log", str(log)]) == 0
        captured = capsys.readouterr()
        assert "1 malformed line(s) skipped" in captured.err
        assert len(captured.out.splitlines()) == 3

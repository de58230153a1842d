import json

import numpy as np
import pytest

from ssd_pulse.cli import main
from ssd_pulse.model import PhysMambaConfig, init_weights, save_checkpoint
from ssd_pulse.stem import VideoClip
from ssd_pulse.tensor_core import read_ptnsr, write_ptnsr

SMALL = PhysMambaConfig(height=64, width=64, clip_len=60)


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    rc = main(["synth", "--count", "2", "--seed", "7", "--size", "64", "--seconds", "20", "--noise", "0.2", "--out", str(out)])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt")
    save_checkpoint(init_weights(SMALL, 0), path, SMALL)
    return path


class TestSynth:
    def test_default_single_clip(self, tmp_path):
        assert main(["synth", "--size", "64", "--seconds", "2", "--out", str(tmp_path)]) == 0
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert len(m["clips"]) == 1

    def test_count_and_seeds(self, tmp_path):
        assert main(["synth", "--count", "5", "--seed", "7", "--size", "64", "--seconds", "1", "--out", str(tmp_path)]) == 0
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert [c["spec"]["seed"] for c in m["clips"]] == [7, 8, 9, 10, 11]
        again = tmp_path / "again"
        main(["synth", "--count", "5", "--seed", "7", "--size", "64", "--seconds", "1", "--out", str(again)])
        for c in m["clips"]:
            assert (tmp_path / c["clip"]).read_bytes() == (again / c["clip"]).read_bytes()

    def test_clip_invariants(self, synth_dir):
        m = json.loads((synth_dir / "manifest.json").read_text())
        clip = read_ptnsr(synth_dir / m["clips"][0]["clip"])
        label = read_ptnsr(synth_dir / m["clips"][0]["label"])
        assert clip.shape == (3, 600, 64, 64) and label.shape == (600,)
        assert clip.min() >= 0 and clip.max() <= 1
        VideoClip(clip, m["fps"]).validate_for_stem()

    def test_invalid_spec_exit_2(self, tmp_path):
        assert main(["synth", "--hr", "20", "--out", str(tmp_path)]) == 2


class TestForward:
    def test_rows_and_determinism(self, synth_dir, ckpt, tmp_path):
        args = ["forward", "--ckpt", str(ckpt), "--clip", str(synth_dir / "clip_000.ptnsr")]
        assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
        assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
        a = (tmp_path / "a.csv").read_bytes()
        assert a == (tmp_path / "b.csv").read_bytes()
        lines = a.decode().splitlines()
        assert lines[0] == "time,value" and len(lines) - 1 == 600

    def test_init_seed_finite(self, tmp_path):
        clip = np.random.default_rng(1).random((3, 32, 64, 64)).astype(np.float32)
        write_ptnsr(tmp_path / "c.ptnsr", clip)
        assert main(["forward", "--init-seed", "0", "--clip", str(tmp_path / "c.ptnsr"), "--fps", "25", "--out", str(tmp_path / "p.csv")]) == 0
        table = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1)
        assert table.shape == (32, 2) and np.all(np.isfinite(table))
        assert table[1, 0] == pytest.approx(0.04)

    def test_shape_mismatch_exit_3(self, ckpt, tmp_path):
        write_ptnsr(tmp_path / "big.ptnsr", np.zeros((3, 16, 128, 128), np.float32))
        assert main(["forward", "--ckpt", str(ckpt), "--clip", str(tmp_path / "big.ptnsr"), "--out", str(tmp_path / "x.csv")]) == 3

    def test_missing_files_exit_2(self, ckpt, tmp_path):
        assert main(["forward", "--ckpt", str(ckpt), "--clip", str(tmp_path / "nope.ptnsr"), "--out", str(tmp_path / "x.csv")]) == 2
        write_ptnsr(tmp_path / "c.ptnsr", np.zeros((3, 16, 64, 64), np.float32))
        assert main(["forward", "--ckpt", str(tmp_path / "none"), "--clip", str(tmp_path / "c.ptnsr"), "--out", str(tmp_path / "x.csv")]) == 2
        assert main(["forward", "--clip", str(tmp_path / "c.ptnsr"), "--out", str(tmp_path / "x.csv")]) == 2

    def test_corrupt_clip_exit_3(self, ckpt, tmp_path):
        (tmp_path / "bad.ptnsr").write_bytes(b"garbage")
        assert main(["forward", "--ckpt", str(ckpt), "--clip", str(tmp_path / "bad.ptnsr"), "--out", str(tmp_path / "x.csv")]) == 3


class TestEval:
    def test_self_compare(self, synth_dir, tmp_path, capsys):
        labels = [str(synth_dir / "label_000.ptnsr"), str(synth_dir / "label_001.ptnsr")]
        assert main(["eval", "--pred", *labels, "--label", *labels, "--out", str(tmp_path)]) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert set(summary) == {"mae", "rmse", "mape", "pearson_r", "snr_db"}
        assert summary["mae"] == 0 and summary["rmse"] == 0
        per_clip = (tmp_path / "per_clip.csv").read_text().splitlines()
        assert per_clip[0] == "clip_id,gt_hr,pred_hr,snr_db" and len(per_clip) == 3
        gt = float(per_clip[1].split(",")[1])
        assert abs(gt - 72) <= 1.5
        assert (tmp_path / "bland_altman.csv").read_text().startswith("mean_hr,diff_hr\n")
        assert "MAE | RMSE | MAPE | r | SNR" in capsys.readouterr().out

    def test_pearson_with_varied_hr(self, tmp_path):
        rng = np.random.default_rng(0)
        preds, labels = [], []
        for i, hr in enumerate((60, 80, 100)):
            t = np.arange(900) / 30
            lab = np.sin(2 * np.pi * hr / 60 * t)
            write_ptnsr(tmp_path / f"l{i}.ptnsr", lab.astype(np.float32))
            np.savetxt(tmp_path / f"p{i}.csv", np.column_stack([t, lab + 0.1 * rng.standard_normal(900)]),
                       delimiter=",", header="time,value", comments="")
            preds.append(str(tmp_path / f"p{i}.csv"))
            labels.append(str(tmp_path / f"l{i}.ptnsr"))
        assert main(["eval", "--pred", *preds, "--label", *labels, "--fs", "30", "--out", str(tmp_path / "ev")]) == 0
        summary = json.loads((tmp_path / "ev" / "summary.json").read_text())
        assert summary["pearson_r"] == pytest.approx(1.0)

    def test_fs_mismatch_exit_3(self, tmp_path):
        t = np.arange(300)
        np.savetxt(tmp_path / "a.csv", np.column_stack([t / 30, np.sin(t / 5)]), delimiter=",", header="time,value", comments="")
        np.savetxt(tmp_path / "b.csv", np.column_stack([t / 25, np.sin(t / 5)]), delimiter=",", header="time,value", comments="")
        assert main(["eval", "--pred", str(tmp_path / "a.csv"), "--label", str(tmp_path / "b.csv"), "--out", str(tmp_path / "o")]) == 3

    def test_unpaired_exit_2(self, synth_dir, tmp_path):
        lab = str(synth_dir / "label_000.ptnsr")
        assert main(["eval", "--pred", lab, lab, "--label", lab, "--out", str(tmp_path)]) == 2


class TestBench:
    def test_rows(self, tmp_path):
        out = tmp_path / "bench.csv"
        rc = main(["bench", "--lengths", "64", "128", "256", "512", "--repeats", "1", "--no-check", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "formulation,T,wall_ns" and len(lines) == 13
        assert {l.split(",")[0] for l in lines[1:]} == {"recurrence", "quadratic", "chunked"}


class TestConfigAndThreads:
    def test_overlay_fills_flags(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"count": 2, "size": 64, "seconds": 1, "out": str(tmp_path / "o")}))
        assert main(["synth", "--config", str(cfg)]) == 0
        assert len(json.loads((tmp_path / "o" / "manifest.json").read_text())["clips"]) == 2

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"count": 2, "size": 64, "seconds": 1}))
        assert main(["synth", "--config", str(cfg), "--count", "1", "--out", str(tmp_path / "o")]) == 0
        assert len(json.loads((tmp_path / "o" / "manifest.json").read_text())["clips"]) == 1

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"colour": "red"}))
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_threads(self, tmp_path, monkeypatch):
        args = ["synth", "--size", "64", "--seconds", "1", "--out", str(tmp_path)]
        assert main(args + ["--threads", "1"]) == 0
        assert main(args + ["--threads", "0"]) == 2
        monkeypatch.setenv("SSD_PULSE_THREADS", "x")
        assert main(args) == 2
        monkeypatch.setenv("SSD_PULSE_THREADS", "2")
        assert main(args) == 0

    def test_no_subcommand(self):
        assert main([]) == 2

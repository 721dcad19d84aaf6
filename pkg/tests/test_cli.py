"""End-to-end command-line behaviour and the exit-code scheme."""

import numpy as np
import pytest

from aeromamba import cli
from aeromamba.dsp import AudioBuffer, load_wav, save_wav
from aeromamba.model import (GeneratorConfig, config_to_text, init_params,
                             param_specs, save_checkpoint)
from aeromamba.train import TrainConfig, hf_energy_fraction, save_train_config

SMALL_GEN = GeneratorConfig(window_size=64, hop_size=32, depth=2,
                            base_channels=4, channel_cap=8, stride=4,
                            d_state=4)


@pytest.fixture()
def ref_wav(tmp_path):
    rng = np.random.default_rng(0)
    buf = AudioBuffer(samples=rng.normal(0, 0.2, size=(1, 11025)),
                      sample_rate=44100)
    path = tmp_path / "ref.wav"
    save_wav(buf, path)
    return path


@pytest.fixture()
def small_ckpt(tmp_path):
    path = tmp_path / "small.ckpt"
    params = {k: v.astype(np.float32).astype(np.float64)
              for k, v in init_params(SMALL_GEN, seed=0).items()}
    save_checkpoint(path, params, config_to_text(SMALL_GEN))
    return path


class TestDegrade:
    def test_removes_high_band(self, tmp_path, ref_wav):
        out = tmp_path / "low.wav"
        code = cli.main(["degrade", "--in", str(ref_wav), "--out", str(out)])
        assert code == 0
        low = load_wav(out)
        assert hf_energy_fraction(low.samples[0], low.sample_rate) < 1e-4

    def test_non_integer_factor_is_usage_error(self, tmp_path, ref_wav,
                                               capsys):
        code = cli.main(["degrade", "--in", str(ref_wav),
                         "--out", str(tmp_path / "x.wav"),
                         "--low-rate", "30000"])
        assert code == 2
        assert "integer" in capsys.readouterr().err

    def test_missing_input_is_io_error(self, tmp_path, capsys):
        code = cli.main(["degrade", "--in", str(tmp_path / "nope.wav"),
                         "--out", str(tmp_path / "x.wav")])
        assert code == 3

    def test_unknown_flag_is_usage_error(self, ref_wav, capsys):
        code = cli.main(["degrade", "--in", str(ref_wav), "--wat", "1"])
        assert code == 2


class TestSynthData:
    def test_writes_deterministic_tracks(self, tmp_path):
        args = ["synth-data", "--seed", "4", "--tracks", "2",
                "--seconds", "0.2"]
        assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
        assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
        files_a = sorted((tmp_path / "a").glob("*.wav"))
        files_b = sorted((tmp_path / "b").glob("*.wav"))
        assert len(files_a) == 2
        for fa, fb in zip(files_a, files_b):
            assert fa.read_bytes() == fb.read_bytes()

    def test_bad_track_count_is_usage_error(self, tmp_path):
        assert cli.main(["synth-data", "--tracks", "0",
                         "--out", str(tmp_path)]) == 2


class TestTrainEnhance:
    @pytest.fixture()
    def trained(self, tmp_path):
        data = tmp_path / "data"
        assert cli.main(["synth-data", "--seed", "4", "--tracks", "2",
                         "--seconds", "0.25", "--out", str(data)]) == 0
        cfg_path = tmp_path / "train.ini"
        save_train_config(cfg_path, TrainConfig(
            epochs=1, batch_size=2, segment_length=3072, val_every=1,
            generator=SMALL_GEN))
        out = tmp_path / "run"
        assert cli.main(["train", "--config", str(cfg_path),
                         "--data", str(data), "--out", str(out)]) == 0
        return out

    def test_train_writes_reports_and_checkpoints(self, trained):
        assert (trained / "metrics.csv").exists()
        assert (trained / "metrics.png").exists()
        assert (trained / "best.ckpt").exists()
        assert (trained / "last.ckpt").exists()

    def test_enhance_offline_and_streaming_agree(self, trained, tmp_path,
                                                 ref_wav):
        ckpt = str(trained / "best.ckpt")
        out_a = tmp_path / "offline.wav"
        out_b = tmp_path / "stream.wav"
        assert cli.main(["enhance", "--checkpoint", ckpt, "--in",
                         str(ref_wav), "--out", str(out_a)]) == 0
        assert cli.main(["enhance", "--checkpoint", ckpt, "--in",
                         str(ref_wav), "--out", str(out_b),
                         "--streaming"]) == 0
        a, b = load_wav(out_a), load_wav(out_b)
        assert np.max(np.abs(a.samples - b.samples)) <= 1e-4

    def test_missing_checkpoint_is_io_error(self, tmp_path, ref_wav):
        assert cli.main(["enhance", "--checkpoint",
                         str(tmp_path / "none.ckpt"), "--in", str(ref_wav),
                         "--out", str(tmp_path / "o.wav")]) == 3

    def test_contract_violation_is_numeric_error(self, tmp_path, ref_wav,
                                                 capsys):
        # a bidirectional generator cannot run causally
        cfg = GeneratorConfig(window_size=64, hop_size=32, depth=2,
                              base_channels=4, channel_cap=8, stride=4,
                              d_state=4, bidirectional=True)
        ckpt = tmp_path / "bidi.ckpt"
        save_checkpoint(ckpt, init_params(cfg, seed=0), config_to_text(cfg))
        code = cli.main(["enhance", "--checkpoint", str(ckpt), "--in",
                         str(ref_wav), "--out", str(tmp_path / "o.wav")])
        assert code == 4


class TestEval:
    def make_dirs(self, tmp_path, degraded=False):
        data = tmp_path / "ref"
        assert cli.main(["synth-data", "--seed", "4", "--tracks", "2",
                         "--seconds", "0.2", "--out", str(data)]) == 0
        est = tmp_path / ("est_deg" if degraded else "est_same")
        est.mkdir()
        for wav in data.glob("*.wav"):
            if degraded:
                assert cli.main(["degrade", "--in", str(wav),
                                 "--out", str(est / wav.name)]) == 0
            else:
                (est / wav.name).write_bytes(wav.read_bytes())
        return data, est

    def test_identical_dirs_score_zero(self, tmp_path):
        data, est = self.make_dirs(tmp_path)
        csv = tmp_path / "scores.csv"
        assert cli.main(["eval", "--ref", str(data), "--est", str(est),
                         "--csv", str(csv)]) == 0
        lines = csv.read_text().strip().split("\n")
        assert lines[0] == "track,lsd"
        assert len(lines) == 3
        assert all(line.endswith(",0.0") for line in lines[1:])
        assert csv.with_suffix(".png").exists()

    def test_two_estimate_sets_get_mw_row(self, tmp_path):
        data, est_same = self.make_dirs(tmp_path)
        _, est_deg = self.make_dirs(tmp_path, degraded=True)
        csv = tmp_path / "scores.csv"
        assert cli.main(["eval", "--ref", str(data),
                         "--est", str(est_same), "--est", str(est_deg),
                         "--csv", str(csv)]) == 0
        lines = csv.read_text().strip().split("\n")
        assert len(lines) == 6  # header + 2x2 tracks + mw_u row
        tag, u, p = lines[-1].split(",")
        assert tag == "mw_u"
        assert float(u) >= 0.0 and 0.0 <= float(p) <= 1.0

    def test_missing_track_is_usage_error(self, tmp_path):
        data, est = self.make_dirs(tmp_path)
        next(iter(est.glob("*.wav"))).unlink()
        assert cli.main(["eval", "--ref", str(data), "--est", str(est),
                         "--csv", str(tmp_path / "s.csv")]) == 2


class TestBench:
    def test_report_files(self, tmp_path, small_ckpt):
        csv = tmp_path / "bench.csv"
        assert cli.main(["bench", "--checkpoint", str(small_ckpt),
                         "--csv", str(csv), "--segments", "0.2,0.4",
                         "--repeats", "1"]) == 0
        lines = csv.read_text().strip().split("\n")
        assert lines[0] == "mode,segment_s,median_s,state_bytes,rt_factor"
        assert len(lines) == 1 + 3 * 2
        assert csv.with_suffix(".png").exists()

    def test_bad_segment_list_is_usage_error(self, tmp_path, small_ckpt):
        assert cli.main(["bench", "--checkpoint", str(small_ckpt),
                         "--csv", str(tmp_path / "b.csv"),
                         "--segments", "1,zap"]) == 2


class TestInspectCheckpoint:
    def test_lists_every_parameter(self, small_ckpt, capsys):
        assert cli.main(["inspect-checkpoint", str(small_ckpt)]) == 0
        out = capsys.readouterr().out
        names = [name for name, _ in param_specs(SMALL_GEN)]
        assert f"tensors: {len(names)}" in out
        for name in names:
            assert name in out
        assert "window_size=64" in out

    def test_corrupt_file_is_numeric_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"AMBA" + b"\x01\x00\x00\x00" + b"\xff" * 8)
        assert cli.main(["inspect-checkpoint", str(bad)]) == 4

    def test_missing_file_is_io_error(self, tmp_path):
        assert cli.main(["inspect-checkpoint",
                         str(tmp_path / "nope.ckpt")]) == 3


class TestThreadCap:
    def test_env_var_parsing(self, monkeypatch):
        monkeypatch.setenv("AEROMAMBA_THREADS", "2")
        assert cli.max_workers() == 2
        monkeypatch.setenv("AEROMAMBA_THREADS", "0")
        assert cli.max_workers() >= 1
        monkeypatch.delenv("AEROMAMBA_THREADS")
        assert cli.max_workers() >= 1

    def test_invalid_value_is_usage_error(self, tmp_path, ref_wav,
                                          monkeypatch, small_ckpt):
        monkeypatch.setenv("AEROMAMBA_THREADS", "many")
        assert cli.main(["enhance", "--checkpoint", str(small_ckpt),
                         "--in", str(ref_wav),
                         "--out", str(tmp_path / "o.wav")]) == 2

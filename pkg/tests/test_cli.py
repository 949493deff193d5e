"""Command-line interface: flows, exit codes, reproducibility, config."""

import numpy as np
import pytest

from deblurlab import config as C
from deblurlab.cli import main
from deblurlab.images import save_image

DESK_DATA_ARGS = [
    "--set", "resolution=16", "--set", "motion_length_max=5",
    "--set", "shake_length_max=5", "--set", "defocus_radius_max=2",
    "--set", "max_kernels=1", "--set", "max_kernel_extent=7",
]


@pytest.fixture
def sharp_dir(tmp_path, rng):
    d = tmp_path / "sharp"
    d.mkdir()
    for i in range(3):
        save_image(d / f"src_{i}.png", rng.random((3, 24, 24)))
    return d


class TestKernelCommand:
    def test_motion_grid_contents(self, tmp_path, capsys):
        out = tmp_path / "k.txt"
        rc = main(["kernel", "--type", "motion", "--length", "5", "--angle-deg", "0",
                   "--size", "7", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "7"
        center_row = np.array([float(v) for v in lines[4].split()])
        assert np.allclose(center_row[1:6], 0.2)
        assert (tmp_path / "k.txt.png").exists()
        assert "# resolved configuration" in capsys.readouterr().out

    def test_defocus_grid_contents(self, tmp_path):
        out = tmp_path / "k.txt"
        assert main(["kernel", "--type", "defocus", "--radius", "1", "--size", "5",
                     "--out", str(out)]) == 0
        grid = np.array([[float(v) for v in line.split()]
                         for line in out.read_text().splitlines()[1:]])
        assert (grid > 0).sum() == 5
        assert np.allclose(grid[grid > 0], 0.2)

    def test_missing_required_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["kernel", "--type", "motion", "--size", "7"])
        assert exc.value.code == 2

    def test_missing_type_parameter_is_runtime_error(self, tmp_path, capsys):
        rc = main(["kernel", "--type", "defocus", "--size", "5", "--out", str(tmp_path / "k")])
        assert rc == 1
        assert "--radius" in capsys.readouterr().err

    def test_seeded_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for out in (a, b):
            main(["kernel", "--type", "shake", "--length", "6", "--control-points", "4",
                  "--size", "11", "--seed", "9", "--out", str(out)])
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.txt.png").read_bytes() == (tmp_path / "b.txt.png").read_bytes()


class TestDatasetCommand:
    def test_manifest_written(self, sharp_dir, tmp_path, capsys):
        rc = main(["dataset", "--sharp-dir", str(sharp_dir), "--n-pairs", "4",
                   "--out-dir", str(tmp_path / "data"), "--seed", "3"] + DESK_DATA_ARGS)
        assert rc == 0
        assert (tmp_path / "data" / "manifest.txt").exists()
        assert "manifest written" in capsys.readouterr().out

    def test_seeded_rerun_byte_identical(self, sharp_dir, tmp_path):
        for name in ("a", "b"):
            main(["dataset", "--sharp-dir", str(sharp_dir), "--n-pairs", "4",
                  "--out-dir", str(tmp_path / name), "--seed", "3"] + DESK_DATA_ARGS)
        for f in ("manifest.txt", "blur_00001.png", "sharp_00003.png"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_missing_directory_exits_1(self, tmp_path, capsys):
        rc = main(["dataset", "--sharp-dir", str(tmp_path / "nope"), "--n-pairs", "1",
                   "--out-dir", str(tmp_path / "data")])
        assert rc == 1
        assert "nope" in capsys.readouterr().err


TRAIN_ARGS = [
    "--set", "head_channels=6", "--set", "res_channels=4", "--set", "res_blocks=1",
    "--set", "head_kernel=3", "--set", "res_kernel=3", "--set", "disc_layers=4",
    "--set", "disc_base_channels=4", "--set", "batch_size=2", "--set", "critic_iters=1",
    "--set", "max_iters=2", "--set", "epochs=100", "--set", "checkpoint_every=0",
]


class TestTrainInferEvalFlow:
    @pytest.fixture
    def dataset(self, sharp_dir, tmp_path):
        main(["dataset", "--sharp-dir", str(sharp_dir), "--n-pairs", "4",
              "--out-dir", str(tmp_path / "data"), "--seed", "5"] + DESK_DATA_ARGS)
        return tmp_path / "data"

    def test_full_pipeline(self, dataset, tmp_path, capsys):
        run = tmp_path / "run"
        assert main(["train", "--dataset", str(dataset), "--out-dir", str(run),
                     "--seed", "2"] + TRAIN_ARGS) == 0
        assert (run / "checkpoint_final.ckpt").exists()
        assert (run / "train_log.csv").exists()
        assert (run / "loss_curve.png").exists()

        restored = tmp_path / "restored.png"
        assert main(["infer", "--checkpoint", str(run / "checkpoint_final.ckpt"),
                     "--input", str(dataset / "blur_00000.png"), "--out", str(restored)]) == 0
        assert restored.exists()

        out = tmp_path / "eval"
        assert main(["eval", "--checkpoint", str(run / "checkpoint_final.ckpt"),
                     "--dataset", str(dataset), "--out-dir", str(out)]) == 0
        report = (out / "report.csv").read_text().splitlines()
        assert report[0] == "pair,psnr_blur,psnr_restored,ssim_restored,psnr_wiener"
        assert len(report) == 5
        assert "mean psnr_restored" in capsys.readouterr().out

    def test_infer_directory_input(self, dataset, tmp_path):
        run = tmp_path / "run"
        main(["train", "--dataset", str(dataset), "--out-dir", str(run), "--seed", "2"] + TRAIN_ARGS)
        out_dir = tmp_path / "restored"
        assert main(["infer", "--checkpoint", str(run / "checkpoint_final.ckpt"),
                     "--input", str(dataset), "--out", str(out_dir)]) == 0
        assert len(list(out_dir.glob("*.png"))) == 8  # 4 sharp + 4 blurred inputs

    def test_missing_checkpoint_exits_1(self, dataset, tmp_path, capsys):
        rc = main(["infer", "--checkpoint", str(tmp_path / "missing.ckpt"),
                   "--input", str(dataset / "blur_00000.png"), "--out", str(tmp_path / "x.png")])
        assert rc == 1
        assert "missing.ckpt" in capsys.readouterr().err


class TestConfigHandling:
    def test_file_plus_override_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment line\nbatch_size = 8\nlearning_rate = 0.001\n")
        resolved = C.resolve(cfg, ["batch_size=2"])
        assert resolved["batch_size"] == 2  # override beats file
        assert resolved["learning_rate"] == 0.001  # file beats default
        assert resolved["beta1"] == 0.5  # untouched default

    def test_unknown_key_in_file_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("not_a_key = 3\n")
        with pytest.raises(C.ConfigError, match="unknown config key"):
            C.resolve(cfg, [])

    def test_unknown_override_rejected(self):
        with pytest.raises(C.ConfigError, match="unknown config key"):
            C.resolve(None, ["bogus=1"])

    def test_malformed_line_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("batch_size 4\n")
        with pytest.raises(C.ConfigError, match="key = value"):
            C.resolve(cfg, [])

    def test_type_coercion_follows_defaults(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs = 7\nlambda_gp = 2.5\n")
        resolved = C.resolve(cfg, [])
        assert resolved["epochs"] == 7 and isinstance(resolved["epochs"], int)
        assert resolved["lambda_gp"] == 2.5

    def test_bad_int_value_rejected(self):
        with pytest.raises(C.ConfigError, match="cannot parse"):
            C.resolve(None, ["epochs=many"])

    def test_cli_reports_config_error_as_exit_1(self, tmp_path, capsys):
        rc = main(["dataset", "--sharp-dir", str(tmp_path), "--n-pairs", "1",
                   "--out-dir", str(tmp_path / "o"), "--set", "bogus=1"])
        assert rc == 1
        assert "unknown config key" in capsys.readouterr().err

"""Command-line interface: flows, overrides, and exit codes."""

import numpy as np
import pytest

from csseg import __version__
from csseg.cli import main
from csseg.config import RunConfig, load_config, save_config


def write_cfg(path, **kw):
    base = dict(
        scenario="2-1",
        n_classes=3,
        image_h=16,
        image_w=16,
        n_train=8,
        n_test=4,
        epochs=1,
        batch_size=4,
        hidden=(4, 8),
        divisions=(1, 2),
        lr_first=0.05,
        lr_later=0.01,
        seed=5,
    )
    base.update(kw)
    cfg = RunConfig(**base)
    save_config(cfg, path)
    return cfg


@pytest.fixture()
def workspace(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    write_cfg(
        cfg_path,
        data_dir=str(tmp_path / "data"),
        out_dir=str(tmp_path / "out"),
    )
    return tmp_path, cfg_path


class TestFlows:
    def test_generate_run_eval_report(self, workspace, capsys):
        tmp_path, cfg_path = workspace

        assert main(["generate", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert "8 train / 4 test" in out
        assert (tmp_path / "data" / "meta.txt").exists()

        assert main(["run", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert "finished 2 steps" in out
        assert (tmp_path / "out" / "report.csv").exists()

        assert main(["eval", str(tmp_path / "out" / "step_02"), str(tmp_path / "data")]) == 0
        out = capsys.readouterr().out
        assert "class 0:" in out and "miou_all=" in out

        assert main(["report", str(tmp_path / "out")]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].split() == ["step", "initial", "incremented", "all", "avg"]
        assert out.splitlines()[2].startswith("   1")

    def test_run_overrides(self, workspace, capsys):
        tmp_path, cfg_path = workspace
        assert main(["generate", "--config", str(cfg_path)]) == 0
        override_out = tmp_path / "other"
        assert (
            main(
                [
                    "run",
                    "--config",
                    str(cfg_path),
                    "--seed",
                    "9",
                    "--out",
                    str(override_out),
                    "--method",
                    "finetune",
                ]
            )
            == 0
        )
        capsys.readouterr()
        written = load_config(override_out / "config.txt")
        assert written.seed == 9
        assert written.method == "finetune"
        assert written.out_dir == str(override_out)

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert f"csseg {__version__}" in capsys.readouterr().out


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("method = sgd\n")
        assert main(["run", "--config", str(bad)]) == 2
        assert "config error:" in capsys.readouterr().err

    def test_missing_config_file_is_2(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "none.cfg")]) == 2
        assert "config error:" in capsys.readouterr().err

    def test_data_error_is_3(self, workspace, capsys):
        tmp_path, cfg_path = workspace
        # run without generating the dataset first
        assert main(["run", "--config", str(cfg_path)]) == 3
        assert "data error:" in capsys.readouterr().err

    def test_report_on_empty_dir_is_3(self, tmp_path, capsys):
        assert main(["report", str(tmp_path)]) == 3
        assert "no report in run directory" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numerics_error_is_4(self, workspace, capsys):
        tmp_path, cfg_path = workspace
        write_cfg(
            cfg_path,
            data_dir=str(tmp_path / "data"),
            out_dir=str(tmp_path / "out"),
            lr_first=1e9,
            grad_clip=0.0,
            epochs=2,
        )
        assert main(["generate", "--config", str(cfg_path)]) == 0
        capsys.readouterr()
        assert main(["run", "--config", str(cfg_path)]) == 4
        err = capsys.readouterr().err
        assert "numerical failure:" in err and "aborting at step" in err

    def test_eval_on_missing_checkpoint_is_3(self, tmp_path, capsys):
        assert main(["eval", str(tmp_path / "nope"), str(tmp_path / "data")]) == 3
        assert "data error:" in capsys.readouterr().err

import numpy as np
import pytest

from flowup.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, main
from flowup.config import RunConfig
from flowup.io import read_xyz, write_xyz

TINY = """
[data]
train_shapes = sphere
patches_per_shape = 2
surface_points = 2048
[net]
local_k = 3
enc_hidden = 16
point_dim = 16
global_dim = 16
time_dim = 16
dec_hidden = 16
[optim]
iterations = 3
batch = 2
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return str(p)


@pytest.fixture
def cloud_file(tmp_path):
    p = tmp_path / "in.xyz"
    write_xyz(np.random.default_rng(0).normal(size=(256, 3)), p)
    return str(p)


def test_print_config_round_trips(capsys, tiny_cfg):
    assert main(["print-config", "--config", tiny_cfg]) == EXIT_OK
    text = capsys.readouterr().out
    assert RunConfig.from_text(text, env={}) == RunConfig.load(tiny_cfg, env={})


def test_seed_env(capsys, monkeypatch):
    monkeypatch.setenv("FLOWUP_SEED", "77")
    main(["print-config"])
    assert "seed = 77" in capsys.readouterr().out


def test_exit_codes_for_usage_and_config(tmp_path, capsys):
    assert main([]) == EXIT_CONFIG
    assert main(["toy", "--variants", "nope"]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("[optim]\nlr = fast\n")
    assert main(["print-config", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["print-config", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["--help"]) == EXIT_OK


def test_train_without_data_is_data_error(tmp_path, tiny_cfg):
    assert main(["train", "--config", tiny_cfg, "--data", str(tmp_path / "none")]) == EXIT_DATA
    assert main(["train", "--config", tiny_cfg, "--workers", "0"]) == EXIT_CONFIG


def test_build_train_upsample_eval(tmp_path, tiny_cfg, cloud_file, capsys):
    data = tmp_path / "data"
    ckpt = tmp_path / "m.pufm"
    assert main(["build-data", "--config", tiny_cfg, "--out", str(data)]) == EXIT_OK
    assert (data / "manifest.json").exists()
    assert main(["train", "--config", tiny_cfg, "--data", str(data), "--checkpoint", str(ckpt),
                 "--loss-log", str(tmp_path / "loss.log")]) == EXIT_OK
    assert len((tmp_path / "loss.log").read_text().splitlines()) == 3
    out = tmp_path / "out.ply"
    assert main(["upsample", cloud_file, "--config", tiny_cfg, "--rate", "4", "--checkpoint", str(ckpt),
                 "--out", str(out)]) == EXIT_OK
    capsys.readouterr()
    table = tmp_path / "results.tsv"
    assert main(["eval", str(out), cloud_file, "--table", str(table)]) == EXIT_OK
    report = capsys.readouterr().out
    assert "\ncd=" in report and len(table.read_text().splitlines()) == 2


def test_train_flags(tmp_path, tiny_cfg):
    data = tmp_path / "data"
    main(["build-data", "--config", tiny_cfg, "--out", str(data)])
    for extra in (["--no-align"], ["--baseline", "ddpm"], ["--workers", "2"]):
        ckpt = tmp_path / "c.pufm"
        assert main(["train", "--config", tiny_cfg, "--data", str(data), "--checkpoint", str(ckpt),
                     "--loss-log", str(tmp_path / "l.log")] + extra) == EXIT_OK
        assert ckpt.exists()


@pytest.mark.parametrize("rate", [2, 5, 32])
def test_upsample_densify_only_cardinality(tmp_path, cloud_file, rate):
    out = tmp_path / "o.xyz"
    assert main(["upsample", cloud_file, "--rate", str(rate), "--densify-only", "--out", str(out)]) == EXIT_OK
    assert read_xyz(out).shape == (256 * rate, 3)


def test_upsample_errors(tmp_path, cloud_file):
    out = str(tmp_path / "o.xyz")
    assert main(["upsample", cloud_file, "--rate", "4", "--out", out]) == EXIT_CONFIG
    assert main(["upsample", cloud_file, "--rate", "1", "--densify-only", "--out", out]) == EXIT_CONFIG
    assert main(["upsample", cloud_file, "--rate", "4", "--densify-only", "--inference-eta", "-1",
                 "--out", out]) == EXIT_CONFIG
    assert main(["upsample", str(tmp_path / "nope.xyz"), "--rate", "4", "--densify-only", "--out", out]) == EXIT_DATA
    garbage = tmp_path / "g.xyz"
    garbage.write_text("1 2 three\n")
    assert main(["upsample", str(garbage), "--rate", "4", "--densify-only", "--out", out]) == EXIT_DATA
    junk_ckpt = tmp_path / "junk.pufm"
    junk_ckpt.write_bytes(b"not a checkpoint")
    assert main(["upsample", cloud_file, "--rate", "4", "--checkpoint", str(junk_ckpt), "--out", out]) == EXIT_DATA


def test_upsample_rejects_checkpoint_at_other_rate(tmp_path, tiny_cfg, cloud_file):
    data = tmp_path / "data"
    ckpt = tmp_path / "m.pufm"
    main(["build-data", "--config", tiny_cfg, "--out", str(data)])
    main(["train", "--config", tiny_cfg, "--data", str(data), "--checkpoint", str(ckpt),
          "--loss-log", str(tmp_path / "l.log")])
    other = tmp_path / "other.cfg"
    other.write_text(TINY.replace("[data]", "[data]\nsparse_size = 512") + "[densify]\ngamma = 2\n")
    assert main(["upsample", cloud_file, "--config", str(other), "--rate", "4", "--checkpoint", str(ckpt),
                 "--out", str(tmp_path / "o.xyz")]) == EXIT_DATA


def test_numerical_failure_exit_code(tmp_path, tiny_cfg):
    data = tmp_path / "data"
    main(["build-data", "--config", tiny_cfg, "--out", str(data)])
    hot = tmp_path / "hot.cfg"
    hot.write_text(TINY.replace("iterations = 3", "iterations = 40\nlr = 1e30"))
    assert main(["train", "--config", str(hot), "--data", str(data), "--checkpoint", str(tmp_path / "h.pufm"),
                 "--loss-log", str(tmp_path / "h.log")]) == EXIT_NUMERIC


def test_eval_shape_mismatch_and_missing(tmp_path, cloud_file):
    assert main(["eval", cloud_file, str(tmp_path / "gt.xyz")]) == EXIT_DATA

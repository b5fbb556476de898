"""
Tests for the command-line surface and its exit codes.
"""

import json

import pytest

from src.cli import EXIT_ERROR, EXIT_FAILED, EXIT_OK, PreflightChecker, main, parse_pixel
from src.config import TrainConfig, load_config
from src.errors import ArgumentError
from src.gradcheck import GradientChecker
from src.model_io import load_model, load_snapshots
from src.synth import IMAGES_FILE, LABELS_FILE, MANIFEST_FILE


SYNTH_ARGS = ["--size", "12", "--images", "3", "--strokes", "2", "--len", "5", "--seed", "3"]


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--out", str(out)] + SYNTH_ARGS) == EXIT_OK
    return out


@pytest.fixture
def trained(tmp_path, data_dir):
    model = tmp_path / "net.icm"
    code = main([
        "train", "--data", str(data_dir), "--out", str(model), "--max-iter", "4",
        "--batch-size", "2", "--snapshot-every", "2", "--seed", "7",
    ])
    assert code == EXIT_OK
    return model


def test_synth_is_deterministic(tmp_path, data_dir):
    again = tmp_path / "again"
    assert main(["synth", "--out", str(again)] + SYNTH_ARGS) == EXIT_OK
    for name in (IMAGES_FILE, LABELS_FILE, MANIFEST_FILE):
        assert (again / name).read_bytes() == (data_dir / name).read_bytes()


def test_train_writes_model_snapshots_and_config(trained):
    net, header = load_model(trained)
    assert header["iteration"] == 4
    assert header["metadata"]["arch"] == "irregular"
    assert net.in_channels == 1

    snapshots = load_snapshots(trained.with_name(trained.name + ".shapes.json"))
    assert sorted({s.iteration for s in snapshots}) == [0, 2, 4]
    config = load_config(trained.with_name(trained.name + ".config.toml"))
    assert config.max_iter == 4 and config.seed == 7 and config.batch_size == 2


def test_train_from_config_file(tmp_path, data_dir):
    config_path = tmp_path / "run.toml"
    config_path.write_text("max_iter = 2\nbatch_size = 1\nhidden_channels = 2\n")
    model = tmp_path / "regular.icm"
    code = main(["train", "--config", str(config_path), "--data", str(data_dir), "--arch", "regular",
                 "--out", str(model), "--max-iter", "3"])
    assert code == EXIT_OK
    net, header = load_model(model)
    assert header["iteration"] == 3
    assert net.layers[0].weights.shape == (2, 1, 9)


def test_dump_shapes_and_stats(tmp_path, trained, capsys):
    out = tmp_path / "trajectories.json"
    assert main(["dump-shapes", "--in", str(trained.with_name(trained.name + ".shapes.json")), "--out", str(out)]) == EXIT_OK
    document = json.loads(out.read_text())
    assert [layer["layer"] for layer in document["layers"]] == [0, 2]
    trajectory = document["layers"][0]["channels"][0]["taps"][4]["trajectory"]
    assert [point[0] for point in trajectory] == [0, 2, 4]

    capsys.readouterr()
    assert main(["shape-stats", "--in", str(trained)]) == EXIT_OK
    stats = json.loads(capsys.readouterr().out)
    assert len(stats["layers"]) == 2
    assert set(stats["layers"][0]["spread"]) == {"p_x", "p_y"}


def test_heatmap_and_evaluate(tmp_path, trained, data_dir, capsys):
    prefix = tmp_path / "heat"
    code = main(["heatmap", "--model", str(trained), "--image", str(data_dir / IMAGES_FILE),
                 "--pixel", "3,4", "--class", "1", "--index", "2", "--out", str(prefix)])
    assert code == EXIT_OK
    assert (tmp_path / "heat.pgm").read_bytes().startswith(b"P5\n12 12\n255\n")
    first = (tmp_path / "heat.csv").read_bytes()
    assert main(["heatmap", "--model", str(trained), "--image", str(data_dir / IMAGES_FILE),
                 "--pixel", "3,4", "--class", "1", "--index", "2", "--out", str(prefix)]) == EXIT_OK
    assert (tmp_path / "heat.csv").read_bytes() == first

    capsys.readouterr()
    assert main(["evaluate", "--model", str(trained), "--data", str(data_dir)]) == EXIT_OK
    scores = json.loads(capsys.readouterr().out)
    assert set(scores) == {"pixel_accuracy", "mean_iou"}


def test_gradcheck_exit_codes(monkeypatch):
    assert main(["gradcheck", "--seed", "2", "--trials", "1"]) == EXIT_OK
    assert main(["gradcheck", "--trials", "0"]) == EXIT_ERROR
    monkeypatch.setattr(GradientChecker, "TOLERANCE", 0.0)
    assert main(["gradcheck", "--trials", "1"]) == EXIT_FAILED


@pytest.mark.parametrize("argv", [
    ["synth", "--out", "{tmp}/bad", "--size", "2"],
    ["train", "--data", "{tmp}/missing", "--out", "{tmp}/m.icm", "--max-iter", "1"],
    ["train", "--data", "{tmp}", "--out", "{tmp}/no/such/dir/m.icm", "--max-iter", "1"],
    ["evaluate", "--model", "{tmp}/missing.icm", "--data", "{tmp}"],
    ["dump-shapes", "--in", "{tmp}/missing.json", "--out", "{tmp}/out.json"],
])
def test_errors_exit_with_two(tmp_path, argv):
    assert main([arg.replace("{tmp}", str(tmp_path)) for arg in argv]) == EXIT_ERROR


def test_bad_pixel_argument(tmp_path, trained, data_dir):
    code = main(["heatmap", "--model", str(trained), "--image", str(data_dir / IMAGES_FILE),
                 "--pixel", "three", "--class", "0", "--out", str(tmp_path / "h")])
    assert code == EXIT_ERROR
    code = main(["heatmap", "--model", str(trained), "--image", str(data_dir / IMAGES_FILE),
                 "--pixel", "0,0", "--class", "0", "--index", "9", "--out", str(tmp_path / "h")])
    assert code == EXIT_ERROR


def test_missing_required_argument():
    with pytest.raises(SystemExit) as excinfo:
        main(["train"])
    assert excinfo.value.code == 2


def test_parse_pixel():
    assert parse_pixel("3,14") == (3, 14)
    with pytest.raises(ArgumentError):
        parse_pixel("3")


def test_preflight_messages(tmp_path):
    all_ok, messages = PreflightChecker.run_full_check(tmp_path, TrainConfig(max_iter=0), tmp_path / "m.icm")
    assert not all_ok
    assert messages[0].startswith("✗ Dataset")
    assert messages[1].startswith("✗ Config")
    assert messages[2].startswith("✓ Output")

import json
import subprocess
import sys

import numpy as np
import pytest

from qmap.cli import main
from qmap.dataset import procedural_base
from qmap.image import load_image, save_image

TINY = [
    "--config", "smoke",
    "--set", "n_bases=3",
    "--set", "image_size=160",
    "--set", "kinds=white_noise,gaussian_blur",
    "--set", "gen_channels=4,4,4,4",
    "--set", "pool_channels=4,4,4,4,4",
    "--set", "pool_fc=8",
    "--set", "gen_epochs=1",
    "--set", "pool_epochs=1",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    assert main(["smoke", "--out", str(root)] + TINY) == 0
    return root


def test_map_of_identical_images_is_one(tmp_path, capsys):
    path = tmp_path / "a.png"
    save_image(procedural_base(0, 0, 160)[:64, :64], path)
    assert main(["map", str(path), str(path), "--method", "ssim", "--out", str(tmp_path / "m.png")]) == 0
    out = capsys.readouterr().out
    assert "average 1.000000" in out
    assert load_image(tmp_path / "m.png").shape == (54, 54, 1)


def test_missing_input_names_the_path(tmp_path, capsys):
    missing = tmp_path / "nothing.png"
    assert main(["map", str(missing), str(missing)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("qmap map: error:") and "nothing.png" in err


def test_dry_run_prints_plan_without_writing(tmp_path, capsys):
    out = tmp_path / "plan"
    assert main(["smoke", "--dry-run", "--out", str(out), "--seed", "5", "--method", "ssim"] + TINY) == 0
    text = capsys.readouterr().out
    assert "stages synth labels train-gen train-pool eval" in text
    assert "seed=5" in text and "methods=ssim" in text
    assert not out.exists()


def test_bad_override_is_reported(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--set", "novalue"]) == 1
    assert "KEY=VALUE" in capsys.readouterr().err


def test_smoke_writes_summaries(workspace):
    for stage in ("synth", "labels", "train-gen", "train-pool", "eval"):
        assert (workspace / f"{stage}.cfg").exists()
        records = [json.loads(line) for line in (workspace / f"{stage}.jsonl").read_text().splitlines()]
        assert records[0]["stage"] == stage
    assert (workspace / "eval" / "predictions.csv").exists()


def test_predict_scores_an_image(workspace, tmp_path, capsys):
    img = tmp_path / "probe.png"
    save_image(procedural_base(9, 2, 160)[:96, :96], img)
    assert main(["predict", str(img), "--out", str(workspace)] + TINY) == 0
    score = float(capsys.readouterr().out.strip().splitlines()[-1])
    assert np.isfinite(score)
    qmap = load_image(workspace / "predict" / "probe_fsim_gm.png")
    assert qmap.shape == (96, 96, 1)


def test_changed_dataset_is_refused(workspace, capsys):
    victim = sorted((workspace / "data" / "dist").glob("*.png"))[0]
    original = victim.read_bytes()
    try:
        img = load_image(victim)
        save_image(1.0 - img, victim)
        assert main(["train-pool", "--out", str(workspace)] + TINY) == 1
        assert "fingerprint" in capsys.readouterr().err
    finally:
        victim.write_bytes(original)


def test_module_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "qmap", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("map", "synth", "labels", "train-gen", "train-pool", "predict", "eval", "study", "smoke"):
        assert cmd in res.stdout

"""End-to-end exit checks; each test prints one PASS/FAIL line (see conftest)."""

import os
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from _helpers import (
    check_graph,
    dpn_parameters,
    layer_graph,
    numeric_grad,
    pearson_loop,
    rank_average,
    rel_error,
    ssim_loop,
    unet_parameters,
)
from qmap import pipeline
from qmap.cli import main
from qmap.dataset import SplitSpec, load_labels, load_pair, materialize_labels, patch_arrays, split_references, synthesize
from qmap.eval import StudySetup, fit_logistic, patch_average_study, plcc, srcc, train_eval_maps
from qmap.maps import FrMethod, compute_map, pool_map, ssim_map
from qmap.models import (
    FusionMode,
    PoolNetSpec,
    UNetSpec,
    build_generator,
    build_pooler,
    predict_maps,
    train_generator,
    train_pooler,
)
from qmap.nn import KINDS, forward, loss_bce_sigmoid, loss_mse

pytestmark = pytest.mark.slow

DESK_POOL = PoolNetSpec(input_size=48, conv_channels=(8, 16, 16, 32, 32), fc_units=64)


@pytest.fixture(scope="module")
def desk_set(tmp_path_factory):
    """Ten procedural references, every distortion, with stored FSIM-GM maps."""
    root = tmp_path_factory.mktemp("desk")
    m = synthesize(root / "data", n_bases=10, seed=3)
    store = materialize_labels(m, "fsim_gm", root / "labels")
    maps = [store.load(r)[1] for r in store.rows]
    groups = [m.by_id()[r.id].reference for r in store.rows]
    return maps, groups, m


@pytest.mark.acceptance(1)
def test_ssim_matches_double_loop_oracle(record_property):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        ref = rng.random((64, 64))
        dist = np.clip(ref + rng.uniform(0.02, 0.3) * rng.standard_normal(ref.shape), 0, 1)
        ours = pool_map(ssim_map(dist, ref), "average")
        worst = max(worst, abs(ours - ssim_loop(dist * 255, ref * 255)))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max |diff| {worst:.2e} over 20 pairs in {elapsed:.1f} s")
    assert worst <= 1e-6
    assert elapsed < 30


@pytest.mark.acceptance(2)
def test_identical_inputs_give_exactly_one(record_property):
    rng = np.random.default_rng(7)
    bad = []
    for i in range(10):
        img = rng.random((48 + 8 * i, 64, 3))
        for method in FrMethod:
            if not np.all(compute_map(method, img, img) == 1.0):
                bad.append((i, method.value))
    record_property("detail", f"{40 - len(bad)}/40 image-method pairs exactly 1.0")
    assert not bad


@pytest.mark.acceptance(3)
def test_gradients_match_finite_differences(record_property):
    start = time.perf_counter()
    errors = {}
    for kind in KINDS:
        graph, inputs = layer_graph(kind, np.random.default_rng(31))
        errors[kind] = check_graph(graph, inputs, mode="train")
    rng = np.random.default_rng(32)
    z = rng.standard_normal((2, 1, 5, 5))
    t = rng.random(z.shape)
    errors["bce"] = rel_error(loss_bce_sigmoid(z, t)[1], numeric_grad(lambda: loss_bce_sigmoid(z, t)[0], z))
    p = rng.standard_normal((6, 1))
    y = rng.standard_normal((6, 1))
    errors["mse"] = rel_error(loss_mse(p, y)[1], numeric_grad(lambda: loss_mse(p, y)[0], p))
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    record_property("detail", f"{len(errors)} checks, worst {worst} {errors[worst]:.1e}, {elapsed:.1f} s")
    assert all(e < 1e-4 for e in errors.values())
    assert elapsed < 60


@pytest.mark.acceptance(4)
def test_architecture_contracts(record_property):
    gen = build_generator(seed=0)
    x = np.random.default_rng(0).random((1, 144, 144, 3))
    out, _ = forward(gen, x.transpose(0, 3, 1, 2).astype(np.float32), mode="eval")
    assert out.shape == (1, 1, 144, 144)
    assert out.min() > 0.0 and out.max() < 1.0
    for k in (1, 2, 3):
        pool = build_pooler(PoolNetSpec(input_channels=k))
        y, _ = forward(pool, np.zeros((2, k, 144, 144), dtype=np.float32))
        assert y.size == 2
    counts = {
        "unet": (gen.parameter_count(), unet_parameters((32, 64, 128, 256))),
        "dpn": (build_pooler().parameter_count(), dpn_parameters(1, 144, (32, 64, 128, 128, 128), 512)),
        "fc2": (build_pooler(PoolNetSpec(kind="fc2")).parameter_count(),
                (144 * 144 + 1) * 1024 + (1024 + 1) * 1024 + 1024 + 1),
    }
    record_property("detail", ", ".join(f"{k} {a} (hand {b})" for k, (a, b) in counts.items()))
    assert all(a == b for a, b in counts.values())


@pytest.mark.acceptance(5)
def test_generator_learns_on_bundled_set(tmp_path, record_property, monkeypatch):
    monkeypatch.delenv("QMAP_CACHE", raising=False)
    cfg = pipeline.RunConfig.resolve("smoke")
    ws = pipeline.Workspace(str(tmp_path), cfg)
    pipeline.run_synth(ws)
    pipeline.run_labels(ws)
    m = ws.manifest()
    store = load_labels(ws.label_root, "fsim_gm")
    size = cfg.get_int("patch_size")
    x, y, _, _ = patch_arrays(store, size, cfg.get_int("stride"))
    start = time.perf_counter()
    gen = build_generator(UNetSpec(stage_channels=cfg.get_ints("gen_channels")), seed=1)
    gen, hist = train_generator(gen, x, y, epochs=8, seed=2, batch_size=cfg.get_int("gen_batch"))
    elapsed = time.perf_counter() - start
    ratio = hist.best_loss / hist.monitor_loss[0]
    noisy = [e for e in m.entries if e.distortion_type == "white_noise"]
    means = [float(np.mean([predict_maps(gen, load_pair(m, e)[0][None]).mean() for e in noisy if e.level == lv]))
             for lv in range(1, 6)]
    rho = spearmanr(range(1, 6), means)[0]
    record_property("detail", f"{len(x)} patches, BCE {hist.monitor_loss[0]:.3f} -> {hist.best_loss:.3f} "
                              f"(ratio {ratio:.2f}), level means {np.round(means, 3).tolist()}, "
                              f"Spearman {rho:.0f}, {elapsed:.0f} s")
    assert len(x) >= 200
    assert ratio <= 0.5
    assert all(a > b for a, b in zip(means, means[1:]))
    assert rho == pytest.approx(-1.0, abs=1e-12)
    assert elapsed <= 600


@pytest.mark.acceptance(6)
def test_pooler_learns_from_true_maps(desk_set, record_property):
    maps, groups, m = desk_set
    scores = np.array([100.0 * mp.mean() for mp in maps])
    train, _ = split_references(sorted(set(groups)), SplitSpec(0.8, 0))
    keep = set(train)
    tr = [i for i, g in enumerate(groups) if g in keep]
    te = [i for i, g in enumerate(groups) if g not in keep]
    start = time.perf_counter()
    row = train_eval_maps(maps, scores, tr, te, StudySetup(spec=DESK_POOL, epochs=5, seed=0))
    elapsed = time.perf_counter() - start
    record_property("detail", f"held-out {len(te)} images: SRCC {row.srcc:.3f}, PLCC {row.plcc:.3f}, {elapsed:.0f} s")
    assert row.srcc >= 0.95 and row.plcc >= 0.95
    assert elapsed <= 600


@pytest.mark.acceptance(7)
def test_pixel_maps_beat_block_averages(desk_set, record_property):
    maps, groups, _ = desk_set
    target = [100.0 * (1.0 - 2.0 * mp.std()) for mp in maps]
    rows = patch_average_study(maps, target, groups, blocks=(1, 48),
                               setup=StudySetup(spec=DESK_POOL, epochs=10, seed=0))
    fine, coarse = rows
    record_property("detail", f"SRCC block 1 {fine.srcc:.3f} vs block 48 {coarse.srcc:.3f}")
    assert fine.srcc >= coarse.srcc


@pytest.mark.acceptance(8)
def test_stage_two_leaves_generator_untouched(record_property):
    rng = np.random.default_rng(8)
    x = rng.random((24, 48, 48, 3))
    gen, _ = train_generator(build_generator(UNetSpec(stage_channels=(8, 16, 32, 64)), seed=0),
                             x, rng.random((24, 48, 48)), epochs=1)
    gen.frozen = True
    before = gen.checksum()
    pool = build_pooler(DESK_POOL)
    trained, _ = train_pooler(pool, x, rng.uniform(10, 90, 24), epochs=2, frozen_gen=gen,
                              fusion=FusionMode(), batch_size=8)
    after = gen.checksum()
    record_property("detail", f"generator checksum {before[:12]} before, {after[:12]} after")
    assert after == before
    assert trained.checksum() != pool.checksum()


@pytest.mark.acceptance(9)
def test_metrics_and_logistic_oracles(record_property):
    rng = np.random.default_rng(9)
    worst = 0.0
    for trial in range(50):
        n = int(rng.integers(5, 40))
        a = rng.integers(0, 8, n).astype(float) if trial % 2 else rng.standard_normal(n)
        b = a + rng.integers(-3, 4, n) if trial % 3 == 0 else rng.standard_normal(n)
        worst = max(worst,
                    abs(srcc(a, b) - pearson_loop(list(rank_average(a)), list(rank_average(b)))),
                    abs(plcc(a, b) - pearson_loop(list(a), list(b))))
    q = np.linspace(0.0, 1.0, 60)
    eta = (85.0, 12.0, 0.45, 0.12)
    planted = eta[1] + (eta[0] - eta[1]) / (1.0 + np.exp(-(q - eta[2]) / eta[3]))
    _, mapped = fit_logistic(q, planted)
    rmse = float(np.sqrt(np.mean((mapped - planted) ** 2)))
    record_property("detail", f"max metric error {worst:.1e}, logistic RMSE {rmse:.1e}")
    assert worst <= 1e-12
    assert rmse < 1e-6


def _tree(root):
    files = {}
    for dirpath, _, names in os.walk(root):
        for name in names:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                data = fh.read()
            if name.endswith(".cfg"):
                data = b"\n".join(line for line in data.split(b"\n") if not line.startswith(b"workers="))
            files[os.path.relpath(path, root)] = data
    return files


@pytest.mark.acceptance(10)
def test_smoke_pipeline_is_deterministic(tmp_path, record_property, monkeypatch):
    monkeypatch.delenv("QMAP_CACHE", raising=False)
    runs = {"first": "1", "rerun": "1", "threads": "4"}
    for name, workers in runs.items():
        assert main(["smoke", "--config", "smoke", "--out", str(tmp_path / name), "--workers", workers]) == 0
    trees = {name: _tree(tmp_path / name) for name in runs}
    summaries = sorted(k for k in trees["first"] if k.endswith(".jsonl"))
    same_rerun = trees["rerun"] == trees["first"]
    same_threads = trees["threads"] == trees["first"]
    record_property("detail", f"{len(trees['first'])} files ({len(summaries)} summaries); rerun identical "
                              f"{same_rerun}, workers 4 identical {same_threads}")
    assert len(summaries) == 5
    assert same_rerun and same_threads

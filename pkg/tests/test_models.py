import numpy as np
import pytest

from _helpers import dpn_parameters, unet_parameters
from qmap.errors import DomainError, ShapeError, StateError
from qmap.maps import FrMethod
from qmap.models import (
    FusionMode,
    PoolKind,
    PoolNetSpec,
    UNetSpec,
    build_generator,
    build_pooler,
    pooler_features,
    predict_maps,
    predict_score,
    train_generator,
    train_pooler,
)
from qmap.nn import forward

TINY_GEN = UNetSpec(stage_channels=(4, 4, 8, 8))
TINY_POOL = dict(input_size=32, conv_channels=(4, 4, 8, 8, 8), fc_units=16)


def test_default_generator_parameter_count():
    gen = build_generator()
    assert gen.parameter_count() == unet_parameters((32, 64, 128, 256))
    assert gen.parameter_count() == 2_393_441


def test_default_pooler_parameter_counts():
    dpn = build_pooler()
    assert dpn.parameter_count() == dpn_parameters(1, 144, (32, 64, 128, 128, 128), 512)
    assert dpn.parameter_count() == 1_438_401
    fc2 = build_pooler(PoolNetSpec(kind="fc2"))
    assert fc2.parameter_count() == (144 * 144 * 1024 + 1024) + (1024 * 1024 + 1024) + 1025
    multi = build_pooler(FusionMode("multi", ("fsim_gm", "ssim")).pooler_spec())
    assert multi.parameter_count() == dpn_parameters(1, 144, (32, 64, 128, 128, 128), 512, streams=2)


def test_generator_maps_image_to_unit_interval_map():
    gen = build_generator(seed=1)
    x = np.random.default_rng(0).random((1, 144, 144, 3))
    out = predict_maps(gen, x)
    assert out.shape == (1, 144, 144)
    assert out.min() > 0.0 and out.max() < 1.0


def test_generator_rejects_sizes_off_the_pooling_grid():
    gen = build_generator(TINY_GEN)
    with pytest.raises(ShapeError, match="16"):
        predict_maps(gen, np.zeros((1, 40, 40, 3)))


def test_dpn_maps_stack_to_scalar():
    pool = build_pooler(PoolNetSpec(input_channels=2))
    y, _ = forward(pool, np.zeros((3, 2, 144, 144), dtype=np.float32))
    assert y.reshape(3, -1).shape == (3, 1)


def test_dpn_direct_accepts_raw_rgb_patch():
    pool = build_pooler(PoolNetSpec(kind="dpn_direct", input_channels=3, **TINY_POOL))
    y, _ = forward(pool, np.zeros((2, 3, 32, 32), dtype=np.float32))
    assert y.size == 2


def test_single_stream_fusion_stacks_channels():
    fusion = FusionMode("single", (FrMethod.FSIM_GM, FrMethod.SSIM))
    pool = build_pooler(fusion.pooler_spec(**TINY_POOL))
    assert pool.inputs == {"map": 2}
    assert "stream_concat" not in [n.name for n in pool.nodes]


def test_multi_stream_fusion_builds_one_trunk_per_map():
    fusion = FusionMode("multi", (FrMethod.FSIM_GM, FrMethod.SSIM))
    pool = build_pooler(fusion.pooler_spec(**TINY_POOL))
    assert pool.inputs == {"map0": 1, "map1": 1}
    x = {"map0": np.zeros((1, 1, 32, 32), np.float32), "map1": np.zeros((1, 1, 32, 32), np.float32)}
    y, _ = forward(pool, x)
    assert y.size == 1
    assert pool.node("stream_concat").inputs == ("s0_pool5", "s1_pool5")
    fc_in = pool.node("fc1").attrs["in_features"]
    assert fc_in == 2 * 8 * 1 * 1


def test_fusion_validation():
    with pytest.raises(DomainError):
        FusionMode("parallel")
    with pytest.raises(DomainError):
        FusionMode("single", ())
    with pytest.raises(DomainError):
        PoolNetSpec(conv_channels=(1, 2, 3))


def test_generator_learns_constant_map():
    rng = np.random.default_rng(0)
    x = rng.random((50, 16, 16, 3))
    y = np.ones((50, 16, 16))
    gen = build_generator(TINY_GEN, seed=0)
    trained, hist = train_generator(gen, x, y, epochs=15, lr=1e-2, seed=0, batch_size=10)
    assert hist.best_loss < hist.monitor_loss[0]
    assert predict_maps(trained, x).mean() == pytest.approx(1.0, abs=0.05)


def test_generator_training_is_reproducible():
    rng = np.random.default_rng(1)
    x = rng.random((12, 16, 16, 3))
    y = rng.random((12, 16, 16))
    gen = build_generator(TINY_GEN, seed=2)
    a, ha = train_generator(gen, x, y, epochs=2, seed=5, batch_size=4)
    b, hb = train_generator(gen, x, y, epochs=2, seed=5, batch_size=4)
    assert ha.to_dict() == hb.to_dict()
    assert a.checksum() == b.checksum()
    assert len(ha.monitor_loss) == 3 and len(ha.train_loss) == 2


def test_generator_training_input_contracts():
    gen = build_generator(TINY_GEN)
    x = np.zeros((2, 16, 16, 3))
    with pytest.raises(ShapeError):
        train_generator(gen, x, np.zeros((2, 15, 16)), epochs=1)
    with pytest.raises(DomainError):
        train_generator(gen, x, np.full((2, 16, 16), 1.5), epochs=1)
    frozen = gen.copy()
    frozen.frozen = True
    with pytest.raises(StateError):
        train_generator(frozen, x, np.zeros((2, 16, 16)), epochs=1)


def test_pooler_training_keeps_generator_frozen():
    rng = np.random.default_rng(3)
    gen = build_generator(UNetSpec(stage_channels=(4, 4, 4, 4)), seed=0)
    gen.frozen = True
    before = gen.checksum()
    pool = build_pooler(PoolNetSpec(**TINY_POOL))
    x = rng.random((8, 32, 32, 3))
    trained, hist = train_pooler(pool, x, rng.uniform(20, 80, 8), epochs=2, frozen_gen=gen,
                                 fusion=FusionMode(), batch_size=4)
    assert gen.checksum() == before
    assert trained.checksum() != pool.checksum()
    assert len(hist.monitor_loss) == 3


def test_pooler_rejects_scores_outside_range():
    pool = build_pooler(PoolNetSpec(**TINY_POOL))
    with pytest.raises(DomainError):
        train_pooler(pool, np.zeros((2, 32, 32)), [10.0, 101.0], epochs=1)


def test_pooler_fits_scores_from_maps():
    rng = np.random.default_rng(4)
    level = rng.uniform(0.2, 1.0, 64)
    maps = np.clip(level[:, None, None] + 0.05 * rng.standard_normal((64, 32, 32)), 0, 1)
    scores = 100 * maps.mean(axis=(1, 2))
    pool = build_pooler(PoolNetSpec(**TINY_POOL), seed=1)
    trained, hist = train_pooler(pool, maps, scores, epochs=12, seed=2, batch_size=8)
    assert hist.best_loss < 0.25 * hist.monitor_loss[0]


def test_pooler_features_without_generator():
    assert pooler_features(np.zeros((2, 8, 8))).shape == (2, 1, 8, 8)
    assert pooler_features(np.zeros((2, 8, 8, 3))).shape == (2, 3, 8, 8)


def test_predict_score_returns_score_and_stitched_map():
    gen = build_generator(UNetSpec(stage_channels=(4, 4, 4, 4)), seed=0)
    pool = build_pooler(PoolNetSpec(**TINY_POOL))
    img = np.random.default_rng(5).random((40, 56, 3))
    score, qmap = predict_score(gen, pool, FusionMode(), img, patch_size=32, stride=24)
    assert np.isfinite(score)
    assert qmap.shape == (40, 56)
    again, _ = predict_score(gen, pool, FusionMode(), img, patch_size=32, stride=24, batch_size=1)
    threaded, _ = predict_score(gen, pool, FusionMode(), img, patch_size=32, stride=24, batch_size=1, workers=3)
    assert threaded == again
    assert again == pytest.approx(score, rel=1e-5)


def test_predict_score_checks_patch_size():
    pool = build_pooler(PoolNetSpec(**TINY_POOL))
    with pytest.raises(ShapeError):
        predict_score(None, pool, None, np.zeros((64, 64, 1)), patch_size=48, stride=48)


def test_pool_kind_parse():
    assert PoolKind.parse("FC2") is PoolKind.FC2
    with pytest.raises(DomainError):
        PoolKind.parse("resnet")

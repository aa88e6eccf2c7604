import numpy as np
import pytest

from scaleseg.backbone import BackboneConfig, ScaleModel, init_params
from scaleseg.cloud import PartitionConfig, PointCloud, build_partitions
from scaleseg.pipeline import PipelineConfig
from scaleseg.scene import SceneSpec, generate_scene
from scaleseg.training import TrainConfig, evaluate, train_scale

VOXELS = (0.5, 0.3)


def make_scenes(count=2, n_points=1200, num_classes=3, seed=0):
    scenes = []
    for i in range(count):
        cloud = generate_scene(SceneSpec(extents=(5.0, 5.0, 2.5), num_objects=5,
                                         num_classes=num_classes,
                                         num_points=n_points, noise_sigma=0.02,
                                         rng_seed=seed + i))
        parts = build_partitions(cloud, PartitionConfig(voxel_sizes=VOXELS,
                                                        rng_seed=seed))
        scenes.append((cloud, parts))
    return scenes


def make_cfg(num_classes=3):
    bcfg = BackboneConfig(num_classes=num_classes, feature_dim=8,
                          attention_neighbors=4, encoder_stages=2,
                          downsample_factor=2.0, interp_neighbors=3)
    return PipelineConfig(backbone=bcfg, k_fuse=4)


def test_train_scale1_loss_decreases():
    scenes = make_scenes()
    pcfg = make_cfg()
    model = ScaleModel(init_params(pcfg.backbone, seed=1))
    tcfg = TrainConfig(epochs=8, batch_size=2, learning_rate=0.05,
                       momentum=0.9, rng_seed=0)
    losses = train_scale([model], 1, scenes, pcfg, tcfg)
    assert len(losses) == 8
    assert losses[-1] < losses[0]
    assert all(np.isfinite(losses))


def test_train_deterministic():
    scenes = make_scenes()
    pcfg = make_cfg()
    tcfg = TrainConfig(epochs=3, batch_size=2, learning_rate=0.05,
                       momentum=0.9, rng_seed=7)
    m1 = ScaleModel(init_params(pcfg.backbone, seed=1))
    l1 = train_scale([m1], 1, scenes, pcfg, tcfg)
    m2 = ScaleModel(init_params(pcfg.backbone, seed=1))
    l2 = train_scale([m2], 1, scenes, pcfg, tcfg)
    assert l1 == l2
    for k in m1.params:
        assert np.array_equal(m1.params[k], m2.params[k])


def test_zero_learning_rate_is_noop():
    scenes = make_scenes(count=1)
    pcfg = make_cfg()
    model = ScaleModel(init_params(pcfg.backbone, seed=2))
    before = {k: v.copy() for k, v in model.params.items()}
    tcfg = TrainConfig(epochs=2, batch_size=1, learning_rate=0.0,
                       momentum=0.9, rng_seed=0)
    train_scale([model], 1, scenes, pcfg, tcfg)
    for k in before:
        assert np.array_equal(model.params[k], before[k])


def test_frozen_lower_scale_untouched_by_scale2_training():
    scenes = make_scenes()
    pcfg = make_cfg()
    tcfg = TrainConfig(epochs=3, batch_size=2, learning_rate=0.05,
                       momentum=0.9, rng_seed=1)
    m1 = ScaleModel(init_params(pcfg.backbone, seed=1))
    train_scale([m1], 1, scenes, pcfg, tcfg)
    m1.freeze()
    snapshot = {k: v.copy() for k, v in m1.params.items()}
    m2 = ScaleModel(init_params(pcfg.backbone, seed=2, with_fusion=True,
                                k_fuse=pcfg.k_fuse))
    losses = train_scale([m1, m2], 2, scenes, pcfg, tcfg)
    assert losses[-1] < losses[0] * 1.2  # it trains at all
    for k in snapshot:
        assert np.array_equal(m1.params[k], snapshot[k])


def test_train_scale_preconditions():
    scenes = make_scenes(count=1)
    pcfg = make_cfg()
    tcfg = TrainConfig(epochs=1, batch_size=1, learning_rate=0.01,
                       momentum=0.9, rng_seed=0)
    frozen = ScaleModel(init_params(pcfg.backbone, seed=0))
    frozen.freeze()
    with pytest.raises(ValueError):
        train_scale([frozen], 1, scenes, pcfg, tcfg)  # trainee frozen
    unfrozen_low = ScaleModel(init_params(pcfg.backbone, seed=0))
    trainee = ScaleModel(init_params(pcfg.backbone, seed=1, with_fusion=True))
    with pytest.raises(ValueError):
        train_scale([unfrozen_low, trainee], 2, scenes, pcfg, tcfg)
    with pytest.raises(ValueError):
        train_scale([trainee], 5, scenes, pcfg, tcfg)  # scale out of range


def test_train_requires_labels():
    scenes = make_scenes(count=1)
    cloud, parts = scenes[0]
    bare = PointCloud(cloud.positions, cloud.colors)
    pcfg = make_cfg()
    tcfg = TrainConfig(epochs=1, batch_size=1, learning_rate=0.01,
                       momentum=0.9, rng_seed=0)
    model = ScaleModel(init_params(pcfg.backbone, seed=0))
    with pytest.raises(ValueError):
        train_scale([model], 1, [(bare, parts)], pcfg, tcfg)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.5)


def test_evaluate_rows_and_matrices():
    scenes = make_scenes(count=2)
    pcfg = make_cfg()
    models = [ScaleModel(init_params(pcfg.backbone, seed=i, with_fusion=(i > 0)))
              for i in range(len(VOXELS))]
    rows, mats = evaluate(models, scenes, pcfg)
    assert len(rows) == len(VOXELS)
    assert len(mats) == len(VOXELS)
    for i, row in enumerate(rows):
        assert row["scale"] == i + 1
        assert row["method"] == "fusion"
        for key in ("oacc", "macc", "miou"):
            assert 0.0 <= row[key] <= 1.0
        assert row["cumulative_ms"] > 0
    off_rows, _ = evaluate(models, scenes, pcfg, fusion_enabled=False)
    assert all(r["method"] == "no-fusion" for r in off_rows)
    # scale 1 never fuses, so its confusion counts agree either way
    assert rows[0]["oacc"] == off_rows[0]["oacc"]

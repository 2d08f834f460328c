import numpy as np
import pytest
import torch

from thermosr.config import ExperimentConfig, ModelConfig
from thermosr.io import save_scene, write_manifest
from thermosr.synth import SceneConfig, generate_pair

torch.set_num_threads(1)


def tiny_model_cfg(**overrides) -> ModelConfig:
    base = dict(stages=1, htl_depth=1, channels=8, heads=2, window=4)
    base.update(overrides)
    return ModelConfig(**base)


def desk_model_cfg(**overrides) -> ModelConfig:
    base = dict(stages=2, htl_depth=2, channels=32, heads=4)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_dataset(out_dir, seeds, scene_cfg: SceneConfig):
    """Generate scene pairs, write them plus a manifest, return the manifest path."""
    records = []
    for seed in seeds:
        pair = generate_pair(seed, scene_cfg)
        records.append(save_scene(pair, out_dir, f"pair{seed:04d}"))
    manifest = out_dir / "manifest.json"
    write_manifest(manifest, scene_cfg.scale, scene_cfg.spec().provenance(), records)
    return manifest


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Four 96-px scenes with a shared manifest; small enough for loop tests."""
    out = tmp_path_factory.mktemp("scenes96")
    cfg = SceneConfig(size=96, steps=8, n_shapes=6)
    return make_dataset(out, range(4), cfg), cfg


def small_experiment(manifest, **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig()
    cfg.model = tiny_model_cfg()
    cfg.batch = 2
    cfg.patch = 16
    cfg.checkpoint_every = 0
    cfg.data = str(manifest)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg

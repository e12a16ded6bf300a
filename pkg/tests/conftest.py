import numpy as np
import pytest

from aset.filters.descriptor import FeatureDescriptor
from aset.tensor import FeatureMatrix, normalize_column


def random_instance(rng, l, d, C):
    """Unit-norm centered features with every class present at least twice."""
    y = np.concatenate([np.arange(1, C + 1), np.arange(1, C + 1), rng.integers(1, C + 1, l - 2 * C)])
    rng.shuffle(y)
    # class-dependent shift so that some features carry signal
    shifts = rng.normal(size=(C, d))
    raw = rng.normal(size=(l, d)) + shifts[y - 1]
    phi = FeatureMatrix.empty(l)
    for j in range(d):
        col, mean, norm = normalize_column(raw[:, j])
        phi = phi.append(col, FeatureDescriptor.band(j), mean, norm)
    return phi, y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy_problem(seed=0, per_class=15, composed=False):
    """Small synthetic scene split into train and spatially excluded holdout."""
    from aset.evaluation import spatial_exclusion, stratified_sample
    from aset.synth import SceneSpec, composed_scene_spec, generate

    params = dict(height=40, width=40, n_classes=4, n_bands=6, region_scale=100,
                  confuser_pairs=((3, 4),), seed=seed)
    spec = composed_scene_spec(**params) if composed else SceneSpec(**params)
    cube, samples = generate(spec)
    train, rest = stratified_sample(samples, per_class, np.random.default_rng(seed))
    return cube, train, spatial_exclusion(rest, train, 3, cube.shape)


def toy_config(**overrides):
    from aset.active_set import RunConfig
    from aset.filters.sampler import SamplerConfig

    params = dict(max_iterations=8, seed=0,
                  sampler=SamplerConfig(bands_per_minibatch=4, filters_per_band=3))
    params.update(overrides)
    return RunConfig(**params)

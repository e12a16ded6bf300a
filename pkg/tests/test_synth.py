import numpy as np
import pytest

from aset.active_set import RunConfig, run
from aset.errors import InfeasibleConfigError
from aset.evaluation import spatial_exclusion, stratified_sample
from aset.synth import (
    SceneSpec, class_spectra, composed_scene_spec, design_spectra, generate, window_stddev_by_class,
)
from aset.tensor import LabeledSamples


def test_same_seed_bit_identical():
    a, sa = generate(SceneSpec(seed=3))
    b, sb = generate(SceneSpec(seed=3))
    assert a.to_array().tobytes() == b.to_array().tobytes()
    assert sa.labels.tobytes() == sb.labels.tobytes()
    c, _ = generate(SceneSpec(seed=4))
    assert a.to_array().tobytes() != c.to_array().tobytes()


@pytest.mark.parametrize("spec", [SceneSpec(), composed_scene_spec(), SceneSpec(seed=5, n_classes=3,
                                                                                 confuser_pairs=((1, 2),))])
def test_labels_complete_and_balanced(spec):
    cube, samples = generate(spec)
    assert len(samples) == cube.height * cube.width
    assert len(set(samples.pixels)) == len(samples)
    counts = samples.class_counts()
    assert counts.min() > 0 and counts.max() <= 3 * counts.min()


def test_default_scene_shape():
    cube, samples = generate(SceneSpec())
    assert cube.shape == (96, 96) and cube.n_bands == 16 and samples.n_classes == 5


def test_confuser_design_spectra_exactly_equal():
    spec = SceneSpec()
    spectra = design_spectra(spec)
    a, b = spec.confuser_pairs[0]
    assert spectra[a - 1].tobytes() == spectra[b - 1].tobytes()
    assert len({row.tobytes() for row in spectra}) == spec.n_classes - 1


def test_confuser_means_close_and_texture_differs():
    spec = SceneSpec()
    cube, samples = generate(spec)
    means = class_spectra(cube, samples)
    a, b = spec.confuser_pairs[0]
    pair_gap = np.max(np.abs(means[a - 1] - means[b - 1]))
    assert pair_gap < 0.03
    others = [c for c in range(1, spec.n_classes + 1) if c not in (a, b)]
    assert min(np.max(np.abs(means[a - 1] - means[c - 1])) for c in others) > 3 * pair_gap
    # designed scale: 3x3 windows, averaged over bands
    sd = np.mean([window_stddev_by_class(cube, samples, k, 3) for k in range(spec.n_bands)], axis=0)
    assert abs(sd[a - 1] - sd[b - 1]) >= 0.03
    assert min(sd[a - 1], sd[b - 1]) >= max(sd[c - 1] for c in others) + 0.03


def test_no_confusers_noise_free_is_perfectly_separable():
    cube, samples = generate(SceneSpec(confuser_pairs=(), within_class_noise=0.0))
    rng = np.random.default_rng(0)
    train, rest = stratified_sample(samples, 20, rng)
    test = spatial_exclusion(rest, train, 3, cube.shape)
    res = run(cube, train, RunConfig(max_iterations=0), test)
    assert res.trace.records[-1].kappa_on_holdout == 1.0


def test_confuser_pair_spectral_baseline_near_chance():
    cube, samples = generate(SceneSpec())
    pair = samples.subset(np.isin(samples.labels, [4, 5]))
    pair = LabeledSamples(pair.rows, pair.cols, pair.labels - 3, 2)
    train, rest = stratified_sample(pair, 30, np.random.default_rng(0))
    test = spatial_exclusion(rest, train, 3, cube.shape)
    res = run(cube, train, RunConfig(max_iterations=0), test)
    assert res.trace.records[-1].kappa_on_holdout <= 0.2


def test_auxiliary_height_band():
    cube, _ = generate(SceneSpec(auxiliary_height=True))
    assert cube.n_bands == 17 and cube.auxiliary_ids() == [16]


@pytest.mark.parametrize("bad", [dict(n_classes=1), dict(n_bands=3), dict(confuser_pairs=((1, 9),)),
                                 dict(region_scale=5000)])
def test_infeasible_specs(bad):
    with pytest.raises(InfeasibleConfigError):
        generate(SceneSpec(**bad))

"""Active-set discovery of spatial filters for spectral image classification.

A group-lasso multinomial logistic classifier is grown one feature at a
time: random candidate filters are scored by how strongly they violate the
optimality conditions of the current fit, and the worst violator joins the
model.
"""

__version__ = "0.1.0"

from .active_set import RunConfig, RunTrace, depth_gamma, depth_histogram, depth_of, run
from .evaluation import confusion, kappa, spatial_exclusion, stratified_sample
from .filters import FeatureDescriptor, SamplerConfig, StructuringElement, materialize
from .glasso import ModelState, fit, load_model, objective, predict, save_model, violation_scores
from .synth import SceneSpec, generate
from .tensor import FeatureMatrix, ImageCube, LabeledSamples

__all__ = [
    "FeatureDescriptor", "FeatureMatrix", "ImageCube", "LabeledSamples", "ModelState",
    "RunConfig", "RunTrace", "SamplerConfig", "SceneSpec", "StructuringElement", "confusion",
    "depth_gamma", "depth_histogram", "depth_of", "fit", "generate", "kappa", "load_model",
    "materialize", "objective", "predict", "run", "save_model", "spatial_exclusion",
    "stratified_sample", "violation_scores",
]

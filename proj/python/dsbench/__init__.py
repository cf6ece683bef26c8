"""Discrete Schrodinger bridge benchmark toolkit."""

import json

from . import _core
from ._core import (
    CorruptFileError,
    NumericalError,
    ValidationError,
    gaussian_kernel,
    histogram_csv,
    load_test_set,
    shape_score,
    trend_score,
    uniform_kernel,
    uniform_power,
)

__version__ = "0.1.0"


def resolve_config(ini="", overrides=()):
    return json.loads(_core.resolve_config(ini, list(overrides)))


def generate(pair_path, test_path, ini="", overrides=()):
    return _core.generate(ini, list(overrides), pair_path, test_path)


def train(pair_path, checkpoint_path, log_path, ini="", overrides=()):
    return _core.train(ini, list(overrides), pair_path, checkpoint_path, log_path)


def evaluate(pair_path, test_path, checkpoint_path="", ini="", overrides=(), conditional=True):
    """Score a checkpoint, or the benchmark's own sampler when no checkpoint is given."""
    return json.loads(_core.evaluate(ini, list(overrides), pair_path, test_path, checkpoint_path, conditional))


def verify(pair_path="", ini="", overrides=()):
    return _core.verify(ini, list(overrides), pair_path)

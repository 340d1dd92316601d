# -*- coding:utf-8 -*-
"""
Covariance-separable synthetic data: every sample is an N x D matrix whose
rows are z L_c^T with z iid standard normal, so all classes share the zero
mean and differ only in their covariance L_c L_c^T.
"""

from pydantic import BaseModel, ConfigDict, Field
from utils.errors import ConfigError
from utils.rng import stream
from utils import checkpoint
from engine.linalg import sym_eig, qr_thin
from typing import Optional, Tuple
from . import Dataset
import numpy as np
import logging

SPECTRUM_RANGE = (0.1, 10.0)


class SynthSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    classes: int = Field(4, ge=1)
    feature_dim: int = Field(16, ge=1)
    sites: int = Field(64, ge=1)
    train: int = Field(2000, ge=0)
    test: int = Field(500, ge=0)
    seed: int = 0
    factors: Optional[Tuple[Tuple[Tuple[float, ...], ...], ...]] = None


def random_factor(dim, rng):
    """Random rotation times a log-uniform spectrum."""
    q, _ = qr_thin(rng.standard_normal((dim, dim)))
    spectrum = np.exp(rng.uniform(np.log(SPECTRUM_RANGE[0]), np.log(SPECTRUM_RANGE[1]), size=dim))
    return q * np.sqrt(spectrum)


def class_factors(spec: SynthSpec):
    if spec.factors is not None:
        factors = [np.asarray(f, dtype=np.float64) for f in spec.factors]
        if len(factors) != spec.classes:
            raise ConfigError('{} covariance factors for {} classes'.format(len(factors), spec.classes))
    else:
        rng = stream(spec.seed, 'synth', 0)
        factors = [random_factor(spec.feature_dim, rng) for _ in range(spec.classes)]

    for c, factor in enumerate(factors):
        if factor.shape != (spec.feature_dim, spec.feature_dim):
            raise ConfigError('Class {} factor has shape {}, expected {}x{}'.format(c, factor.shape, spec.feature_dim, spec.feature_dim))
        if sym_eig(factor @ factor.T).S[-1] <= 0:
            raise ConfigError('Class {} covariance is not SPD'.format(c))

    return factors


def _draw(spec, factors, count, rng):
    labels = rng.permutation(np.arange(count) % spec.classes)
    z = rng.standard_normal((count, spec.sites, spec.feature_dim))
    features = np.empty_like(z)
    for c, factor in enumerate(factors):
        mask = labels == c
        features[mask] = z[mask] @ factor.T
    return Dataset(features, labels, spec.classes)


def gen_synthetic(spec: SynthSpec):
    """(train, test) datasets of N x D feature matrices, balanced over classes."""
    factors = class_factors(spec)
    train = _draw(spec, factors, spec.train, stream(spec.seed, 'synth', 1))
    test = _draw(spec, factors, spec.test, stream(spec.seed, 'synth', 2))
    logging.getLogger('socnn').info('Generated {} train / {} test samples, {} classes, {}x{} features'.format(
        spec.train, spec.test, spec.classes, spec.sites, spec.feature_dim))
    return train, test


def save_synthetic(path, spec: SynthSpec, train, test):
    tensors = {
        'spec/shape': np.array([spec.classes, spec.feature_dim, spec.sites], dtype=np.float64),
        'train/features': train.inputs,
        'train/labels': train.labels.astype(np.float64),
        'test/features': test.inputs,
        'test/labels': test.labels.astype(np.float64),
    }
    for c, factor in enumerate(class_factors(spec)):
        tensors['factors/{}'.format(c)] = factor
    checkpoint.save(path, tensors)


def load_synthetic(path):
    tensors = checkpoint.load(path)
    try:
        classes = int(tensors['spec/shape'][0])
        train = Dataset(tensors['train/features'], tensors['train/labels'].astype(np.int64), classes)
        test = Dataset(tensors['test/features'], tensors['test/labels'].astype(np.int64), classes)
    except KeyError as e:
        raise ConfigError('{} is not a synthetic dataset file (missing {})'.format(path, e))
    return train, test

"""Long-running training experiments; run with `pytest -m slow`."""

import os

import numpy as np
import pytest

from data import Dataset
from data.augment import FlipCrop
from data.cifar import load_cifar10, batches_folder, TRAIN_FILES
from data.synthetic import SynthSpec, gen_synthetic
from engine.tensor import set_default_dtype
from models import resolve, build_model
from optim.sgd import SgdConfig
from optim.training import Trainer, two_phase_train, evaluate
from utils.rng import stream

pytestmark = pytest.mark.slow

CIFAR_DIR = os.environ.get('SOCNN_CIFAR', 'data')


@pytest.fixture(scope='module')
def separable():
    return gen_synthetic(SynthSpec(classes=4, feature_dim=16, sites=64, train=2000, test=500, seed=0))


def train_synth(name, train, test, tmp_path, **optim):
    spec = resolve(name, sites=train.inputs.shape[1], dim=train.inputs.shape[2], classes=train.classes)
    model = build_model(spec, stream(0, 'init'))
    cfg = SgdConfig(**{'initial_lr': 0.05, 'momentum': 0.9, 'batch_size': 32, 'max_epochs': 30, **optim})
    trainer = Trainer(model, cfg, train, test, 0, out=str(tmp_path / name), wall_clock=False)
    two_phase_train(trainer)
    return model


def test_second_order_head_separates_covariances(separable, tmp_path):
    train, test = separable
    cdu = train_synth('synth-cdu', train, test, tmp_path)
    mean = train_synth('synth-mean', train, test, tmp_path)

    assert evaluate(cdu, test)[1] >= 0.90
    assert abs(evaluate(mean, test)[1] - 0.25) <= 0.10


def test_memorizes_ten_samples(separable, tmp_path):
    train, test = separable
    tiny = train.subset(0, 10)
    model = train_synth('synth-cdu', tiny, tiny, tmp_path, batch_size=10, max_epochs=300, initial_lr=0.1, plateau_patience=50)

    assert evaluate(model, tiny)[1] == 1.0

    shuffled = Dataset(test.inputs, np.random.default_rng(3).permutation(test.labels), test.classes)
    assert abs(evaluate(model, shuffled)[1] - 0.25) <= 0.08


@pytest.mark.skipif(not os.path.exists(os.path.join(batches_folder(CIFAR_DIR), TRAIN_FILES[0])),
                    reason='CIFAR-10 batches not downloaded (socnn fetch-cifar)')
def test_cifar_subset(tmp_path):
    set_default_dtype('float32')
    try:
        train, val, test = load_cifar10(CIFAR_DIR, train_limit=5000, val_size=500, dtype=np.float32)
        cfg = SgdConfig(initial_lr=0.01, momentum=0.9, batch_size=64, max_epochs=20)
        accuracy = {}
        for name in ('fitnet', 'so-cnn-2-same'):
            model = build_model(resolve(name), stream(0, 'init'))
            trainer = Trainer(model, cfg, train, val, 0, FlipCrop(True, True, 4), out=str(tmp_path / name), wall_clock=False)
            two_phase_train(trainer)
            accuracy[name] = evaluate(model, test)[1]
    finally:
        set_default_dtype('float64')

    assert accuracy['fitnet'] > 0.35 and accuracy['so-cnn-2-same'] > 0.35
    assert accuracy['so-cnn-2-same'] >= accuracy['fitnet'] - 0.01

# -*- coding:utf-8 -*-
"""
Finite-difference checks over every layer and the built-in models at toy
scale. Each layer check projects the layer output on a fixed random tensor
so the loss is a scalar, then compares input and parameter gradients with
central differences.
"""

from engine.autodiff import Graph, finite_diff_check, check_parameters
from engine.linalg import sym_eig, qr_thin
from engine import functional as F
from layers import solayers as so
from layers.nn import Conv2d, MaxPool, Relu, Dense, softmax_cross_entropy
from layers.cdu import CduConfig, CduHead, FusionSpec
from utils.rng import stream
from collections import namedtuple
from . import resolve, build_model
import numpy as np
import logging

LAYER_TOLERANCE = 1e-5
MODEL_TOLERANCE = 1e-4
LAYER_SEEDS = 10
MODEL_SEEDS = 2
MODEL_COORDS = 3
MODEL_STEP = 1e-6
ROBUST_MIN_GAP = 1e-3

PASSED = 'passed'
FAILED = 'failed'
SKIPPED = 'skipped'

CheckResult = namedtuple('CheckResult', ['name', 'status', 'worst', 'threshold', 'worst_at', 'skipped'])


def _layer_errors(layer, x, rng):
    """Worst input- and parameter-gradient error of `layer` at `x`, tagged with the offending tensor."""
    weights = rng.standard_normal(layer_output_shape(layer, x))

    def through_layer(graph, node):
        return F.total(F.hadamard(layer(graph, node), graph.constant(weights)))

    errors = {'{}.input'.format(layer.name): finite_diff_check(through_layer, x)}
    if layer.params:
        errors.update(check_parameters(lambda graph: through_layer(graph, graph.constant(x)), layer.params))
    return errors


def layer_output_shape(layer, x):
    graph = Graph()
    return layer(graph, graph.constant(x)).shape


def _spd_with_gaps(d, rng):
    q, _ = qr_thin(rng.standard_normal((d, d)))
    spectrum = 0.5 + 0.5 * np.arange(d) + rng.uniform(0, 0.25, size=d)
    return (q * spectrum) @ q.T


def degenerate(sigma, min_gap=ROBUST_MIN_GAP):
    """True when two eigenvalues, or an eigenvalue and the rectifier's kink at 0, are closer than `min_gap`."""
    s = sym_eig(sigma).S
    return bool(np.min(np.abs(np.diff(s)), initial=np.inf) < min_gap or s[-1] < min_gap)


class _Layer:
    """Wraps a graph function as a parameterless layer."""
    params = ()

    def __init__(self, name, fn):
        self.name = name
        self.fn = fn

    def __call__(self, graph, node):
        return self.fn(graph, node)


def check_rectify(sigma, alpha=so.DEFAULT_ALPHA):
    """Robust rectifier error at `sigma`, or None when its spectrum is degenerate."""
    if degenerate(sigma):
        return None
    layer = _Layer('robust', lambda graph, node: so.rectify(node, alpha))
    return _layer_errors(layer, sigma, np.random.default_rng(0))


def _cov(rng):
    def sigma_and_mean(graph, node):
        sigma, mu = so.covariance(node)
        return F.concat([F.flatten(sigma), mu])
    return _layer_errors(_Layer('cov', sigma_and_mean), rng.standard_normal((1, 7, 5)), rng)


def _augment(rng):
    layer = _Layer('augment', lambda g, n: so.augment(*so.covariance(n), beta=so.DEFAULT_BETA))
    return _layer_errors(layer, rng.standard_normal((1, 7, 5)), rng)


def _o2t(rng):
    m = rng.standard_normal((1, 6, 6))
    return _layer_errors(so.O2T('o2t', 6, 4, rng), m + np.swapaxes(m, -1, -2), rng)


def _pv(rng):
    y = rng.standard_normal((1, 6, 6))
    return _layer_errors(so.PV('pv', 6, 4, rng), y + np.swapaxes(y, -1, -2), rng)


def _robust(rng):
    return check_rectify(_spd_with_gaps(5, rng))


def _transition(rng):
    return _layer_errors(so.Transition('transition', 5, 4, rng), rng.standard_normal((1, 6, 5)), rng)


def _conv(rng):
    return _layer_errors(Conv2d('conv', 2, 3, rng), rng.standard_normal((1, 5, 5, 2)), rng)


def _pool(rng):
    return _layer_errors(MaxPool('pool'), rng.standard_normal((1, 5, 5, 2)), rng)


def _relu(rng):
    x = rng.uniform(0.1, 1.0, size=(3, 5)) * rng.choice([-1.0, 1.0], size=(3, 5))
    return _layer_errors(Relu('relu'), x, rng)


def _dense(rng):
    return _layer_errors(Dense('dense', 5, 4, rng), rng.standard_normal((3, 5)), rng)


def _softmax_ce(rng):
    labels = rng.integers(0, 5, size=4)
    return {'softmax_ce.input': finite_diff_check(lambda g, n: softmax_cross_entropy(n, labels), rng.standard_normal((4, 5)))}


def _cdu(fusion):
    def check(rng):
        head = CduHead('cdu_{}'.format(fusion.lower()), CduConfig(o2t_dims=(4,), pv_dim=4), 8, rng, 2, FusionSpec.parse(fusion))
        return _layer_errors(head, rng.standard_normal((1, 9, 8)), rng)
    return check


LAYER_CHECKS = (
    ('cov', _cov),
    ('augment', _augment),
    ('o2t', _o2t),
    ('pv', _pv),
    ('robust', _robust),
    ('transition', _transition),
    ('conv', _conv),
    ('pool', _pool),
    ('relu', _relu),
    ('dense', _dense),
    ('softmax_ce', _softmax_ce),
    ('cdu_v-sum', _cdu('V-sum')),
    ('cdu_d-concat', _cdu('D-concat')),
)

TOY_MODELS = (
    ('fitnet', dict(scale=8, input_size=16)),
    ('so-cnn-2-same', dict(scale=8, input_size=16)),
    ('so-cnn-1-same', dict(scale=8, input_size=16, groups=2, fusion='D-average')),
    ('synth-cdu', dict(sites=9, dim=4, classes=3)),
    ('synth-cdu', dict(sites=9, dim=4, classes=3, robust=True, transition=4)),
    ('synth-mean', dict(sites=9, dim=4, classes=3)),
)


def _summarize(name, errors, threshold, skipped=0):
    if not errors:
        return CheckResult(name, SKIPPED, float('nan'), threshold, None, skipped)
    worst_at, worst = max(errors.items(), key=lambda item: item[1])
    status = PASSED if worst < threshold else FAILED
    return CheckResult(name, status, worst, threshold, worst_at, skipped)


def check_layer(index, name, check, seed=0, seeds=LAYER_SEEDS):
    errors = {}
    skipped = 0
    for s in range(seeds):
        result = check(stream(seed, 'gradcheck', index, s))
        if result is None:
            skipped += 1
            continue
        for key, value in result.items():
            errors[key] = max(errors.get(key, 0.0), value)
    return _summarize(name, errors, LAYER_TOLERANCE, skipped)


def check_model(index, name, options, seed=0, seeds=MODEL_SEEDS):
    """
    Parameter gradients of a toy model on two random samples. Coordinates
    that disagree are checked again with a ten times smaller step; a ReLU or
    pooling kink crossed by the step disagrees less at the smaller step, a
    wrong backward rule does not.
    """
    errors = {}
    key = len(LAYER_CHECKS) + index
    for s in range(seeds):
        rng = stream(seed, 'gradcheck', key, s)
        spec = resolve(name, **options)
        model = build_model(spec, rng)
        inputs = rng.standard_normal((2,) + spec.input_shape)
        labels = rng.integers(0, spec.classes, size=2)

        def measure(h):
            return check_parameters(lambda graph: model.loss(graph, inputs, labels)[1], model.parameters(),
                                    h=h, max_coords=MODEL_COORDS, rng=stream(seed, 'gradcheck', key, s, 1))

        report = measure(MODEL_STEP)
        if max(report.values()) >= MODEL_TOLERANCE:
            retry = measure(MODEL_STEP / 10)
            report = {k: min(v, retry[k]) for k, v in report.items()}
        for k, value in report.items():
            errors[k] = max(errors.get(k, 0.0), value)

    label = name if not options else '{}[{}]'.format(name, ','.join('{}={}'.format(k, v) for k, v in sorted(options.items())))
    return _summarize(label, errors, MODEL_TOLERANCE)


def run_gradcheck(seed=0, layers=True, models=True):
    """Every layer check, then every toy model; returns the list of CheckResult."""
    logger = logging.getLogger('socnn')
    results = []
    if layers:
        for index, (name, check) in enumerate(LAYER_CHECKS):
            results.append(check_layer(index, name, check, seed))
            logger.debug('gradcheck {}: {}'.format(name, results[-1].status))
    if models:
        for index, (name, options) in enumerate(TOY_MODELS):
            results.append(check_model(index, name, options, seed))
            logger.debug('gradcheck {}: {}'.format(results[-1].name, results[-1].status))
    return results

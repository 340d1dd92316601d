# -*- coding:utf-8 -*-
"""
Covariance Descriptor Units: Cov -> O2T* -> PV stacks, channel groups feeding
one unit each, and the fusion of their outputs either as vectors (V-) or as
second-order descriptors (D-) ahead of a shared PV layer.
"""

from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from utils.errors import ShapeError, ConfigError
from engine import functional as F
from engine.tensor import sym
from typing import Literal, Tuple
from .solayers import Cov, O2T, PV, DEFAULT_ALPHA, DEFAULT_BETA
from .base import Layer
import numpy as np
import logging

VECTOR = 'vector'
DESCRIPTOR = 'descriptor'
METHODS = ('sum', 'average', 'concat')


class CduConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    o2t_dims: Tuple[int, ...] = ()
    pv_dim: int
    mean_augment: bool = True
    beta: float = DEFAULT_BETA
    robust: bool = False
    alpha: float = DEFAULT_ALPHA
    orthonormal_o2t: bool = False
    relu_after: Tuple[str, ...] = ('pv',)

    @field_validator('o2t_dims', 'relu_after', mode='before')
    @classmethod
    def _split_text(cls, value):
        if isinstance(value, str):
            return tuple(item.strip() for item in value.split(',') if item.strip())
        return value

    @field_validator('o2t_dims')
    @classmethod
    def _positive_dims(cls, value):
        if any(d < 1 for d in value):
            raise ValueError('o2t_dims must all be >= 1, got {}'.format(value))
        return value

    @field_validator('pv_dim')
    @classmethod
    def _positive_pv(cls, value):
        if value < 1:
            raise ValueError('pv_dim must be >= 1, got {}'.format(value))
        return value

    @model_validator(mode='after')
    def _known_positions(self):
        allowed = self.relu_positions()
        unknown = [p for p in self.relu_after if p not in allowed]
        if unknown:
            raise ValueError('relu_after: unknown positions {}, expected some of {}'.format(unknown, allowed))
        return self

    def relu_positions(self):
        return ('cov',) + tuple('o2t{}'.format(i + 1) for i in range(len(self.o2t_dims))) + ('pv',)


class FusionSpec(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    stage: Literal['vector', 'descriptor'] = VECTOR
    method: Literal['sum', 'average', 'concat'] = 'concat'

    @classmethod
    def parse(cls, label):
        """'V-concat', 'D-sum', 'd-avg', ... as used in result tables."""
        try:
            stage, method = label.split('-', 1)
            stage = {'v': VECTOR, 'd': DESCRIPTOR}[stage.strip().lower()]
            method = {'avg': 'average'}.get(method.strip().lower(), method.strip().lower())
            return cls(stage=stage, method=method)
        except (ValueError, KeyError) as e:
            raise ConfigError('Invalid fusion label {!r}: {}'.format(label, e))

    @property
    def label(self):
        return '{}-{}'.format('V' if self.stage == VECTOR else 'D', 'avg' if self.method == 'average' else self.method)


def _group_width(d, n):
    if n < 1 or d % n:
        raise ConfigError('Cannot split {} channels into {} equal groups'.format(d, n))
    return d // n


def split_channels_forward(x, n):
    """n contiguous channel groups of equal width: group g holds [g*D/n, (g+1)*D/n)."""
    width = _group_width(x.shape[-1], n)
    if n == 1:
        return [x]
    return [x[..., g * width:(g + 1) * width] for g in range(n)]


def fuse_vectors_forward(vs, method):
    if method == 'concat':
        return np.concatenate(vs, axis=-1)
    if len({v.shape for v in vs}) != 1:
        raise ShapeError('{} fusion needs equal lengths, got {}'.format(method, [v.shape for v in vs]))

    total = vs[0].copy()
    for v in vs[1:]:
        total = total + v
    return total / len(vs) if method == 'average' else total


def fuse_descriptors_forward(ms, method):
    if method != 'concat':
        return sym(fuse_vectors_forward(ms, method))

    sides = [m.shape[-1] for m in ms]
    for m in ms:
        if m.shape[-1] != m.shape[-2]:
            raise ShapeError('descriptor fusion expects square matrices, got {}'.format(m.shape))
    out = np.zeros(ms[0].shape[:-2] + (sum(sides), sum(sides)), dtype=ms[0].dtype)
    offset = 0
    for m, side in zip(ms, sides):
        out[..., offset:offset + side, offset:offset + side] = m
        offset += side
    return out


def split_channels(x, n):
    """Graph version of split_channels_forward; each group is its own node."""
    parts = split_channels_forward(x.value, n)
    if n == 1:
        return [x]

    width = x.shape[-1] // n

    def rule_for(start):
        def rule(g):
            full = np.zeros_like(x.value)
            full[..., start:start + width] = g
            return (full,)
        return rule

    return [x.graph.record('split_channels[{}/{}]'.format(g + 1, n), (x,), np.ascontiguousarray(part), rule_for(g * width))
            for g, part in enumerate(parts)]


def fuse(nodes, stage, method):
    """Fuses branch outputs with fuse_vectors_forward or fuse_descriptors_forward."""
    if len(nodes) == 1:
        return nodes[0]

    values = [node.value for node in nodes]
    if stage == VECTOR:
        value = fuse_vectors_forward(values, method)
    else:
        value = fuse_descriptors_forward(values, method)

    if method == 'concat':
        offsets = np.cumsum([0] + [v.shape[-1] for v in values])
        if stage == VECTOR:
            rule = lambda g: tuple(g[..., offsets[i]:offsets[i + 1]] for i in range(len(nodes)))
        else:
            rule = lambda g: tuple(g[..., offsets[i]:offsets[i + 1], offsets[i]:offsets[i + 1]] for i in range(len(nodes)))
    else:
        factor = 1.0 / len(nodes) if method == 'average' else 1.0
        if stage == DESCRIPTOR:
            rule = lambda g: tuple(sym(g) * factor for _ in nodes)
        else:
            rule = lambda g: tuple(g * factor for _ in nodes)

    return nodes[0].graph.record('fuse_{}_{}'.format(stage, method), tuple(nodes), value, rule)


def descriptor_side(cfg: CduConfig, input_channels):
    if cfg.o2t_dims:
        return cfg.o2t_dims[-1]
    return input_channels + 1 if cfg.mean_augment else input_channels


class Cdu(Layer):
    """One Cov -> O2T(dims...) -> PV chain, optionally without its PV."""
    kind = 'cdu'

    def __init__(self, name, cfg: CduConfig, input_channels, rng, with_pv=True, group='head'):
        super().__init__(name, group)
        if input_channels < 1:
            raise ConfigError('{}: input channels must be >= 1'.format(name))

        self.cfg = cfg
        self.cov = Cov('{}.cov'.format(name), cfg.mean_augment, cfg.beta, cfg.robust, cfg.alpha, group)
        self.o2ts = []
        din = input_channels + 1 if cfg.mean_augment else input_channels
        for i, dout in enumerate(cfg.o2t_dims):
            self.o2ts.append(O2T('{}.o2t{}'.format(name, i + 1), din, dout, rng, cfg.orthonormal_o2t, group))
            din = dout

        self.side = din
        self.pv = PV('{}.pv'.format(name), din, cfg.pv_dim, rng, group) if with_pv else None
        for layer in self.layers():
            self.params.extend(layer.params)

    def layers(self):
        return [self.cov] + self.o2ts + ([self.pv] if self.pv else [])

    def _relu(self, node, position):
        return F.relu(node) if position in self.cfg.relu_after else node

    def descriptor(self, graph, x):
        node = self._relu(self.cov(graph, x), 'cov')
        for i, layer in enumerate(self.o2ts):
            node = self._relu(layer(graph, node), 'o2t{}'.format(i + 1))
        return node

    def forward(self, graph, x):
        node = self.descriptor(graph, x)
        if self.pv is None:
            return node
        return self._relu(self.pv(graph, node), 'pv')

    def describe(self):
        return ' - '.join(layer.describe() for layer in self.layers())


class CduHead(Layer):
    """
    Splits B x N x D fibers into `groups` channel groups, runs one CDU per
    group and fuses the results.

    Descriptor-stage fusion shares a single PV whose output size equals the
    per-branch descriptor side, for every method.
    """
    kind = 'cdu_head'

    def __init__(self, name, cfg: CduConfig, input_channels, rng, groups=1, fusion=None, group='head'):
        super().__init__(name, group)
        if groups < 1 or input_channels % groups:
            raise ConfigError('{}: {} channels do not split into {} equal groups'.format(name, input_channels, groups))

        self.cfg = cfg
        self.groups = groups
        self.fusion = fusion or FusionSpec()
        width = input_channels // groups
        descriptor_stage = self.fusion.stage == DESCRIPTOR
        self.branches = [Cdu('{}.cdu{}'.format(name, g + 1), cfg, width, rng, with_pv=not descriptor_stage, group=group)
                         for g in range(groups)]

        self.shared_pv = None
        if descriptor_stage:
            side = self.branches[0].side
            fused_side = side * groups if self.fusion.method == 'concat' else side
            if cfg.pv_dim != side:
                logging.getLogger('socnn').info('{}: descriptor fusion uses PV({}) instead of PV({})'.format(name, side, cfg.pv_dim))
            self.shared_pv = PV('{}.pv'.format(name), fused_side, side, rng, group)

        for layer in self.layers():
            self.params.extend(layer.params)

    def layers(self):
        return self.branches + ([self.shared_pv] if self.shared_pv else [])

    @property
    def output_dim(self):
        if self.shared_pv is not None:
            return self.shared_pv.weights.shape[1]
        if self.fusion.method == 'concat':
            return self.cfg.pv_dim * self.groups
        return self.cfg.pv_dim

    def forward(self, graph, x):
        parts = split_channels(x, self.groups)
        if self.shared_pv is None:
            return fuse([branch(graph, part) for branch, part in zip(self.branches, parts)], VECTOR, self.fusion.method)

        fused = fuse([branch.descriptor(graph, part) for branch, part in zip(self.branches, parts)], DESCRIPTOR, self.fusion.method)
        node = self.shared_pv(graph, fused)
        return F.relu(node) if 'pv' in self.cfg.relu_after else node

    def describe(self):
        text = ' | '.join(branch.describe() for branch in self.branches)
        if self.groups > 1:
            text = '{} x[{}] {}'.format(self.groups, self.branches[0].describe(), self.fusion.label)
        if self.shared_pv is not None:
            text += ' - ' + self.shared_pv.describe()
        return text

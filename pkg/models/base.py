# -*- coding:utf-8 -*-

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator
from utils.errors import ConfigError, CheckpointError
from layers.nn import Conv2d, MaxPool, Relu, Flatten, MeanPool, Dense, softmax_cross_entropy
from layers.solayers import Sites, Transition
from layers.cdu import CduConfig, FusionSpec, CduHead
from engine.autodiff import Graph
from typing import Literal, Optional, Tuple
import numpy as np
import logging

BACKBONE = 'backbone'
HEAD = 'head'


class ModelSpec(BaseModel):
    """
    Declarative network: optional conv backbone (3x3 convs + ReLU, 2x2 max
    pool after each block), optional transition, then a pooling head and a
    single classifier FC. `hidden` lists first-order FC layers between the
    pooled features and the classifier; second-order heads have none.
    """
    model_config = ConfigDict(extra='forbid', frozen=True)

    name: str
    inputs: Literal['image', 'features'] = 'image'
    input_shape: Tuple[int, ...] = (32, 32, 3)
    backbone: Tuple[Tuple[int, ...], ...] = ()
    transition: Optional[int] = None
    pooling: Literal['flatten', 'mean', 'cdu'] = 'flatten'
    hidden: Tuple[int, ...] = ()
    cdu: Optional[CduConfig] = None
    groups: int = 1
    fusion: FusionSpec = FusionSpec()
    classes: int = 10

    @model_validator(mode='after')
    def _consistent(self):
        if self.inputs == 'image' and len(self.input_shape) != 3:
            raise ValueError('image inputs need an (H, W, C) shape, got {}'.format(self.input_shape))
        if self.inputs == 'features' and (len(self.input_shape) != 2 or self.backbone):
            raise ValueError('feature inputs need an (N, D) shape and no backbone')
        if self.pooling == 'cdu' and self.cdu is None:
            raise ValueError('a cdu head needs a cdu config')
        if self.pooling == 'cdu' and self.hidden:
            raise ValueError('second-order heads replace the hidden FC layers, got hidden={}'.format(self.hidden))
        if self.transition is not None and self.pooling != 'cdu':
            raise ValueError('a transition layer only precedes a CDU head')
        if self.classes < 2:
            raise ValueError('need at least 2 classes')
        return self

    @property
    def feature_channels(self):
        if self.inputs == 'features':
            return self.input_shape[1]
        return self.backbone[-1][-1] if self.backbone else self.input_shape[2]

    @property
    def cdu_channels(self):
        return self.transition or self.feature_channels

    def replace(self, **changes):
        try:
            return ModelSpec(**{**self.model_dump(), **changes})
        except ValidationError as e:
            raise ConfigError('Invalid model spec {}: {}'.format(self.name, e))


class Model:
    def __init__(self, spec: Optional[ModelSpec], layers):
        self.spec = spec
        self.layers = list(layers)

    @classmethod
    def from_spec(cls, spec: ModelSpec, rng):
        layers = []
        channels = spec.input_shape[-1]
        height, width = spec.input_shape[:2] if spec.inputs == 'image' else (None, None)

        for b, block in enumerate(spec.backbone):
            for i, cout in enumerate(block):
                layers.append(Conv2d('conv{}_{}'.format(b + 1, i + 1), channels, cout, rng, group=BACKBONE))
                layers.append(Relu('relu{}_{}'.format(b + 1, i + 1), group=BACKBONE))
                channels = cout
            layers.append(MaxPool('pool{}'.format(b + 1), group=BACKBONE))
            height, width = (height + 1) // 2, (width + 1) // 2

        if spec.pooling == 'flatten':
            layers.append(Flatten('flatten'))
            features = channels * (height * width if spec.inputs == 'image' else spec.input_shape[0])
        else:
            if spec.transition is not None:
                layers.append(Transition('transition', channels, spec.transition, rng))
                channels = spec.transition
            if spec.inputs == 'image':
                layers.append(Sites('sites'))
            if spec.pooling == 'mean':
                layers.append(MeanPool('meanpool'))
                features = channels
            else:
                head = CduHead('cdu', spec.cdu, channels, rng, spec.groups, spec.fusion)
                layers.append(head)
                features = head.output_dim

        for i, units in enumerate(spec.hidden):
            layers.append(Dense('fc{}'.format(i + 1), features, units, rng))
            layers.append(Relu('fc{}_relu'.format(i + 1)))
            features = units

        layers.append(Dense('classifier', features, spec.classes, rng))
        return cls(spec, layers)

    def parameters(self):
        return [p for layer in self.layers for p in layer.params]

    def param_count(self):
        return sum(layer.param_count() for layer in self.layers)

    def breakdown(self):
        return [(layer.name, layer.describe(), layer.param_count()) for layer in self.layers]

    def forward(self, graph, x):
        node = x
        for layer in self.layers:
            node = layer(graph, node)
        return node

    def loss(self, graph, inputs, labels, normalizer=None):
        logits = self.forward(graph, graph.constant(inputs, name='inputs'))
        return logits, softmax_cross_entropy(logits, labels, normalizer)

    def predict(self, inputs, batch_size=256):
        chunks = []
        for start in range(0, len(inputs), batch_size):
            graph = Graph()
            chunks.append(self.forward(graph, graph.constant(inputs[start:start + batch_size], name='inputs')).value)
        return np.concatenate(chunks) if chunks else np.zeros((0, self.spec.classes))

    def set_trainable(self, groups):
        for parameter in self.parameters():
            parameter.trainable = parameter.group in groups

        trainable = [p for p in self.parameters() if p.trainable]
        if not trainable:
            raise ConfigError('No trainable parameters in groups {}'.format(sorted(groups)))
        return trainable

    def state(self):
        return {p.name: p.value for p in self.parameters()}

    def load_state(self, tensors):
        for parameter in self.parameters():
            if parameter.name not in tensors:
                raise CheckpointError('Checkpoint has no tensor {}'.format(parameter.name))
            value = tensors[parameter.name]
            if value.shape != parameter.shape:
                raise CheckpointError('Checkpoint tensor {} has shape {}, model expects {}'.format(
                    parameter.name, value.shape, parameter.shape))
            parameter.value = np.ascontiguousarray(value, dtype=parameter.value.dtype)
            parameter.zero_grad()


class ModelBuilder:
    """Resolves a model name of one family into a ModelSpec."""

    def spec(self, name, **options) -> ModelSpec:
        raise NotImplementedError('spec method must be implemented')


def count_params(spec) -> int:
    if isinstance(spec, Model):
        return spec.param_count()
    return Model.from_spec(spec, np.random.default_rng(0)).param_count()


def attach_transition(spec: ModelSpec, out_dim: int) -> ModelSpec:
    if spec.pooling != 'cdu':
        raise ConfigError('{}: a transition layer needs a CDU head'.format(spec.name))
    if out_dim < 1 or out_dim % spec.groups:
        raise ConfigError('{}: transition width {} does not split into {} CDU groups'.format(spec.name, out_dim, spec.groups))

    logging.getLogger('socnn').info('{}: transition {} -> {}'.format(spec.name, spec.feature_channels, out_dim))
    return spec.replace(transition=out_dim)


def scaled(width, scale):
    return max(1, width // scale)

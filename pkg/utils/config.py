# -*- coding:utf-8 -*-
"""
Run configuration.

Files are flat `key = value` lines with `#` comments; dotted keys nest
(`optim.initial_lr = 0.01`). Values stay strings until the pydantic models
coerce them, and unknown keys are rejected.
"""

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from utils.errors import ConfigError
from optim.sgd import SgdConfig
from data.synthetic import SynthSpec
from typing import Literal, Optional, Tuple
import os


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    name: str = 'so-cnn-2-same'
    scale: int = Field(1, ge=1)
    input_size: int = Field(32, ge=1)
    groups: Optional[int] = Field(None, ge=1)
    fusion: Optional[str] = None
    transition: Optional[int] = Field(None, ge=1)
    o2t_dims: Optional[Tuple[int, ...]] = None
    pv_dim: Optional[int] = None
    mean_augment: Optional[bool] = None
    beta: Optional[float] = None
    robust: Optional[bool] = None
    alpha: Optional[float] = None
    orthonormal_o2t: Optional[bool] = None
    relu_after: Optional[Tuple[str, ...]] = None

    @field_validator('o2t_dims', 'relu_after', mode='before')
    @classmethod
    def _split_text(cls, value):
        if isinstance(value, str):
            return tuple(item.strip() for item in value.split(',') if item.strip())
        return value

    def overrides(self):
        return self.model_dump(exclude={'name', 'scale', 'input_size'}, exclude_none=True)


class DataConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    kind: Literal['cifar10', 'synthetic'] = 'cifar10'
    path: str = 'data'
    train_limit: Optional[int] = Field(None, ge=1)
    val_size: Optional[int] = Field(None, ge=0)
    flip: bool = True
    crop: bool = True
    pad: int = Field(4, ge=0)
    synth: SynthSpec = SynthSpec()


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    threads: int = Field(1, ge=1)
    resume: bool = False
    wall_clock: bool = True


class RunConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    seed: int = Field(0, ge=0, lt=2 ** 64)
    out: Optional[str] = None
    precision: Literal['float64', 'float32'] = 'float64'
    model: ModelConfig = ModelConfig()
    data: DataConfig = DataConfig()
    optim: SgdConfig = SgdConfig()
    train: TrainConfig = TrainConfig()


def parse_flat(text):
    """Nested dict from `key = value` lines."""
    tree = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError('line {}: expected `key = value`, got {!r}'.format(number, raw))

        key, value = (part.strip() for part in line.split('=', 1))
        parts = key.split('.')
        if not all(parts):
            raise ConfigError('line {}: malformed key {!r}'.format(number, key))

        node = tree
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError('line {}: {} is both a value and a section'.format(number, key))
        if parts[-1] in node:
            raise ConfigError('line {}: duplicate key {}'.format(number, key))
        node[parts[-1]] = None if value.lower() in ('', 'none') else value
    return tree


def _merge(base, extra):
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def build_config(tree=None, **overrides) -> RunConfig:
    tree = _merge(tree or {}, {k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as e:
        raise ConfigError('Invalid configuration:\n{}'.format(e))


def load_config(path=None, **overrides) -> RunConfig:
    tree = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError('Config file {} does not exist'.format(path))
        with open(path, 'r') as f:
            tree = parse_flat(f.read())
    return build_config(tree, **overrides)


def _format(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (tuple, list)):
        return ','.join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def flatten(tree, prefix=''):
    lines = []
    for key, value in tree.items():
        name = '{}{}'.format(prefix, key)
        if isinstance(value, dict):
            lines.extend(flatten(value, name + '.'))
        elif value is not None:
            lines.append('{} = {}'.format(name, _format(value)))
    return lines


def dump_config(cfg: RunConfig) -> str:
    return '\n'.join(flatten(cfg.model_dump(exclude={'data': {'synth': {'factors'}}}))) + '\n'


def write_config(cfg: RunConfig, path):
    with open(path, 'w') as f:
        f.write(dump_config(cfg))

# -*- coding:utf-8 -*-
from utils.errors import ConfigError
from layers.cdu import CduConfig
from .fitnet import fitnet_backbone
from .base import ModelBuilder, ModelSpec, scaled
import re

PLANS = ('same', 'div2', 'x2', 'quarter')
PLAN_START = 50
COV_SIDE = 64


def o2t_plan(k, plan, side=COV_SIDE):
    """
    O2T widths for k layers:
        same     every layer keeps the covariance side
        div2     start at 50 * 2^(k-1) and halve down to 50
        x2       start at 50 and double
        quarter  side, side/2, side/4, ...
    """
    if not 1 <= k <= 5:
        raise ConfigError('SO-CNN supports 1 to 5 O2T layers, got {}'.format(k))

    if plan == 'same':
        return (side,) * k
    if plan == 'div2':
        return tuple(PLAN_START * 2 ** (k - 1 - i) for i in range(k))
    if plan == 'x2':
        return tuple(PLAN_START * 2 ** i for i in range(k))
    if plan == 'quarter':
        return tuple(max(1, side // 2 ** i) for i in range(k))

    raise ConfigError('Unknown O2T plan {!r}, expected one of {}'.format(plan, PLANS))


def so_head_spec(name, o2t_dims, pv_dim, scale=1, input_size=32, classes=10):
    backbone = fitnet_backbone(scale)
    return ModelSpec(
        name=name,
        input_shape=(input_size, input_size, 3),
        backbone=backbone,
        pooling='cdu',
        cdu=CduConfig(o2t_dims=tuple(scaled(d, scale) for d in o2t_dims), pv_dim=scaled(pv_dim, scale)),
        classes=classes
    )


def build_so_cnn(k, plan, scale=1, input_size=32, classes=10) -> ModelSpec:
    """FitNet backbone, CDU head with k O2T layers per plan, PV sized like the last O2T."""
    dims = o2t_plan(k, plan)
    return so_head_spec('so-cnn-{}-{}'.format(k, plan), dims, dims[-1], scale, input_size, classes)


class SoCnn(ModelBuilder):
    """
    so-cnn-<k>-<plan>     k O2T layers following `plan`
    so-pv-<p>             Cov directly into PV(p)
    so-o2t-<m>-pv-<p>     Cov -> O2T(m) -> PV(p)
    """

    def spec(self, name, scale=1, input_size=32, classes=10, **options):
        match = re.fullmatch(r'so-cnn-(\d+)-(\w+)', name)
        if match:
            return build_so_cnn(int(match.group(1)), match.group(2), scale, input_size, classes)

        match = re.fullmatch(r'so-pv-(\d+)', name)
        if match:
            return so_head_spec(name, (), int(match.group(1)), scale, input_size, classes)

        match = re.fullmatch(r'so-o2t-(\d+)-pv-(\d+)', name)
        if match:
            return so_head_spec(name, (int(match.group(1)),), int(match.group(2)), scale, input_size, classes)

        raise NotImplementedError('Unknown second-order model {}'.format(name))

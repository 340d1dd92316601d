# -*- coding:utf-8 -*-
from .base import ModelBuilder, ModelSpec, scaled

FITNET_BLOCKS = ((16, 16, 16), (32, 32, 32), (48, 48, 64))
FITNET_FC = 500


def fitnet_backbone(scale=1):
    return tuple(tuple(scaled(w, scale) for w in block) for block in FITNET_BLOCKS)


def build_fitnet_baseline(scale=1, input_size=32, classes=10) -> ModelSpec:
    """Three blocks of three 3x3 convolutions, then FC(500) and the classifier."""
    return ModelSpec(
        name='fitnet',
        input_shape=(input_size, input_size, 3),
        backbone=fitnet_backbone(scale),
        pooling='flatten',
        hidden=(scaled(FITNET_FC, scale),),
        classes=classes
    )


class Fitnet(ModelBuilder):
    def spec(self, name, scale=1, input_size=32, classes=10, **options):
        if name != 'fitnet':
            raise NotImplementedError('Unknown FitNet variant {}'.format(name))
        return build_fitnet_baseline(scale, input_size, classes)

# -*- coding:utf-8 -*-
from layers.cdu import CduConfig
from .base import ModelBuilder, ModelSpec

MEAN_HIDDEN = 32


class Synth(ModelBuilder):
    """
    Heads fed directly with N x D feature matrices:
        synth-cdu    Cov -> O2T(D) -> PV(D) -> FC
        synth-mean   mean pool -> FC(32) -> FC, the first-order control
    """

    def spec(self, name, sites=64, dim=16, classes=4, **options):
        if name == 'synth-cdu':
            return ModelSpec(name=name, inputs='features', input_shape=(sites, dim), pooling='cdu',
                             cdu=CduConfig(o2t_dims=(dim,), pv_dim=dim), classes=classes)
        if name == 'synth-mean':
            return ModelSpec(name=name, inputs='features', input_shape=(sites, dim), pooling='mean',
                             hidden=(MEAN_HIDDEN,), classes=classes)

        raise NotImplementedError('Unknown synthetic head {}'.format(name))

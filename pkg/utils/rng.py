# -*- coding:utf-8 -*-
"""
All randomness derives from one 64-bit seed. Each consumer draws from its own
SeedSequence child keyed by (consumer, *keys), e.g. ('shuffle', epoch), so
data order, initialization and augmentation are reproducible independently.
"""

from utils.errors import ConfigError
import numpy as np

CONSUMERS = {
    'init': 0,
    'shuffle': 1,
    'augment': 2,
    'synth': 3,
    'split': 4,
    'gradcheck': 5,
}


def stream(seed, consumer, *keys) -> np.random.Generator:
    if consumer not in CONSUMERS:
        raise ConfigError('Unknown random stream {!r}'.format(consumer))
    if not 0 <= int(seed) < 2 ** 64:
        raise ConfigError('Seed must be an unsigned 64-bit integer, got {}'.format(seed))

    key = (CONSUMERS[consumer],) + tuple(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))

# -*- coding:utf-8 -*-

from utils.errors import ConfigError
import numpy as np


class Dataset:
    def __init__(self, inputs, labels, classes):
        if len(inputs) != len(labels):
            raise ConfigError('{} inputs but {} labels'.format(len(inputs), len(labels)))

        self.inputs = inputs
        self.labels = np.asarray(labels, dtype=np.int64)
        self.classes = classes

    def __len__(self):
        return len(self.labels)

    def subset(self, start, stop=None):
        return Dataset(self.inputs[start:stop], self.labels[start:stop], self.classes)

    def holdout(self, size):
        """Split off the last `size` samples as a validation set."""
        if not 0 < size < len(self):
            raise ConfigError('Cannot hold out {} of {} samples'.format(size, len(self)))
        return self.subset(0, len(self) - size), self.subset(len(self) - size)

    def astype(self, dtype):
        return Dataset(self.inputs.astype(dtype, copy=False), self.labels, self.classes)

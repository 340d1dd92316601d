# -*- coding:utf-8 -*-

from pydantic import BaseModel, ConfigDict, Field
from utils.errors import NumericError
from engine.autodiff import STIEFEL
from engine.linalg import qr_thin
from engine.tensor import sym
from typing import Optional
import numpy as np
import logging

ORTHONORMAL_TOLERANCE = 1e-6


class SgdConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    initial_lr: float = Field(0.01, gt=0)
    plateau_factor: float = Field(0.1, gt=0, lt=1)
    plateau_patience: int = Field(8, ge=1)
    plateau_threshold: float = Field(1e-5, ge=0)
    momentum: float = Field(0.0, ge=0)
    batch_size: int = Field(64, ge=1)
    max_epochs: int = Field(20, ge=0)
    orthonormal: bool = True
    two_phase: bool = False
    phase1_epochs: int = Field(3, ge=1)
    phase2_lr: Optional[float] = Field(None, gt=0)

    @property
    def fine_tune_lr(self):
        return self.phase2_lr if self.phase2_lr is not None else self.initial_lr / 10


def sgd_step(params, grads, lr):
    """W <- W - lr * G for each pair, in place."""
    for p, g in zip(params, grads):
        p -= lr * g


def stiefel_step(w, g, lr):
    """
    Riemannian SGD step for a matrix with orthonormal rows: project G onto the
    tangent space, take the step, retract with a positive-diagonal QR.
    """
    w64 = w.astype(np.float64)
    drift = np.abs(w64 @ w64.T - np.eye(w.shape[0])).max() if w.size else 0.0
    if drift > ORTHONORMAL_TOLERANCE:
        raise NumericError('stiefel_step: rows are not orthonormal (drift {:.3g})'.format(drift))

    g64 = g.astype(np.float64)
    tangent = g64 - sym(g64 @ w64.T) @ w64
    if not np.any(tangent):
        return w.copy()

    q, _ = qr_thin((w64 - lr * tangent).T)
    return np.ascontiguousarray(q.T).astype(w.dtype)


class Sgd:
    """
    Plain SGD with optional momentum for euclidean parameters; Stiefel
    parameters take stiefel_step (no momentum) unless `orthonormal` is off, in
    which case they are updated exactly like euclidean ones.
    """

    def __init__(self, momentum=0.0, orthonormal=True):
        self.momentum = momentum
        self.orthonormal = orthonormal
        self.buffers = {}

    def step(self, pairs, lr):
        for parameter, grad in pairs:
            if not parameter.trainable:
                continue

            if parameter.manifold == STIEFEL and self.orthonormal:
                parameter.value = stiefel_step(parameter.value, grad, lr)
                continue

            if self.momentum:
                buf = self.buffers.get(parameter.name)
                buf = grad.copy() if buf is None else self.momentum * buf + grad
                self.buffers[parameter.name] = buf
                grad = buf

            sgd_step([parameter.value], [grad], lr)

    def state(self):
        return {'momentum/{}'.format(name): buf for name, buf in self.buffers.items()}

    def load_state(self, tensors):
        self.buffers = {name.split('/', 1)[1]: value.copy() for name, value in tensors.items() if name.startswith('momentum/')}


class PlateauScheduler:
    """
    Multiplies the learning rate by `factor` once the validation loss has not
    improved on the best value by more than `threshold` for `patience`
    consecutive epochs; the counter restarts after each reduction.
    """

    def __init__(self, lr, factor=0.1, patience=8, threshold=1e-5):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, loss):
        if loss < self.best - self.threshold:
            self.best = loss
            self.bad_epochs = 0
            return False

        self.bad_epochs += 1
        if self.bad_epochs < self.patience:
            return False

        self.lr *= self.factor
        self.bad_epochs = 0
        logging.getLogger('socnn').info('Validation loss stalled for {} epochs, lr -> {:.3g}'.format(self.patience, self.lr))
        return True

    def state(self):
        return {'lr': self.lr, 'best': self.best, 'bad_epochs': self.bad_epochs}

    def load_state(self, state):
        self.lr = float(state['lr'])
        self.best = float(state['best'])
        self.bad_epochs = int(state['bad_epochs'])


def plateau_events(losses, patience=8, factor=0.1, threshold=1e-5):
    """Indices of the epochs at which the scheduler reduces the rate."""
    scheduler = PlateauScheduler(1.0, factor, patience, threshold)
    return [i for i, loss in enumerate(losses) if scheduler.step(loss)]

# -*- coding:utf-8 -*-

from concurrent.futures import ThreadPoolExecutor
from utils.errors import ConfigError
from utils.metrics import MetricsWriter
from utils.rng import stream
from utils import checkpoint
from engine.autodiff import Graph
from layers.nn import softmax_cross_entropy
from models.base import BACKBONE, HEAD
from .sgd import Sgd, PlateauScheduler, SgdConfig
import numpy as np
import logging, time, os

LAST = 'last.ckpt'
BEST = 'best.ckpt'


def evaluate(model, dataset, batch_size=256):
    """(mean loss, top-1 accuracy, per-class accuracy list)."""
    if len(dataset) == 0:
        return float('nan'), float('nan'), []

    logits = model.predict(dataset.inputs, batch_size)
    graph = Graph()
    loss = float(softmax_cross_entropy(graph.constant(logits), dataset.labels).value)
    predicted = logits.argmax(axis=1)
    hits = predicted == dataset.labels
    per_class = [float(hits[dataset.labels == c].mean()) if np.any(dataset.labels == c) else float('nan')
                 for c in range(dataset.classes)]
    return loss, float(hits.mean()), per_class


class Trainer:
    def __init__(self, model, cfg: SgdConfig, train, val, seed=0, augment=None, threads=1, out=None, wall_clock=True):
        self.model = model
        self.cfg = cfg
        self.train = train
        self.val = val
        self.seed = seed
        self.augment = augment
        self.threads = max(1, threads)
        self.out = out
        self.wall_clock = wall_clock
        self.optimizer = Sgd(cfg.momentum, cfg.orthonormal)
        self.scheduler = None
        self.epoch = 0
        self.phase = 1
        self.best_acc = -np.inf
        self.best_loss = np.inf
        self.metrics = MetricsWriter(os.path.join(out, 'metrics.csv')) if out else None
        self.logger = logging.getLogger('socnn')

    def _shard_grads(self, inputs, labels, normalizer):
        graph = Graph()
        _, loss = self.model.loss(graph, inputs, labels, normalizer)
        graph.backward(loss)
        return float(loss.value), graph.parameter_grads()

    def train_step(self, inputs, labels, lr):
        """One minibatch; shard gradients are reduced in shard order."""
        shards = [s for s in np.array_split(np.arange(len(labels)), self.threads) if len(s)]
        jobs = [(inputs[s], labels[s], len(labels)) for s in shards]
        if len(jobs) == 1:
            results = [self._shard_grads(*jobs[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
                results = list(pool.map(lambda job: self._shard_grads(*job), jobs))

        total = {}
        order = []
        for _, pairs in results:
            for parameter, grad in pairs:
                if id(parameter) not in total:
                    total[id(parameter)] = grad.copy()
                    order.append(parameter)
                else:
                    total[id(parameter)] += grad

        self.optimizer.step([(p, total[id(p)]) for p in order], lr)
        return sum(loss for loss, _ in results)

    def run_epoch(self, lr):
        order = stream(self.seed, 'shuffle', self.epoch).permutation(len(self.train))
        augment_rng = stream(self.seed, 'augment', self.epoch)
        dtype = self.model.parameters()[0].value.dtype
        total = 0.0
        for start in range(0, len(order), self.cfg.batch_size):
            idx = order[start:start + self.cfg.batch_size]
            inputs = self.train.inputs[idx].astype(dtype, copy=False)
            if self.augment is not None:
                inputs = self.augment(inputs, augment_rng)
            loss = self.train_step(inputs, self.train.labels[idx], lr)
            total += loss * len(idx)
            self.logger.debug('epoch {} batch {}: loss {:.5f}'.format(self.epoch + 1, start // self.cfg.batch_size, loss))
        return total / max(1, len(order))

    @property
    def validates(self):
        return self.val is not None and len(self.val) > 0

    def _improved(self, val_loss, val_acc):
        """Best checkpoint rule: higher validation accuracy, or lower training loss when there is no validation data."""
        if self.validates:
            if val_acc > self.best_acc:
                self.best_acc = val_acc
                return True
            return False
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            return True
        return False

    def fit(self, epochs, lr, groups):
        """Train `epochs` more epochs updating only the parameters of `groups`."""
        self.model.set_trainable(groups)
        if self.scheduler is None:
            self.scheduler = PlateauScheduler(lr, self.cfg.plateau_factor, self.cfg.plateau_patience, self.cfg.plateau_threshold)

        for _ in range(epochs):
            started = time.time()
            lr = self.scheduler.lr
            train_loss = self.run_epoch(lr)
            if self.validates:
                val_loss, val_acc, _ = evaluate(self.model, self.val)
            else:
                val_loss, val_acc = train_loss, float('nan')
            self.epoch += 1
            self.scheduler.step(val_loss)

            row = {
                'epoch': self.epoch,
                'train_loss': float(train_loss),
                'val_loss': float(val_loss),
                'val_acc': float(val_acc),
                'lr': float(lr),
                'wall_seconds': round(time.time() - started, 3) if self.wall_clock else 0.0
            }
            self.logger.info('epoch {epoch}: train {train_loss:.4f} val {val_loss:.4f} acc {val_acc:.4f} lr {lr:.3g}'.format(**row))
            if self.metrics:
                self.metrics.append(row)
            if self.out:
                self.save(os.path.join(self.out, LAST))
                if self._improved(val_loss, val_acc):
                    self.save(os.path.join(self.out, BEST))

        return self.model

    def state(self):
        tensors = dict(self.model.state())
        tensors.update({'optim/{}'.format(k): v for k, v in self.optimizer.state().items()})
        scheduler = self.scheduler.state() if self.scheduler else {'lr': self.cfg.initial_lr, 'best': np.inf, 'bad_epochs': 0}
        tensors.update({'meta/{}'.format(k): np.array(float(v)) for k, v in scheduler.items()})
        tensors['meta/epoch'] = np.array(float(self.epoch))
        tensors['meta/phase'] = np.array(float(self.phase))
        tensors['meta/best_acc'] = np.array(float(self.best_acc))
        tensors['meta/best_loss'] = np.array(float(self.best_loss))
        return tensors

    def save(self, path):
        checkpoint.save(path, self.state())

    def resume(self, path):
        tensors = checkpoint.load(path)
        self.model.load_state(tensors)
        self.optimizer.load_state({k[len('optim/'):]: v for k, v in tensors.items() if k.startswith('optim/')})
        self.epoch = int(tensors['meta/epoch'])
        self.phase = int(tensors.get('meta/phase', 1))
        self.best_acc = float(tensors['meta/best_acc'])
        self.best_loss = float(tensors.get('meta/best_loss', np.inf))
        self.scheduler = PlateauScheduler(float(tensors['meta/lr']), self.cfg.plateau_factor, self.cfg.plateau_patience, self.cfg.plateau_threshold)
        self.scheduler.load_state({k: tensors['meta/{}'.format(k)] for k in ('lr', 'best', 'bad_epochs')})
        self.logger.info('Resumed from {} after epoch {}'.format(path, self.epoch))


def two_phase_train(trainer: Trainer):
    """
    Single phase: every parameter for max_epochs. Two phases: the head alone
    for phase1_epochs at initial_lr, then the whole network at the fine-tune
    rate for the remaining epochs. Epoch numbering runs across phases and a
    resumed trainer continues where it stopped.
    """
    cfg = trainer.cfg
    if not cfg.two_phase:
        return trainer.fit(cfg.max_epochs - trainer.epoch, cfg.initial_lr, {BACKBONE, HEAD})

    if cfg.phase1_epochs > cfg.max_epochs:
        raise ConfigError('phase1_epochs ({}) exceeds max_epochs ({})'.format(cfg.phase1_epochs, cfg.max_epochs))

    if trainer.epoch < cfg.phase1_epochs:
        trainer.logger.info('Phase 1: training the head, backbone frozen')
        trainer.fit(cfg.phase1_epochs - trainer.epoch, cfg.initial_lr, {HEAD})

    remaining = cfg.max_epochs - trainer.epoch
    if remaining > 0:
        trainer.logger.info('Phase 2: fine-tuning the whole network at lr {:.3g}'.format(cfg.fine_tune_lr))
        if trainer.phase != 2:
            trainer.phase = 2
            trainer.scheduler = PlateauScheduler(cfg.fine_tune_lr, cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_threshold)
        trainer.fit(remaining, cfg.fine_tune_lr, {BACKBONE, HEAD})
    return trainer.model

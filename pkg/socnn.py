#!./env/bin/python
# -*- coding:utf-8 -*-

"""
Train, evaluate and inspect second-order CNNs.

Every command reads the same flat configuration (see utils/config.py); the
global flags and `--set key=value` override it.
"""

from argparse import RawTextHelpFormatter
from slugify import slugify
from utils.config import load_config, parse_flat, write_config
from utils.errors import SoCnnError, ConfigError
from utils.rng import stream
from utils import checkpoint
from engine.tensor import set_default_dtype
from data.synthetic import gen_synthetic, save_synthetic, load_synthetic
from data.cifar import load_cifar10, fetch_cifar10
from data.augment import FlipCrop
from models import resolve, build_model, count_params
from models.gradcheck import run_gradcheck, FAILED, SKIPPED
from optim.training import Trainer, two_phase_train, evaluate, LAST, BEST
import argparse, logging, sys, os

PV_SWEEP = tuple(range(10, 201, 10))
O2T_SWEEP = (None, 50, 100, 150)


def load_datasets(cfg):
    """(train, val, test) for the configured data source."""
    data = cfg.data
    if data.kind == 'synthetic':
        if not os.path.isfile(data.path):
            raise ConfigError('Synthetic dataset {} does not exist, run gen-synth first'.format(data.path))
        train, test = load_synthetic(data.path)
        if data.train_limit:
            train = train.subset(0, data.train_limit)
        val = test
        if data.val_size:
            train, val = train.holdout(data.val_size)
        return train.astype(cfg.precision), val.astype(cfg.precision), test.astype(cfg.precision)

    return load_cifar10(data.path, data.train_limit, 5000 if data.val_size is None else data.val_size, cfg.precision)


def model_spec(cfg, train=None):
    options = dict(scale=cfg.model.scale, input_size=cfg.model.input_size, **cfg.model.overrides())
    if cfg.data.kind == 'synthetic' and train is not None:
        options.update(sites=train.inputs.shape[1], dim=train.inputs.shape[2], classes=train.classes)

    spec = resolve(cfg.model.name, **options)
    expected = 'features' if cfg.data.kind == 'synthetic' else 'image'
    if train is not None and spec.inputs != expected:
        raise ConfigError('Model {} takes {} inputs but data.kind = {} provides {}'.format(spec.name, spec.inputs, cfg.data.kind, expected))
    return spec


def run_directory(cfg):
    return cfg.out or os.path.join('runs', slugify('{} seed {}'.format(cfg.model.name, cfg.seed)))


def cmd_train(cfg):
    set_default_dtype(cfg.precision)
    train, val, _ = load_datasets(cfg)
    spec = model_spec(cfg, train)
    model = build_model(spec, stream(cfg.seed, 'init'))

    out = run_directory(cfg)
    os.makedirs(out, exist_ok=True)
    write_config(cfg, os.path.join(out, 'resolved.conf'))

    last = os.path.join(out, LAST)
    resuming = cfg.train.resume and os.path.exists(last)
    if not resuming and os.path.exists(os.path.join(out, 'metrics.csv')):
        os.remove(os.path.join(out, 'metrics.csv'))

    augment = None
    if cfg.data.kind == 'cifar10' and (cfg.data.flip or cfg.data.crop):
        augment = FlipCrop(cfg.data.flip, cfg.data.crop, cfg.data.pad)

    logger = logging.getLogger('socnn')
    logger.info('Training {} ({} parameters) on {} samples, output in {}'.format(spec.name, model.param_count(), len(train), out))
    trainer = Trainer(model, cfg.optim, train, val, cfg.seed, augment, cfg.train.threads, out, cfg.train.wall_clock)
    if resuming:
        trainer.resume(last)
    two_phase_train(trainer)

    logger.info('Best validation accuracy {:.4f}'.format(trainer.best_acc))
    return 0


def cmd_eval(cfg, path=None, split='test'):
    set_default_dtype(cfg.precision)
    train, val, test = load_datasets(cfg)
    dataset = {'train': train, 'val': val, 'test': test}[split]
    if dataset is None:
        raise ConfigError('No {} split for this data configuration'.format(split))

    model = build_model(model_spec(cfg, train), stream(cfg.seed, 'init'))
    path = path or os.path.join(run_directory(cfg), BEST)
    model.load_state(checkpoint.load(path))

    loss, accuracy, per_class = evaluate(model, dataset)
    print('{} on {} ({} samples): loss {:.4f}, top-1 accuracy {:.2f}%'.format(path, split, len(dataset), loss, 100 * accuracy))
    for c, value in enumerate(per_class):
        print('  class {:>3}: {:.2f}%'.format(c, 100 * value))
    return 0


def cmd_gradcheck(cfg):
    set_default_dtype('float64')
    results = run_gradcheck(cfg.seed)

    print('{:<48} {:>8} {:>12} {:>10}  {}'.format('check', 'status', 'worst', 'threshold', 'worst at'))
    for r in results:
        note = ' ({} seeds skipped)'.format(r.skipped) if r.skipped and r.status != SKIPPED else ''
        print('{:<48} {:>8} {:>12.3e} {:>10.0e}  {}{}'.format(r.name, r.status, r.worst, r.threshold, r.worst_at or '-', note))

    failed = [r for r in results if r.status == FAILED]
    if failed:
        worst = max(failed, key=lambda r: r.worst / r.threshold)
        logging.getLogger('socnn').error('{} gradient check(s) failed, worst offender {} ({} = {:.3e})'.format(
            len(failed), worst.name, worst.worst_at, worst.worst))
        return 1
    return 0


def cmd_count_params(cfg, name=None):
    spec = resolve(name or cfg.model.name, scale=cfg.model.scale, input_size=cfg.model.input_size, **cfg.model.overrides())
    model = build_model(spec, stream(cfg.seed, 'init'))

    print('{:<28} {:<44} {:>10}'.format('layer', 'shape', 'params'))
    for layer, description, params in model.breakdown():
        if params:
            print('{:<28} {:<44} {:>10,}'.format(layer, description, params))
    print('{:<28} {:<44} {:>10,}'.format(spec.name, 'total', model.param_count()))
    return 0


def cmd_sweep_pv(cfg):
    print('{:>6} {:>8} {:>10}'.format('o2t', 'pv', 'params'))
    for m in O2T_SWEEP:
        for p in PV_SWEEP:
            name = 'so-pv-{}'.format(p) if m is None else 'so-o2t-{}-pv-{}'.format(m, p)
            params = count_params(resolve(name, scale=cfg.model.scale, input_size=cfg.model.input_size))
            print('{:>6} {:>8} {:>10,}'.format(m or '-', p, params))
    return 0


def cmd_gen_synth(cfg, output=None):
    spec = cfg.data.synth.model_copy(update={'seed': cfg.seed})
    if output is None:
        name = slugify('synth {} classes {}x{} seed {}'.format(spec.classes, spec.sites, spec.feature_dim, spec.seed))
        output = os.path.join(cfg.data.path, name + '.soc')

    train, test = gen_synthetic(spec)
    os.makedirs(os.path.dirname(output) or '.', exist_ok=True)
    save_synthetic(output, spec, train, test)
    print(output)
    return 0


def cmd_fetch_cifar(cfg, timeout=60):
    print(fetch_cifar10(cfg.data.path, timeout))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog='socnn',
        formatter_class=RawTextHelpFormatter,
        description='''Second-order CNNs: covariance descriptor heads on small convolutional backbones.
        Commands:
            * train         train a model, writing metrics.csv, last.ckpt and best.ckpt
            * eval          top-1 and per-class accuracy of a checkpoint
            * gradcheck     finite-difference check of every layer and toy model
            * count-params  per-layer parameter breakdown
            * sweep-pv      parameter counts of the PV / O2T dimension grid
            * gen-synth     write a covariance-separable synthetic dataset
            * fetch-cifar   download the CIFAR-10 binary batches'''
    )

    parser.add_argument('-c', '--config', default=None, help='Flat key = value configuration file')
    parser.add_argument('--seed', type=int, default=None, help='Unsigned 64-bit seed for every random stream')
    parser.add_argument('--out', default=None, help='Output directory (defaults to runs/<model>-seed-<seed>)')
    parser.add_argument('--threads', type=int, default=None, help='Minibatch shards computed in parallel')
    parser.add_argument('-s', '--set', action='append', default=[], metavar='KEY=VALUE', help='Override a configuration key, e.g. optim.max_epochs=1')
    parser.add_argument('-v', '--verbose', help='Set output logging to debug', action='store_const', const=logging.DEBUG, default=logging.INFO)

    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('train')

    evaluation = commands.add_parser('eval')
    evaluation.add_argument('--checkpoint', default=None, help='Checkpoint to evaluate (defaults to <out>/best.ckpt)')
    evaluation.add_argument('--split', choices=('train', 'val', 'test'), default='test')

    commands.add_parser('gradcheck')

    counting = commands.add_parser('count-params')
    counting.add_argument('model', nargs='?', default=None, help='Model name, e.g. fitnet or so-cnn-4-x2')

    commands.add_parser('sweep-pv')

    synth = commands.add_parser('gen-synth')
    synth.add_argument('-o', '--output', default=None, help='Dataset file to write')

    cifar = commands.add_parser('fetch-cifar')
    cifar.add_argument('--timeout', type=int, default=60)
    return parser


def setup_logging(level):
    logger = logging.getLogger('socnn')
    logger.setLevel(level)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter('[%(asctime)s] (%(levelname)s) - %(message)s'))
        logger.addHandler(handler)
    for handler in logger.handlers:
        handler.setLevel(level)
    return logger


def main(argv=None):
    args = build_parser().parse_args(argv)
    logger = setup_logging(args.verbose)

    try:
        overrides = parse_flat('\n'.join(args.set))
        if args.seed is not None:
            overrides['seed'] = args.seed
        if args.out is not None:
            overrides['out'] = args.out
        if args.threads is not None:
            overrides.setdefault('train', {})['threads'] = args.threads
        cfg = load_config(args.config, **overrides)

        if args.command == 'train':
            return cmd_train(cfg)
        if args.command == 'eval':
            return cmd_eval(cfg, args.checkpoint, args.split)
        if args.command == 'gradcheck':
            return cmd_gradcheck(cfg)
        if args.command == 'count-params':
            return cmd_count_params(cfg, args.model)
        if args.command == 'sweep-pv':
            return cmd_sweep_pv(cfg)
        if args.command == 'gen-synth':
            return cmd_gen_synth(cfg, args.output)
        if args.command == 'fetch-cifar':
            return cmd_fetch_cifar(cfg, args.timeout)
    except SoCnnError as e:
        logger.error(str(e))
        return 2


if __name__ == '__main__':
    sys.exit(main())

# -*- coding:utf-8 -*-
"""
CIFAR-10 binary batches: 3073-byte records, one label byte then 3072 pixel
bytes as R, G and B planes of 32 x 32 row-major pixels.
"""

from utils.errors import FormatError, ConfigError
from . import Dataset
import numpy as np
import requests, tarfile, logging, os

URL = 'https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz'
FOLDER = 'cifar-10-batches-bin'
RECORD = 3073
SIDE = 32
CLASSES = 10
TRAIN_FILES = ['data_batch_{}.bin'.format(i) for i in range(1, 6)]
TEST_FILES = ['test_batch.bin']


def parse_records(blob: bytes):
    """(n x 32 x 32 x 3 uint8 images, n labels)."""
    if len(blob) % RECORD:
        raise FormatError('Batch size {} is not a multiple of {} bytes'.format(len(blob), RECORD))

    records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, RECORD)
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() >= CLASSES:
        raise FormatError('Label {} out of range'.format(labels.max()))

    images = records[:, 1:].reshape(-1, 3, SIDE, SIDE).transpose(0, 2, 3, 1)
    return np.ascontiguousarray(images), labels


def encode_records(images, labels) -> bytes:
    images = np.asarray(images, dtype=np.uint8).transpose(0, 3, 1, 2).reshape(len(labels), -1)
    return np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], images], axis=1).tobytes()


def read_batch(path):
    with open(path, 'rb') as f:
        return parse_records(f.read())


def batches_folder(directory):
    nested = os.path.join(directory, FOLDER)
    return nested if os.path.isdir(nested) else directory


def _read_all(folder, names):
    parts = []
    for name in names:
        path = os.path.join(folder, name)
        if not os.path.exists(path):
            raise ConfigError('CIFAR-10 batch {} not found'.format(path))
        parts.append(read_batch(path))
        logging.getLogger('socnn').info('Loaded {} records from {}'.format(len(parts[-1][1]), name))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def load_cifar10(directory, train_limit=None, val_size=5000, dtype=np.float64):
    """
    Train, validation and test sets. Pixels are scaled to [0, 1] and the
    per-channel mean of the training part is subtracted from all three. The
    validation set is the last `val_size` training images (after
    `train_limit` is applied).
    """
    folder = batches_folder(directory)
    train_images, train_labels = _read_all(folder, TRAIN_FILES)
    test_images, test_labels = _read_all(folder, TEST_FILES)

    if train_limit:
        train_images, train_labels = train_images[:train_limit], train_labels[:train_limit]

    train = Dataset(train_images.astype(dtype) / 255.0, train_labels, CLASSES)
    val = None
    if val_size:
        train, val = train.holdout(val_size)

    mean = train.inputs.mean(axis=(0, 1, 2))
    train.inputs -= mean
    if val is not None:
        val.inputs = val.inputs - mean
    test = Dataset(test_images.astype(dtype) / 255.0 - mean, test_labels, CLASSES)
    return train, val, test


def fetch_cifar10(directory, timeout=60):
    """Download and unpack the binary archive unless it is already there."""
    folder = os.path.join(directory, FOLDER)
    if all(os.path.exists(os.path.join(folder, name)) for name in TRAIN_FILES + TEST_FILES):
        logging.getLogger('socnn').info('CIFAR-10 already present in {}'.format(folder))
        return folder

    os.makedirs(directory, exist_ok=True)
    archive = os.path.join(directory, os.path.basename(URL))
    if not os.path.exists(archive):
        logging.getLogger('socnn').info('Downloading {}'.format(URL))
        r = requests.get(URL, stream=True, timeout=timeout)
        r.raise_for_status()
        with open(archive + '.part', 'wb') as f:
            for chunk in r.iter_content(chunk_size=1 << 20):
                f.write(chunk)
        os.replace(archive + '.part', archive)

    with tarfile.open(archive, 'r:gz') as tar:
        tar.extractall(directory, filter='data')

    return folder

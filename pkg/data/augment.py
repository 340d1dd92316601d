# -*- coding:utf-8 -*-

from utils.errors import ShapeError
import numpy as np


def hflip(image):
    """Reverse the column order of an H x W (x C) image."""
    return np.ascontiguousarray(image[:, ::-1])


def random_crop(image, out_h, out_w, rng, pad=0):
    if pad:
        widths = ((pad, pad), (pad, pad)) + ((0, 0),) * (image.ndim - 2)
        image = np.pad(image, widths)

    h, w = image.shape[:2]
    if out_h > h or out_w > w:
        raise ShapeError('Crop {}x{} does not fit a {}x{} image'.format(out_h, out_w, h, w))

    top = int(rng.integers(0, h - out_h + 1))
    left = int(rng.integers(0, w - out_w + 1))
    return image[top:top + out_h, left:left + out_w].copy()


class FlipCrop:
    """On-the-fly CIFAR augmentation: flip with probability 0.5, pad-and-crop back to size."""

    def __init__(self, flip=True, crop=True, pad=4):
        self.flip = flip
        self.crop = crop
        self.pad = pad

    def __call__(self, batch, rng):
        out = np.empty_like(batch)
        h, w = batch.shape[1:3]
        for i, image in enumerate(batch):
            if self.flip and rng.random() < 0.5:
                image = hflip(image)
            if self.crop:
                image = random_crop(image, h, w, rng, self.pad)
            out[i] = image
        return out

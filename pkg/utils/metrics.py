# -*- coding:utf-8 -*-

import csv, os

COLUMNS = ('epoch', 'train_loss', 'val_loss', 'val_acc', 'lr', 'wall_seconds')


class MetricsWriter:
    """Appends one CSV row per epoch; the header is written once."""

    def __init__(self, path):
        self.path = path
        if not os.path.exists(path):
            with open(path, 'w', newline='') as f:
                csv.writer(f).writerow(COLUMNS)

    def append(self, row):
        with open(self.path, 'a', newline='') as f:
            csv.writer(f).writerow([self._format(row[k]) for k in COLUMNS])

    @staticmethod
    def _format(value):
        if isinstance(value, float):
            return repr(value)
        return str(value)


def read_rows(path):
    with open(path, newline='') as f:
        return list(csv.DictReader(f))

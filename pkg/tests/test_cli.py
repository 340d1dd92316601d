import os
import re

import pytest

import socnn
from utils.metrics import read_rows
from utils.config import load_config
from engine.tensor import set_default_dtype

SYNTH = ['-s', 'data.synth.classes=3', '-s', 'data.synth.feature_dim=4', '-s', 'data.synth.sites=16',
         '-s', 'data.synth.train=100', '-s', 'data.synth.test=20']


@pytest.fixture(autouse=True)
def restore_dtype():
    yield
    set_default_dtype('float64')


@pytest.fixture
def dataset(tmp_path):
    path = str(tmp_path / 'synth.soc')
    assert socnn.main(SYNTH + ['gen-synth', '-o', path]) == 0
    return path


def train_args(dataset, out, *extra):
    return ['--out', str(out), '-s', 'data.kind=synthetic', '-s', 'data.path={}'.format(dataset),
            '-s', 'model.name=synth-cdu', '-s', 'optim.max_epochs=1', '-s', 'optim.batch_size=20',
            '-s', 'train.wall_clock=false'] + list(extra)


def test_gen_synth_then_train(dataset, tmp_path):
    out = tmp_path / 'run'
    assert socnn.main(train_args(dataset, out) + ['train']) == 0

    rows = read_rows(str(out / 'metrics.csv'))
    assert len(rows) == 1
    assert (out / 'metrics.csv').read_text().splitlines()[0] == 'epoch,train_loss,val_loss,val_acc,lr,wall_seconds'
    assert os.path.exists(out / 'best.ckpt')

    resolved = load_config(str(out / 'resolved.conf'))
    assert resolved.model.name == 'synth-cdu'
    assert resolved.data.path == dataset


def test_same_seed_gives_identical_csv(dataset, tmp_path):
    for name in ('a', 'b'):
        assert socnn.main(train_args(dataset, tmp_path / name) + ['--seed', '11', 'train']) == 0
    assert (tmp_path / 'a' / 'metrics.csv').read_bytes() == (tmp_path / 'b' / 'metrics.csv').read_bytes()


def test_resolved_config_reruns_identically(dataset, tmp_path):
    assert socnn.main(train_args(dataset, tmp_path / 'first') + ['train']) == 0
    resolved = str(tmp_path / 'first' / 'resolved.conf')
    assert socnn.main(['--config', resolved, '--out', str(tmp_path / 'second'), 'train']) == 0
    assert (tmp_path / 'first' / 'metrics.csv').read_bytes() == (tmp_path / 'second' / 'metrics.csv').read_bytes()


def test_resume_flag_continues_numbering(dataset, tmp_path):
    out = tmp_path / 'run'
    assert socnn.main(train_args(dataset, out) + ['train']) == 0
    assert socnn.main(train_args(dataset, out, '-s', 'optim.max_epochs=2', '-s', 'train.resume=true') + ['train']) == 0
    assert [row['epoch'] for row in read_rows(str(out / 'metrics.csv'))] == ['1', '2']


def test_fresh_run_replaces_old_metrics(dataset, tmp_path):
    out = tmp_path / 'run'
    assert socnn.main(train_args(dataset, out) + ['train']) == 0
    assert socnn.main(train_args(dataset, out) + ['train']) == 0
    assert len(read_rows(str(out / 'metrics.csv'))) == 1


def test_eval_prints_accuracy(dataset, tmp_path, capsys):
    out = tmp_path / 'run'
    assert socnn.main(train_args(dataset, out) + ['train']) == 0
    capsys.readouterr()

    assert socnn.main(train_args(dataset, out) + ['eval', '--split', 'test']) == 0
    printed = capsys.readouterr().out
    assert 'top-1 accuracy' in printed
    assert len(re.findall(r'class +\d+: ', printed)) == 3


def test_eval_with_mismatched_checkpoint(dataset, tmp_path):
    out = tmp_path / 'run'
    assert socnn.main(train_args(dataset, out) + ['train']) == 0
    assert socnn.main(train_args(dataset, out, '-s', 'model.name=synth-mean') + ['eval']) == 2


def test_train_errors_exit_with_status_2(dataset, tmp_path):
    assert socnn.main(train_args(str(tmp_path / 'missing.soc'), tmp_path / 'run') + ['train']) == 2
    assert socnn.main(train_args(dataset, tmp_path / 'run', '-s', 'optim.learning_rate=1') + ['train']) == 2
    assert socnn.main(train_args(dataset, tmp_path / 'run', '-s', 'model.name=fitnet') + ['train']) == 2


def parse_total(printed):
    return int(printed.strip().splitlines()[-1].split()[-1].replace(',', ''))


def test_count_params(capsys):
    assert socnn.main(['count-params', 'fitnet']) == 0
    fitnet = parse_total(capsys.readouterr().out)
    assert socnn.main(['count-params', 'so-cnn-4-x2']) == 0
    so = parse_total(capsys.readouterr().out)

    assert 589_000 <= fitnet <= 651_000
    assert 354_760 <= so <= 369_240
    assert so <= 0.6 * fitnet


def test_count_params_breakdown_lists_layers(capsys):
    assert socnn.main(['-s', 'model.groups=2', '-s', 'model.fusion=V-concat', 'count-params', 'so-cnn-1-same']) == 0
    printed = capsys.readouterr().out
    assert 'conv1_1' in printed and 'classifier' in printed
    assert '2 x[' in printed


def test_sweep_pv(capsys):
    assert socnn.main(['sweep-pv']) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1 + 4 * 20
    assert lines[1].split()[:2] == ['-', '10']


def test_unknown_model_is_a_config_error():
    assert socnn.main(['count-params', 'so-cnn-9-same']) == 2

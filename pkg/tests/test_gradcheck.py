import numpy as np
import pytest

import socnn
from layers import solayers
from models import gradcheck
from models.gradcheck import run_gradcheck, check_rectify, degenerate, PASSED, FAILED, SKIPPED


@pytest.fixture(scope='module')
def results():
    return run_gradcheck(0)


def test_every_check_passes(results):
    names = [r.name for r in results]
    assert len(names) == len(gradcheck.LAYER_CHECKS) + len(gradcheck.TOY_MODELS)
    bad = [r for r in results if r.status != PASSED]
    assert not bad, bad


def test_layer_checks_use_the_tight_tolerance(results):
    for r in results[:len(gradcheck.LAYER_CHECKS)]:
        assert r.threshold == 1e-5
        assert r.worst < 1e-5


def test_degenerate_spectrum_is_skipped():
    assert degenerate(np.eye(4))
    assert check_rectify(np.eye(4)) is None
    assert check_rectify(np.diag([1.0, 1.0 + 5e-4, 3.0])) is None
    assert check_rectify(np.diag([0.0, 1.0, 2.0])) is None


def test_distinct_spectrum_is_checked():
    errors = check_rectify(np.diag([0.5, 1.5, 2.5]))
    assert errors is not None
    assert max(errors.values()) < 1e-5


def test_all_skipped_layer_reports_skipped():
    result = gradcheck.check_layer(0, 'flat', lambda rng: None, seeds=3)
    assert result.status == SKIPPED
    assert result.skipped == 3


def wrong_o2t(m, w):
    """O2T with the input gradient sign flipped."""
    value = solayers.o2t_forward(m.value, w.value)

    def rule(g):
        g = solayers.sym(g)
        d_w = g @ w.value @ (m.value + np.swapaxes(m.value, -1, -2))
        return -(w.value.T @ g @ w.value), d_w.reshape((-1,) + w.shape).sum(axis=0)

    return m.graph.record('o2t', (m, w), value, rule)


def test_wrong_backward_rule_is_named(monkeypatch):
    monkeypatch.setattr(solayers, 'o2t', wrong_o2t)
    results = run_gradcheck(0, models=False)
    failed = {r.name for r in results if r.status == FAILED}
    assert 'o2t' in failed
    o2t = next(r for r in results if r.name == 'o2t')
    assert o2t.worst_at == 'o2t.input'


def test_cli_exit_status(monkeypatch, capsys):
    monkeypatch.setattr(solayers, 'o2t', wrong_o2t)
    monkeypatch.setattr(gradcheck, 'TOY_MODELS', ())
    assert socnn.main(['gradcheck']) == 1
    table = capsys.readouterr().out
    assert 'o2t' in table and 'failed' in table

import pytest

from utils.config import parse_flat, build_config, load_config, dump_config, write_config, RunConfig
from utils.errors import ConfigError


def test_parse_flat_nests_dotted_keys():
    tree = parse_flat('''
        # a comment
        seed = 7
        optim.initial_lr = 0.05   # trailing comment
        model.cdu_like.x = none
    ''')
    assert tree == {'seed': '7', 'optim': {'initial_lr': '0.05'}, 'model': {'cdu_like': {'x': None}}}


@pytest.mark.parametrize('text', ['seed 7', 'optim..lr = 1', 'seed = 1\nseed = 2', 'a = 1\na.b = 2'])
def test_parse_flat_errors(text):
    with pytest.raises(ConfigError):
        parse_flat(text)


def test_values_are_coerced():
    cfg = build_config(parse_flat('''
        seed = 3
        precision = float32
        model.name = so-cnn-2-div2
        model.o2t_dims = 50,100
        model.robust = true
        optim.max_epochs = 4
        optim.two_phase = yes
        data.kind = synthetic
        data.synth.classes = 3
        train.wall_clock = false
    '''))
    assert cfg.seed == 3
    assert cfg.precision == 'float32'
    assert cfg.model.o2t_dims == (50, 100)
    assert cfg.model.overrides() == {'o2t_dims': (50, 100), 'robust': True}
    assert cfg.optim.max_epochs == 4 and cfg.optim.two_phase is True
    assert cfg.data.synth.classes == 3
    assert cfg.train.wall_clock is False


@pytest.mark.parametrize('text', [
    'optim.inital_lr = 0.1',
    'colour = blue',
    'model.name = fitnet\nmodel.layers = 3',
    'precision = float16',
    'optim.initial_lr = -1',
    'seed = -4',
])
def test_unknown_keys_and_bad_values(text):
    with pytest.raises(ConfigError):
        build_config(parse_flat(text))


def test_overrides_take_precedence(tmp_path):
    path = tmp_path / 'run.conf'
    path.write_text('seed = 1\ntrain.threads = 2\noptim.batch_size = 16\n')
    cfg = load_config(str(path), seed=9, train={'threads': 4})
    assert (cfg.seed, cfg.train.threads, cfg.optim.batch_size) == (9, 4, 16)

    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'missing.conf'))


def test_resolved_config_roundtrip(tmp_path):
    cfg = build_config(parse_flat('model.name = so-cnn-3-x2\nmodel.fusion = D-concat\nmodel.groups = 2\noptim.initial_lr = 0.003\nout = runs/x'))
    path = tmp_path / 'resolved.conf'
    write_config(cfg, str(path))

    assert load_config(str(path)) == cfg
    assert 'optim.initial_lr = 0.003' in dump_config(cfg)


def test_defaults():
    cfg = RunConfig()
    assert cfg.seed == 0
    assert cfg.model.name == 'so-cnn-2-same'
    assert cfg.data.kind == 'cifar10'
    assert cfg.optim.initial_lr == 0.01

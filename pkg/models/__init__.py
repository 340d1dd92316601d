# -*- coding:utf-8 -*-

from pydantic import ValidationError
from utils.errors import ConfigError
from layers.cdu import CduConfig, FusionSpec
from .base import Model, ModelSpec, count_params, attach_transition

FAMILIES = {'fitnet': 'fitnet', 'so': 'so_cnn', 'synth': 'synth'}
CDU_FIELDS = tuple(CduConfig.model_fields)


def get_builder(name):
    family = name.split('-', 1)[0].lower()
    module_name = FAMILIES.get(family, family)
    builder_name = ''.join([x.title() for x in module_name.split('_')])
    try:
        mod = __import__('models.{}'.format(module_name), fromlist=[builder_name])
        return getattr(mod, builder_name)()
    except (ImportError, AttributeError):
        raise ConfigError('Model family {} is not available'.format(family))


def resolve(name, **options) -> ModelSpec:
    """
    Build the named spec, then apply inline head overrides: `groups`,
    `fusion` (e.g. 'D-concat'), `transition` and any CduConfig field.
    """
    head = {k: options.pop(k) for k in list(options) if k in CDU_FIELDS or k in ('groups', 'fusion', 'transition')}
    head = {k: v for k, v in head.items() if v is not None}

    try:
        spec = get_builder(name).spec(name, **options)
    except NotImplementedError as e:
        raise ConfigError(str(e))

    if not head:
        return spec
    if spec.pooling != 'cdu':
        raise ConfigError('{}: head overrides {} need a CDU head'.format(name, sorted(head)))

    cdu_changes = {k: head.pop(k) for k in list(head) if k in CDU_FIELDS}
    if cdu_changes:
        try:
            cdu = CduConfig(**{**spec.cdu.model_dump(), **cdu_changes})
        except ValidationError as e:
            raise ConfigError('{}: invalid CDU override: {}'.format(name, e))
        spec = spec.replace(cdu=cdu)

    if 'groups' in head:
        spec = spec.replace(groups=int(head['groups']))
    if 'fusion' in head:
        fusion = head['fusion']
        spec = spec.replace(fusion=fusion if isinstance(fusion, FusionSpec) else FusionSpec.parse(fusion))
    if 'transition' in head:
        spec = attach_transition(spec, int(head['transition']))

    if spec.cdu_channels % spec.groups:
        raise ConfigError('{}: {} channels do not split into {} groups'.format(name, spec.cdu_channels, spec.groups))
    return spec


def build_model(spec: ModelSpec, rng) -> Model:
    return Model.from_spec(spec, rng)

# -*- coding:utf-8 -*-

from engine.autodiff import Parameter, EUCLIDEAN


class Layer:
    kind = 'layer'

    def __init__(self, name, group='head'):
        self.name = name
        self.group = group
        self.params = []

    def add_param(self, suffix, value, manifold=EUCLIDEAN):
        parameter = Parameter('{}.{}'.format(self.name, suffix), value, manifold=manifold, group=self.group)
        self.params.append(parameter)
        return parameter

    def forward(self, graph, x):
        raise NotImplementedError('forward method must be implemented')

    def param_count(self):
        return sum(p.size for p in self.params)

    def describe(self):
        return self.kind

    def __call__(self, graph, x):
        return self.forward(graph, x)

    def __repr__(self):
        return '{}({})'.format(self.__class__.__name__, self.name)

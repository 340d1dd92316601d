# -*- coding:utf-8 -*-
"""
Define-by-run reverse-mode differentiation.

A Graph is an append-only tape: every recorded operation becomes a Node whose
id is its insertion index, so insertion order is a topological order and
backward simply walks the tape in reverse. Gradients accumulate additively in
each node and are only cleared by an explicit reset().

Persistent trainable tensors live in Parameter objects. They are bound into a
fresh graph on every forward pass, which makes freezing a flag on the
parameter rather than an edit of the graph.
"""

from utils.errors import GraphError
import numpy as np
import logging

EUCLIDEAN = 'euclidean'
STIEFEL = 'stiefel'


class Parameter:
    def __init__(self, name, value, trainable=True, manifold=EUCLIDEAN, group='head'):
        self.name = name
        self.value = np.ascontiguousarray(value)
        self.grad = np.zeros_like(value)
        self.trainable = trainable
        self.manifold = manifold
        self.group = group

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return int(self.value.size)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return 'Parameter({}, shape={}, {})'.format(self.name, self.shape, self.manifold)


class Node:
    __slots__ = ('graph', 'id', 'op', 'value', 'parents', 'rule', 'requires_grad', 'param', '_grad')

    def __init__(self, graph, identifier, op, value, parents=(), rule=None, requires_grad=False, param=None):
        self.graph = graph
        self.id = identifier
        self.op = op
        self.value = value
        self.parents = tuple(parents)
        self.rule = rule
        self.requires_grad = requires_grad
        self.param = param
        self._grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self):
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    def accumulate(self, contribution):
        if contribution.shape != self.value.shape:
            raise GraphError('{}: gradient shape {} does not match value shape {}'.format(
                self.op, contribution.shape, self.value.shape))

        if self._grad is None:
            self._grad = np.array(contribution, dtype=self.value.dtype, copy=True)
        else:
            self._grad += contribution

    def __repr__(self):
        return 'Node(#{} {} {})'.format(self.id, self.op, self.value.shape)


class Graph:
    def __init__(self):
        self.nodes = []
        self._bound = {}
        self._consumed = False

    def _append(self, **kwargs):
        node = Node(self, len(self.nodes), **kwargs)
        self.nodes.append(node)
        return node

    def leaf(self, value, requires_grad=True, name='leaf'):
        return self._append(op=name, value=np.asarray(value), requires_grad=requires_grad)

    def constant(self, value, name='constant'):
        return self.leaf(value, requires_grad=False, name=name)

    def param(self, parameter: Parameter):
        """Bind a Parameter as a leaf; binding the same parameter twice returns the same node."""
        node = self._bound.get(id(parameter))
        if node is None:
            node = self._append(op='param:{}'.format(parameter.name), value=parameter.value,
                                requires_grad=parameter.trainable, param=parameter)
            self._bound[id(parameter)] = node
        return node

    def record(self, op, inputs, value, rule):
        """
        Append the result of `op` applied to `inputs`.

        `rule(upstream)` returns one gradient contribution per input (None for
        inputs that receive nothing).
        """
        for item in inputs:
            if not isinstance(item, Node) or item.graph is not self:
                raise GraphError('{}: input does not belong to this graph'.format(op))

        requires_grad = any(item.requires_grad for item in inputs)
        return self._append(op=op, value=value, parents=inputs, rule=rule, requires_grad=requires_grad)

    def backward(self, loss: Node):
        if loss.graph is not self:
            raise GraphError('Loss node belongs to another graph')
        if np.ndim(loss.value) != 0:
            raise GraphError('Loss must be a scalar, got shape {}'.format(np.shape(loss.value)))
        if self._consumed:
            raise GraphError('backward already ran on this graph; call reset() first')

        self._consumed = True
        loss.accumulate(np.ones_like(loss.value))

        for node in reversed(self.nodes[:loss.id + 1]):
            if node.rule is None or node._grad is None or not node.requires_grad:
                continue

            contributions = node.rule(node._grad)
            if len(contributions) != len(node.parents):
                raise GraphError('{}: backward rule returned {} gradients for {} inputs'.format(
                    node.op, len(contributions), len(node.parents)))

            for parent, contribution in zip(node.parents, contributions):
                if contribution is not None and parent.requires_grad:
                    parent.accumulate(contribution)

        logging.getLogger('socnn').debug('backward over {} nodes, loss={:.6g}'.format(loss.id + 1, float(loss.value)))

    def reset(self):
        for node in self.nodes:
            node._grad = None
        self._consumed = False

    def bound_parameters(self):
        return [node.param for node in self.nodes if node.param is not None]

    def parameter_grads(self):
        """(parameter, gradient) pairs in binding order; unreachable parameters get zeros."""
        return [(node.param, node.grad) for node in self.nodes if node.param is not None]


def finite_diff_check(f, x, h=1e-5, coords=None):
    """
    Compare the analytic gradient of a scalar function with central differences.

    `f(graph, node)` builds the function on `graph` from the leaf `node` and
    returns the scalar loss node. `coords` optionally restricts the numeric
    side to a subset of flat indices. Returns
    max_i |analytic_i - central_i| / max(1, |central_i|).
    """
    x = np.array(x, dtype=np.float64)

    graph = Graph()
    leaf = graph.leaf(x)
    graph.backward(f(graph, leaf))
    analytic = leaf.grad.reshape(-1)

    flat = x.reshape(-1)
    indices = range(flat.size) if coords is None else coords
    worst = 0.0
    for i in indices:
        original = flat[i]
        flat[i] = original + h
        plus = _evaluate(f, x)
        flat[i] = original - h
        minus = _evaluate(f, x)
        flat[i] = original

        central = (plus - minus) / (2 * h)
        worst = max(worst, abs(analytic[i] - central) / max(1.0, abs(central)))

    return worst


def _evaluate(f, x):
    graph = Graph()
    return float(f(graph, graph.leaf(x.copy(), requires_grad=False)).value)


def check_parameters(loss_fn, parameters, h=1e-5, max_coords=None, rng=None):
    """
    Finite-difference check of `loss_fn(graph) -> loss node` with respect to
    parameters. Returns {parameter name: max relative error}. When
    `max_coords` is set, at most that many coordinates per parameter are
    checked, chosen by `rng`.
    """
    graph = Graph()
    graph.backward(loss_fn(graph))
    analytic = {id(p): g.copy() for p, g in graph.parameter_grads()}

    def evaluate():
        return float(loss_fn(Graph()).value)

    report = {}
    for parameter in parameters:
        flat = parameter.value.reshape(-1)
        grad = analytic.get(id(parameter), np.zeros_like(parameter.value)).reshape(-1)
        if max_coords is not None and flat.size > max_coords:
            indices = rng.choice(flat.size, size=max_coords, replace=False)
        else:
            indices = range(flat.size)

        worst = 0.0
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            plus = evaluate()
            flat[i] = original - h
            minus = evaluate()
            flat[i] = original

            central = (plus - minus) / (2 * h)
            worst = max(worst, abs(grad[i] - central) / max(1.0, abs(central)))

        report[parameter.name] = worst

    return report

# -*- coding:utf-8 -*-


class SoCnnError(Exception):
    pass


class ShapeError(SoCnnError, ValueError):
    pass


class NumericError(SoCnnError, ArithmeticError):
    pass


class ConvergenceError(NumericError):
    pass


class RankError(NumericError):
    pass


class GraphError(SoCnnError):
    pass


class ConfigError(SoCnnError, ValueError):
    pass


class FormatError(SoCnnError, ValueError):
    pass


class CheckpointError(FormatError):
    pass


class LabelError(SoCnnError, ValueError):
    pass

"""Exception hierarchy shared by all modules."""


class LpvTubeError(Exception):
    pass


# geometry
class GeometryError(LpvTubeError):
    pass


class DegenerateInput(GeometryError):
    pass


class Unbounded(GeometryError):
    pass


class EmptySet(GeometryError):
    pass


class NegativeScaling(GeometryError):
    pass


class DimensionMismatch(GeometryError):
    pass


class Unsupported(GeometryError):
    pass


class NotPCSet(GeometryError):
    pass


# model
class ModelError(LpvTubeError):
    pass


class ThetaOutOfRange(ModelError):
    pass


class ConfigMismatch(ModelError):
    pass


# set synthesis
class SynthesisError(LpvTubeError):
    pass


class NoConvergence(SynthesisError):
    pass


class EmptyResult(SynthesisError):
    pass


class NoContraction(SynthesisError):
    pass


class StateConstraintViolated(SynthesisError):
    def __init__(self, index, msg=None):
        self.index = index
        super().__init__(msg or f"propagated set S_{index} leaves the state constraints")


class DegenerateSet(SynthesisError):
    pass


# optimization
class Infeasible(LpvTubeError):
    def __init__(self, msg="problem is infeasible", where=None):
        self.where = where
        super().__init__(msg)


class SolverFailure(LpvTubeError):
    pass


class NumericalFailure(SolverFailure):
    pass

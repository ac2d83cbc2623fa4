"""Exception types raised across the planning toolkit."""


class NomaUavError(Exception):
    """Base class for all toolkit errors."""


class MissingField(NomaUavError):
    """A required key is absent from a scenario document."""


class BadUnits(NomaUavError):
    """A scenario value has the wrong type or is not a finite number."""


class InvariantViolation(NomaUavError):
    """A scenario value violates a model invariant; message names the invariant."""


class DegenerateLink(NomaUavError):
    """A radio link required by the mission has zero signal power."""


class EmptyNomaZone(NomaUavError):
    """The uplink power-ordering zone of a base station is empty."""


class QosUnsatisfiable(NomaUavError):
    """A ground user cannot meet its rate target even with the UAV absent."""


class EmptyRegion(NomaUavError):
    """A feasible region contains no point."""


class AnchorOutsideRegion(NomaUavError):
    """A connectivity anchor lies outside the region being tested."""


class NoWitness(NomaUavError):
    """No intersection witness exists for the requested pair of regions."""


class SolverFailure(NomaUavError):
    """The convex solver did not return a usable solution."""


class Infeasible(NomaUavError):
    """A convex program was certified infeasible."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MaxIterations(NomaUavError):
    """The convex solver hit its iteration cap before converging."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InfeasibleN(NomaUavError):
    """The requested segment count is too small for the reference path."""


class PlanInfeasible(NomaUavError):
    """The mission is infeasible for the requested scheme."""

    def __init__(self, message, verdict=None):
        super().__init__(message)
        self.verdict = verdict

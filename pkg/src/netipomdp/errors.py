"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class NetIpomdpError(Exception):
    """Base class for all package errors."""


class InvalidModel(NetIpomdpError, ValueError):
    """A frame, belief, graph or config violates a type invariant.

    ``violations`` lists one human-readable line per failed check, naming the
    offending tensor slice where there is one.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ImpossibleObservation(NetIpomdpError):
    """The observation has zero likelihood under the prior belief and action."""


class MissingEntry(NetIpomdpError, KeyError):
    """A successor belief has no tabulated value."""

    def __str__(self):
        return Exception.__str__(self)


class KeyMismatch(NetIpomdpError):
    """Two value tables are compared over different key sets."""


class LevelMismatch(NetIpomdpError):
    """Candidate models sit at the wrong nesting level."""


class RecursionDepthExceeded(NetIpomdpError):
    """A model nests deeper than the configured bound."""


class MessageKindMismatch(NetIpomdpError):
    """A message's kind differs from the one the update expects."""


class ProjectionTooFar(NetIpomdpError):
    """A received belief is farther than the bound from every candidate model."""

    def __init__(self, distance, bound):
        self.distance = distance
        self.bound = bound
        super().__init__(
            f"total-variation distance {distance:.6g} to nearest candidate exceeds bound {bound:.6g}"
        )


class DisconnectedGraph(InvalidModel):
    pass


class SelfLoop(InvalidModel):
    pass


class IterationCapExceeded(NetIpomdpError):
    pass


class DegenerateAverage(NetIpomdpError, ValueError):
    """Proportional-fairness reward requested for a non-positive average rate."""


class GridTooCoarse(InvalidModel):
    pass


class UnsupportedModel(NetIpomdpError):
    """A model configuration outside what the finite approximation handles."""


class BeliefUpdateAborted(NetIpomdpError):
    """A belief update failed during a simulation round."""

    def __init__(self, slot, agent, cause):
        self.slot = slot
        self.agent = agent
        self.cause = cause
        super().__init__(f"belief update failed at slot {slot}, agent {agent}: {cause}")

"""Exception types raised by the simulator.

Everything derives from :class:`SimError` so callers (notably the CLI) can
distinguish simulator-domain failures from genuine bugs.
"""


class SimError(Exception):
    """Base class for all simulator-domain errors."""


# --- engine ---------------------------------------------------------------

class SchedulingInPast(SimError):
    """An event was scheduled at a timestamp earlier than the current clock."""


class UnknownEventKind(SimError):
    """An event kind outside the enumerated set was offered to the engine."""


# --- pool -----------------------------------------------------------------

class NoLeafInRegion(SimError):
    """A startd tried to register in a region with no leaf collectors."""


class KindMismatch(SimError):
    """Jobs were submitted to a schedd serving a different job kind."""


class CapExceeded(SimError):
    """Starting a job would push a schedd past its running-job cap."""


class SlotVanished(SimError):
    """A matched slot disappeared (instance gone) before the job could start."""


class IllegalJobTransition(SimError):
    """A job was driven through a state change outside its lifecycle graph."""


# --- providers ------------------------------------------------------------

class MixedGpuTemplate(SimError):
    """A fleet template asked for more than one GPU model."""


class ExceedsMaxSize(SimError):
    """A scale-set resize requested more instances than its hard maximum."""


class NotAScaleSet(SimError):
    """A scale-set operation was applied to a group of a different flavor."""


class NotAnInstanceGroup(SimError):
    """An instance-group operation was applied to a group of a different flavor."""


class UnknownInstance(SimError):
    """An instance id is unknown or no longer a member of the named group."""


class UnknownGroup(SimError):
    """A provisioning-group id is unknown."""


class NotProvisioned(SimError):
    """Metadata was queried for an instance that is not provisioned."""


class IllegalInstanceTransition(SimError):
    """An instance was driven through a state change outside its lifecycle graph."""


# --- workload -------------------------------------------------------------

class UnknownGpuModel(SimError):
    """A GPU model name is absent from the performance table."""


class UnknownInputClass(SimError):
    """An input class name is absent from the input catalog."""


class NoEndpointForRegion(SimError):
    """No storage endpoint is configured for the requested region."""


# --- economics ------------------------------------------------------------

class OverlappingInterval(SimError):
    """A billing interval overlaps one already accrued for the same instance."""


class EmptyTrace(SimError):
    """A report was requested over a trace with no instance activity."""


# --- scenarios / CLI ------------------------------------------------------

class ParseError(SimError):
    """A scenario file could not be read or is not the expected shape."""


class ValidationError(SimError):
    """A scenario parsed but failed semantic validation.

    ``problems`` holds every defect found (field path + message), not just
    the first one.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class IoError(SimError):
    """An output directory or file could not be written."""

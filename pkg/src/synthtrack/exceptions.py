"""Exception hierarchy. The CLI maps these classes onto exit codes."""


class SynthtrackError(Exception):
    """Base class for all package errors."""


class ConfigError(SynthtrackError, ValueError):
    """Invalid or unknown configuration values (exit code 2)."""


class FormatError(SynthtrackError, ValueError):
    """Malformed files or unsupported on-disk formats (exit code 3)."""


class SimulationError(SynthtrackError, RuntimeError):
    """A simulator could not satisfy its constraints."""


class SceneOverfull(SimulationError):
    pass


class ScheduleInfeasible(SimulationError):
    pass


class PlacementExhausted(SimulationError):
    pass


class LineageError(SynthtrackError, ValueError):
    """Label frames and lineage records disagree."""


class StageError(SynthtrackError, RuntimeError):
    """A pipeline stage failed (exit code 4)."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")

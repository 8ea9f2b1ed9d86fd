"""Exception types shared across the engine.

The CLI maps these onto exit codes: format/input errors exit with 3,
collision (safety) errors with 4.
"""


class LmapfError(Exception):
    """Base class for engine errors."""


class MapFormatError(LmapfError):
    """Malformed map file (header/body mismatch, unknown cell character)."""


class ScenarioFormatError(LmapfError):
    """Malformed or inconsistent scenario file."""


class WeightsFormatError(LmapfError):
    """Malformed or architecture-incompatible weight file."""


class DatasetFormatError(LmapfError):
    """Malformed dataset file."""


class UnreachableGoalError(LmapfError):
    """A planning target cannot be reached from the given start."""


class CollisionError(LmapfError):
    """A solver produced a joint action with a vertex or edge collision.

    This is the safety property of the whole engine; it is never tolerated
    and always aborts the episode.
    """

"""Exception hierarchy shared by the library and the CLI.

The CLI maps these to exit codes: ConfigError -> 2, DataError -> 3,
ModelError -> 4.
"""


class PerceptError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PerceptError):
    """Invalid or inconsistent run configuration."""


class DataError(PerceptError):
    """Input data violates a documented contract."""


class ModelError(PerceptError):
    """A model artifact is missing, malformed, or of the wrong variant."""


class PoseParseError(DataError):
    """Malformed pose/group stream record; message names the line number."""


class PoseSchemaError(DataError):
    """Record parsed but violates the pose schema (e.g. joint count)."""


class UnimputableError(DataError):
    """Skeleton has no detected joints; caller should drop it for the frame."""


class MissingSubjectError(DataError):
    """Requested subject is absent from one or more frames of a clip."""

"""Exception hierarchy.

Every error raised by the package derives from :class:`AugmentError`. The three
top-level categories map one-to-one onto CLI exit codes.
"""

from __future__ import annotations


class AugmentError(Exception):
    exit_code = 1
    stage: str | None = None


class ConfigError(AugmentError, ValueError):
    """Invalid or inconsistent configuration."""

    exit_code = 2


class DataError(AugmentError):
    """The input data violates a contract."""

    exit_code = 3


class CorpusFormatError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SceneValidationError(CorpusFormatError):
    def __init__(self, scene_id: str, report, line: int | None = None):
        self.scene_id = scene_id
        self.report = report
        codes = ", ".join(sorted({v.code for v in report}))
        super().__init__(f"scene {scene_id!r} failed validation ({codes})", line)


class ConsistencyError(DataError):
    """Internal inputs disagree with each other (e.g. a plan names a missing agent)."""


class UnobservedStateError(DataError):
    """An operation needed an observed state but found a masked one."""


class HorizonTooShortError(DataError):
    pass


class NotAugmentableError(DataError):
    """The selected agent is not observed over the full history and future."""


class CorpusIOError(AugmentError, OSError):
    exit_code = 4

    def __init__(self, path, cause: BaseException | str):
        self.path = str(path)
        super().__init__(f"{self.path}: {cause}")

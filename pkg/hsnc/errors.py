from __future__ import annotations

from typing import Optional


class HsncError(Exception):
    """Base error. ``str()`` is a single line so the CLI can print it as-is."""

    exit_code = 1

    @property
    def kind(self) -> str:
        return type(self).__name__

    def one_line(self) -> str:
        msg = " ".join(str(self).split())
        return f"{self.kind}: {msg}"


class UsageError(HsncError):
    exit_code = 2


class ConfigurationError(HsncError):
    pass


class DataError(HsncError):
    pass


class DomainError(DataError):
    pass


class DegenerateDistributionError(DataError):
    pass


class UndefinedMetricError(HsncError):
    pass


class DimensionError(HsncError):
    def __init__(self, message: str, axis: Optional[str] = None):
        self.axis = axis
        super().__init__(f"{message} (axis {axis})" if axis else message)


class FormatError(HsncError):
    def __init__(self, message: str, offset: Optional[int] = None,
                 expected: Optional[int] = None, actual: Optional[int] = None):
        self.offset = offset
        self.expected = expected
        self.actual = actual
        parts = [message]
        if offset is not None:
            parts.append(f"at offset {offset}")
        if expected is not None and actual is not None:
            parts.append(f"expected {expected} bytes, got {actual}")
        super().__init__(", ".join(parts))


class TrainingFault(HsncError):
    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(f"step {step}: {message}" if step is not None else message)


class NonFiniteError(HsncError):
    pass

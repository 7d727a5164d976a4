"""
Errors - Exception hierarchy shared by every module of the captioner

Each exception class carries the process exit code the command-line surface
reports when the error escapes a command.
"""

from typing import Optional


class CaptionerError(Exception):
    """Base class for all errors raised by the captioner."""

    exit_code = 1

    def one_line(self) -> str:
        """
        Render the error as a single machine-parsable line.

        Returns:
            A line of the form ``error=<Class> code=<n> reason="<message>"``
        """
        reason = str(self).replace("\n", " ").replace('"', "'")
        return f'error={type(self).__name__} code={self.exit_code} reason="{reason}"'


class UsageError(CaptionerError):
    """Invalid command-line usage."""

    exit_code = 2


class ConfigurationError(CaptionerError):
    """Invalid hyperparameters or inconsistent configuration."""

    exit_code = 2


class DataError(CaptionerError):
    """Problems with the content of a dataset, annotation or prediction file."""

    exit_code = 3


class FormatError(DataError):
    """A file does not follow its binary or text format."""

    def __init__(self, message: str, offset: Optional[int] = None):
        """
        Initialize the format error.

        Args:
            message: What is wrong with the file
            offset: Byte offset at which the problem was detected, if known
        """
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DimensionError(CaptionerError):
    """Tensor shapes do not agree."""

    exit_code = 3


class ContractError(CaptionerError):
    """An operation was called outside of its preconditions."""

    exit_code = 3


class DegenerateMaskError(ContractError):
    """An attention or softmax row has no position left to attend to."""


class NumericError(CaptionerError):
    """Training produced a non-finite loss."""

    exit_code = 4

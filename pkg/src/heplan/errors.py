"""Exception hierarchy shared by all heplan modules."""

from __future__ import annotations


class HeplanError(Exception):
    """Base class for every error raised by this package."""


class GraphSyntaxError(HeplanError):
    """Malformed graph document (bad JSON, unknown op, bad attrs)."""

    def __init__(self, message: str, *, line: int | None = None,
                 col: int | None = None, node_id: str | None = None):
        self.line = line
        self.col = col
        self.node_id = node_id
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {col}" if col is not None else "") + ")"
        if node_id is not None:
            loc += f" [node {node_id!r}]"
        super().__init__(message + loc)


class ValidationError(HeplanError):
    """Structurally invalid graph, node, or configuration value."""

    def __init__(self, message: str, *, node_id: str | None = None):
        self.node_id = node_id
        if node_id is not None:
            message = f"{message} [node {node_id!r}]"
        super().__init__(message)


class CycleError(ValidationError):
    """The graph contains a cycle."""


class UnsupportedOpError(HeplanError):
    """An op kind that the requested transformation cannot handle."""


class UnplannedOpError(HeplanError):
    """Planner-inserted op encountered where an unplanned graph is required."""


class ConfigError(HeplanError):
    """Bad configuration file, key, or architecture parameters."""


class UnknownPresetError(ConfigError):
    """Requested architecture preset does not exist."""


class InfeasibleError(HeplanError):
    """No plan exists: a single op consumes more levels than the budget allows."""


class TooLargeError(HeplanError):
    """Graph exceeds the size limit of the exhaustive planner."""


class RankDeficientError(HeplanError):
    """Cost calibration system is underdetermined."""


class InfeasibleNonNegativityError(HeplanError):
    """Requested fit tolerance is unattainable with non-negative weights."""


class LevelOverflowError(HeplanError):
    """An operation would push a ciphertext past the level budget."""


class JoinMismatchError(HeplanError):
    """Join operands disagree in chain index or tile shape at runtime."""


class ShapeError(HeplanError):
    """Tensor dimensions are unknown, inconsistent, or incompatible."""

"""Exception hierarchy shared across the package.

Everything raised on purpose derives from SceneStreamError so the CLI can
map failures onto its documented exit codes (1 for data/config/eval
problems, 2 for detector protocol violations).
"""

from __future__ import annotations


class SceneStreamError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(SceneStreamError):
    """Degenerate or contract-violating geometric input."""


class ParseError(SceneStreamError):
    """Scene description text rejected in strict mode.

    Carries 1-based line and column of the first offending character.
    """

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.reason = message


class ConfigError(SceneStreamError):
    """Configuration value outside its documented range."""


class DatasetError(SceneStreamError):
    """Dataset manifest invalid or referenced files missing."""


class AlignmentError(SceneStreamError):
    """Patch streams cover different voxel sets and cannot be fused."""


class UnknownLabelError(SceneStreamError, KeyError):
    """Embedding lookup for a label the table does not contain."""

    def __init__(self, label: str):
        super().__init__(f"no embedding for label {label!r}")
        self.label = label


class EvalError(SceneStreamError):
    """Evaluation input violates a metric precondition."""


class ProtocolError(SceneStreamError):
    """Detector subprocess broke the wire protocol.

    ``transcript`` holds one line per frame exchanged before the failure.
    """

    def __init__(self, message: str, transcript: tuple[str, ...] = ()):
        super().__init__(message)
        self.transcript = transcript


class PlacementError(SceneStreamError):
    """Scene generator exhausted its rejection-sampling budget."""

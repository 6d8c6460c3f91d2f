"""Exception hierarchy. Every error carries a category used for CLI exit codes."""

from __future__ import annotations


class AugforgeError(Exception):
    """Base class; `category` is one of config/io/shape/internal."""

    category = "internal"


class ConfigError(AugforgeError):
    category = "config"


class IoError(AugforgeError):
    category = "io"


class MalformedFile(IoError):
    """Parse failure. Message includes file path and line/offset when known."""


class DuplicateId(IoError):
    pass


class DanglingReference(IoError):
    """An id refers to a record that does not exist."""


class EmptyType(AugforgeError):
    """A question type with no usable answer mass; signals internal inconsistency."""


class ShapeMismatch(AugforgeError):
    category = "shape"


class DimensionMismatch(ShapeMismatch):
    pass


class VocabMismatch(ShapeMismatch):
    pass


class MissingEmbedding(ShapeMismatch):
    pass


class ZeroVector(ShapeMismatch):
    pass


class DegenerateRow(ShapeMismatch):
    """An all-zero prediction row cannot be normalized."""


class MissingTableRow(ShapeMismatch):
    pass


class EmptyInput(AugforgeError):
    pass


class NoNoun(AugforgeError):
    """A counting/color question whose single noun cannot be located in its text."""


class UnknownQuestion(AugforgeError):
    pass


class NonPositiveInput(AugforgeError):
    pass


EXIT_CODES = {"config": 2, "io": 3, "shape": 4, "internal": 5}


def exit_code_for(err: Exception) -> int:
    category = getattr(err, "category", "internal")
    return EXIT_CODES.get(category, EXIT_CODES["internal"])

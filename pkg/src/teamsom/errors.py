"""Exception hierarchy shared by every pipeline stage.

``DataError`` subclasses signal bad input (CLI exit code 3); anything else
deriving from ``TeamsomError`` is a usage or internal problem.
"""

from __future__ import annotations


class TeamsomError(Exception):
    """Base class for all package errors."""


class DataError(TeamsomError, ValueError):
    """Input data violates a documented contract."""


class MissingFile(DataError, FileNotFoundError):
    def __init__(self, path):
        self.path = str(path)
        super().__init__(f"file not found: {self.path}")


class SchemaError(DataError):
    """A single record failed validation.

    ``row`` is the 1-based record index (header excluded), ``column`` the
    offending field name or ``None`` for whole-row problems.
    """

    def __init__(self, row: int | None, column: str | None, reason: str, source: str = ""):
        self.row = row
        self.column = column
        self.reason = reason
        self.source = source
        where = f"{source} " if source else ""
        loc = f"row {row}" if row is not None else "file"
        col = f", column {column!r}" if column else ""
        super().__init__(f"{where}{loc}{col}: {reason}")


class ReferentialIntegrityError(DataError):
    def __init__(self, ident: str, reason: str):
        self.ident = ident
        self.reason = reason
        super().__init__(f"{ident}: {reason}")


class EmptyDataset(DataError):
    pass


class TooFewRows(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyData(DataError):
    pass


# lexicon
class ParseError(DataError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class EmptyCategory(DataError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"category {name!r} has no patterns")


class BadWildcard(DataError):
    def __init__(self, pattern: str):
        self.pattern = pattern
        super().__init__(f"bad wildcard pattern {pattern!r}: '*' is only allowed as the final character")


class EmptyText(DataError):
    pass


class NoScorableText(DataError):
    def __init__(self, work_item_id):
        self.work_item_id = work_item_id
        super().__init__(f"work item {work_item_id!r} has no scorable words")


# som / cluster
class IndexOutOfRange(DataError, IndexError):
    pass


class SingleNodeMap(DataError):
    pass


class UntrainedMap(DataError):
    pass


class KOutOfRange(DataError):
    pass


class Mismatch(DataError):
    pass


# stats
class TooShort(DataError):
    pass


class EmptySample(DataError):
    pass


class ZeroVariance(DataError):
    pass


# gen
class InvalidConfig(DataError):
    pass

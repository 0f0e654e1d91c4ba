"""Exception hierarchy shared by all laftk modules."""

from __future__ import annotations


class LafError(ValueError):
    """Base class for every error raised on bad input or bad documents."""


# -- anchors --------------------------------------------------------------

class NegativeCoordinate(LafError):
    pass


class StartAfterEnd(LafError):
    pass


class WrongArity(LafError):
    pass


class OutOfExtent(LafError):
    pass


class UnknownSpace(LafError):
    pass


class CrossDocumentComparison(LafError):
    pass


# -- graph ----------------------------------------------------------------

class MalformedId(LafError):
    pass


class DuplicateId(LafError):
    pass


class InvalidGroup(LafError):
    pass


class SealedDocument(LafError):
    """Raised when mutating a document that has been closed."""


class UnsealedDocument(LafError):
    """Raised when an operation needs a closed document."""


class UnresolvedReference(LafError):
    def __init__(self, ids, message: str | None = None):
        self.ids = sorted(ids)
        super().__init__(message or "unresolved reference(s): " + ", ".join(self.ids))


class TargetCycle(LafError):
    pass


class LayerCycle(LafError):
    pass


class MixedPrimary(LafError):
    pass


class UngroundedLayer(LafError):
    pass


class NotCoextensive(LafError):
    pass


class UnknownNode(LafError):
    pass


# -- dump -----------------------------------------------------------------

class DumpError(LafError):
    """Syntax or integrity error in a dump stream; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BadMagic(DumpError):
    pass


class UnknownRecordKind(DumpError):
    pass


class ArityError(DumpError):
    pass


class CountMismatch(DumpError):
    pass


class HashMismatch(DumpError):
    pass


class TrailingData(DumpError):
    pass


class UnresolvedAtEnd(UnresolvedReference):
    pass


class DanglingEscape(LafError):
    pass


class UnknownEscape(LafError):
    pass


# -- dcr ------------------------------------------------------------------

class RegistryError(LafError):
    pass


class DuplicateEntryId(RegistryError):
    pass


class UnknownValueRef(RegistryError):
    pass


class KindMismatch(RegistryError):
    pass


class MissingName(RegistryError):
    pass


class UnknownId(RegistryError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class NotADescriptor(RegistryError):
    pass


class UnknownTarget(RegistryError):
    pass


class DuplicateSchemeName(RegistryError):
    pass


class LocalEntryInvalid(RegistryError):
    pass


class UnmappedCategory(RegistryError):
    def __init__(self, name: str, nid: str | None = None):
        self.name = name
        self.nid = nid
        where = f" (node {nid})" if nid else ""
        super().__init__(f"unmapped category {name}{where}")


class CompatViolation(RegistryError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class NoPreimage(RegistryError):
    pass


class AmbiguousPreimage(RegistryError):
    pass


# -- transducers ----------------------------------------------------------

class MalformedPair(LafError):
    def __init__(self, line: int, column: int, detail: str = "malformed token/tag pair"):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {detail}")


class ColumnCountMismatch(LafError):
    def __init__(self, line: int, expected: int, found: int):
        self.line = line
        super().__init__(f"line {line}: expected {expected} columns, found {found}")


class UnbalancedParens(LafError):
    def __init__(self, position: int):
        self.position = position
        super().__init__(f"unbalanced parentheses at offset {position}")


class EmptyLabel(LafError):
    pass


class MalformedTree(LafError):
    pass


class UnmappedTag(UnmappedCategory):
    pass


class ShapeMismatch(LafError):
    pass


class MissingPrimary(LafError):
    pass


# -- layerops -------------------------------------------------------------

class PrimaryMismatch(LafError):
    pass


class LayerIdClash(LafError):
    pass


class UnknownLayer(LafError):
    pass


class UnknownDescriptor(LafError):
    pass

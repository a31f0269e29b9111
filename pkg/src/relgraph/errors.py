"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class RelGraphError(Exception):
    """Base class for all toolkit errors."""


class NetlistError(RelGraphError):
    pass


class UnknownCell(NetlistError):
    def __init__(self, name: str, line: int | None = None, column: int | None = None):
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(f"{where}unknown cell kind {name!r}")
        self.name = name
        self.line = line
        self.column = column


class MultipleDrivers(NetlistError):
    def __init__(self, net: str):
        super().__init__(f"net {net!r} has more than one driver")
        self.net = net


class UndrivenNet(NetlistError):
    def __init__(self, net: str):
        super().__init__(f"net {net!r} has no driver")
        self.net = net


class CombinationalCycle(NetlistError):
    def __init__(self, nodes):
        self.nodes = list(nodes)
        super().__init__("combinational cycle through " + " -> ".join(self.nodes))


class NetlistSyntaxError(NetlistError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SchemaError(RelGraphError):
    """A structured document does not match its schema; `path` locates the offending field."""

    def __init__(self, path: str, message: str = "invalid value"):
        super().__init__(f"{path}: {message}")
        self.path = path


class NoEndpoints(RelGraphError):
    pass


class NonpositiveBaseline(RelGraphError):
    pass


class NoPositiveDegree(RelGraphError):
    pass


class ShapeMismatch(RelGraphError):
    pass


class EmptyDataset(RelGraphError):
    pass


class LengthMismatch(RelGraphError):
    pass


class ZeroTrueValue(RelGraphError):
    pass


class TooFewSamples(RelGraphError):
    pass


class UnknownDesign(RelGraphError):
    pass


class IoError(RelGraphError, OSError):
    """A file could not be read or written."""

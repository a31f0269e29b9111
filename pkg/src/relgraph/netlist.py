"""Gate-level netlists: cell catalog, structural/canonical parsers and the canonical writer."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Sequence

from .errors import (
    CombinationalCycle,
    MultipleDrivers,
    NetlistSyntaxError,
    SchemaError,
    UndrivenNet,
    UnknownCell,
)

INPUT_PINS = ("A", "B", "C")


@dataclass(frozen=True)
class CellKind:
    name: str
    function: str
    input_pin_count: int
    is_sequential: bool = False

    def __post_init__(self):
        if self.input_pin_count < 1:
            raise ValueError(f"{self.name}: input_pin_count must be >= 1")
        if self.is_sequential and self.input_pin_count != 1:
            raise ValueError(f"{self.name}: sequential kinds have a single D input")
        if not self.is_sequential and self.input_pin_count > len(INPUT_PINS):
            raise ValueError(f"{self.name}: at most {len(INPUT_PINS)} input pins supported")

    @property
    def input_pins(self) -> tuple[str, ...]:
        if self.is_sequential:
            return ("D",)
        return INPUT_PINS[: self.input_pin_count]

    @property
    def output_pin(self) -> str:
        return "Q" if self.is_sequential else "Y"


@dataclass(frozen=True)
class CellCatalog:
    kinds: tuple[CellKind, ...]
    _by_name: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_name = {}
        for kind in self.kinds:
            if kind.name in by_name:
                raise ValueError(f"duplicate cell kind {kind.name!r}")
            by_name[kind.name] = kind
        object.__setattr__(self, "_by_name", by_name)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self.kinds)

    def get(self, name: str) -> CellKind:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownCell(name) from None

    @property
    def functions(self) -> tuple[str, ...]:
        """Distinct Boolean-function tags in catalog order (first appearance)."""
        seen = []
        for kind in self.kinds:
            if kind.function not in seen:
                seen.append(kind.function)
        return tuple(seen)

    @property
    def feature_length(self) -> int:
        # one slot per function, then PI, then PO
        return len(self.functions) + 2

    def function_index(self, kind_name: str) -> int:
        return self.functions.index(self.get(kind_name).function)


def default_catalog() -> CellCatalog:
    return CellCatalog(
        (
            CellKind("INV", "INV", 1),
            CellKind("BUF", "BUF", 1),
            CellKind("NAND2", "NAND", 2),
            CellKind("NOR2", "NOR", 2),
            CellKind("AND2", "AND", 2),
            CellKind("OR2", "OR", 2),
            CellKind("XOR2", "XOR", 2),
            CellKind("XNOR2", "XNOR", 2),
            CellKind("AOI21", "AOI", 3),
            CellKind("OAI21", "OAI", 3),
            CellKind("AND3", "AND", 3),
            CellKind("DFF", "DFF", 1, is_sequential=True),
        )
    )


@dataclass(frozen=True)
class GateInstance:
    instance_name: str
    kind: CellKind
    input_nets: tuple[str, ...]
    output_net: str

    def __post_init__(self):
        if len(self.input_nets) != self.kind.input_pin_count:
            raise ValueError(
                f"{self.instance_name}: {self.kind.name} expects "
                f"{self.kind.input_pin_count} inputs, got {len(self.input_nets)}"
            )


@dataclass(frozen=True)
class Netlist:
    name: str
    primary_inputs: tuple[str, ...]
    primary_outputs: tuple[str, ...]
    gates: tuple[GateInstance, ...]
    clock_period: float = 1.0  # ns

    def __post_init__(self):
        object.__setattr__(self, "primary_inputs", tuple(self.primary_inputs))
        object.__setattr__(self, "primary_outputs", tuple(self.primary_outputs))
        object.__setattr__(self, "gates", tuple(self.gates))
        if not self.clock_period > 0:
            raise ValueError("clock_period must be positive")
        validate(self)

    def drivers(self) -> dict[str, int | None]:
        """Net -> index of the driving gate, or None for primary inputs."""
        out: dict[str, int | None] = {net: None for net in self.primary_inputs}
        for i, gate in enumerate(self.gates):
            out[gate.output_net] = i
        return out


def validate(netlist: Netlist) -> None:
    driven: dict[str, str] = {}
    for net in netlist.primary_inputs:
        if net in driven:
            raise MultipleDrivers(net)
        driven[net] = "<input>"
    for gate in netlist.gates:
        if gate.output_net in driven:
            raise MultipleDrivers(gate.output_net)
        driven[gate.output_net] = gate.instance_name
    for gate in netlist.gates:
        for net in gate.input_nets:
            if net not in driven:
                raise UndrivenNet(net)
    for net in netlist.primary_outputs:
        if net not in driven:
            raise UndrivenNet(net)
    if len(set(netlist.primary_outputs)) != len(netlist.primary_outputs):
        raise ValueError("duplicate primary output")

    comb_driver = {
        g.output_net: g.instance_name for g in netlist.gates if not g.kind.is_sequential
    }
    deps: dict[str, set[str]] = {}
    for gate in netlist.gates:
        if gate.kind.is_sequential:
            continue
        deps[gate.instance_name] = {comb_driver[n] for n in gate.input_nets if n in comb_driver}
    try:
        tuple(TopologicalSorter(deps).static_order())
    except CycleError as exc:
        raise CombinationalCycle(exc.args[1]) from None


# --------------------------------------------------------------------------- structural subset

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>//[^\n]*)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[(),;.])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise NetlistSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("id", "punct"):
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        return NetlistSyntaxError(msg, tok.line, tok.col)

    def take(self, text: str | None = None, kind: str | None = None) -> _Tok:
        tok = self.peek()
        if (text is not None and tok.text != text) or (kind is not None and tok.kind != kind):
            want = repr(text) if text is not None else "identifier"
            got = repr(tok.text) if tok.kind != "eof" else "end of input"
            raise self.error(f"expected {want}, got {got}")
        self.i += 1
        return tok

    def id_list(self, terminator: str) -> list[_Tok]:
        names = [self.take(kind="id")]
        while self.peek().text == ",":
            self.take(",")
            names.append(self.take(kind="id"))
        self.take(terminator)
        return names


def parse_structural(
    text: str, catalog: CellCatalog | None = None, clock_period: float = 1.0
) -> Netlist:
    """Parse the structural Verilog-like subset (named port connections, one module)."""
    catalog = catalog or default_catalog()
    p = _Parser(text)
    p.take("module")
    name = p.take(kind="id").text
    p.take("(")
    if p.peek().text == ")":
        p.take(")")
        ports = []
    else:
        ports = p.id_list(")")
    p.take(";")

    inputs: list[str] = []
    outputs: list[str] = []
    gates: list[GateInstance] = []
    seen_instances: set[str] = set()
    while True:
        tok = p.peek()
        if tok.kind == "eof":
            raise p.error("missing 'endmodule'")
        if tok.text == "endmodule":
            p.take()
            break
        if tok.kind != "id":
            raise p.error(f"unexpected {tok.text!r}")
        if tok.text in ("input", "output", "wire"):
            p.take()
            names = [t.text for t in p.id_list(";")]
            if tok.text == "input":
                inputs.extend(names)
            elif tok.text == "output":
                outputs.extend(names)
            continue
        gates.append(_parse_instance(p, catalog, seen_instances))

    if p.peek().kind != "eof":
        raise p.error(f"unexpected {p.peek().text!r} after endmodule")
    declared = set(inputs) | set(outputs)
    for port in ports:
        if port.text not in declared:
            raise NetlistSyntaxError(f"port {port.text!r} not declared input or output", port.line, port.col)
    return Netlist(name, tuple(inputs), tuple(outputs), tuple(gates), clock_period)


def _parse_instance(p: _Parser, catalog: CellCatalog, seen: set[str]) -> GateInstance:
    kind_tok = p.take(kind="id")
    if kind_tok.text not in catalog:
        raise UnknownCell(kind_tok.text, kind_tok.line, kind_tok.col)
    kind = catalog.get(kind_tok.text)
    inst_tok = p.take(kind="id")
    if inst_tok.text in seen:
        raise p.error(f"duplicate instance {inst_tok.text!r}", inst_tok)
    seen.add(inst_tok.text)
    p.take("(")
    conns: dict[str, str] = {}
    while True:
        p.take(".")
        pin = p.take(kind="id")
        p.take("(")
        net = p.take(kind="id").text
        p.take(")")
        if pin.text in conns:
            raise p.error(f"pin {pin.text!r} connected twice", pin)
        if pin.text not in kind.input_pins and pin.text != kind.output_pin:
            raise p.error(f"{kind.name} has no pin {pin.text!r}", pin)
        conns[pin.text] = net
        if p.peek().text == ",":
            p.take(",")
            continue
        break
    close = p.take(")")
    p.take(";")
    missing = [pin for pin in (*kind.input_pins, kind.output_pin) if pin not in conns]
    if missing:
        raise p.error(f"{inst_tok.text}: unconnected pin(s) {', '.join(missing)}", close)
    return GateInstance(
        inst_tok.text, kind, tuple(conns[pin] for pin in kind.input_pins), conns[kind.output_pin]
    )


# --------------------------------------------------------------------------- canonical schema


def write_canonical(netlist: Netlist) -> str:
    doc = {
        "name": netlist.name,
        "clock_period_ns": float(netlist.clock_period),
        "primary_inputs": list(netlist.primary_inputs),
        "primary_outputs": list(netlist.primary_outputs),
        "gates": [
            {
                "name": g.instance_name,
                "kind": g.kind.name,
                "inputs": list(g.input_nets),
                "output": g.output_net,
            }
            for g in netlist.gates
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _expect(value, types, path: str):
    if not isinstance(value, types) or isinstance(value, bool):
        raise SchemaError(path, f"expected {getattr(types, '__name__', types)}")
    return value


def _str_list(value, path: str) -> list[str]:
    _expect(value, list, path)
    for i, item in enumerate(value):
        _expect(item, str, f"{path}[{i}]")
    return value


def parse_canonical(text: str, catalog: CellCatalog | None = None) -> Netlist:
    catalog = catalog or default_catalog()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"not valid JSON ({exc.msg} at line {exc.lineno})") from None
    _expect(doc, dict, "$")
    for key in ("name", "clock_period_ns", "primary_inputs", "primary_outputs", "gates"):
        if key not in doc:
            raise SchemaError(f"$.{key}", "missing")
    name = _expect(doc["name"], str, "$.name")
    period = float(_expect(doc["clock_period_ns"], (int, float), "$.clock_period_ns"))
    if not period > 0:
        raise SchemaError("$.clock_period_ns", "must be positive")
    pis = _str_list(doc["primary_inputs"], "$.primary_inputs")
    pos = _str_list(doc["primary_outputs"], "$.primary_outputs")
    gates = []
    for i, g in enumerate(_expect(doc["gates"], list, "$.gates")):
        path = f"$.gates[{i}]"
        _expect(g, dict, path)
        for key in ("name", "kind", "inputs", "output"):
            if key not in g:
                raise SchemaError(f"{path}.{key}", "missing")
        kind = catalog.get(_expect(g["kind"], str, f"{path}.kind"))
        inputs = _str_list(g["inputs"], f"{path}.inputs")
        if len(inputs) != kind.input_pin_count:
            raise SchemaError(f"{path}.inputs", f"{kind.name} takes {kind.input_pin_count} inputs")
        gates.append(
            GateInstance(
                _expect(g["name"], str, f"{path}.name"),
                kind,
                tuple(inputs),
                _expect(g["output"], str, f"{path}.output"),
            )
        )
    return Netlist(name, tuple(pis), tuple(pos), tuple(gates), period)


def load_netlist(path, catalog: CellCatalog | None = None, clock_period: float = 1.0) -> Netlist:
    """Read a netlist file, dispatching on content: JSON documents are canonical, anything else structural."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return parse_canonical(text, catalog)
    return parse_structural(text, catalog, clock_period)


def make_netlist(
    name: str,
    inputs: Sequence[str],
    outputs: Sequence[str],
    gates: Sequence[tuple[str, str, Sequence[str], str]],
    clock_period: float = 1.0,
    catalog: CellCatalog | None = None,
) -> Netlist:
    """Build a netlist from (instance, kind, inputs, output) tuples."""
    catalog = catalog or default_catalog()
    return Netlist(
        name,
        tuple(inputs),
        tuple(outputs),
        tuple(GateInstance(n, catalog.get(k), tuple(i), o) for n, k, i, o in gates),
        clock_period,
    )

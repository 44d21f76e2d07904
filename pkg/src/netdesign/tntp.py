"""Reader and writer for Transportation Networks (TNTP) ``_net`` and ``_trips`` files.

Parsed objects remember the raw tokens and non-data lines of the source so
writing them back reproduces the file up to whitespace.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

LINK_FIELDS = ("init_node", "term_node", "capacity", "length", "free_flow_time",
               "b", "power", "speed", "toll", "link_type")

_META = re.compile(r"^\s*<([^>]+)>\s*(.*?)\s*$")
_ORIGIN = re.compile(r"Origin\s+(\d+)", re.IGNORECASE)
_ENTRY = re.compile(r"(\d+)\s*:\s*([^;\s]+)\s*;?")


class TntpFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class TntpLink:
    init_node: int
    term_node: int
    capacity: float
    length: float
    free_flow_time: float
    b: float
    power: float
    speed: float = 0.0
    toll: float = 0.0
    link_type: float = 0.0
    tokens: tuple[str, ...] = field(default=(), compare=False, repr=False)
    terminated: bool = field(default=True, compare=False, repr=False)

    def values(self) -> tuple:
        return tuple(getattr(self, f) for f in LINK_FIELDS)


@dataclass
class RawTntpNetwork:
    node_count: int
    first_thru_node: int
    links: list[TntpLink]
    zone_count: int | None = None
    metadata: dict[str, str] = field(default_factory=dict, compare=False)
    # source layout: header lines, then body items (str for verbatim lines, int for link rows)
    header_lines: list[str] = field(default_factory=list, compare=False, repr=False)
    body: list = field(default_factory=list, compare=False, repr=False)

    @property
    def link_count(self) -> int:
        return len(self.links)


@dataclass
class RawTripTable:
    zone_count: int
    demands: dict[tuple[int, int], float]
    declared_total: float | None = field(default=None, compare=False)

    @property
    def total(self) -> float:
        return math.fsum(self.demands.values())


def _number(tok: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise TntpFormatError(f"{what}: expected a number, got {tok!r}", lineno) from None


def _integer(tok: str, lineno: int, what: str) -> int:
    v = _number(tok, lineno, what)
    if not v.is_integer():
        raise TntpFormatError(f"{what}: expected an integer, got {tok!r}", lineno)
    return int(v)


def _read_metadata(lines: list[str]):
    meta: dict[str, str] = {}
    where: dict[str, int] = {}
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not stripped or stripped.startswith("~"):
            continue
        m = _META.match(line)
        if not m:
            raise TntpFormatError(f"malformed metadata line {stripped!r}", i + 1)
        key = m.group(1).strip().upper()
        if key == "END OF METADATA":
            return meta, where, i
        meta[key] = m.group(2)
        where[key] = i + 1
    raise TntpFormatError("missing <END OF METADATA>", len(lines))


def _meta_int(meta, where, key, end_line, required=True):
    if key not in meta:
        if required:
            raise TntpFormatError(f"missing <{key}> header", end_line)
        return None
    return _integer(meta[key].split()[0] if meta[key].split() else "", where[key], f"<{key}>")


def parse_network(text: str) -> RawTntpNetwork:
    """Parse a ``_net.tntp`` file; header counts and node ranges are checked."""
    lines = text.splitlines()
    meta, where, end = _read_metadata(lines)
    nodes = _meta_int(meta, where, "NUMBER OF NODES", end + 1)
    declared = _meta_int(meta, where, "NUMBER OF LINKS", end + 1)
    thru = _meta_int(meta, where, "FIRST THRU NODE", end + 1)
    zones = _meta_int(meta, where, "NUMBER OF ZONES", end + 1, required=False)
    if nodes <= 0 or thru <= 0:
        raise TntpFormatError("node count and first thru node must be positive", end + 1)

    links: list[TntpLink] = []
    body: list = []
    for i in range(end + 1, len(lines)):
        line = lines[i]
        lineno = i + 1
        data = line.split("~", 1)[0].strip()
        if not data:
            body.append(line)
            continue
        terminated = data.endswith(";")
        tokens = data.rstrip(";").split()
        tokens = [t.rstrip(";") for t in tokens if t != ";"]
        if len(tokens) < len(LINK_FIELDS):
            raise TntpFormatError(f"link row has {len(tokens)} fields, expected {len(LINK_FIELDS)}", lineno)
        a = _integer(tokens[0], lineno, "init node")
        b = _integer(tokens[1], lineno, "term node")
        for nid in (a, b):
            if not 1 <= nid <= nodes:
                raise TntpFormatError(f"node id {nid} outside [1, {nodes}]", lineno)
        vals = [_number(t, lineno, name) for t, name in zip(tokens[2:10], LINK_FIELDS[2:])]
        if vals[0] <= 0:
            raise TntpFormatError(f"capacity must be positive, got {tokens[2]}", lineno)
        if min(vals[1], vals[2], vals[3], vals[4]) < 0:
            raise TntpFormatError("length, free flow time, b and power must be nonnegative", lineno)
        body.append(len(links))
        links.append(TntpLink(a, b, *vals, tokens=tuple(tokens), terminated=terminated))
    if len(links) != declared:
        raise TntpFormatError(f"header declares {declared} links but {len(links)} rows were read",
                              where["NUMBER OF LINKS"])
    return RawTntpNetwork(nodes, thru, links, zones, meta, lines[:end + 1], body)


def _format(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


def _link_tokens(link: TntpLink) -> list[str]:
    vals = link.values()
    toks = list(link.tokens)
    if len(toks) >= len(LINK_FIELDS) and all(
            float(t) == float(v) for t, v in zip(toks, vals)):
        return toks
    return [_format(v) for v in vals] + toks[len(LINK_FIELDS):]


def write_network(net: RawTntpNetwork) -> str:
    """Serialize to TNTP text, reusing the source layout where it is known."""
    counts = {"NUMBER OF NODES": net.node_count, "NUMBER OF LINKS": net.link_count,
              "FIRST THRU NODE": net.first_thru_node}
    if net.zone_count is not None:
        counts["NUMBER OF ZONES"] = net.zone_count
    out: list[str] = []
    if net.header_lines:
        for line in net.header_lines:
            m = _META.match(line)
            key = m.group(1).strip().upper() if m else None
            if key in counts and _integer(m.group(2).split()[0], 0, key) != counts[key]:
                line = f"<{m.group(1)}> {counts[key]}"
            out.append(line)
    else:
        for key in ("NUMBER OF ZONES", "NUMBER OF NODES", "FIRST THRU NODE", "NUMBER OF LINKS"):
            if key in counts:
                out.append(f"<{key}> {counts[key]}")
        out += ["<END OF METADATA>", "", "",
                "~\tinit_node\tterm_node\tcapacity\tlength\tfree_flow_time\tb\tpower\tspeed\ttoll\tlink_type\t;"]
    body = net.body if net.body and sum(isinstance(x, int) for x in net.body) == net.link_count \
        else list(range(net.link_count))
    for item in body:
        if isinstance(item, str):
            out.append(item)
            continue
        link = net.links[item]
        row = "\t" + "\t".join(_link_tokens(link))
        out.append(row + "\t;" if link.terminated else row)
    return "\n".join(out) + "\n"


def parse_trips(text: str) -> RawTripTable:
    """Parse a ``_trips.tntp`` file; the demand sum must match ``<TOTAL OD FLOW>``."""
    lines = text.splitlines()
    meta, where, end = _read_metadata(lines)
    zones = _meta_int(meta, where, "NUMBER OF ZONES", end + 1)
    declared = None
    if "TOTAL OD FLOW" in meta:
        declared = _number(meta["TOTAL OD FLOW"].split()[0], where["TOTAL OD FLOW"], "<TOTAL OD FLOW>")
    demands: dict[tuple[int, int], float] = {}
    origin = None
    for i in range(end + 1, len(lines)):
        lineno = i + 1
        data = lines[i].split("~", 1)[0]
        if not data.strip():
            continue
        m = _ORIGIN.search(data)
        if m:
            origin = int(m.group(1))
            if not 1 <= origin <= zones:
                raise TntpFormatError(f"origin {origin} outside [1, {zones}]", lineno)
            data = data[m.end():]
        for dm in _ENTRY.finditer(data):
            if origin is None:
                raise TntpFormatError("demand entry before any Origin line", lineno)
            dest = int(dm.group(1))
            if not 1 <= dest <= zones:
                raise TntpFormatError(f"destination {dest} exceeds zone count {zones}", lineno)
            value = _number(dm.group(2), lineno, "demand")
            if value < 0:
                raise TntpFormatError(f"negative demand {value}", lineno)
            demands[(origin, dest)] = demands.get((origin, dest), 0.0) + value
    table = RawTripTable(zones, demands, declared)
    if declared is not None and abs(table.total - declared) > 1e-6 * max(1.0, abs(declared)):
        raise TntpFormatError(f"demands sum to {table.total} but <TOTAL OD FLOW> is {declared}",
                              where["TOTAL OD FLOW"])
    return table


def write_trips(trips: RawTripTable, per_line: int = 5) -> str:
    out = [f"<NUMBER OF ZONES> {trips.zone_count}", f"<TOTAL OD FLOW> {trips.total!r}",
           "<END OF METADATA>", "", ""]
    by_origin: dict[int, list[tuple[int, float]]] = {}
    for (o, z), v in sorted(trips.demands.items()):
        by_origin.setdefault(o, []).append((z, v))
    for o in sorted(by_origin):
        out.append(f"Origin \t{o} ")
        row = by_origin[o]
        for k in range(0, len(row), per_line):
            out.append("".join(f"{z:5d} : {v!r};" for z, v in row[k:k + per_line]))
        out.append("")
    return "\n".join(out) + "\n"


def read_network(path) -> RawTntpNetwork:
    with open(path, encoding="utf-8", errors="replace") as fh:
        return parse_network(fh.read())


def read_trips(path) -> RawTripTable:
    with open(path, encoding="utf-8", errors="replace") as fh:
        return parse_trips(fh.read())

"""Line-oriented pivot ("dump") serialization of annotation documents.

Grammar (fields TAB-separated, lines LF-terminated)::

    #LAF-DUMP   1
    #PRIMARY    <pid> <uri> <space> <extent...> <sha256hex>
    #LAYER      <lid> <dep[,dep...]> <dcs-ref|->
    R           <rid> <pid> <c1> <c2> ...
    N           <nid> <lid> <cat> [r:<rid>|n:<nid> ...]
    F           <nid> <descriptor> c:<cat>|s:<escaped>|g:<gid>
    G           <gid> ALT|SET|LIST <member> [<member> ...]
    #END        <count of R/N/F/G records>

The writer emits primaries first, then one section per layer in dependency
order; each section carries the regions first used by its nodes, the nodes,
their features and the groups they complete.  Any prefix cut at a section
boundary and closed with an ``#END`` line is therefore a valid dump.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Union

from .anchors import PrimaryDataRef, Region, boxes_from_coords, get_space
from .canonical import canonicalize
from .errors import (
    ArityError,
    BadMagic,
    CountMismatch,
    DanglingEscape,
    DumpError,
    HashMismatch,
    LafError,
    TrailingData,
    UnknownEscape,
    UnknownRecordKind,
    UnresolvedAtEnd,
)
from .graph import (
    AnnotationDocument,
    CategoryRef,
    Feature,
    Group,
    Layer,
    Literal,
    Node,
    Ref,
)

MAGIC = "#LAF-DUMP"
VERSION = "1"
BODY_KINDS = ("R", "N", "F", "G")

Resolver = Callable[[str], Union[bytes, None]]

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def escape(text: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in text)


def unescape(token: str) -> str:
    out = []
    chars = iter(token)
    for ch in chars:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(chars, None)
        if nxt is None:
            raise DanglingEscape(f"dangling backslash in {token!r}")
        if nxt not in _UNESCAPES:
            raise UnknownEscape(f"unknown escape \\{nxt} in {token!r}")
        out.append(_UNESCAPES[nxt])
    return "".join(out)


# -- tokens ---------------------------------------------------------------

def _value_out(value) -> str:
    if isinstance(value, CategoryRef):
        return "c:" + value.token
    if isinstance(value, Literal):
        return "s:" + escape(value.text)
    return value.token


def _value_in(token: str):
    kind, sep, rest = token.partition(":")
    if not sep:
        raise ValueError(f"malformed value token {token!r}")
    if kind == "c":
        return CategoryRef.parse(rest)
    if kind == "s":
        return Literal(unescape(rest))
    if kind in ("g", "n", "r"):
        return Ref(kind, rest)
    raise ValueError(f"unknown value token kind {kind!r}")


# -- writing --------------------------------------------------------------

def _sections(doc: AnnotationDocument):
    """Assign every body record to a section index (0 = before any layer)."""
    order = doc.layer_order()
    index = {lid: i + 1 for i, lid in enumerate(order)}
    node_sec = {nid: index[n.layer] for nid, n in doc.nodes.items()}

    group_sec = {}
    for gid, g in doc.groups.items():
        group_sec[gid] = max([node_sec[m.id] for m in g.members if isinstance(m, Ref)], default=0)
    for f in doc.all_features():
        if isinstance(f.value, Ref):
            group_sec[f.value.id] = max(group_sec[f.value.id], node_sec[f.nid])

    region_sec = {rid: None for rid in doc.regions}
    for nid, n in doc.nodes.items():
        for t in n.targets:
            if t.kind == "r":
                cur = region_sec[t.id]
                region_sec[t.id] = node_sec[nid] if cur is None else min(cur, node_sec[nid])
    region_sec = {k: (0 if v is None else v) for k, v in region_sec.items()}

    feat_sec = []
    for f in doc.all_features():
        sec = node_sec[f.nid]
        if isinstance(f.value, Ref):
            sec = max(sec, group_sec[f.value.id])
        feat_sec.append((sec, f))
    return order, region_sec, node_sec, feat_sec, group_sec


def dump_lines(doc: AnnotationDocument, canonical: bool = True) -> Iterator[str]:
    """Yield the dump as text lines (without line terminators)."""
    doc.require_sealed()
    if canonical:
        doc = canonicalize(doc)
    order, region_sec, node_sec, feat_sec, group_sec = _sections(doc)
    yield f"{MAGIC}\t{VERSION}"
    for p in doc.primaries.values():
        yield "\t".join(["#PRIMARY", p.pid, escape(p.uri), p.space.name,
                         *map(str, p.extent), p.content_hash])
    count = 0
    for sec in range(len(order) + 1):
        if sec:
            layer = doc.layers[order[sec - 1]]
            yield "\t".join(["#LAYER", layer.lid, ",".join(layer.depends_on),
                             layer.dcs_ref or "-"])
        for r in doc.regions.values():
            if region_sec[r.rid] == sec:
                count += 1
                yield "\t".join(["R", r.rid, r.pid, *map(str, r.coords)])
        for n in doc.nodes.values():
            if node_sec[n.nid] == sec:
                count += 1
                yield "\t".join(["N", n.nid, n.layer, n.type_category.token,
                                 *(t.token for t in n.targets)])
        for s, f in feat_sec:
            if s == sec:
                count += 1
                yield "\t".join(["F", f.nid, f.descriptor.token, _value_out(f.value)])
        for g in doc.groups.values():
            if group_sec[g.gid] == sec:
                count += 1
                yield "\t".join(["G", g.gid, g.kind, *(_value_out(m) for m in g.members)])
    yield f"#END\t{count}"


def write_dump(doc: AnnotationDocument, canonical: bool = True) -> bytes:
    """Serialize a sealed document; canonical output depends only on content."""
    return "".join(line + "\n" for line in dump_lines(doc, canonical)).encode("utf-8")


# -- record parsing -------------------------------------------------------

def _parse_record(fields: list[str], lineno: int):
    """Turn one split line into a model object, or ("END", n) / ("MAGIC",)."""
    kind = fields[0]
    try:
        if kind == "#PRIMARY":
            if len(fields) < 6:
                raise ArityError("#PRIMARY needs at least 5 fields", lineno)
            space = get_space(fields[3])
            if len(fields) != 5 + space.dimension:
                raise ArityError(f"#PRIMARY for {space.name} needs {4 + space.dimension} fields",
                                 lineno)
            extent = tuple(_int(x, lineno) for x in fields[4:-1])
            return PrimaryDataRef(fields[1], unescape(fields[2]), space, extent, fields[-1])
        if kind == "#LAYER":
            if len(fields) != 4:
                raise ArityError("#LAYER needs 3 fields", lineno)
            deps = tuple(d for d in fields[2].split(",") if d)
            if not deps:
                raise ArityError("#LAYER needs at least one dependency", lineno)
            return Layer(fields[1], deps, None if fields[3] == "-" else fields[3])
        if kind == "R":
            if len(fields) < 5:
                raise ArityError("R needs an id, a pid and coordinates", lineno)
            coords = [_int(x, lineno) for x in fields[3:]]
            if len(coords) % 2:
                raise ArityError("R needs an even number of coordinates", lineno)
            # arity per dimension is checked when the primary is known
            return _RawRegion(fields[1], fields[2], tuple(coords))
        if kind == "N":
            if len(fields) < 4:
                raise ArityError("N needs an id, a layer and a category", lineno)
            targets = []
            for tok in fields[4:]:
                t = _value_in(tok)
                if not isinstance(t, Ref) or t.kind == "g":
                    raise ArityError(f"bad node target {tok!r}", lineno)
                targets.append(t)
            return Node(fields[1], fields[2], CategoryRef.parse(fields[3]), tuple(targets))
        if kind == "F":
            if len(fields) != 4:
                raise ArityError("F needs a node id, a descriptor and a value", lineno)
            value = _value_in(fields[3])
            if isinstance(value, Ref) and value.kind != "g":
                raise ArityError(f"bad feature value {fields[3]!r}", lineno)
            return Feature(fields[1], CategoryRef.parse(fields[2]), value)
        if kind == "G":
            if len(fields) < 4:
                raise ArityError("G needs an id, a kind and members", lineno)
            members = []
            for tok in fields[3:]:
                m = _value_in(tok)
                if isinstance(m, Ref) and m.kind != "n":
                    raise ArityError(f"bad group member {tok!r}", lineno)
                members.append(m)
            return Group(fields[1], fields[2], tuple(members))
        if kind == "#END":
            if len(fields) != 2:
                raise ArityError("#END needs a record count", lineno)
            return ("END", _int(fields[1], lineno))
    except DumpError:
        raise
    except (LafError, ValueError) as exc:
        raise ArityError(str(exc), lineno) from exc
    raise UnknownRecordKind(f"unknown record kind {kind!r}", lineno)


@dataclass(frozen=True)
class _RawRegion:
    rid: str
    pid: str
    coords: tuple[int, ...]


def _int(text: str, lineno: int) -> int:
    if not text.isdigit():
        raise ArityError(f"expected a nonnegative integer, got {text!r}", lineno)
    return int(text)


def _check_magic(line: str | None):
    if line != f"{MAGIC}\t{VERSION}":
        raise BadMagic(f"expected '{MAGIC}<TAB>{VERSION}' header", 1)


def _split_lines(data: bytes) -> list[str]:
    # an unterminated final line is an incomplete record and is ignored
    parts = data.split(b"\n")
    return [p.decode("utf-8") for p in parts[:-1]]


def _materialize(raw: _RawRegion, dimension: int, lineno: int | None) -> Region:
    try:
        boxes = boxes_from_coords(raw.coords, dimension)
    except LafError as exc:
        raise ArityError(f"region {raw.rid}: {exc}", lineno) from exc
    return Region(raw.rid, raw.pid, boxes)


def _raw_boxes(coords, dim):
    step = 2 * dim
    return tuple(tuple(zip(coords[i:i + step:2], coords[i + 1:i + step:2]))
                 for i in range(0, len(coords), step))


def _verify_hash(p: PrimaryDataRef, resolver: Resolver | None, lineno: int | None):
    if resolver is None:
        return None
    data = resolver(p.uri)
    if data is None:
        return None
    if not p.verify(data):
        raise HashMismatch(f"primary {p.pid}: content hash does not match {p.uri}", lineno)
    return data


# -- batch reading --------------------------------------------------------

def read_dump(data: bytes, resolver: Resolver | None = None) -> AnnotationDocument:
    """Parse a complete dump into a sealed document.

    ``resolver`` maps a primary uri to its bytes (or None when unavailable);
    available resources are hash-checked and attached as ``doc.sources``.
    """
    lines = _split_lines(data)
    _check_magic(lines[0] if lines else None)
    doc = AnnotationDocument()
    raw_regions: list[tuple[_RawRegion, int]] = []
    body = 0
    end = None
    for lineno, line in enumerate(lines[1:], 2):
        if end is not None:
            raise TrailingData("data after #END", lineno)
        rec = _parse_record(line.split("\t"), lineno)
        if isinstance(rec, tuple):
            end = (rec[1], lineno)
            continue
        if isinstance(rec, _RawRegion):
            raw_regions.append((rec, lineno))
            body += 1
            continue
        if isinstance(rec, (Node, Feature, Group)):
            body += 1
        try:
            doc.add(rec)
        except LafError as exc:
            raise ArityError(str(exc), lineno) from exc
    if end is not None and end[0] != body:
        raise CountMismatch(f"#END announces {end[0]} records, found {body}", end[1])
    seen_rids = set()
    for raw, lineno in raw_regions:
        if raw.rid in seen_rids:
            raise ArityError(f"duplicate region id {raw.rid}", lineno)
        seen_rids.add(raw.rid)
        if raw.pid in doc.primaries:
            doc.add(_materialize(raw, doc.primaries[raw.pid].space.dimension, lineno))
        else:
            doc.add(Region(raw.rid, raw.pid, _raw_boxes(raw.coords, 1)))
    missing = doc.unresolved()
    if missing:
        raise UnresolvedAtEnd(missing)
    if end is None:
        raise CountMismatch("missing #END record")
    for p in doc.primaries.values():
        content = _verify_hash(p, resolver, None)
        if content is not None:
            doc.sources[p.pid] = content
    return doc.close()


# -- streaming ------------------------------------------------------------

@dataclass(frozen=True)
class DocumentStart:
    version: str


@dataclass(frozen=True)
class PrimaryDeclared:
    primary: PrimaryDataRef


@dataclass(frozen=True)
class LayerDeclared:
    layer: Layer


@dataclass(frozen=True)
class RegionSeen:
    region: Region


@dataclass(frozen=True)
class NodeSeen:
    node: Node


@dataclass(frozen=True)
class FeatureSeen:
    feature: Feature


@dataclass(frozen=True)
class GroupSeen:
    group: Group


@dataclass(frozen=True)
class ReferenceResolved:
    """A forward-referenced id (``kind:id``) has just been defined."""

    id: str


@dataclass(frozen=True)
class DocumentEnd:
    record_count: int


@dataclass(frozen=True)
class StreamError:
    """Terminal event carrying the error that stopped the stream."""

    error: LafError


StreamEvent = Union[DocumentStart, PrimaryDeclared, LayerDeclared, RegionSeen, NodeSeen,
                    FeatureSeen, GroupSeen, ReferenceResolved, DocumentEnd, StreamError]


def _chunks(source) -> Iterator[bytes]:
    if isinstance(source, (bytes, bytearray, memoryview)):
        yield bytes(source)
    elif hasattr(source, "read"):
        while True:
            block = source.read(1 << 16)
            if not block:
                return
            yield block
    else:
        yield from source


def _lines(source) -> Iterator[str]:
    pending = b""
    for chunk in _chunks(source):
        pending += chunk
        *complete, pending = pending.split(b"\n")
        for raw in complete:
            yield raw.decode("utf-8")


class _StreamState:
    """Per-stream bookkeeping: defined ids, pending forward references and
    the dimension of each declared primary.  Records are not retained."""

    def __init__(self, resolver):
        self.resolver = resolver
        self.defined: set[str] = set()
        self.pending: set[str] = set()
        self.dims: dict[str, int] = {}
        self.pending_regions: dict[str, list[tuple[_RawRegion, int]]] = {}
        self.body = 0

    def refer(self, key: str):
        if key not in self.defined:
            self.pending.add(key)

    def define(self, key: str, lineno: int) -> list[ReferenceResolved]:
        if key in self.defined:
            raise ArityError(f"duplicate id {key}", lineno)
        self.defined.add(key)
        if key in self.pending:
            self.pending.discard(key)
            return [ReferenceResolved(key)]
        return []


def stream_read(source, resolver: Resolver | None = None) -> Iterator[StreamEvent]:
    """Incrementally parse a dump, yielding events in record order.

    ``source`` may be bytes, a binary file object or an iterable of byte
    chunks.  Errors end the stream with a :class:`StreamError` event.
    """
    state = _StreamState(resolver)
    try:
        yield from _stream(source, state)
    except LafError as exc:
        yield StreamError(exc)


def _stream(source, st: _StreamState) -> Iterator[StreamEvent]:
    lines = _lines(source)
    first = next(lines, None)
    _check_magic(first)
    yield DocumentStart(VERSION)
    end_seen = False
    for lineno, line in enumerate(lines, 2):
        if end_seen:
            raise TrailingData("data after #END", lineno)
        rec = _parse_record(line.split("\t"), lineno)
        if isinstance(rec, tuple):
            if rec[1] != st.body:
                raise CountMismatch(f"#END announces {rec[1]} records, found {st.body}", lineno)
            if st.pending:
                raise UnresolvedAtEnd(st.pending)
            end_seen = True
            yield DocumentEnd(st.body)
            continue
        if isinstance(rec, PrimaryDataRef):
            st.dims[rec.pid] = rec.space.dimension
            _verify_hash(rec, st.resolver, lineno)
            yield PrimaryDeclared(rec)
            yield from st.define("p:" + rec.pid, lineno)
            yield from st.define("l:" + rec.pid, lineno)
            for raw, ln in st.pending_regions.pop(rec.pid, []):
                region = _materialize(raw, rec.space.dimension, ln)
                yield RegionSeen(region)
                yield from st.define("r:" + region.rid, ln)
        elif isinstance(rec, Layer):
            for d in rec.depends_on:
                st.refer("l:" + d)
            yield LayerDeclared(rec)
            yield from st.define("l:" + rec.lid, lineno)
        elif isinstance(rec, _RawRegion):
            st.body += 1
            if rec.pid in st.dims:
                region = _materialize(rec, st.dims[rec.pid], lineno)
                yield RegionSeen(region)
                yield from st.define("r:" + rec.rid, lineno)
            else:
                # cannot split coordinates into boxes until the primary is declared
                st.refer("p:" + rec.pid)
                st.pending_regions.setdefault(rec.pid, []).append((rec, lineno))
        elif isinstance(rec, Node):
            st.body += 1
            st.refer("l:" + rec.layer)
            for t in rec.targets:
                st.refer(t.token)
            yield NodeSeen(rec)
            yield from st.define("n:" + rec.nid, lineno)
        elif isinstance(rec, Feature):
            st.body += 1
            st.refer("n:" + rec.nid)
            if isinstance(rec.value, Ref):
                st.refer(rec.value.token)
            yield FeatureSeen(rec)
        elif isinstance(rec, Group):
            st.body += 1
            for m in rec.members:
                if isinstance(m, Ref):
                    st.refer(m.token)
            yield GroupSeen(rec)
            yield from st.define("g:" + rec.gid, lineno)
    if not end_seen:
        if st.pending:
            raise UnresolvedAtEnd(st.pending)
        raise CountMismatch("missing #END record")


def fold_events(events: Iterable[StreamEvent], resolver: Resolver | None = None) -> AnnotationDocument:
    """Rebuild a sealed document from a stream of events."""
    doc = AnnotationDocument()
    for ev in events:
        if isinstance(ev, StreamError):
            raise ev.error
        if isinstance(ev, PrimaryDeclared):
            doc.add(ev.primary)
            if resolver is not None:
                content = resolver(ev.primary.uri)
                if content is not None:
                    doc.sources[ev.primary.pid] = content
        elif isinstance(ev, LayerDeclared):
            doc.add(ev.layer)
        elif isinstance(ev, RegionSeen):
            doc.add(ev.region)
        elif isinstance(ev, NodeSeen):
            doc.add(ev.node)
        elif isinstance(ev, FeatureSeen):
            doc.add(ev.feature)
        elif isinstance(ev, GroupSeen):
            doc.add(ev.group)
        elif isinstance(ev, DocumentEnd):
            return doc.close()
    raise CountMismatch("event stream ended without DocumentEnd")


def read_stream(source, resolver: Resolver | None = None) -> AnnotationDocument:
    return fold_events(stream_read(source, resolver), resolver)


# -- separability ---------------------------------------------------------

def split_dump(data: bytes) -> list[bytes]:
    """Cut a dump at layer boundaries.

    Returns one complete dump per layer section: everything up to and
    including that layer, closed with a recomputed ``#END`` record.
    """
    lines = _split_lines(data)
    _check_magic(lines[0] if lines else None)
    prefixes = []
    body = 0
    current: list[str] = []
    seen_layer = False
    for line in lines:
        kind = line.split("\t", 1)[0]
        if kind == "#END":
            break
        if kind == "#LAYER" and seen_layer:
            prefixes.append("".join(l + "\n" for l in current) + f"#END\t{body}\n")
        if kind == "#LAYER":
            seen_layer = True
        if kind in BODY_KINDS:
            body += 1
        current.append(line)
    if seen_layer:
        prefixes.append("".join(l + "\n" for l in current) + f"#END\t{body}\n")
    return [p.encode("utf-8") for p in prefixes]


def file_resolver(base_dir) -> Resolver:
    """Resolve primary uris as paths relative to ``base_dir``."""
    from pathlib import Path

    base = Path(base_dir)

    def resolve(uri: str):
        path = Path(uri)
        if not path.is_absolute():
            path = base / path
        try:
            return path.read_bytes()
        except OSError:
            return None
    return resolve

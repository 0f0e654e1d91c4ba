"""Feature-structure annotation graph over stand-off regions.

An :class:`AnnotationDocument` is built incrementally with :meth:`add`.
While open it tolerates forward references; :meth:`close` resolves every
reference, checks acyclicity and seals the document.  Sealed documents are
immutable and may be shared freely between readers.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

from .anchors import PrimaryDataRef, Region, region_relate, Relation, union_boxes
from .errors import (
    CrossDocumentComparison,
    DuplicateId,
    InvalidGroup,
    LafError,
    LayerCycle,
    MalformedId,
    MixedPrimary,
    NotCoextensive,
    OutOfExtent,
    SealedDocument,
    TargetCycle,
    UngroundedLayer,
    UnknownNode,
    UnresolvedReference,
    UnsealedDocument,
    WrongArity,
)
from .ids import check_id, is_id

UNTYPED = "UNTYPED"


@dataclass(frozen=True, order=True)
class CategoryRef:
    """A registry concept id, or a scheme-local name when ``scheme`` is set."""

    name: str
    scheme: str | None = None

    def __post_init__(self):
        check_id(self.name, "category name")
        if self.scheme is not None:
            check_id(self.scheme, "scheme name")

    @property
    def is_local(self) -> bool:
        return self.scheme is not None

    @property
    def token(self) -> str:
        return f"~{self.scheme}:{self.name}" if self.scheme else self.name

    @classmethod
    def parse(cls, token: str) -> "CategoryRef":
        if token.startswith("~"):
            scheme, sep, name = token[1:].partition(":")
            if not sep:
                raise MalformedId(f"malformed scheme-local category {token!r}")
            return cls(name, scheme)
        return cls(token)

    def __str__(self) -> str:
        return self.token


@dataclass(frozen=True, order=True)
class Literal:
    text: str


@dataclass(frozen=True, order=True)
class Ref:
    """Reference to a region (``r``), node (``n``) or group (``g``)."""

    kind: str
    id: str

    def __post_init__(self):
        if self.kind not in ("r", "n", "g"):
            raise ValueError(f"bad reference kind {self.kind!r}")
        check_id(self.id)

    @property
    def token(self) -> str:
        return f"{self.kind}:{self.id}"


def region_ref(rid: str) -> Ref:
    return Ref("r", rid)


def node_ref(nid: str) -> Ref:
    return Ref("n", nid)


def group_ref(gid: str) -> Ref:
    return Ref("g", gid)


Value = Union[CategoryRef, Literal, Ref]


def as_category(value) -> CategoryRef:
    return value if isinstance(value, CategoryRef) else CategoryRef.parse(value)


@dataclass(frozen=True)
class Layer:
    lid: str
    depends_on: tuple[str, ...]
    dcs_ref: str | None = None

    def __post_init__(self):
        check_id(self.lid, "layer id")
        deps = tuple(sorted(set(self.depends_on)))
        for d in deps:
            check_id(d, "layer dependency")
        object.__setattr__(self, "depends_on", deps)
        if self.dcs_ref is not None:
            check_id(self.dcs_ref, "DCS reference")


@dataclass(frozen=True)
class Node:
    nid: str
    layer: str
    type_category: CategoryRef
    targets: tuple[Ref, ...] = ()

    def __post_init__(self):
        check_id(self.nid, "node id")
        check_id(self.layer, "layer id")
        object.__setattr__(self, "type_category", as_category(self.type_category))
        object.__setattr__(self, "targets", tuple(self.targets))
        for t in self.targets:
            if not isinstance(t, Ref) or t.kind == "g":
                raise MalformedId(f"node {self.nid}: targets must be region or node refs")


@dataclass(frozen=True)
class Feature:
    """One descriptor/value pair attached to node ``nid``."""

    nid: str
    descriptor: CategoryRef
    value: Value

    def __post_init__(self):
        check_id(self.nid, "node id")
        object.__setattr__(self, "descriptor", as_category(self.descriptor))
        if isinstance(self.value, str):
            object.__setattr__(self, "value", CategoryRef.parse(self.value))
        if isinstance(self.value, Ref) and self.value.kind != "g":
            raise MalformedId(f"feature values may only reference groups, got {self.value.token}")


GROUP_KINDS = ("ALT", "SET", "LIST")


@dataclass(frozen=True)
class Group:
    gid: str
    kind: str
    members: tuple[Union[Ref, CategoryRef, Literal], ...]

    def __post_init__(self):
        check_id(self.gid, "group id")
        members = tuple(self.members)
        object.__setattr__(self, "members", members)
        if self.kind not in GROUP_KINDS:
            raise InvalidGroup(f"group {self.gid}: unknown kind {self.kind!r}")
        if not members:
            raise InvalidGroup(f"group {self.gid}: no members")
        node_members = [isinstance(m, Ref) for m in members]
        if any(isinstance(m, Ref) and m.kind != "n" for m in members):
            raise InvalidGroup(f"group {self.gid}: members may only reference nodes")
        if any(node_members) and not all(node_members):
            raise InvalidGroup(f"group {self.gid}: members must be all nodes or all values")
        if self.kind == "ALT" and len(members) < 2:
            raise InvalidGroup(f"group {self.gid}: ALT needs at least two alternatives")
        if self.kind in ("ALT", "SET") and len(set(members)) != len(members):
            raise InvalidGroup(f"group {self.gid}: duplicate members in {self.kind}")

    @property
    def holds_nodes(self) -> bool:
        return isinstance(self.members[0], Ref)


Item = Union[PrimaryDataRef, Layer, Region, Node, Feature, Group]


class AnnotationDocument:
    """Primary data declarations plus stand-off layers of regions, nodes and groups.

    ``sources`` optionally holds the raw bytes of primary resources keyed
    by pid.  It is an attachment used by emitters and hash checks; it is not
    part of the document's content and is ignored by equality.
    """

    def __init__(self, items: Iterable[Item] = ()):
        self.primaries: dict[str, PrimaryDataRef] = {}
        self.layers: dict[str, Layer] = {}
        self.regions: dict[str, Region] = {}
        self.nodes: dict[str, Node] = {}
        self.groups: dict[str, Group] = {}
        self.features: dict[str, list[Feature]] = defaultdict(list)
        self.sources: dict[str, bytes] = {}
        self.sealed = False
        self._gen = itertools.count(1)
        for item in items:
            self.add(item)

    # -- construction ---------------------------------------------------

    def add(self, item: Item) -> "AnnotationDocument":
        if self.sealed:
            raise SealedDocument("document is sealed")
        if isinstance(item, Feature):
            existing = self.features[item.nid]
            if item not in existing:
                existing.append(item)
            return self
        if isinstance(item, PrimaryDataRef):
            key, table = item.pid, self.primaries
            if key in self.layers:
                raise DuplicateId(f"id {key} already names a layer")
        elif isinstance(item, Layer):
            key, table = item.lid, self.layers
            if key in self.primaries:
                raise DuplicateId(f"id {key} already names a primary")
        elif isinstance(item, Region):
            if item.rid is None or not is_id(item.rid):
                raise MalformedId(f"region needs a well-formed rid, got {item.rid!r}")
            key, table = item.rid, self.regions
        elif isinstance(item, Node):
            key, table = item.nid, self.nodes
        elif isinstance(item, Group):
            key, table = item.gid, self.groups
        else:
            raise TypeError(f"cannot add {type(item).__name__} to a document")
        if key in table:
            raise DuplicateId(f"duplicate {type(item).__name__} id {key}")
        table[key] = item
        return self

    def items(self) -> Iterator[Item]:
        """Every record, in an order that :meth:`add` accepts."""
        yield from self.primaries.values()
        yield from self.layers.values()
        yield from self.regions.values()
        yield from self.nodes.values()
        yield from self.groups.values()
        yield from self.all_features()

    def reopen(self) -> "AnnotationDocument":
        """An open copy, for building a new document on top of this one."""
        out = AnnotationDocument(self.items())
        out.sources = dict(self.sources)
        return out

    def fresh_id(self, prefix: str) -> str:
        taken = self.groups.keys() | self.nodes.keys() | self.regions.keys()
        while True:
            candidate = f"{prefix}{next(self._gen)}"
            if candidate not in taken:
                return candidate

    def unresolved(self) -> set[str]:
        """Ids referenced but not (yet) defined, prefixed by their kind."""
        missing: set[str] = set()
        for r in self.regions.values():
            if r.pid not in self.primaries:
                missing.add(f"p:{r.pid}")
        for layer in self.layers.values():
            for d in layer.depends_on:
                if d not in self.layers and d not in self.primaries:
                    missing.add(f"l:{d}")
        for n in self.nodes.values():
            if n.layer not in self.layers:
                missing.add(f"l:{n.layer}")
            for t in n.targets:
                if not self._resolves(t):
                    missing.add(t.token)
        for nid, feats in self.features.items():
            if feats and nid not in self.nodes:
                missing.add(f"n:{nid}")
            for f in feats:
                if isinstance(f.value, Ref) and not self._resolves(f.value):
                    missing.add(f.value.token)
        for g in self.groups.values():
            for m in g.members:
                if isinstance(m, Ref) and not self._resolves(m):
                    missing.add(m.token)
        return missing

    def _resolves(self, ref: Ref) -> bool:
        table = {"r": self.regions, "n": self.nodes, "g": self.groups}[ref.kind]
        return ref.id in table

    def close(self) -> "AnnotationDocument":
        """Resolve references, verify structural invariants and seal."""
        if self.sealed:
            return self
        missing = self.unresolved()
        if missing:
            raise UnresolvedReference(missing)
        self._check_regions()
        self._check_layers()
        self._check_targets()
        self.features = defaultdict(list, {k: v for k, v in self.features.items() if v})
        self.sealed = True
        return self

    def _check_regions(self):
        for r in self.regions.values():
            p = self.primaries[r.pid]
            for box in r.boxes:
                if len(box) != p.space.dimension:
                    raise WrongArity(f"region {r.rid}: boxes must have {p.space.dimension} axes")
                for axis, (s, e) in enumerate(box):
                    if e > p.extent[axis]:
                        raise OutOfExtent(f"region {r.rid}: end {e} beyond extent {p.extent[axis]}")

    def _check_layers(self):
        order = topo_order({lid: [d for d in l.depends_on if d in self.layers]
                            for lid, l in self.layers.items()})
        if order is None:
            raise LayerCycle("layer dependencies are cyclic")
        grounded: set[str] = set()
        for lid in order:
            layer = self.layers[lid]
            if any(d in self.primaries or d in grounded for d in layer.depends_on):
                grounded.add(lid)
            else:
                raise UngroundedLayer(f"layer {lid} does not depend on any primary data")

    def _check_targets(self):
        graph = {nid: [t.id for t in n.targets if t.kind == "n"] for nid, n in self.nodes.items()}
        if topo_order(graph) is None:
            raise TargetCycle("node targets form a cycle")
        for n in self.nodes.values():
            pids = {self.regions[t.id].pid for t in n.targets if t.kind == "r"}
            if len(pids) > 1:
                raise MixedPrimary(f"node {n.nid} targets regions over {sorted(pids)}")

    def require_sealed(self):
        if not self.sealed:
            raise UnsealedDocument("operation needs a sealed document")

    # -- queries --------------------------------------------------------

    def features_of(self, nid: str) -> list[Feature]:
        return list(self.features.get(nid, ()))

    def all_features(self) -> Iterator[Feature]:
        for feats in self.features.values():
            yield from feats

    def layer_nodes(self, lid: str) -> list[Node]:
        return [n for n in self.nodes.values() if n.layer == lid]

    def referrers(self, nid: str) -> list[tuple[str, int]]:
        """Reverse index: (parent nid, target position) for every edge into ``nid``."""
        return [(p.nid, i) for p in self.nodes.values()
                for i, t in enumerate(p.targets) if t.kind == "n" and t.id == nid]

    def group_memberships(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = defaultdict(list)
        for g in self.groups.values():
            for m in g.members:
                if isinstance(m, Ref):
                    out[m.id].append(g.gid)
        return out

    def layer_order(self) -> list[str]:
        order = topo_order({lid: [d for d in l.depends_on if d in self.layers]
                            for lid, l in self.layers.items()})
        if order is None:
            raise LayerCycle("layer dependencies are cyclic")
        return order

    def layer_closure(self, lids: Iterable[str]) -> set[str]:
        """The given layers plus everything they transitively depend on."""
        seen: set[str] = set()
        stack = list(lids)
        while stack:
            lid = stack.pop()
            if lid in seen or lid not in self.layers:
                continue
            seen.add(lid)
            stack.extend(self.layers[lid].depends_on)
        return seen

    def is_empty(self) -> bool:
        return not (self.primaries or self.layers or self.regions or self.nodes or self.groups)

    def __len__(self) -> int:
        return (len(self.regions) + len(self.nodes) + len(self.groups)
                + sum(len(v) for v in self.features.values()))

    def __repr__(self) -> str:
        state = "sealed" if self.sealed else "open"
        return (f"<AnnotationDocument {state}: {len(self.primaries)} primaries, "
                f"{len(self.layers)} layers, {len(self.regions)} regions, "
                f"{len(self.nodes)} nodes, {len(self.groups)} groups>")


def topo_order(graph: dict[str, list[str]]) -> list[str] | None:
    """Dependencies-first order with ties broken by id, or None on a cycle.

    ``graph`` maps each key to the keys it depends on.
    """
    import heapq

    pending = {k: len(set(v)) for k, v in graph.items()}
    users: dict[str, list[str]] = defaultdict(list)
    for k, deps in graph.items():
        for d in set(deps):
            users[d].append(k)
    ready = [k for k, c in pending.items() if c == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        k = heapq.heappop(ready)
        order.append(k)
        for u in users[k]:
            pending[u] -= 1
            if pending[u] == 0:
                heapq.heappush(ready, u)
    return order if len(order) == len(graph) else None


def doc_add(doc: AnnotationDocument, item: Item) -> AnnotationDocument:
    return doc.add(item)


def doc_close(doc: AnnotationDocument) -> AnnotationDocument:
    return doc.close()


def footprint_boxes(doc: AnnotationDocument, nid: str) -> dict[str, tuple]:
    """Union of reachable region boxes, keyed by pid."""
    if nid not in doc.nodes:
        raise UnknownNode(f"unknown node {nid}")
    per_pid: dict[str, list] = defaultdict(list)
    seen: set[str] = set()
    stack = [nid]
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        for t in doc.nodes[cur].targets:
            if t.kind == "r":
                r = doc.regions[t.id]
                per_pid[r.pid].extend(r.boxes)
            else:
                stack.append(t.id)
    return {pid: union_boxes(boxes) for pid, boxes in sorted(per_pid.items())}


def footprint(doc: AnnotationDocument, nid: str) -> Region | None:
    """Union of all regions reachable from ``nid`` through its targets.

    Returns None for a node that reaches no region at all.
    """
    per_pid = footprint_boxes(doc, nid)
    if not per_pid:
        return None
    if len(per_pid) > 1:
        raise CrossDocumentComparison(f"node {nid} spans several primaries: {sorted(per_pid)}")
    (pid, boxes), = per_pid.items()
    return Region(None, pid, boxes)


def mark_parallel(doc: AnnotationDocument, nids: Iterable[str]) -> str:
    """Record that the given nodes annotate the same data object.

    Parallelism is stored as a SET group over the nodes; :func:`is_parallel`
    recognises such groups.  All footprints must be identical.
    """
    nids = list(dict.fromkeys(nids))
    if len(nids) < 2:
        raise LafError("parallelism needs at least two distinct nodes")
    prints = []
    for nid in nids:
        if nid not in doc.nodes:
            raise UnknownNode(f"unknown node {nid}")
        missing = {t.token for t in doc.nodes[nid].targets if not doc._resolves(t)}
        if missing:
            raise UnresolvedReference(missing)
        prints.append(footprint(doc, nid))
    first = prints[0]
    for nid, fp in zip(nids[1:], prints[1:]):
        if first is None or fp is None or not first.same_extent(fp):
            raise NotCoextensive(f"node {nid} is not coextensive with {nids[0]}")
    gid = doc.fresh_id("par")
    doc.add(Group(gid, "SET", tuple(node_ref(n) for n in nids)))
    return gid


def is_parallel(doc: AnnotationDocument, gid: str) -> bool:
    g = doc.groups[gid]
    if g.kind != "SET" or not g.holds_nodes or len(g.members) < 2:
        return False
    prints = [footprint(doc, m.id) for m in g.members]
    return prints[0] is not None and all(p is not None and p.same_extent(prints[0]) for p in prints)


def parallel_groups(doc: AnnotationDocument) -> list[str]:
    return [gid for gid in doc.groups if is_parallel(doc, gid)]


def contains(parent: Region, child: Region) -> bool:
    return Relation.CONTAINS in region_relate(parent, child)


def value_token(value) -> str:
    """Unescaped token form of a feature value or group member."""
    if isinstance(value, CategoryRef):
        return "c:" + value.token
    if isinstance(value, Literal):
        return "s:" + value.text
    return value.token

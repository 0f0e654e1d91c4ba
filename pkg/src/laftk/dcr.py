"""Data category registry (DCR) and data category specifications (DCS).

A registry holds concept entries, each either a descriptor (attribute) or
a value, with per-language names and definitions.  A DCS maps one
annotation scheme's own names onto registry concepts and may define local
entries for categories the registry lacks.  :func:`dcs_apply` rewrites a
document from scheme vocabulary into registry concepts and
:func:`dcs_invert` goes back.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping

from .errors import (
    AmbiguousPreimage,
    CompatViolation,
    DuplicateEntryId,
    DuplicateSchemeName,
    KindMismatch,
    LafError,
    LocalEntryInvalid,
    MissingName,
    NoPreimage,
    NotADescriptor,
    RegistryError,
    UnknownId,
    UnknownTarget,
    UnknownValueRef,
    UnmappedCategory,
)
from .graph import (
    UNTYPED,
    AnnotationDocument,
    CategoryRef,
    Feature,
    Group,
    Literal,
    Node,
    Ref,
    Layer,
)
from .ids import check_id

DESCRIPTOR = "descriptor"
VALUE = "value"


@dataclass(frozen=True)
class DataCategoryEntry:
    id: str
    kind: str
    names: Mapping[str, str] = field(default_factory=dict)
    definitions: Mapping[str, str] = field(default_factory=dict)
    allowed_values: frozenset[str] = frozenset()
    usage_notes: Mapping[str, str] = field(default_factory=dict)

    @property
    def is_descriptor(self) -> bool:
        return self.kind == DESCRIPTOR


@dataclass(frozen=True)
class EntryView:
    id: str
    kind: str
    lang: str
    name: str
    definition: str
    allowed_values: tuple[str, ...]
    fallback: bool


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    nid: str | None = None

    def __str__(self) -> str:
        where = f" [{self.nid}]" if self.nid else ""
        return f"{self.kind}{where}: {self.message}"


# -- file grammar ---------------------------------------------------------

def _unescape(text: str) -> str:
    from .dump import unescape
    return unescape(text)


def _parse_entry_block(lines: list[tuple[int, str]], start: int):
    """Parse one ENTRY block starting at ``lines[start]``; return (entry, next index)."""
    lineno, line = lines[start]
    fields = line.split("\t")
    if len(fields) != 3 or fields[0] != "ENTRY":
        raise RegistryError(f"line {lineno}: expected ENTRY <id> <descriptor|value>")
    try:
        eid = check_id(fields[1], "entry id")
    except LafError as exc:
        raise RegistryError(f"line {lineno}: {exc}") from None
    kind = fields[2]
    if kind not in (DESCRIPTOR, VALUE):
        raise KindMismatch(f"line {lineno}: entry kind must be descriptor or value, got {kind!r}")
    names, defs, notes, vals = {}, {}, {}, []
    i = start + 1
    while i < len(lines):
        lineno, line = lines[i]
        if not line.strip():
            break
        if not line[0].isspace():
            break
        sub = line.lstrip(" \t").split("\t")
        tag = sub[0]
        if tag in ("NAME", "DEF", "NOTE"):
            if len(sub) != 3:
                raise RegistryError(f"line {lineno}: {tag} needs <lang> <text>")
            target = {"NAME": names, "DEF": defs, "NOTE": notes}[tag]
            target.setdefault(sub[1], _unescape(sub[2]))
        elif tag == "VAL":
            if len(sub) != 2:
                raise RegistryError(f"line {lineno}: VAL needs one value id")
            if kind != DESCRIPTOR:
                raise KindMismatch(f"line {lineno}: value entry {eid} cannot list values")
            vals.append(sub[1])
        else:
            raise RegistryError(f"line {lineno}: unknown entry line {tag!r}")
        i += 1
    entry = DataCategoryEntry(eid, kind, names, defs, frozenset(vals), notes)
    return entry, i


def _numbered(data: bytes | str) -> list[tuple[int, str]]:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    return [(n, line) for n, line in enumerate(text.split("\n"), 1)
            if not line.startswith("#")]


def _validate(entries: Mapping[str, DataCategoryEntry],
              outer: Mapping[str, DataCategoryEntry] = {}):
    for e in entries.values():
        if not e.names:
            raise MissingName(f"entry {e.id} has no name")
        if not e.definitions:
            raise MissingName(f"entry {e.id} has no definition")
        for v in sorted(e.allowed_values):
            target = entries.get(v) or outer.get(v)
            if target is None:
                raise UnknownValueRef(f"entry {e.id} lists unknown value {v}")
            if target.kind != VALUE:
                raise KindMismatch(f"entry {e.id} lists {v}, which is a {target.kind}")


class Registry:
    """An immutable, referentially closed set of data category entries."""

    def __init__(self, entries: Iterable[DataCategoryEntry], source: str | None = None):
        self.entries: dict[str, DataCategoryEntry] = {}
        for e in entries:
            if e.id in self.entries:
                raise DuplicateEntryId(f"duplicate entry id {e.id}")
            self.entries[e.id] = e
        self.source = source
        _validate(self.entries)

    def __contains__(self, eid) -> bool:
        return eid in self.entries

    def __getitem__(self, eid: str) -> DataCategoryEntry:
        try:
            return self.entries[eid]
        except KeyError:
            raise UnknownId(f"unknown data category {eid}") from None

    def __len__(self) -> int:
        return len(self.entries)

    def extended(self, extra: Iterable[DataCategoryEntry]) -> "Registry":
        return Registry([*self.entries.values(), *extra], self.source)

    def lookup(self, eid: str, lang: str) -> EntryView:
        e = self[eid]
        fallback = lang not in e.names or lang not in e.definitions
        name = e.names.get(lang) or next(iter(e.names.values()))
        definition = e.definitions.get(lang) or next(iter(e.definitions.values()))
        return EntryView(e.id, e.kind, lang, name, definition,
                         tuple(sorted(e.allowed_values)), fallback)

    def check_compat(self, descriptor: str, value) -> Violation | None:
        """None when ``value`` is acceptable for ``descriptor``, else a Violation."""
        e = self[descriptor]
        if not e.is_descriptor:
            raise NotADescriptor(f"{descriptor} is a {e.kind}, not a descriptor")
        if isinstance(value, str):
            value = CategoryRef(value)
        if isinstance(value, Literal):
            if e.allowed_values:
                return Violation("compat", f"{descriptor} takes enumerated values, "
                                           f"got literal {value.text!r}")
            return None
        if isinstance(value, CategoryRef):
            if not e.allowed_values:
                return Violation("compat", f"{descriptor} takes literals, got {value.token}")
            if value.is_local or value.name not in e.allowed_values:
                return Violation("compat", f"{value.token} is not an allowed value of {descriptor}")
            return None
        raise TypeError(f"cannot check compatibility of {value!r}")


def parse_entries(data: bytes | str) -> list[DataCategoryEntry]:
    lines = _numbered(data)
    entries = []
    i = 0
    while i < len(lines):
        lineno, line = lines[i]
        if not line.strip():
            i += 1
            continue
        entry, i = _parse_entry_block(lines, i)
        entries.append(entry)
    return entries


def registry_load(data: bytes | str, source: str | None = None) -> Registry:
    return Registry(parse_entries(data), source)


def load_seed() -> Registry:
    """The registry shipped with the toolkit."""
    return registry_load(resources.files("laftk.data").joinpath("seed.reg").read_bytes(),
                         "seed.reg")


def lookup(reg: Registry, eid: str, lang: str) -> EntryView:
    return reg.lookup(eid, lang)


def check_compat(reg: Registry, descriptor: str, value) -> Violation | None:
    return reg.check_compat(descriptor, value)


# -- DCS ------------------------------------------------------------------

@dataclass
class DCS:
    scheme: str
    descriptor_map: dict[str, str]
    value_map: dict[tuple[str, str], str]
    local_entries: dict[str, DataCategoryEntry]

    def resolve_name(self, name: str) -> str | None:
        return self.descriptor_map.get(name)

    def resolve_value(self, descriptor: str | None, name: str) -> str | None:
        if descriptor is not None and (descriptor, name) in self.value_map:
            return self.value_map[(descriptor, name)]
        return None

    def name_preimage(self, cid: str) -> str:
        names = sorted(n for n, t in self.descriptor_map.items() if t == cid)
        if not names:
            raise NoPreimage(f"{cid} has no name in scheme {self.scheme}")
        if len(names) > 1:
            raise AmbiguousPreimage(f"{cid} has several names in scheme {self.scheme}: {names}")
        return names[0]

    def value_preimage(self, descriptor: str, cid: str) -> str:
        names = sorted(v for (d, v), t in self.value_map.items() if d == descriptor and t == cid)
        if not names:
            raise NoPreimage(f"{cid} has no value name under {descriptor} in scheme {self.scheme}")
        if len(names) > 1:
            raise AmbiguousPreimage(
                f"{cid} has several value names under {descriptor} in scheme {self.scheme}: {names}")
        return names[0]

    def registry(self, reg: Registry) -> Registry:
        """``reg`` plus this DCS's local entries."""
        return reg.extended(self.local_entries.values())


def dcs_load(data: bytes | str, reg: Registry) -> DCS:
    lines = _numbered(data)
    scheme = None
    dmap: dict[str, str] = {}
    vmap: dict[tuple[str, str], str] = {}
    local: dict[str, DataCategoryEntry] = {}
    in_local = False
    i = 0
    while i < len(lines):
        lineno, line = lines[i]
        if not line.strip():
            i += 1
            continue
        fields = line.split("\t")
        tag = fields[0]
        if tag == "ENTRY":
            if not in_local:
                raise RegistryError(f"line {lineno}: ENTRY outside a LOCAL section")
            try:
                entry, i = _parse_entry_block(lines, i)
            except RegistryError as exc:
                raise LocalEntryInvalid(str(exc)) from None
            if entry.id in local:
                raise LocalEntryInvalid(f"duplicate local entry {entry.id}")
            local[entry.id] = entry
            continue
        in_local = False
        try:
            if tag == "SCHEME" and len(fields) == 2:
                if scheme is not None:
                    raise DuplicateSchemeName(f"line {lineno}: second SCHEME line")
                scheme = check_id(fields[1], "scheme name")
            elif tag == "MAPD" and len(fields) == 3:
                check_id(fields[1], "scheme name")
                if fields[1] in dmap:
                    raise DuplicateSchemeName(f"line {lineno}: {fields[1]} mapped twice")
                dmap[fields[1]] = fields[2]
            elif tag == "MAPV" and len(fields) == 4:
                check_id(fields[1], "scheme name")
                check_id(fields[2], "scheme name")
                if (fields[1], fields[2]) in vmap:
                    raise DuplicateSchemeName(
                        f"line {lineno}: {fields[1]}/{fields[2]} mapped twice")
                vmap[(fields[1], fields[2])] = fields[3]
            elif tag == "LOCAL" and len(fields) == 1:
                in_local = True
            else:
                raise RegistryError(f"line {lineno}: malformed DCS line {line!r}")
        except RegistryError:
            raise
        except LafError as exc:
            raise RegistryError(f"line {lineno}: {exc}") from None
        i += 1
    if scheme is None:
        raise RegistryError("DCS has no SCHEME line")
    for eid in local:
        if eid in reg:
            raise LocalEntryInvalid(f"local entry {eid} shadows a registry entry")
    try:
        _validate(local, reg.entries)
    except RegistryError as exc:
        raise LocalEntryInvalid(str(exc)) from None
    known = {**reg.entries, **local}
    for name, target in dmap.items():
        if target not in known:
            raise UnknownTarget(f"{name} maps to unknown category {target}")
    for (d, v), target in vmap.items():
        if target not in known:
            raise UnknownTarget(f"{d}/{v} maps to unknown category {target}")
        if known[target].kind != VALUE:
            raise KindMismatch(f"{d}/{v} maps to {target}, which is a {known[target].kind}")
    return DCS(scheme, dmap, vmap, local)


# -- document normalization ----------------------------------------------

def _group_contexts(doc: AnnotationDocument) -> dict[str, set[CategoryRef]]:
    ctx: dict[str, set[CategoryRef]] = defaultdict(set)
    for f in doc.all_features():
        if isinstance(f.value, Ref):
            ctx[f.value.id].add(f.descriptor)
    return ctx


def _claimed_groups(doc: AnnotationDocument, layers: set[str]) -> set[str]:
    out = set()
    for f in doc.all_features():
        if isinstance(f.value, Ref) and doc.nodes[f.nid].layer in layers:
            out.add(f.value.id)
    for g in doc.groups.values():
        if g.holds_nodes and any(doc.nodes[m.id].layer in layers for m in g.members):
            out.add(g.gid)
    return out


def _rebuild(doc: AnnotationDocument, layer_fn, node_fn, feature_fn, group_fn) -> AnnotationDocument:
    out = AnnotationDocument()
    for p in doc.primaries.values():
        out.add(p)
    for layer in doc.layers.values():
        out.add(layer_fn(layer))
    for r in doc.regions.values():
        out.add(r)
    for n in doc.nodes.values():
        out.add(node_fn(n))
    for f in doc.all_features():
        out.add(feature_fn(f))
    for g in doc.groups.values():
        out.add(group_fn(g))
    out.sources = dict(doc.sources)
    return out.close()


def dcs_apply(doc: AnnotationDocument, dcs: DCS, reg: Registry) -> AnnotationDocument:
    """Replace the scheme vocabulary of layers claiming ``dcs`` by registry ids.

    A layer claims the DCS when its ``dcs_ref`` is the scheme name; after
    normalization its ``dcs_ref`` is cleared.  Feature values in those
    layers are checked against the descriptor constraints.
    """
    doc.require_sealed()
    known = dcs.registry(reg)
    layers = {lid for lid, l in doc.layers.items() if l.dcs_ref == dcs.scheme}
    groups = _claimed_groups(doc, layers)
    contexts = _group_contexts(doc)

    def name(ref: CategoryRef, nid: str | None) -> CategoryRef:
        if not ref.is_local:
            return ref
        target = dcs.resolve_name(ref.name) if ref.scheme == dcs.scheme else None
        if target is None:
            raise UnmappedCategory(ref.token, nid)
        return CategoryRef(target)

    def value(v, descriptor: CategoryRef | None, nid: str | None):
        if not isinstance(v, CategoryRef) or not v.is_local:
            return v
        target = None
        if v.scheme == dcs.scheme:
            sd = _scheme_descriptor(descriptor, dcs)
            target = dcs.resolve_value(sd, v.name)
            if target is None and descriptor is None:
                target = dcs.resolve_name(v.name)
        if target is None:
            raise UnmappedCategory(v.token, nid)
        return CategoryRef(target)

    def node_fn(n: Node) -> Node:
        if n.layer not in layers:
            return n
        return Node(n.nid, n.layer, name(n.type_category, n.nid), n.targets)

    def feature_fn(f: Feature) -> Feature:
        if doc.nodes[f.nid].layer not in layers:
            return f
        return Feature(f.nid, name(f.descriptor, f.nid), value(f.value, f.descriptor, f.nid))

    def group_fn(g: Group) -> Group:
        if g.gid not in groups or g.holds_nodes:
            return g
        ctx = contexts.get(g.gid, set())
        descriptor = next(iter(ctx)) if len(ctx) == 1 else None
        return Group(g.gid, g.kind, tuple(value(m, descriptor, None) for m in g.members))

    def layer_fn(layer: Layer) -> Layer:
        if layer.lid in layers:
            return Layer(layer.lid, layer.depends_on, None)
        return layer

    out = _rebuild(doc, layer_fn, node_fn, feature_fn, group_fn)
    problems = []
    for f in out.all_features():
        if out.nodes[f.nid].layer in layers:
            problems.extend(feature_violations(out, known, f))
    if problems:
        raise CompatViolation(problems)
    return out


def _scheme_descriptor(descriptor: CategoryRef | None, dcs: DCS) -> str | None:
    if descriptor is None:
        return None
    if descriptor.is_local:
        return descriptor.name if descriptor.scheme == dcs.scheme else None
    try:
        return dcs.name_preimage(descriptor.name)
    except RegistryError:
        return None


def feature_violations(doc: AnnotationDocument, reg: Registry, f: Feature) -> list[Violation]:
    """Compatibility problems of one normalized feature against ``reg``."""
    if f.descriptor.is_local:
        return [Violation("compat", f"unresolved scheme-local descriptor {f.descriptor.token}",
                          f.nid)]
    if f.descriptor.name not in reg:
        return [Violation("compat", f"unknown descriptor {f.descriptor.name}", f.nid)]
    if not reg[f.descriptor.name].is_descriptor:
        return [Violation("compat", f"{f.descriptor.name} is not a descriptor", f.nid)]
    values = [f.value]
    if isinstance(f.value, Ref):
        g = doc.groups[f.value.id]
        values = [] if g.holds_nodes else list(g.members)
    out = []
    for v in values:
        problem = reg.check_compat(f.descriptor.name, v)
        if problem is not None:
            out.append(Violation(problem.kind, problem.message, f.nid))
    return out


def dcs_invert(doc: AnnotationDocument, dcs: DCS) -> AnnotationDocument:
    """Rewrite normalized layers (no ``dcs_ref``) into the scheme's vocabulary.

    Registry ids without a unique scheme name raise NoPreimage or
    AmbiguousPreimage.  The reserved ``UNTYPED`` category is left alone.
    """
    doc.require_sealed()
    layers = {lid for lid, l in doc.layers.items() if l.dcs_ref is None}
    groups = _claimed_groups(doc, layers)
    contexts = _group_contexts(doc)

    def name(ref: CategoryRef) -> CategoryRef:
        if ref.is_local or ref.name == UNTYPED:
            return ref
        return CategoryRef(dcs.name_preimage(ref.name), dcs.scheme)

    def value(v, descriptor: CategoryRef | None):
        if not isinstance(v, CategoryRef) or v.is_local:
            return v
        if descriptor is None:
            return CategoryRef(dcs.name_preimage(v.name), dcs.scheme)
        sd = descriptor.name if descriptor.is_local else dcs.name_preimage(descriptor.name)
        return CategoryRef(dcs.value_preimage(sd, v.name), dcs.scheme)

    def node_fn(n: Node) -> Node:
        if n.layer not in layers:
            return n
        return Node(n.nid, n.layer, name(n.type_category), n.targets)

    def feature_fn(f: Feature) -> Feature:
        if doc.nodes[f.nid].layer not in layers:
            return f
        return Feature(f.nid, name(f.descriptor), value(f.value, f.descriptor))

    def group_fn(g: Group) -> Group:
        if g.gid not in groups or g.holds_nodes:
            return g
        ctx = contexts.get(g.gid, set())
        descriptor = next(iter(ctx)) if len(ctx) == 1 else None
        return Group(g.gid, g.kind, tuple(value(m, descriptor) for m in g.members))

    def layer_fn(layer: Layer) -> Layer:
        if layer.lid in layers:
            return Layer(layer.lid, layer.depends_on, dcs.scheme)
        return layer

    return _rebuild(doc, layer_fn, node_fn, feature_fn, group_fn)

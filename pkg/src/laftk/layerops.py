"""Document-level operations: merge, extract, diff and validate."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .canonical import canonicalize, doc_node_order
from .dcr import Registry, Violation, feature_violations
from .errors import LafError, LayerIdClash, PrimaryMismatch, UnknownDescriptor, UnknownLayer
from .graph import (
    AnnotationDocument,
    CategoryRef,
    Feature,
    Group,
    Layer,
    Node,
    Ref,
    as_category,
    footprint_boxes,
    value_token,
)


# -- merge ----------------------------------------------------------------

def _check_primaries(docs: Sequence[AnnotationDocument]):
    seen = {}
    for d in docs:
        for pid, p in d.primaries.items():
            prev = seen.setdefault(pid, p)
            if (prev.space, prev.extent, prev.content_hash) != (p.space, p.extent, p.content_hash):
                raise PrimaryMismatch(f"primary {pid} differs between merged documents")


def merge(docs: Iterable[AnnotationDocument]) -> AnnotationDocument:
    """Union of sealed documents over compatible primary data.

    Layers with the same id are unified when their dependencies and DCS
    reference agree.  Identical regions collapse to one; identical nodes of
    a unified layer collapse across sources (multiset maximum), so merging
    a document with itself or with the empty document is a no-op.
    Conflicting annotations are never reconciled; they coexist.
    """
    docs = list(docs)
    for d in docs:
        d.require_sealed()
    _check_primaries(docs)

    out = AnnotationDocument()
    for d in docs:
        for pid, p in d.primaries.items():
            if pid not in out.primaries:
                out.add(p)
            if pid in d.sources:
                out.sources.setdefault(pid, d.sources[pid])
    layers: dict[str, Layer] = {}
    for d in docs:
        for lid, layer in d.layers.items():
            prev = layers.setdefault(lid, layer)
            if (prev.depends_on, prev.dcs_ref) != (layer.depends_on, layer.dcs_ref):
                raise LayerIdClash(f"layer {lid} has incompatible definitions")
    for layer in layers.values():
        if layer.lid in out.primaries:
            raise LayerIdClash(f"layer {layer.lid} clashes with a primary id")
        out.add(layer)

    region_ids: dict[tuple, str] = {}
    # signature -> list of representative node ids (one entry per copy)
    pool: dict[tuple, list[str]] = defaultdict(list)
    group_ids: dict[tuple, list[str]] = defaultdict(list)
    for i, d in enumerate(docs):
        rmap = {}
        for rid, r in d.regions.items():
            key = (r.pid, r.boxes)
            if key not in region_ids:
                region_ids[key] = f"m{i}_{rid}"
                out.add(r.with_rid(region_ids[key]))
            rmap[rid] = region_ids[key]

        nmap: dict[str, str] = {}
        used = Counter()
        gfeat_nodes = {f.nid for f in d.all_features() if isinstance(f.value, Ref)}
        for nid in doc_node_order(d):
            n = d.nodes[nid]
            targets = tuple(Ref("r", rmap[t.id]) if t.kind == "r" else Ref("n", nmap[t.id])
                            for t in n.targets)
            feats = tuple(sorted((f.descriptor.token, value_token(f.value))
                                 for f in d.features_of(nid)))
            sig = (n.layer, n.type_category.token, targets, feats)
            reps = pool[sig]
            if nid not in gfeat_nodes and used[sig] < len(reps):
                nmap[nid] = reps[used[sig]]
                used[sig] += 1
                continue
            new = f"m{i}_{nid}"
            nmap[nid] = new
            if nid not in gfeat_nodes:
                reps.append(new)
                used[sig] += 1
            out.add(Node(new, n.layer, n.type_category, targets))
            for f in d.features_of(nid):
                value = Ref("g", f"m{i}_{f.value.id}") if isinstance(f.value, Ref) else f.value
                out.add(Feature(new, f.descriptor, value))

        gused = Counter()
        referenced = {f.value.id for f in d.all_features() if isinstance(f.value, Ref)}
        for gid, g in d.groups.items():
            members = tuple(Ref("n", nmap[m.id]) if isinstance(m, Ref) else m for m in g.members)
            sig = (g.kind, members if g.kind == "LIST" else tuple(sorted(members, key=_member_key)))
            reps = group_ids[sig]
            if gid not in referenced and gused[sig] < len(reps):
                gused[sig] += 1
                continue
            new = f"m{i}_{gid}"
            if gid not in referenced:
                reps.append(new)
                gused[sig] += 1
            out.add(Group(new, g.kind, members))
    return canonicalize(out.close())


def _member_key(m) -> str:
    return m.token if isinstance(m, Ref) else value_token(m)


# -- extract --------------------------------------------------------------

def extract(doc: AnnotationDocument, lids: Iterable[str]) -> AnnotationDocument:
    """The requested layers with everything they depend on, and nothing else."""
    doc.require_sealed()
    lids = list(lids)
    missing = [l for l in lids if l not in doc.layers]
    if missing:
        raise UnknownLayer(f"unknown layer(s): {', '.join(missing)}")
    layers = doc.layer_closure(lids)
    while True:
        nodes = {nid for nid, n in doc.nodes.items() if n.layer in layers}
        groups = {f.value.id for nid in nodes for f in doc.features_of(nid)
                  if isinstance(f.value, Ref)}
        extra = {doc.nodes[t.id].layer for nid in nodes for t in doc.nodes[nid].targets
                 if t.kind == "n"}
        extra |= {doc.nodes[m.id].layer for gid in groups for m in doc.groups[gid].members
                  if isinstance(m, Ref)}
        grown = doc.layer_closure(layers | extra)
        if grown == layers:
            break
        layers = grown
    groups |= {gid for gid, g in doc.groups.items()
               if g.holds_nodes and all(m.id in nodes for m in g.members)}
    regions = {t.id for nid in nodes for t in doc.nodes[nid].targets if t.kind == "r"}

    out = AnnotationDocument()
    for p in doc.primaries.values():
        out.add(p)
    for lid, layer in doc.layers.items():
        if lid in layers:
            out.add(layer)
    for rid, r in doc.regions.items():
        if rid in regions:
            out.add(r)
    for nid, n in doc.nodes.items():
        if nid in nodes:
            out.add(n)
            for f in doc.features_of(nid):
                out.add(f)
    for gid, g in doc.groups.items():
        if gid in groups:
            out.add(g)
    out.sources = dict(doc.sources)
    return out.close()


# -- diff -----------------------------------------------------------------

@dataclass
class AgreementReport:
    compared_layer_ids: tuple[str, str]
    descriptor: str
    item_count: int
    matches: int
    disagreements: list[tuple]  # (footprint, value-a, value-b)
    unmatched: list[tuple] = field(default_factory=list)  # (layer, nid, footprint, value)

    @property
    def rate(self) -> float | None:
        """matches / item_count, or None when no items were paired."""
        return self.matches / self.item_count if self.item_count else None

    @property
    def has_findings(self) -> bool:
        return bool(self.disagreements or self.unmatched)

    def format(self) -> str:
        a, b = self.compared_layer_ids
        rate = "undefined" if self.rate is None else f"{self.rate:.4f}"
        lines = [f"layers\t{a}\t{b}", f"descriptor\t{self.descriptor}",
                 f"items\t{self.item_count}", f"matches\t{self.matches}", f"rate\t{rate}"]
        for where, va, vb in self.disagreements:
            lines.append(f"disagree\t{_fmt_where(where)}\t{va}\t{vb}")
        for layer, nid, where, v in self.unmatched:
            lines.append(f"unmatched\t{layer}\t{nid}\t{_fmt_where(where)}\t{v}")
        return "\n".join(lines) + "\n"


ABSENT = "-"


def _fmt_where(where) -> str:
    return ";".join(f"{pid}:" + ",".join(str(c) for c in coords) for pid, coords in where)


def _annotated(doc: AnnotationDocument, lid: str, descriptor: CategoryRef):
    """(footprint, value, nid) for each node of ``lid`` carrying ``descriptor``."""
    out = []
    for n in doc.layer_nodes(lid):
        values = [f.value for f in doc.features_of(n.nid) if f.descriptor == descriptor]
        if not values:
            continue
        where = tuple((pid, tuple(c for box in boxes for pair in box for c in pair))
                      for pid, boxes in footprint_boxes(doc, n.nid).items())
        value = " ".join(sorted(_value_text(doc, v) for v in values))
        out.append((where, value, n.nid))
    return out


def _value_text(doc: AnnotationDocument, v) -> str:
    if isinstance(v, Ref):
        g = doc.groups[v.id]
        members = [value_token(m) for m in g.members]
        if g.kind != "LIST":
            members.sort()
        return f"{g.kind}[" + ",".join(members) + "]"
    return value_token(v)


def diff(doc: AnnotationDocument, layer_a: str, layer_b: str, descriptor,
         reg: Registry | None = None) -> AgreementReport:
    """Compare two layers' values for ``descriptor`` over identical footprints."""
    doc.require_sealed()
    for lid in (layer_a, layer_b):
        if lid not in doc.layers:
            raise UnknownLayer(f"unknown layer {lid}")
    descriptor = as_category(descriptor)
    if reg is not None and (descriptor.is_local or descriptor.name not in reg):
        raise UnknownDescriptor(f"descriptor {descriptor.token} is not in the registry")
    side_a = _annotated(doc, layer_a, descriptor)
    side_b = _annotated(doc, layer_b, descriptor)
    by_where_b = defaultdict(list)
    for where, value, nid in side_b:
        by_where_b[where].append((value, nid))
    by_where_a = defaultdict(list)
    for where, value, nid in side_a:
        by_where_a[where].append((value, nid))

    items = matches = 0
    disagreements, unmatched = [], []
    for where in sorted(set(by_where_a) | set(by_where_b)):
        a = sorted(by_where_a.get(where, []))
        b = sorted(by_where_b.get(where, []))
        # pair equal values first, then the rest in order
        b_left = list(b)
        pairs, a_left = [], []
        for va, na in a:
            hit = next((x for x in b_left if x[0] == va), None)
            if hit is not None:
                b_left.remove(hit)
                pairs.append((va, hit[0]))
            else:
                a_left.append((va, na))
        pairs += [(x[0], y[0]) for x, y in zip(a_left, b_left)]
        for va, vb in pairs:
            items += 1
            if va == vb:
                matches += 1
            else:
                disagreements.append((where, va, vb))
        k = min(len(a_left), len(b_left))
        for va, na in a_left[k:]:
            unmatched.append((layer_a, na, where, va))
        for vb, nb in b_left[k:]:
            unmatched.append((layer_b, nb, where, vb))
    return AgreementReport((layer_a, layer_b), descriptor.token, items, matches,
                           disagreements, unmatched)


# -- constraints and validation ------------------------------------------

@dataclass
class ConstraintSet:
    embed_rules: dict[str, frozenset[str]] = field(default_factory=dict)
    applies_rules: dict[str, frozenset[str]] = field(default_factory=dict)


def constraints_load(data: bytes | str) -> ConstraintSet:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    embed: dict[str, set] = defaultdict(set)
    applies: dict[str, set] = defaultdict(set)
    for lineno, line in enumerate(text.split("\n"), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] not in ("EMBED", "APPLIES") or len(fields) < 3:
            raise LafError(f"line {lineno}: expected EMBED|APPLIES <category> <category...>")
        for tok in fields[1:]:
            as_category(tok)
        target = embed if fields[0] == "EMBED" else applies
        target[fields[1]].update(fields[2:])
    return ConstraintSet({k: frozenset(v) for k, v in embed.items()},
                         {k: frozenset(v) for k, v in applies.items()})


@dataclass
class ValidationReport:
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def kinds(self) -> Counter:
        return Counter(v.kind for v in self.violations)

    def format(self) -> str:
        return "".join(str(v) + "\n" for v in self.violations)


def validate(doc: AnnotationDocument, reg: Registry | None,
             constraints: ConstraintSet | None = None) -> ValidationReport:
    """Every embedding, applicability, compatibility, orphan and
    undeclared-dependency violation in a sealed document."""
    doc.require_sealed()
    constraints = constraints or ConstraintSet()
    found: list[Violation] = []
    members = doc.group_memberships()

    for nid, n in doc.nodes.items():
        cat = n.type_category.token
        allowed = constraints.embed_rules.get(cat)
        scope = doc.layer_closure([n.layer])
        pids = {d for lid in scope for d in doc.layers[lid].depends_on if d in doc.primaries}
        for t in n.targets:
            if t.kind == "n":
                child = doc.nodes[t.id]
                if allowed is not None and child.type_category.token not in allowed:
                    found.append(Violation(
                        "embed", f"{cat} may not embed {child.type_category.token} ({t.id})", nid))
                if child.layer not in scope:
                    found.append(Violation(
                        "dependency", f"layer {n.layer} uses layer {child.layer} without "
                                      "declaring it", nid))
            else:
                pid = doc.regions[t.id].pid
                if pid not in pids:
                    found.append(Violation(
                        "dependency", f"layer {n.layer} anchors into {pid} without "
                                      "declaring it", nid))
        if not n.targets and nid not in members:
            found.append(Violation("orphan", "node has no targets and no group", nid))
        for f in doc.features_of(nid):
            cats = constraints.applies_rules.get(f.descriptor.token)
            if cats is not None and cat not in cats:
                found.append(Violation(
                    "applies", f"{f.descriptor.token} may not occur on {cat} nodes", nid))
            if reg is not None:
                found.extend(feature_violations(doc, reg, f))
    return ValidationReport(found)

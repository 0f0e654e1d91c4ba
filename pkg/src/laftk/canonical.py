"""Canonical relabeling and structural equality of sealed documents.

Regions are deduplicated and ordered by (pid, region order).  Nodes are
ordered by (layer, footprint, type category) and groups by (kind, members);
remaining ties are broken by colour refinement over the target, feature
and group-membership edges, so the result is independent of insertion order
and of the original identifiers.
"""

from __future__ import annotations

import hashlib
from collections import Counter, defaultdict

from .anchors import Region, region_key, union_boxes
from .graph import (
    AnnotationDocument,
    CategoryRef,
    Feature,
    Group,
    Node,
    Ref,
    value_token,
)


def _h(*parts) -> str:
    return hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=16).hexdigest()


def _footprint_keys(doc: AnnotationDocument) -> dict[str, tuple]:
    order = doc_node_order(doc)
    boxes: dict[str, dict[str, tuple]] = {}
    for nid in order:
        per_pid: dict[str, list] = defaultdict(list)
        for t in doc.nodes[nid].targets:
            if t.kind == "r":
                r = doc.regions[t.id]
                per_pid[r.pid].extend(r.boxes)
            else:
                for pid, bx in boxes[t.id].items():
                    per_pid[pid].extend(bx)
        boxes[nid] = {pid: union_boxes(b) for pid, b in per_pid.items()}
    return {nid: tuple((pid, region_key(Region(None, pid, b)))
                       for pid, b in sorted(bx.items()))
            for nid, bx in boxes.items()}


def doc_node_order(doc: AnnotationDocument) -> list[str]:
    """Node ids ordered children-first along target edges."""
    from .graph import topo_order

    order = topo_order({nid: [t.id for t in n.targets if t.kind == "n"]
                        for nid, n in doc.nodes.items()})
    if order is None:
        from .errors import TargetCycle
        raise TargetCycle("node targets form a cycle")
    return order


class _Refiner:
    def __init__(self, doc: AnnotationDocument, rmap: dict[str, str]):
        self.doc = doc
        self.targets: dict[str, list] = {}
        self.gfeats: dict[str, list] = defaultdict(list)
        self.in_targets: dict[str, list] = defaultdict(list)
        self.in_groups: dict[str, list] = defaultdict(list)
        self.group_in_feats: dict[str, list] = defaultdict(list)
        self.color: dict[str, str] = {}
        for nid, n in doc.nodes.items():
            self.targets[nid] = [("r", rmap[t.id]) if t.kind == "r" else ("n", t.id)
                                 for t in n.targets]
            for pos, t in enumerate(n.targets):
                if t.kind == "n":
                    self.in_targets[t.id].append((nid, pos))
            static = []
            for f in doc.features_of(nid):
                if isinstance(f.value, Ref):
                    self.gfeats[nid].append((f.descriptor.token, f.value.id))
                    self.group_in_feats[f.value.id].append((nid, f.descriptor.token))
                    static.append((f.descriptor.token, "g"))
                else:
                    static.append((f.descriptor.token, value_token(f.value)))
            shape = tuple(t if t[0] == "r" else ("n",) for t in self.targets[nid])
            self.color["n:" + nid] = _h("N", n.layer, n.type_category.token,
                                        tuple(sorted(static)), shape)
        for gid, g in doc.groups.items():
            members = ["n" if isinstance(m, Ref) else value_token(m) for m in g.members]
            if g.kind != "LIST":
                members.sort()
            for pos, m in enumerate(g.members):
                if isinstance(m, Ref):
                    self.in_groups[m.id].append((gid, pos if g.kind == "LIST" else -1))
            self.color["g:" + gid] = _h("G", g.kind, tuple(members))

    def neighbourhood(self, key: str) -> tuple:
        """Exact (id-level) neighbourhood; elements sharing it are interchangeable."""
        kind, ident = key[0], key[2:]
        if kind == "n":
            return (tuple(self.targets[ident]), tuple(sorted(self.gfeats[ident])),
                    tuple(sorted(self.in_targets[ident])), tuple(sorted(self.in_groups[ident])))
        g = self.doc.groups[ident]
        members = [m.token if isinstance(m, Ref) else "v" + value_token(m) for m in g.members]
        if g.kind != "LIST":
            members.sort()
        return tuple(members), tuple(sorted(self.group_in_feats[ident]))

    def classes(self) -> int:
        return len(set(self.color.values()))

    def refine(self):
        c = self.color
        count = self.classes()
        while True:
            new = {}
            for nid in self.doc.nodes:
                new["n:" + nid] = _h(
                    c["n:" + nid],
                    tuple(t if t[0] == "r" else c["n:" + t[1]] for t in self.targets[nid]),
                    tuple(sorted((d, c["g:" + g]) for d, g in self.gfeats[nid])),
                    tuple(sorted((c["n:" + p], pos) for p, pos in self.in_targets[nid])),
                    tuple(sorted((c["g:" + g], pos) for g, pos in self.in_groups[nid])),
                )
            for gid, g in self.doc.groups.items():
                members = [c["n:" + m.id] if isinstance(m, Ref) else value_token(m)
                           for m in g.members]
                if g.kind != "LIST":
                    members.sort()
                new["g:" + gid] = _h(
                    c["g:" + gid], tuple(members),
                    tuple(sorted((c["n:" + n], d) for n, d in self.group_in_feats[gid])),
                )
            c = new
            n_classes = len(set(c.values()))
            if n_classes == count:
                break
            count = n_classes
        self.color = c


def canonicalize(doc: AnnotationDocument) -> AnnotationDocument:
    """Return a sealed copy with canonical ids (r1.., n1.., g1..) and ordering."""
    doc.require_sealed()

    extents: dict[tuple, list[str]] = defaultdict(list)
    for r in doc.regions.values():
        extents[(r.pid, r.boxes)].append(r.rid)
    ordered = sorted(extents, key=lambda k: (k[0], region_key(Region(None, k[0], k[1]))))
    rmap = {old: f"r{i}" for i, k in enumerate(ordered, 1) for old in extents[k]}

    fp = _footprint_keys(doc)
    ref = _Refiner(doc, rmap)

    def node_key(nid):
        n = doc.nodes[nid]
        return n.layer, fp[nid], n.type_category.token, ref.color["n:" + nid]

    def group_key(gid):
        return doc.groups[gid].kind, ref.color["g:" + gid]

    while True:
        ref.refine()
        counts = Counter(ref.color.values())
        tied = [nid for nid in sorted(doc.nodes, key=node_key)
                if counts[ref.color["n:" + nid]] > 1]
        tied = ["n:" + t for t in tied] or ["g:" + g for g in sorted(doc.groups, key=group_key)
                                           if counts[ref.color["g:" + g]] > 1]
        if not tied:
            break
        # twins (same colour, same neighbourhood) can be told apart in any
        # order at once; otherwise individualize a single element
        twins: dict[tuple, list[str]] = defaultdict(list)
        for key in tied:
            twins[(ref.color[key], ref.neighbourhood(key))].append(key)
        batches = [keys for keys in twins.values() if len(keys) > 1] or [tied[:1]]
        for keys in batches:
            for i, key in enumerate(keys):
                ref.color[key] = _h(ref.color[key], "*", i)

    node_order = sorted(doc.nodes, key=node_key)
    nmap = {old: f"n{i}" for i, old in enumerate(node_order, 1)}
    nindex = {old: i for i, old in enumerate(node_order)}

    def member_key(m):
        if isinstance(m, Ref):
            return 0, nindex[m.id], ""
        return 1, 0, value_token(m)

    def canon_members(g: Group):
        members = list(g.members)
        if g.kind != "LIST":
            members.sort(key=member_key)
        return members

    def group_full_key(gid):
        g = doc.groups[gid]
        return (g.kind, tuple(member_key(m) for m in canon_members(g)), ref.color["g:" + gid])

    group_order = sorted(doc.groups, key=group_full_key)
    gmap = {old: f"g{i}" for i, old in enumerate(group_order, 1)}

    out = AnnotationDocument()
    for pid in sorted(doc.primaries):
        out.add(doc.primaries[pid])
    for lid in doc.layer_order():
        out.add(doc.layers[lid])
    for i, k in enumerate(ordered, 1):
        out.add(Region(f"r{i}", k[0], k[1]))
    for old in node_order:
        n = doc.nodes[old]
        targets = tuple(Ref("r", rmap[t.id]) if t.kind == "r" else Ref("n", nmap[t.id])
                        for t in n.targets)
        out.add(Node(nmap[old], n.layer, n.type_category, targets))
    for old in group_order:
        g = doc.groups[old]
        members = tuple(Ref("n", nmap[m.id]) if isinstance(m, Ref) else m
                        for m in canon_members(g))
        out.add(Group(gmap[old], g.kind, members))
    for old in node_order:
        feats = []
        for f in doc.features_of(old):
            value = Ref("g", gmap[f.value.id]) if isinstance(f.value, Ref) else f.value
            feats.append(Feature(nmap[old], f.descriptor, value))
        feats.sort(key=lambda f: (f.descriptor.token, _value_sort_key(f.value)))
        for f in feats:
            out.add(f)
    out.sources = dict(doc.sources)
    return out.close()


def _value_sort_key(value):
    if isinstance(value, Ref):
        return 2, int(value.id[1:]), ""
    if isinstance(value, CategoryRef):
        return 0, 0, value.token
    return 1, 0, value.text


def records(doc: AnnotationDocument) -> list[tuple]:
    """Content of a document as plain tuples, in document order."""
    out: list[tuple] = []
    for p in doc.primaries.values():
        out.append(("P", p.pid, p.uri, p.space.name, p.extent, p.content_hash))
    for layer in doc.layers.values():
        out.append(("L", layer.lid, layer.depends_on, layer.dcs_ref))
    for r in doc.regions.values():
        out.append(("R", r.rid, r.pid, r.coords))
    for n in doc.nodes.values():
        out.append(("N", n.nid, n.layer, n.type_category.token,
                    tuple(t.token for t in n.targets)))
    for g in doc.groups.values():
        out.append(("G", g.gid, g.kind, tuple(value_token(m) for m in g.members)))
    for f in doc.all_features():
        out.append(("F", f.nid, f.descriptor.token, value_token(f.value)))
    return out


def doc_equal(a: AnnotationDocument, b: AnnotationDocument) -> bool:
    return records(canonicalize(a)) == records(canonicalize(b))

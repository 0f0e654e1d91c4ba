"""Independent brute-force oracles shared by the property and acceptance tests.

They work on explicit cell sets and exhaustive search, never on the
library's own interval code.
"""

import itertools
from collections import defaultdict

from laftk.anchors import PrimaryDataRef, Region, Relation
from laftk.graph import (
    UNTYPED,
    AnnotationDocument,
    CategoryRef,
    Feature,
    Layer,
    Literal,
    Node,
    node_ref,
    region_ref,
)


def points(region):
    """Every integer cell covered by the region; a degenerate axis is one cell."""
    out = set()
    for box in region.boxes:
        ranges = [range(s, e) if e > s else range(s, s + 1) for s, e in box]
        out.update(itertools.product(*ranges))
    return out


def oracle_relate(a, b):
    pa, pb = points(a), points(b)
    if not pa & pb:
        return {Relation.DISJOINT}
    rels = {Relation.OVERLAPS}
    if pb <= pa:
        rels.add(Relation.CONTAINS)
    if pa <= pb:
        rels.add(Relation.CONTAINED_BY)
    if pa == pb:
        rels.add(Relation.EQUAL)
    return rels


def brute_closure(doc, lids):
    """Layers reachable from ``lids`` through depends_on, by repeated scanning."""
    result = set(lids)
    changed = True
    while changed:
        changed = False
        for lid in list(result):
            for dep in doc.layers[lid].depends_on:
                if dep in doc.layers and dep not in result:
                    result.add(dep)
                    changed = True
    return result


def canonical_cells(regions):
    """Brute-force identity of a 1-D union: cells under spans, plus landmarks
    that no span covers."""
    span_cells, landmarks = set(), set()
    for r in regions:
        for ((s, e),) in r.boxes:
            if e > s:
                span_cells.update(range(s, e))
            else:
                landmarks.add(s)
    return frozenset(span_cells), frozenset(landmarks - span_cells)


def random_diff_doc(rng):
    """Two annotation layers over a random segmentation of a 32-character text."""
    text = "".join(rng.choice("ab ") for _ in range(32)).encode()
    doc = AnnotationDocument()
    doc.add(PrimaryDataRef.from_bytes("P1", "d.txt", text))
    doc.add(Layer("seg", ("P1",)))
    doc.add(Layer("A", ("seg",)))
    doc.add(Layer("B", ("seg",)))
    n_seg = rng.randint(1, 12)
    for i in range(n_seg):
        s = rng.randint(0, 31)
        doc.add(Region(f"r{i}", "P1", (((s, rng.randint(s, 32)),),)))
        doc.add(Node(f"s{i}", "seg", "TOKEN", (region_ref(f"r{i}"),)))
    # candidate target sets with distinct canonical footprints, so that at most
    # three nodes per layer share a footprint and the oracle stays exhaustive
    candidates, seen = [], set()
    for _ in range(rng.randint(1, 15)):
        targets = tuple(rng.sample(range(n_seg), rng.randint(1, min(2, n_seg))))
        key = canonical_cells([doc.regions[f"r{t}"] for t in targets])
        if key not in seen:
            seen.add(key)
            candidates.append(targets)
    for lid in "AB":
        j = 0
        for targets in candidates:
            for _ in range(rng.choice([0, 1, 1, 2, 3])):
                j += 1
                nid = f"{lid}{j}"
                doc.add(Node(nid, lid, UNTYPED, tuple(node_ref(f"s{t}") for t in targets)))
                for _ in range(rng.choice([0, 1, 1, 1, 2])):
                    doc.add(Feature(nid, "POS", rng.choice([CategoryRef("NOUN"), CategoryRef("VERB"),
                                                             Literal("x")])))
    return doc.close()


def leaf_regions(doc, nid):
    out, stack = [], [nid]
    while stack:
        for t in doc.nodes[stack.pop()].targets:
            if t.kind == "r":
                out.append(doc.regions[t.id])
            else:
                stack.append(t.id)
    return out


def oracle_counts(doc, la, lb, desc):
    """Pair nodes by identical canonical footprints; per footprint take the best bijection."""
    def annotated(lid):
        out = defaultdict(list)
        for n in doc.layer_nodes(lid):
            vals = sorted(repr(f.value) for f in doc.features_of(n.nid) if f.descriptor.name == desc)
            if vals:
                out[canonical_cells(leaf_regions(doc, n.nid))].append(tuple(vals))
        return out

    a, b = annotated(la), annotated(lb)
    items = matches = 0
    for cells in set(a) & set(b):
        xs, ys = a[cells], b[cells]
        k = min(len(xs), len(ys))
        items += k
        best = 0
        small, large = (xs, ys) if len(xs) <= len(ys) else (ys, xs)
        for perm in itertools.permutations(large, len(small)):
            best = max(best, sum(x == y for x, y in zip(small, perm)))
        matches += best
    return items, matches


def oracle_rate(doc, la, lb, desc):
    items, matches = oracle_counts(doc, la, lb, desc)
    return matches / items if items else None

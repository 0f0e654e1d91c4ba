"""Transducers between legacy annotation formats and the annotation graph.

Three line-oriented formats are supported:

* inline tagged text, ``The/DT cat/NN``, one sentence per line;
* columnar tokens, ``token<TAB>lemma<TAB>pos``, sentences ended by a blank line;
* bracketed constituency trees, ``(S (NP (DT the) (NN cat)) (VP (VBD sat)))``,
  one tree per line.

None of them stores the original whitespace, so the primary text is
rebuilt deterministically: tokens joined by one space, sentences by LF.
Tags and labels travel through a DCS; ingestion writes scheme-local
categories and normalizes them with :func:`laftk.dcr.dcs_apply`, emission
inverts them with :func:`laftk.dcr.dcs_invert`.  Which layers each format
produces is declared in the bundled ``manifest.tsv``.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .anchors import CHAR, PrimaryDataRef, Region, region_key
from .dcr import DCS, Registry, dcs_apply, dcs_invert, dcs_load, load_seed
from .errors import (
    ColumnCountMismatch,
    EmptyLabel,
    MalformedPair,
    MalformedTree,
    MissingPrimary,
    ShapeMismatch,
    UnbalancedParens,
    UnmappedCategory,
    UnmappedTag,
)
from .graph import (
    UNTYPED,
    AnnotationDocument,
    CategoryRef,
    Feature,
    Layer,
    Literal,
    Node,
    footprint_boxes,
    node_ref,
    region_ref,
)
from .ids import is_id

PID = "P1"

TOKEN = "TOKEN"
SENTENCE = "SENTENCE"
POS = "POS"
LEMMA = "LEMMA"


@dataclass(frozen=True)
class ManifestEntry:
    format: str
    layers: tuple[str, ...]
    dcs: str
    scheme_names: tuple[str, ...]


def load_manifest(data: bytes | str | None = None) -> dict[str, ManifestEntry]:
    if data is None:
        data = resources.files("laftk.data").joinpath("manifest.tsv").read_bytes()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    out = {}
    for line in data.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] != "FORMAT" or len(fields) != 5:
            raise ValueError(f"malformed manifest line {line!r}")
        out[fields[1]] = ManifestEntry(fields[1], tuple(fields[2].split(",")), fields[3],
                                       tuple(fields[4].split(",")))
    return out


MANIFEST = load_manifest()


def load_example_dcs(name: str = "mini.dcs", reg: Registry | None = None) -> DCS:
    """Load one of the example DCS files bundled with the toolkit."""
    data = resources.files("laftk.data").joinpath(name).read_bytes()
    return dcs_load(data, reg or load_seed())


def load_example_constraints() -> bytes:
    return resources.files("laftk.data").joinpath("mini.constraints").read_bytes()


# -- shared building blocks ----------------------------------------------

class _Builder:
    """Accumulates tokens over a reconstructed text for one document."""

    def __init__(self, fmt: str, dcs: DCS):
        self.layers = MANIFEST[fmt].layers
        self.dcs = dcs
        self.doc = AnnotationDocument()
        self.pieces: list[str] = []
        self.offset = 0
        self.tokens = 0
        self.sentence_open = False

    def cat(self, name: str) -> CategoryRef:
        if not is_id(name):
            raise UnmappedTag(name)
        return CategoryRef(name, self.dcs.scheme)

    def token(self, text: str) -> str:
        if self.sentence_open:
            self.pieces.append(" ")
            self.offset += 1
        elif self.pieces:
            self.pieces.append("\n")
            self.offset += 1
        self.sentence_open = True
        self.tokens += 1
        tid = f"t{self.tokens}"
        self.doc.add(Region(f"r{self.tokens}", PID, (((self.offset, self.offset + len(text)),),)))
        self.doc.add(Node(tid, self.layers[0], self.cat("tok"), (region_ref(f"r{self.tokens}"),)))
        self.pieces.append(text)
        self.offset += len(text)
        return tid

    def end_sentence(self):
        self.sentence_open = False

    def finish(self, reg: Registry | None, uri: str) -> AnnotationDocument:
        data = "".join(self.pieces).encode("utf-8")
        self.doc.add(PrimaryDataRef.from_bytes(PID, uri, data, CHAR))
        self.doc.add(Layer(self.layers[0], (PID,), self.dcs.scheme))
        for lid in self.layers[1:]:
            self.doc.add(Layer(lid, (self.layers[0],), self.dcs.scheme))
        self.doc.sources[PID] = data
        self.doc.close()
        try:
            return dcs_apply(self.doc, self.dcs, reg or load_seed())
        except UnmappedCategory as exc:
            if isinstance(exc, UnmappedTag):
                raise
            raise UnmappedTag(exc.name, exc.nid) from None


def _lines(data: bytes) -> list[str]:
    text = data.decode("utf-8")
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return lines


class _Reader:
    """Read-side view of a document in a scheme's vocabulary."""

    def __init__(self, doc: AnnotationDocument, dcs: DCS, layers: tuple[str, ...]):
        doc.require_sealed()
        self.dcs = dcs
        self.doc = dcs_invert(doc, dcs)
        for lid in layers:
            if lid not in self.doc.layers:
                raise ShapeMismatch(f"document has no {lid} layer")
        if len(self.doc.primaries) != 1:
            raise ShapeMismatch("format needs exactly one primary resource")
        (pid, primary), = self.doc.primaries.items()
        data = doc.sources.get(pid)
        if data is None:
            raise MissingPrimary(f"primary data for {pid} ({primary.uri}) is not available")
        self.text = data.decode("utf-8")
        self.layers = layers
        self.used: set[str] = set()

    def is_a(self, ref: CategoryRef, concept: str) -> bool:
        if ref.is_local:
            return ref.scheme == self.dcs.scheme and self.dcs.resolve_name(ref.name) == concept
        return ref.name == concept

    def scheme_name(self, ref) -> str:
        if not isinstance(ref, CategoryRef) or not ref.is_local or ref.scheme != self.dcs.scheme:
            raise ShapeMismatch(f"{ref!r} has no name in scheme {self.dcs.scheme}")
        return ref.name

    def nodes(self, lid: str, concept: str | None = None) -> list[Node]:
        out = [n for n in self.doc.layer_nodes(lid)
               if concept is None or self.is_a(n.type_category, concept)]
        return sorted(out, key=self.position)

    def position(self, n: Node):
        boxes = footprint_boxes(self.doc, n.nid)
        return tuple((pid, region_key(Region(None, pid, b))) for pid, b in boxes.items())

    def token_text(self, nid: str) -> str:
        n = self.doc.nodes[nid]
        if not self.is_a(n.type_category, TOKEN) or n.layer != self.layers[0]:
            raise ShapeMismatch(f"node {nid} is not a token")
        if len(n.targets) != 1 or n.targets[0].kind != "r":
            raise ShapeMismatch(f"token {nid} must target exactly one region")
        region = self.doc.regions[n.targets[0].id]
        if len(region.boxes) != 1:
            raise ShapeMismatch(f"token {nid} is discontinuous")
        (s, e), = region.boxes[0]
        text = self.text[s:e]
        if not text or any(c in text for c in "\n\t"):
            raise ShapeMismatch(f"token {nid} covers unusable text {text!r}")
        if nid in self.used:
            raise ShapeMismatch(f"token {nid} is used twice")
        self.used.add(nid)
        return text

    def features(self, nid: str, concept: str):
        return [f.value for f in self.doc.features_of(nid) if self.is_a(f.descriptor, concept)]

    def one_feature(self, nid: str, concept: str):
        values = self.features(nid, concept)
        if len(values) != 1:
            raise ShapeMismatch(f"node {nid} needs exactly one {concept} feature, has {len(values)}")
        return values[0]

    def annotation_of(self, tid: str, lid: str) -> Node:
        hits = [n for n in self.doc.layer_nodes(lid)
                if any(t.kind == "n" and t.id == tid for t in n.targets)]
        if len(hits) != 1:
            raise ShapeMismatch(f"token {tid} needs exactly one {lid} annotation, has {len(hits)}")
        return hits[0]

    def sentences(self) -> list[list[str]]:
        seg = self.layers[0]
        out = []
        for s in self.nodes(seg, SENTENCE):
            if not s.targets or any(t.kind != "n" for t in s.targets):
                raise ShapeMismatch(f"sentence {s.nid} must target token nodes only")
            out.append([t.id for t in s.targets])
        return out

    def check_all_tokens_used(self):
        unused = [n.nid for n in self.nodes(self.layers[0], TOKEN) if n.nid not in self.used]
        if unused:
            raise ShapeMismatch(f"tokens outside any sentence: {unused[:5]}")


def _is_empty(doc: AnnotationDocument) -> bool:
    return not doc.nodes


# -- inline tagged text --------------------------------------------------

def _split_pair(pair: str, lineno: int, col: int) -> tuple[str, str]:
    token, sep, tag = pair.rpartition("/")
    if not sep or not token or not tag:
        raise MalformedPair(lineno, col)
    return token, tag


def ingest_inline(data: bytes, dcs: DCS, reg: Registry | None = None, *,
                  uri: str = "primary.txt") -> AnnotationDocument:
    b = _Builder("inline", dcs)
    seg, pos = b.layers
    for lineno, line in enumerate(_lines(data), 1):
        if not line:
            raise MalformedPair(lineno, 1, "empty sentence")
        col = 1
        tokens = []
        for pair in line.split(" "):
            if "\t" in pair or "\r" in pair:
                raise MalformedPair(lineno, col, "control character in pair")
            token, tag = _split_pair(pair, lineno, col)
            tid = b.token(token)
            b.doc.add(Node("p" + tid[1:], pos, CategoryRef(UNTYPED), (node_ref(tid),)))
            b.doc.add(Feature("p" + tid[1:], b.cat("pos"), b.cat(tag)))
            tokens.append(node_ref(tid))
            col += len(pair) + 1
        b.doc.add(Node(f"s{lineno}", seg, b.cat("sent"), tuple(tokens)))
        b.end_sentence()
    return b.finish(reg, uri)


def emit_inline(doc: AnnotationDocument, dcs: DCS) -> bytes:
    if _is_empty(doc):
        return b""
    r = _Reader(doc, dcs, MANIFEST["inline"].layers)
    out = []
    for sentence in r.sentences():
        pairs = []
        for tid in sentence:
            token = r.token_text(tid)
            if " " in token:
                raise ShapeMismatch(f"token {tid} contains a space")
            tag = r.scheme_name(r.one_feature(r.annotation_of(tid, r.layers[1]).nid, POS))
            pairs.append(f"{token}/{tag}")
        out.append(" ".join(pairs) + "\n")
    r.check_all_tokens_used()
    return "".join(out).encode("utf-8")


# -- columnar tokens -----------------------------------------------------

COLUMNS = 3


def ingest_columnar(data: bytes, dcs: DCS, reg: Registry | None = None, *,
                    uri: str = "primary.txt") -> AnnotationDocument:
    b = _Builder("columnar", dcs)
    seg, pos = b.layers
    sentence: list = []
    n_sent = 0

    def close_sentence():
        nonlocal n_sent, sentence
        if sentence:
            n_sent += 1
            b.doc.add(Node(f"s{n_sent}", seg, b.cat("sent"), tuple(sentence)))
            b.end_sentence()
            sentence = []

    for lineno, line in enumerate(_lines(data), 1):
        if not line:
            close_sentence()
            continue
        cols = line.split("\t")
        if len(cols) != COLUMNS:
            raise ColumnCountMismatch(lineno, COLUMNS, len(cols))
        for i, c in enumerate(cols, 1):
            if not c or "\r" in c:
                raise MalformedPair(lineno, i, "empty column")
        token, lemma, tag = cols
        tid = b.token(token)
        pid = "p" + tid[1:]
        b.doc.add(Node(pid, pos, CategoryRef(UNTYPED), (node_ref(tid),)))
        b.doc.add(Feature(pid, b.cat("pos"), b.cat(tag)))
        b.doc.add(Feature(pid, b.cat("lemma"), Literal(lemma)))
        sentence.append(node_ref(tid))
    close_sentence()
    return b.finish(reg, uri)


def emit_columnar(doc: AnnotationDocument, dcs: DCS) -> bytes:
    if _is_empty(doc):
        return b""
    r = _Reader(doc, dcs, MANIFEST["columnar"].layers)
    out = []
    for sentence in r.sentences():
        for tid in sentence:
            token = r.token_text(tid)
            ann = r.annotation_of(tid, r.layers[1]).nid
            tag = r.scheme_name(r.one_feature(ann, POS))
            lemma = r.one_feature(ann, LEMMA)
            if not isinstance(lemma, Literal) or not lemma.text or any(c in lemma.text for c in "\t\n"):
                raise ShapeMismatch(f"token {tid} has an unusable lemma {lemma!r}")
            out.append(f"{token}\t{lemma.text}\t{tag}\n")
        out.append("\n")
    r.check_all_tokens_used()
    return "".join(out).encode("utf-8")


# -- bracketed trees -----------------------------------------------------

@dataclass
class Tree:
    label: str
    children: list  # list[Tree] for nonterminals, [word] for preterminals
    preterminal: bool = False

    def render(self) -> str:
        if self.preterminal:
            return f"({self.label} {self.children[0]})"
        return f"({self.label} " + " ".join(c.render() for c in self.children) + ")"

    def leaves(self) -> list["Tree"]:
        if self.preterminal:
            return [self]
        return [leaf for c in self.children for leaf in c.leaves()]


def _scan(line: str, base: int):
    i = 0
    while i < len(line):
        ch = line[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            yield ch, base + i
            i += 1
        else:
            j = i
            while j < len(line) and not line[j].isspace() and line[j] not in "()":
                j += 1
            yield line[i:j], base + i
            i = j


def parse_tree(line: str, base: int = 0) -> Tree:
    """Parse one bracketed tree; ``base`` offsets reported error positions."""
    tokens = list(_scan(line, base))
    end = base + len(line)
    pos = 0

    def parse() -> Tree:
        nonlocal pos
        tok, at = tokens[pos]
        if tok != "(":
            raise MalformedTree(f"expected '(' at offset {at}, found {tok!r}")
        pos += 1
        if pos >= len(tokens):
            raise UnbalancedParens(end)
        label, at = tokens[pos]
        if label in "()":
            raise EmptyLabel(f"missing label at offset {at}")
        pos += 1
        children: list = []
        words: list = []
        while True:
            if pos >= len(tokens):
                raise UnbalancedParens(end)
            tok, at = tokens[pos]
            if tok == ")":
                pos += 1
                break
            if tok == "(":
                children.append(parse())
            else:
                words.append((tok, at))
                pos += 1
        if words:
            if children or len(words) > 1:
                raise MalformedTree(f"leaf {words[0][0]!r} at offset {words[0][1]} "
                                    "needs its own preterminal")
            return Tree(label, [words[0][0]], True)
        if not children:
            raise MalformedTree(f"constituent {label} at offset {at} is empty")
        return Tree(label, children)

    if not tokens:
        raise MalformedTree("empty tree")
    tree = parse()
    if pos < len(tokens):
        tok, at = tokens[pos]
        if tok == ")":
            raise UnbalancedParens(at)
        raise MalformedTree(f"trailing material at offset {at}")
    if tree.preterminal:
        raise MalformedTree("tree root must be a nonterminal")
    return tree


def canonical_brackets(data: bytes) -> bytes:
    """Re-render trees with single spaces, one tree per LF-terminated line."""
    return "".join(parse_tree(line).render() + "\n" for line in _lines(data)).encode("utf-8")


def ingest_brackets(data: bytes, dcs: DCS, reg: Registry | None = None, *,
                    uri: str = "primary.txt") -> AnnotationDocument:
    b = _Builder("brackets", dcs)
    seg, syn = b.layers
    counter = 0
    base = 0
    for lineno, line in enumerate(_lines(data), 1):
        tree = parse_tree(line, base)
        base += len(line) + 1

        def build(t: Tree) -> str:
            nonlocal counter
            if t.preterminal:
                tid = b.token(t.children[0])
                b.doc.add(Feature(tid, b.cat("pos"), b.cat(t.label)))
                return tid
            kids = [build(c) for c in t.children]
            counter += 1
            nid = f"c{counter}"
            b.doc.add(Node(nid, syn, b.cat(t.label), tuple(node_ref(k) for k in kids)))
            return nid

        build(tree)
        b.end_sentence()
    return b.finish(reg, uri)


def emit_brackets(doc: AnnotationDocument, dcs: DCS) -> bytes:
    if _is_empty(doc):
        return b""
    r = _Reader(doc, dcs, MANIFEST["brackets"].layers)
    seg, syn = r.layers
    syn_nodes = r.nodes(syn)
    inner = {t.id for n in syn_nodes for t in n.targets if t.kind == "n"}
    roots = [n for n in syn_nodes if n.nid not in inner]

    def render(nid: str) -> str:
        n = r.doc.nodes[nid]
        if n.layer == seg:
            word = r.token_text(nid)
            if " " in word or "(" in word or ")" in word:
                raise ShapeMismatch(f"token {nid} cannot be written inside brackets")
            return f"({r.scheme_name(r.one_feature(nid, POS))} {word})"
        if n.layer != syn or not n.targets or any(t.kind != "n" for t in n.targets):
            raise ShapeMismatch(f"constituent {nid} must target nodes only")
        label = r.scheme_name(n.type_category)
        return f"({label} " + " ".join(render(t.id) for t in n.targets) + ")"

    out = "".join(render(root.nid) + "\n" for root in roots)
    r.check_all_tokens_used()
    return out.encode("utf-8")


INGEST = {"inline": ingest_inline, "columnar": ingest_columnar, "brackets": ingest_brackets}
EMIT = {"inline": emit_inline, "columnar": emit_columnar, "brackets": emit_brackets}

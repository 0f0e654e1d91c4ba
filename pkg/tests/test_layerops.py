import random

import pytest
from hypothesis import given, strategies as st

import docgen
from oracles import brute_closure, oracle_counts, oracle_rate, random_diff_doc
from laftk import transducers as T
from laftk.anchors import Region
from laftk.canonical import canonicalize, doc_equal, records
from laftk.errors import (
    LayerIdClash,
    PrimaryMismatch,
    UnknownDescriptor,
    UnknownLayer,
)
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
from laftk.layerops import ConstraintSet, constraints_load, diff, extract, merge, validate

EMPTY = AnnotationDocument().close()
SENTENCE = b"the/DT cat/NN sat/VBD ./.\n"
TREE = b"(S (NP (DT the) (NN cat)) (VP (VBD sat)) (. .))\n"


def triple(seed, overlap=False):
    rng = random.Random(seed)
    prims = docgen.shared_primaries(rng)
    docs = [docgen.random_document(rng, size=rng.randint(0, 40), primaries=prims,
                                   prefix=p, free_regions=False) for p in "abc"]
    if overlap:
        docs[2] = docs[0]
    return docs


# -- merge -----------------------------------------------------------------

def test_merge_identity(mini):
    doc = T.ingest_inline(SENTENCE, mini)
    assert doc_equal(merge([doc, EMPTY]), doc)
    assert doc_equal(merge([EMPTY, doc]), doc)


def test_merge_seg_pos_with_seg_syn(mini):
    a = T.ingest_inline(SENTENCE, mini)
    b = T.ingest_brackets(TREE, mini)
    m = merge([a, b])
    assert set(m.layers) == {"seg", "pos", "syn"}
    # four tokens, each region shared by both sources
    assert len(a.regions) == len(b.regions) == 4
    assert len(m.regions) == 4


def test_merge_primary_mismatch(mini):
    a = T.ingest_inline(SENTENCE, mini)
    b = T.ingest_inline(b"the/DT dog/NN sat/VBD ./.\n", mini)
    with pytest.raises(PrimaryMismatch):
        merge([a, b])


def test_merge_layer_clash(mini):
    a = T.ingest_inline(SENTENCE, mini)
    b = a.reopen()
    b.layers["pos"] = Layer("pos", ("P1",), None)
    with pytest.raises(LayerIdClash):
        merge([a, b.close()])


def test_merge_with_itself(mini):
    doc = T.ingest_brackets(TREE, mini)
    assert doc_equal(merge([doc, doc]), doc)


def test_conflicting_annotations_coexist(mini):
    a = docgen.agreement_document()
    b = a.reopen()
    b.features["b3"] = [Feature("b3", "POS", CategoryRef("VERB_PAST"))]
    m = merge([a, b.close()])
    assert len(m.layer_nodes("posB")) == 5


@given(st.integers(0, 10_000), st.booleans())
def test_merge_associative(seed, overlap):
    a, b, c = triple(seed, overlap)
    left = merge([merge([a, b]), c])
    right = merge([a, merge([b, c])])
    assert records(left) == records(right)
    assert doc_equal(left, merge([a, b, c]))


@given(st.integers(0, 10_000))
def test_merge_empty_identity_random(seed):
    a, _, _ = triple(seed)
    assert doc_equal(merge([a, EMPTY]), a)


@given(st.integers(0, 10_000))
def test_split_merge_inverse(seed):
    a, b, _ = triple(seed)
    assert doc_equal(extract(merge([a, b]), a.layers), canonicalize(a))


# -- extract ---------------------------------------------------------------

def three_layer_doc(mini):
    return merge([T.ingest_inline(SENTENCE, mini), T.ingest_brackets(TREE, mini)])


def test_extract_pos(mini):
    doc = three_layer_doc(mini)
    part = extract(doc, ["pos"])
    assert set(part.layers) == brute_closure(doc, ["pos"]) == {"seg", "pos"}
    assert not part.layer_nodes("syn")


def test_extract_everything(mini):
    doc = three_layer_doc(mini)
    assert doc_equal(extract(doc, doc.layers), doc)


def test_extract_unknown():
    with pytest.raises(UnknownLayer):
        extract(EMPTY, ["missing"])


@pytest.mark.parametrize("seed", range(30))
def test_extract_closure_matches_brute_force(seed):
    rng = random.Random(seed)
    doc = docgen.random_document(rng, size=200, free_regions=False)
    if not doc.layers:
        return
    wanted = rng.sample(sorted(doc.layers), rng.randint(1, len(doc.layers)))
    part = extract(doc, wanted)
    assert brute_closure(doc, wanted) <= set(part.layers)
    # everything kept is reachable from the kept nodes, and every kept node's
    # references are present
    for n in part.nodes.values():
        assert n.layer in part.layers
    assert part.sealed


# -- diff ------------------------------------------------------------------

def test_diff_three_of_four():
    report = diff(docgen.agreement_document(), "pos", "posB", "POS")
    assert (report.item_count, report.matches, report.rate) == (4, 3, 0.75)
    assert len(report.disagreements) == report.item_count - report.matches
    assert report.rate == oracle_rate(docgen.agreement_document(), "pos", "posB", "POS")


def test_diff_reflexive():
    report = diff(docgen.agreement_document(), "posB", "posB", "POS")
    assert report.rate == 1.0 and not report.has_findings


def test_diff_disjoint_segmentations(mini):
    doc = T.ingest_inline(SENTENCE, mini).reopen()
    doc.add(Layer("other", ("P1",)))
    doc.add(Region("x", "P1", (((0, 2),),)))
    doc.add(Node("o1", "other", UNTYPED, (region_ref("x"),)))
    doc.add(Feature("o1", "POS", CategoryRef("NOUN")))
    report = diff(doc.close(), "pos", "other", "POS")
    assert report.item_count == 0 and report.rate is None
    assert "rate\tundefined" in report.format()
    assert len(report.unmatched) == 5


def test_diff_errors(mini_reg):
    doc = docgen.agreement_document()
    with pytest.raises(UnknownLayer):
        diff(doc, "pos", "nope", "POS")
    with pytest.raises(UnknownDescriptor):
        diff(doc, "pos", "posB", "COLOUR", mini_reg)


@pytest.mark.parametrize("seed", range(60))
def test_diff_matches_brute_force(seed):
    doc = random_diff_doc(random.Random(seed))
    report = diff(doc, "A", "B", "POS")
    items, matches = oracle_counts(doc, "A", "B", "POS")
    assert (report.item_count, report.matches) == (items, matches)
    assert len(report.disagreements) == report.item_count - report.matches
    assert diff(doc, "B", "A", "POS").rate == report.rate


# -- validate --------------------------------------------------------------

def test_constraint_file_grammar():
    cs = constraints_load("EMBED\tS\tNP\tVP\nAPPLIES\tPOS\tTOKEN\n# comment\n")
    assert cs.embed_rules == {"S": {"NP", "VP"}}
    assert cs.applies_rules == {"POS": {"TOKEN"}}
    with pytest.raises(Exception):
        constraints_load("EMBED\tS\n")


HAND_RULES = ConstraintSet({"S": frozenset({"NP", "VP"}), "NP": frozenset({"TOKEN"}),
                            "VP": frozenset({"TOKEN"})})


def test_hand_rules_accept_small_tree(mini, mini_reg):
    doc = T.ingest_brackets(b"(S (NP (DT the) (NN cat)) (VP (VBD sat)))\n", mini)
    assert validate(doc, mini_reg, HAND_RULES).ok


def test_gender_plural_is_a_compat_violation(mini, mini_reg, constraints):
    doc = T.ingest_inline(SENTENCE, mini).reopen()
    doc.add(Feature("p2", "GENDER", CategoryRef("PLURAL")))
    report = validate(doc.close(), mini_reg, constraints)
    assert [v.kind for v in report.violations] == ["compat"]


def test_np_embedding_s(mini, mini_reg, constraints):
    from conftest import FIXTURES

    doc = T.ingest_brackets((FIXTURES / "perturbed" / "np_embeds_s.mrg").read_bytes(), mini)
    report = validate(doc, mini_reg, constraints)
    assert [v.kind for v in report.violations] == ["embed"]


def perturb(doc, kind, rng):
    doc = doc.reopen()
    tokens = sorted(n.nid for n in doc.layer_nodes("seg") if n.type_category.name == "TOKEN")
    syn = sorted(n.nid for n in doc.layer_nodes("syn"))
    if kind == "compat":
        doc.add(Feature(rng.choice(tokens), "GENDER", CategoryRef("PLURAL")))
    elif kind == "embed":
        s = [n for n in syn if doc.nodes[n].type_category.name == "S"]
        doc.add(Node("bad", "syn", rng.choice(["NP", "PP", "ADJP", "ADVP"]),
                     (node_ref(rng.choice(s)),)))
    elif kind == "applies":
        doc.add(Feature(rng.choice(tokens), "LEMMA", Literal("x")))
    elif kind == "orphan":
        doc.add(Node("bad", "syn", "NP", ()))
    elif kind == "dependency":
        doc.add(Node("bad", "seg", "TOKEN", (node_ref(rng.choice(syn)),)))
    return doc.close()


@pytest.mark.parametrize("kind", ["compat", "embed", "applies", "orphan", "dependency"])
def test_single_perturbations(mini, mini_reg, constraints, kind):
    from conftest import legacy_fixtures

    rng = random.Random(kind)
    for path in legacy_fixtures("brackets"):
        doc = T.ingest_brackets(path.read_bytes(), mini)
        assert validate(doc, mini_reg, constraints).ok
        report = validate(perturb(doc, kind, rng), mini_reg, constraints)
        assert [v.kind for v in report.violations] == [kind], path.name


@pytest.mark.parametrize("fmt", ["inline", "columnar", "brackets"])
def test_fixtures_validate_clean(mini, mini_reg, constraints, fmt):
    from conftest import legacy_fixtures

    for path in legacy_fixtures(fmt):
        doc = T.INGEST[fmt](path.read_bytes(), mini)
        assert validate(doc, mini_reg, constraints).ok, path.name

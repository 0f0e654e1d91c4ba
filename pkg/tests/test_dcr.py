import random

import pytest
from hypothesis import given, strategies as st

import docgen
from laftk import transducers
from laftk.canonical import doc_equal, records
from laftk.dcr import (
    check_compat,
    dcs_apply,
    dcs_invert,
    dcs_load,
    load_seed,
    lookup,
    registry_load,
)
from laftk.errors import (
    AmbiguousPreimage,
    CompatViolation,
    DuplicateEntryId,
    KindMismatch,
    NotADescriptor,
    UnknownId,
    UnknownTarget,
    UnknownValueRef,
    UnmappedCategory,
)
from laftk.graph import AnnotationDocument, CategoryRef, Feature, Literal

GENDER_BLOCK = (
    "ENTRY\tGENDER\tdescriptor\n\tNAME\ten\tgender\n\tDEF\ten\tgrammatical gender\n"
    "\tVAL\tMASCULINE\n\tVAL\tFEMININE\n\tVAL\tNEUTER\n\n"
)


def value_block(eid):
    return f"ENTRY\t{eid}\tvalue\n\tNAME\ten\t{eid.lower()}\n\tDEF\ten\t{eid.lower()}\n\n"


def load_dcs(name, reg):
    return transducers.load_example_dcs(name, reg)


def test_gender_entry_loads():
    text = GENDER_BLOCK + "".join(value_block(v) for v in ("MASCULINE", "FEMININE", "NEUTER"))
    reg = registry_load(text)
    assert reg["GENDER"].allowed_values == {"MASCULINE", "FEMININE", "NEUTER"}


def test_unknown_value_reference():
    text = GENDER_BLOCK.replace("NEUTER", "DUAL2") + value_block("MASCULINE") + value_block("FEMININE")
    with pytest.raises(UnknownValueRef):
        registry_load(text)


def test_duplicate_entry():
    with pytest.raises(DuplicateEntryId):
        registry_load(value_block("NOUN") + value_block("NOUN"))


def test_value_must_name_a_value_entry():
    text = GENDER_BLOCK.replace("NEUTER", "NUMBER") + value_block("MASCULINE") + value_block("FEMININE")
    text += "ENTRY\tNUMBER\tdescriptor\n\tNAME\ten\tnumber\n\tDEF\ten\tnumber\n\n"
    with pytest.raises(KindMismatch):
        registry_load(text)


def test_seed_contents(seed):
    for eid in ("GENDER", "MASCULINE", "FEMININE", "NEUTER", "SYNTACTIC_CATEGORY", "NOUN",
                "NUMBER", "SINGULAR", "PLURAL", "TOKEN", "SENTENCE"):
        assert eid in seed
    assert seed["NUMBER"].allowed_values == {"SINGULAR", "PLURAL"}
    assert "NOUN" in seed["SYNTACTIC_CATEGORY"].allowed_values


def test_lookup_french_name(seed):
    assert lookup(seed, "GENDER", "fr").name == "genre"
    assert lookup(seed, "GENDER", "en").name == "gender"


def test_lookup_fallback(seed):
    view = lookup(seed, "GENDER", "sw")
    assert view.fallback and view.name == "gender"
    assert not lookup(seed, "GENDER", "fr").fallback


def test_lookup_unknown(seed):
    with pytest.raises(UnknownId):
        lookup(seed, "NOPE", "en")


def test_compat_examples(seed):
    assert check_compat(seed, "GENDER", CategoryRef("FEMININE")) is None
    assert check_compat(seed, "GENDER", Literal("7")) is not None
    assert check_compat(seed, "GENDER", CategoryRef("PLURAL")) is not None
    with pytest.raises(NotADescriptor):
        check_compat(seed, "NOUN", CategoryRef("FEMININE"))


def test_compat_exhaustive_against_membership(seed):
    descriptors = [e for e in seed.entries.values() if e.is_descriptor]
    values = [e.id for e in seed.entries.values() if not e.is_descriptor]
    for d in descriptors:
        for v in values:
            expected_ok = v in d.allowed_values
            assert (check_compat(seed, d.id, CategoryRef(v)) is None) == expected_ok


def test_compat_on_five_descriptor_registry():
    rng = random.Random(5)
    values = [f"V{i}" for i in range(8)]
    allowed = {f"D{i}": set(rng.sample(values, rng.randint(1, 5))) for i in range(5)}
    text = "".join(value_block(v) for v in values)
    for d, vals in allowed.items():
        text += f"ENTRY\t{d}\tdescriptor\n\tNAME\ten\t{d}\n\tDEF\ten\t{d}\n"
        text += "".join(f"\tVAL\t{v}\n" for v in sorted(vals)) + "\n"
    reg = registry_load(text)
    for d, vals in allowed.items():
        for v in values:
            assert (reg.check_compat(d, v) is None) == (v in vals)


@given(st.data())
def test_random_registry_closure(data):
    n_values = data.draw(st.integers(1, 5))
    values = [f"V{i}" for i in range(n_values)]
    refs = data.draw(st.lists(st.sampled_from(values + ["MISSING"]), max_size=4, unique=True))
    text = "".join(value_block(v) for v in values)
    text += "ENTRY\tD\tdescriptor\n\tNAME\ten\td\n\tDEF\ten\td\n"
    text += "".join(f"\tVAL\t{v}\n" for v in refs) + "\n"
    if "MISSING" in refs:
        with pytest.raises(UnknownValueRef):
            registry_load(text)
    else:
        reg = registry_load(text)
        for v in reg["D"].allowed_values:
            assert v in reg


def test_gender_schemes_load(seed):
    fr = load_dcs("fr-morph.dcs", seed)
    assert fr.resolve_name("genre") == "GENDER"
    assert {fr.resolve_value("genre", v) for v in ("masc", "fem", "neut")} == {
        "MASCULINE", "FEMININE", "NEUTER"}
    tag = load_dcs("tag-a.dcs", seed)
    assert tag.resolve_name("gen") == "GENDER"
    assert [tag.resolve_value("gen", v) for v in "mfn"] == ["MASCULINE", "FEMININE", "NEUTER"]


def test_unknown_target(seed):
    with pytest.raises(UnknownTarget):
        dcs_load("SCHEME\tx\nMAPD\tgenre\tNOVALUE\n", seed)


def test_apply_maps_french_gender(seed):
    doc = AnnotationDocument(docgen.gender_document("fr-morph", n_tokens=1).items())
    doc.features.clear()
    doc.add(Feature("t1", CategoryRef("genre", "fr-morph"), CategoryRef("fem", "fr-morph")))
    out = dcs_apply(doc.close(), load_dcs("fr-morph.dcs", seed), seed)
    assert out.features_of("t1") == [Feature("t1", "GENDER", "FEMININE")]
    assert out.nodes["t1"].type_category == CategoryRef("TOKEN")
    assert out.layers["morph"].dcs_ref is None


def test_apply_idempotent(seed):
    dcs = load_dcs("fr-morph.dcs", seed)
    once = dcs_apply(docgen.gender_document("fr-morph"), dcs, seed)
    assert records(dcs_apply(once, dcs, seed)) == records(once)


def test_cross_scheme_equality(seed):
    a = dcs_apply(docgen.gender_document("tag-a"), load_dcs("tag-a.dcs", seed), seed)
    b = dcs_apply(docgen.gender_document("fr-morph"), load_dcs("fr-morph.dcs", seed), seed)
    assert doc_equal(a, b)


@pytest.mark.parametrize("scheme,name", [("tag-a", "tag-a.dcs"), ("fr-morph", "fr-morph.dcs")])
def test_invert_restores_original(seed, scheme, name):
    dcs = load_dcs(name, seed)
    original = docgen.gender_document(scheme)
    back = dcs_invert(dcs_apply(original, dcs, seed), dcs)
    assert records(back) == records(original)


def test_apply_then_invert_then_apply(seed):
    dcs = load_dcs("tag-a.dcs", seed)
    normal = dcs_apply(docgen.gender_document("tag-a"), dcs, seed)
    assert records(dcs_apply(dcs_invert(normal, dcs), dcs, seed)) == records(normal)


def test_ambiguous_preimage(seed):
    dcs = dcs_load("SCHEME\tx\nMAPD\ttok\tTOKEN\nMAPD\tword\tTOKEN\n", seed)
    doc = AnnotationDocument(docgen.gender_document("fr-morph", n_tokens=1).items())
    doc.features.clear()
    doc.nodes["t1"] = doc.nodes["t1"].__class__("t1", "morph", "TOKEN", doc.nodes["t1"].targets)
    doc.layers["morph"] = doc.layers["morph"].__class__("morph", ("P1",), None)
    with pytest.raises(AmbiguousPreimage):
        dcs_invert(doc.close(), dcs)


def test_invert_empty(seed):
    empty = AnnotationDocument().close()
    assert dcs_invert(empty, load_dcs("tag-a.dcs", seed)).is_empty()


def test_unmapped_name(seed):
    doc = AnnotationDocument(docgen.gender_document("fr-morph", n_tokens=1).items())
    doc.add(Feature("t1", CategoryRef("nombre", "fr-morph"), CategoryRef("pl", "fr-morph")))
    with pytest.raises(UnmappedCategory):
        dcs_apply(doc.close(), load_dcs("fr-morph.dcs", seed), seed)


def test_apply_reports_incompatible_value(seed):
    dcs = dcs_load("SCHEME\tx\nMAPD\ttok\tTOKEN\nMAPD\tgen\tGENDER\nMAPV\tgen\tpl\tPLURAL\n", seed)
    doc = AnnotationDocument(docgen.gender_document("tag-a", n_tokens=1).items())
    doc.features.clear()
    doc.nodes["t1"] = doc.nodes["t1"].__class__("t1", "morph", CategoryRef("tok", "x"),
                                                  doc.nodes["t1"].targets)
    doc.layers["morph"] = doc.layers["morph"].__class__("morph", ("P1",), "x")
    doc.add(Feature("t1", CategoryRef("gen", "x"), CategoryRef("pl", "x")))
    with pytest.raises(CompatViolation):
        dcs_apply(doc.close(), dcs, seed)


def test_seed_loader_matches_file(seed):
    assert len(load_seed()) == len(seed)

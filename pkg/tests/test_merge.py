import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpora import EX, MAPPING, mapping_synonyms, random_corpus
from ontoforge.llm import BackendConfig, FixtureMiss, LlmResponse
from ontoforge.merge import (
    IdentitySynonyms,
    InvalidDoc,
    LlmSynonyms,
    MappingSynonyms,
    Merger,
    SynonymIndex,
    label_equivalence,
    merge_all,
    naive_pairwise_merge,
    normalize,
    parse_synonym_reply,
    synonym_equivalence,
    synonym_violations,
    triple_multiset,
)
from ontoforge.turtle import IRI, RDFS, SUBCLASS_OF, EntityOfInterest, OntologyDoc, Triple, base_ontology, parse_turtle, serialize


def doc(nct, *pairs, prefixes=None):
    triples = tuple(Triple(IRI(EX + label), SUBCLASS_OF, IRI(EX + cat)) for label, cat in pairs)
    return OntologyDoc(prefixes or {"ex": EX}, triples, source_nct=nct)


@pytest.mark.parametrize(
    "raw, expect",
    [
        ("HbA1c", "hb a1c"),
        ("Hb_A1c", "hb a1c"),
        ("BodyMassIndex", "body mass index"),
        ("body-mass-index", "body mass index"),
        ("HOMAIndex", "homa index"),
        ("  PHQ-9  ", "phq 9"),
        ("Weight (kg)", "weight kg"),
    ],
)
def test_normalize(raw, expect):
    assert normalize(raw) == expect


@given(st.text(max_size=30))
def test_normalize_idempotent_on_lowercase(s):
    once = normalize(s)
    assert normalize(once) == once


@settings(max_examples=60)
@given(st.lists(st.text(alphabet="abcdef", min_size=1, max_size=4), unique=True, min_size=1, max_size=200), st.text(alphabet="abcdefg", max_size=4))
def test_index_comparison_bound(keys, probe):
    index = SynonymIndex()
    for k in keys:
        index.insert("c", k, k)
    assert [k for k, _ in index.items("c")] == sorted(keys)
    index.comparisons = 0
    found = index.lookup("c", probe)
    assert (found is not None) == (probe in keys)
    assert index.comparisons <= 2 * (math.floor(math.log2(len(keys))) + 1)


def test_index_is_scoped_by_category():
    index = SynonymIndex()
    index.insert("Biomarker", "weight", "Weight")
    assert index.lookup("Biomarker", "weight") == "Weight"
    assert index.lookup("EndpointScore", "weight") is None
    assert not index.insert("Biomarker", "weight", "Other")
    assert index.categories() == ["Biomarker"]


def test_empty_merge_is_base_skeleton():
    main, index, stats, _ = merge_all([])
    assert main == base_ontology()
    assert len(index) == 0 and stats.docs_merged == 0


def test_skip_on_hit_add_on_miss():
    docs = [doc("NCT1", ("HbA1c", "Biomarker"), ("BMI", "Biomarker")), doc("NCT2", ("Hb_A1c", "Biomarker"), ("PHQ9", "Questionnaire"))]
    main, _, stats, merger = merge_all(docs)
    added = [t for t in main.triples if t not in base_ontology().triples]
    assert added == [
        Triple(IRI(EX + "HbA1c"), SUBCLASS_OF, IRI(EX + "Biomarker")),
        Triple(IRI(EX + "BMI"), SUBCLASS_OF, IRI(EX + "Biomarker")),
        Triple(IRI(EX + "PHQ9"), SUBCLASS_OF, IRI(EX + "Questionnaire")),
    ]
    assert (stats.triples_added, stats.triples_skipped_duplicate, stats.docs_merged) == (3, 1, 2)
    dup = [r for r in merger.provenance if not r.canonical]
    assert dup[0].entity == "Hb_A1c" and dup[0].canonical_label == "HbA1c" and dup[0].source_nct == "NCT2"


def test_same_label_in_other_category_is_kept():
    main, _, stats, _ = merge_all([doc("NCT1", ("Weight", "Biomarker"), ("Weight", "EndpointScore"))])
    assert stats.triples_added == 2


def test_synonym_hit_skips():
    syn = MappingSynonyms({("Biomarker", "hb a1c"): ["glycated hemoglobin"]})
    _, _, stats, _ = merge_all([doc("NCT1", ("HbA1c", "Biomarker")), doc("NCT2", ("GlycatedHemoglobin", "Biomarker"))], syn)
    assert stats.triples_skipped_duplicate == 1 and stats.synonym_calls == 2


def test_non_entity_triples_are_dropped_and_objects_normalized():
    text = (
        "@prefix ex: <http://www.example.org/clinical-trials#> .\n"
        "@prefix o: <http://other/#> .\n"
        "@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n"
        'o:HbA1c rdfs:subClassOf o:Biomarker ; rdfs:label "HbA1c" .\n'
    )
    main, _, _, _ = merge_all([parse_turtle(text, "NCT1")])
    extra = set(main.triples) - set(base_ontology().triples)
    assert extra == {Triple(IRI("http://other/#HbA1c"), SUBCLASS_OF, IRI(EX + "Biomarker"))}


def test_prefix_conflicts_are_renamed():
    d = doc("NCT1", ("A", "Biomarker"), prefixes={"ex": "http://clash/#", "rdfs": RDFS, "q": "http://q/#"})
    main, _, _, _ = merge_all([d])
    assert main.prefixes["ex"] == EX
    assert main.prefixes["ex1"] == "http://clash/#"
    assert main.prefixes["q"] == "http://q/#"
    assert parse_turtle(serialize(main)).triple_counter() == main.triple_counter()


def test_invalid_doc_handling():
    bad = OntologyDoc.invalid("NCT1", "syntax")
    with pytest.raises(InvalidDoc):
        Merger().merge_one(bad)
    _, _, stats, _ = merge_all([bad, doc("NCT2", ("A", "Biomarker"))])
    assert stats.docs_rejected_invalid == 1 and stats.docs_merged == 1


def test_provenance_csv():
    _, _, _, merger = merge_all([doc("NCT1", ("A", "Biomarker")), doc("NCT2", ("A", "Biomarker"))])
    assert merger.provenance_csv().splitlines() == [
        "entity,category,source_nct,canonical,canonical_label",
        "A,Biomarker,NCT1,true,A",
        "A,Biomarker,NCT2,false,A",
    ]


def test_no_synonym_violations_after_merge():
    syn = mapping_synonyms()
    rng = random.Random(3)
    for _ in range(20):
        main, _, _, _ = merge_all(random_corpus(rng), syn)
        assert synonym_violations(main, syn) == []


def test_merge_matches_oracle_small():
    rng = random.Random(11)
    for _ in range(20):
        docs = random_corpus(rng)
        assert triple_multiset(merge_all(docs)[0]) == triple_multiset(naive_pairwise_merge(docs, label_equivalence))
        syn = MappingSynonyms(MAPPING)
        assert triple_multiset(merge_all(docs, syn)[0]) == triple_multiset(naive_pairwise_merge(docs, synonym_equivalence(syn)))


def test_equivalence_callable():
    a = EntityOfInterest("HbA1c", "Biomarker", 0, IRI(EX + "HbA1c"))
    b = EntityOfInterest("hb_a1c", "Biomarker", 0, IRI(EX + "hb_a1c"))
    assert label_equivalence(a, b)


def test_identity_cache():
    syn = IdentitySynonyms()
    e = EntityOfInterest("HbA1c", "Biomarker", 0, IRI(EX + "HbA1c"))
    assert syn(e) == ["hb a1c"] and syn(e) is syn(e)
    assert '"hb a1c"' in syn.cache_json()


@pytest.mark.parametrize(
    "reply, expect",
    [
        ('["A1C", "glycated hemoglobin"]', ["A1C", "glycated hemoglobin"]),
        ('Sure:\n```json\n["x"]\n```', ["x"]),
        ("- A1C\n- glycated hemoglobin\n", ["A1C", "glycated hemoglobin"]),
        ("1. A1C\n2) HbA1c", ["A1C", "HbA1c"]),
        ("", []),
    ],
)
def test_parse_synonym_reply(reply, expect):
    assert parse_synonym_reply(reply) == expect


class FakeBackend:
    def __init__(self, text=None):
        self.config = BackendConfig("replay", "m", fixture="x")
        self.text = text
        self.calls = 0

    def chat(self, messages, seed=None, attempt=1):
        self.calls += 1
        if self.text is None:
            raise FixtureMiss("abc")
        return LlmResponse(self.text, 7, 3, 0.5, "m")


def test_llm_synonyms_usage_and_cache():
    backend = FakeBackend('["A1C"]')
    syn = LlmSynonyms(backend)
    _, _, stats, _ = merge_all([doc("NCT1", ("HbA1c", "Biomarker")), doc("NCT2", ("HbA1c", "Biomarker"), ("A1C", "Biomarker"))], syn)
    assert backend.calls == 2  # HbA1c once (cached), A1C once
    assert stats.triples_added == 1
    assert syn.usage_by_source["NCT1"].prompt_tokens == 7
    assert syn.usage_by_source["NCT2"].calls == 1


def test_llm_synonyms_fall_back_to_label(caplog):
    syn = LlmSynonyms(FakeBackend(None))
    e = EntityOfInterest("HbA1c", "Biomarker", 0, IRI(EX + "HbA1c"))
    assert syn(e) == ["hb a1c"]
    assert "using the label only" in caplog.text

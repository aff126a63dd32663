"""Random corpus generators shared by the merge tests and the acceptance suite."""

import random

from ontoforge.merge import MappingSynonyms
from ontoforge.turtle import EX, IRI, MAIN_CATEGORIES, OWL_CLASS, RDF_TYPE, RDFS, SUBCLASS_OF, Literal, OntologyDoc, Triple

LABEL = IRI(RDFS + "label")
ALT_NS = "http://other.example/onto#"

# Surface forms that collide under normalization or through the synonym table.
VOCAB = [
    "HbA1c", "hbA1c", "Hb_A1c", "GlycatedHemoglobin", "A1C",
    "BMI", "BodyMassIndex", "body-mass-index", "QueteletIndex",
    "FPG", "FastingPlasmaGlucose", "fasting_plasma_glucose",
    "PHQ9", "PHQ-9", "PatientHealthQuestionnaire",
    "SF36", "SF-36", "ShortForm36",
    "Weight", "BodyWeight", "LDLC", "LDL-C",
    "Glucometer", "CGM", "ContinuousGlucoseMonitor",
]

MAPPING = {
    (None, "hb a1c"): ["glycated hemoglobin", "A1C"],
    ("Biomarker", "bmi"): ["body mass index"],
    ("Biomarker", "quetelet index"): ["body mass index"],
    (None, "fpg"): ["fasting plasma glucose"],
    ("Questionnaire", "phq9"): ["phq 9", "patient health questionnaire"],
    (None, "sf36"): ["sf 36", "short form36"],
    ("Biomarker", "body weight"): ["weight"],
    (None, "ldlc"): ["ldl c"],
    ("MeasurementTool", "cgm"): ["continuous glucose monitor"],
}


def mapping_synonyms():
    return MappingSynonyms(MAPPING)


def random_doc(rng: random.Random, nct: str, max_entities: int = 8) -> OntologyDoc:
    prefixes = {"rdfs": RDFS, "ex": EX}
    triples = []
    for _ in range(rng.randint(0, max_entities)):
        label = rng.choice(VOCAB)
        ns = EX if rng.random() < 0.8 else ALT_NS
        if ns == ALT_NS:
            prefixes["alt" if rng.random() < 0.5 else "ex2"] = ALT_NS
        subject = IRI(ns + label)
        category = rng.choice(MAIN_CATEGORIES)
        triples.append(Triple(subject, SUBCLASS_OF, IRI(EX + category)))
        if rng.random() < 0.3:
            triples.append(Triple(subject, LABEL, Literal(label)))
        if rng.random() < 0.2:
            triples.append(Triple(subject, RDF_TYPE, OWL_CLASS))
    if rng.random() < 0.2:
        # a prefix name that clashes with the main ontology's ex:
        prefixes["ex"] = "http://clash.example/ns#"
    return OntologyDoc(prefixes, tuple(triples), source_nct=nct)


def random_corpus(rng: random.Random, max_docs: int = 10):
    return [random_doc(rng, f"NCT{i:08d}") for i in range(rng.randint(0, max_docs))]


def synthetic_entities_doc(n: int, seed: int = 0) -> list:
    """``n`` distinct entities spread over the four categories, one per doc."""
    rng = random.Random(seed)
    ids = list(range(n))
    rng.shuffle(ids)
    docs = []
    for i in ids:
        cat = MAIN_CATEGORIES[i % 4]
        docs.append(OntologyDoc({"ex": EX}, (Triple(IRI(f"{EX}Concept{i:06d}"), SUBCLASS_OF, IRI(EX + cat)),), source_nct=f"NCT{i:08d}"))
    return docs

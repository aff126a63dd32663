"""Author the 50-trial replay corpus used by the end-to-end tests.

Writes into ``tests/fixtures/corpus/`` (or ``--out``):

* ``trials50.csv``   synthetic diabetes trials in the clinicaltrials.gov layout
* ``replay.jsonl``   one generation record per trial plus synonym records
* ``synonyms.json``  the authored synonym table the replies were drawn from
* ``design.json``    which trials were built invalid, and how
* ``config.toml``    a run config pointing at the files above

40 of the 50 responses are valid Turtle wrapped in assorted prose; the other
10 reproduce typical failure modes. Rerun after changing the default
templates, since request digests cover the full prompt text.
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from ontoforge.llm import BackendConfig, LlmResponse, canonical_json, estimate_tokens, fixture_entry
from ontoforge.merge import normalize
from ontoforge.prompts import build_single_prompt, build_synonym_prompt
from ontoforge.trials import ClinicalTrial, write_trials_csv

MODEL_ID = "gpt-3.5-turbo-1106"
SEED = 42

# (surface label in Turtle, category, outcome phrase, synonyms)
CONCEPTS = [
    ("HbA1c", "Biomarker", "Change from baseline in HbA1c at week 26", ["glycated hemoglobin", "hemoglobin A1c", "A1C"]),
    ("HemoglobinA1c", "Biomarker", "Change in hemoglobin A1c (%)", ["HbA1c", "glycosylated hemoglobin"]),
    ("FastingPlasmaGlucose", "Biomarker", "Fasting plasma glucose (mg/dL)", ["FPG", "fasting blood glucose"]),
    ("FPG", "Biomarker", "Change in FPG from baseline", ["fasting plasma glucose"]),
    ("BodyWeight", "Biomarker", "Change in body weight (kg)", ["weight", "body mass"]),
    ("BodyMassIndex", "Biomarker", "Body mass index", ["BMI", "Quetelet index"]),
    ("CPeptide", "Biomarker", "Fasting C-peptide", ["C-peptide", "connecting peptide"]),
    ("LDLCholesterol", "Biomarker", "LDL cholesterol", ["LDL-C", "low density lipoprotein cholesterol"]),
    ("Triglycerides", "Biomarker", "Serum triglycerides", ["TG", "triacylglycerol"]),
    ("SystolicBloodPressure", "Biomarker", "Systolic blood pressure", ["SBP"]),
    ("UrinaryAlbuminCreatinineRatio", "Biomarker", "Urinary albumin-to-creatinine ratio", ["UACR", "ACR"]),
    ("HOMA_IR", "EndpointScore", "HOMA-IR insulin resistance index", ["homeostatic model assessment of insulin resistance", "HOMA IR"]),
    ("TimeInRange", "EndpointScore", "Percentage of time in range 70-180 mg/dL", ["TIR", "time in target range"]),
    ("HypoglycemiaEventRate", "EndpointScore", "Rate of hypoglycaemic episodes", ["hypoglycemia rate", "rate of hypoglycemic events"]),
    ("ProportionHbA1cBelow7", "EndpointScore", "Proportion of participants achieving HbA1c < 7%", ["HbA1c target attainment"]),
    ("ContinuousGlucoseMonitor", "MeasurementTool", "Measured by continuous glucose monitoring", ["CGM", "continuous glucose monitoring"]),
    ("CGM", "MeasurementTool", "CGM-derived glycaemic variability", ["continuous glucose monitor"]),
    ("Glucometer", "MeasurementTool", "Self-monitored blood glucose by glucometer", ["blood glucose meter", "SMBG meter"]),
    ("DXAScan", "MeasurementTool", "Body composition by DXA scan", ["DEXA", "dual energy x-ray absorptiometry"]),
    ("OralGlucoseToleranceTest", "MeasurementTool", "2-hour oral glucose tolerance test", ["OGTT", "glucose tolerance test"]),
    ("DTSQ", "Questionnaire", "Diabetes Treatment Satisfaction Questionnaire (DTSQ) score", ["Diabetes Treatment Satisfaction Questionnaire"]),
    ("DiabetesTreatmentSatisfactionQuestionnaire", "Questionnaire", "Treatment satisfaction (DTSQs)", ["DTSQ", "DTSQs"]),
    ("SF36", "Questionnaire", "SF-36 health survey", ["Short Form 36", "SF-36"]),
    ("PAID", "Questionnaire", "Problem Areas in Diabetes (PAID) scale", ["Problem Areas in Diabetes"]),
    ("EQ5D", "Questionnaire", "EQ-5D quality of life", ["EuroQol 5 dimensions", "EQ-5D"]),
    ("HypoglycemiaFearSurvey", "Questionnaire", "Hypoglycaemia Fear Survey-II", ["HFS-II", "HFS"]),
]

PREFIXES = (
    "@prefix rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#> .\n"
    "@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n"
    "@prefix owl: <http://www.w3.org/2002/07/owl#> .\n"
    "@prefix ex: <http://www.example.org/clinical-trials#> .\n"
)

WRAPS = [
    ("prefix", "Here is the ontology for the clinical trial:\n\n{ttl}\nThis ontology captures the requested concepts."),
    ("fenced", "```turtle\n{ttl}```\n\nLet me know if you need anything else."),
    ("both", "Sure! Below is the OWL ontology in Turtle format.\n\n```\n{ttl}```\nHope this helps!"),
    ("bare", "{ttl}"),
]

# failure modes for the 10 invalid trials
FAILURES = [
    "missing_rdfs_prefix",
    "missing_rdfs_prefix",
    "missing_rdfs_prefix",
    "missing_rdfs_prefix",
    "missing_terminator",
    "unterminated_string",
    "blank_node",
    "prose_only",
    "prose_only",
    "rdf_xml",
]


def turtle_for(concepts, prefixes=PREFIXES) -> str:
    lines = [prefixes, ""]
    for cat in ("Biomarker", "EndpointScore", "MeasurementTool", "Questionnaire"):
        lines.append(f"ex:{cat} a owl:Class ;\n    rdfs:subClassOf owl:Thing .")
    for label, cat, phrase, _ in concepts:
        lines.append(f'ex:{label} a owl:Class ;\n    rdfs:subClassOf ex:{cat} ;\n    rdfs:label "{phrase}"@en .')
    return "\n".join(lines) + "\n"


def broken(kind: str, concepts) -> str:
    ttl = turtle_for(concepts)
    if kind == "missing_rdfs_prefix":
        return "```turtle\n" + ttl.replace("@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n", "") + "```"
    if kind == "missing_terminator":
        return ttl.replace("rdfs:subClassOf owl:Thing .", "rdfs:subClassOf owl:Thing", 1)
    if kind == "unterminated_string":
        return ttl.replace('"@en .', "@en .", 1)
    if kind == "blank_node":
        return ttl + "ex:Outcome rdfs:subClassOf [ a owl:Restriction ; owl:onProperty ex:measures ] .\n"
    if kind == "prose_only":
        names = ", ".join(c[0] for c in concepts)
        return f"I extracted the following concepts from the outcomes: {names}. I cannot produce the ontology code for this trial."
    if kind == "rdf_xml":
        return '<?xml version="1.0"?>\n<rdf:RDF xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#">\n  <owl:Class rdf:about="#HbA1c"/>\n</rdf:RDF>\n'
    raise ValueError(kind)


def build(out: Path) -> None:
    rng = random.Random(20240601)
    out.mkdir(parents=True, exist_ok=True)
    config = BackendConfig(kind="replay", model_id=MODEL_ID, seed=SEED, fixture=str(out / "replay.jsonl"))

    trials, picks = [], []
    for i in range(50):
        chosen = rng.sample(CONCEPTS, rng.randint(2, 5))
        primary = chosen[: max(1, len(chosen) // 2)]
        secondary = chosen[len(primary) :]
        trials.append(
            ClinicalTrial(
                nct_id=f"NCT0{4100000 + i * 137:07d}",
                primary_outcomes=" | ".join(c[2] for c in primary),
                secondary_outcomes=" | ".join(c[2] for c in secondary),
                condition="Diabetes Mellitus, Type 2" if i % 3 else "Diabetes Mellitus, Type 1",
            )
        )
        picks.append(chosen)

    invalid_idx = sorted(rng.sample(range(50), len(FAILURES)))
    design = {"valid": [], "invalid": {}}
    records = []
    seen_entities = {}
    for i, (trial, chosen) in enumerate(zip(trials, picks)):
        if i in invalid_idx:
            kind = FAILURES[invalid_idx.index(i)]
            text = broken(kind, chosen)
            design["invalid"][trial.nct_id] = kind
        else:
            name, wrap = WRAPS[i % len(WRAPS)]
            text = wrap.format(ttl=turtle_for(chosen))
            design["valid"].append(trial.nct_id)
            for label, cat, _, syns in chosen:
                seen_entities.setdefault((cat, label), syns)
        messages = build_single_prompt(trial).stages[0]
        prompt_chars = "".join(m.content for m in messages)
        resp = LlmResponse(
            text=text,
            prompt_tokens=estimate_tokens(prompt_chars),
            completion_tokens=estimate_tokens(text),
            latency=rng.randint(20_000, 60_000) / 1000,
            model_id=MODEL_ID,
            seed=SEED,
        )
        records.append(fixture_entry(config, messages, resp))

    table = {}
    for (cat, label), syns in sorted(seen_entities.items()):
        messages = build_synonym_prompt(label, cat)
        reply = json.dumps(syns)
        resp = LlmResponse(reply, estimate_tokens("".join(m.content for m in messages)), estimate_tokens(reply), rng.randint(800, 2500) / 1000, MODEL_ID, seed=SEED)
        records.append(fixture_entry(config, messages, resp))
        table.setdefault(cat, {})[normalize(label)] = syns

    with open(out / "trials50.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(write_trials_csv(trials))
    with open(out / "replay.jsonl", "w", encoding="utf-8") as fh:
        fh.writelines(canonical_json(r) + "\n" for r in records)
    (out / "synonyms.json").write_text(json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "design.json").write_text(json.dumps(design, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "config.toml").write_text(
        'trials = "trials50.csv"\n'
        'model = "gpt35"\n'
        'mode = "single"\n'
        'run = "replay"\n'
        "max_retries = 0\n"
        "\n"
        "[backends.gpt35]\n"
        'kind = "replay"\n'
        f'model_id = "{MODEL_ID}"\n'
        f"seed = {SEED}\n"
        'fixture = "replay.jsonl"\n',
        encoding="utf-8",
    )
    print(f"wrote {len(records)} replay records, {len(design['valid'])} valid / {len(design['invalid'])} invalid trials to {out}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "corpus")
    build(ap.parse_args().out)

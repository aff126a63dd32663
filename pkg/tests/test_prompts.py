import shutil
from importlib import resources

import pytest

from ontoforge.prompts import (
    EmptyTrial,
    PromptTooLong,
    TemplateError,
    WrongMode,
    build_chained_prompts,
    build_single_prompt,
    build_synonym_prompt,
    default_base_ontology_text,
    fill_stage2,
    load_templates,
)
from ontoforge.trials import ClinicalTrial

# Golden message strings of the default templates, typos included.
SINGLE = [
    ("system", "You are a computer scientist tasked with creating an ontology from clinical trials in the OWL ontology code format."),
    ("assistant", "You have to first extract the biomarkers, endpoint scores, outcome measurement tools, and questionaire types from cinical trial and then turn that into the owl ontology code format{NCT}"),
    ("assistant", "The only thing you have to do is put the biomarkers, endpoint scores, outcome measurement tools, and questionaires as subclasses of their respective mainclasses (i.e. ex:Biomarker, ex:EndpointScore, ex:MeasurementTool, and ex:Questionnaire)."),
]
CHAINED_1 = [
    ("system", "You are a biologist tasked with extracting biomarkers, endpoint scores, outcome measurement tools, and questionaire types."),
    ("user", "{OUTCOMES}"),
]
CHAINED_2 = [
    ("system", "You are a computer scientist tasked with creating a ontology from clinical trials in the OWL ontology code format."),
    ("assistant", "You have to convert the biomarkers, endpoint scores, outcome measurement tools, and questionnaire types into an ontology."),
    ("assistant", SINGLE[2][1]),
]
MAIN_CLASSES = ["ex:Biomarker", "ex:EndpointScore", "ex:MeasurementTool", "ex:Questionnaire"]

TRIAL = ClinicalTrial("NCT00000001", "A", "B", "Diabetes")


def test_golden_default_templates():
    ts = load_templates()
    single = [(t.role, t.text) for t in ts.single[0]]
    assert single[:3] == SINGLE
    assert single[-1] == ("user", "{OUTCOMES}")
    assert "{BASE_ONTOLOGY}" in single[3][1] and "reconstructed" in ts.single[0][3].note
    assert [(t.role, t.text) for t in ts.chained[0]] == CHAINED_1
    stage2 = [(t.role, t.text) for t in ts.chained[1]]
    assert stage2[:3] == CHAINED_2
    assert stage2[-1] == ("user", "{EXTRACTION}")


def test_single_prompt_structure():
    plan = build_single_prompt(TRIAL)
    (msgs,) = plan.stages
    assert plan.mode == "single" and plan.trial_ref == "NCT00000001"
    assert msgs[0].content.startswith("You are a computer scientist tasked with creating an ontology from clinical trials in the OWL ontology code format.")
    assert msgs[1].content.endswith("code formatNCT00000001")
    assert msgs[-1].role == "user" and msgs[-1].content == "A B"
    assert [m.role for m in msgs].count("user") == 1
    assert default_base_ontology_text() in msgs[3].content


def test_empty_secondary_keeps_trailing_space():
    plan = build_single_prompt(ClinicalTrial("NCT00000001", "A", ""))
    assert plan.stages[0][-1].content == "A "


def test_plans_are_deterministic():
    assert build_single_prompt(TRIAL) == build_single_prompt(TRIAL)
    assert build_chained_prompts(TRIAL) == build_chained_prompts(TRIAL)


def test_empty_trial_rejected():
    with pytest.raises(EmptyTrial):
        build_single_prompt(ClinicalTrial("NCT00000001", " ", ""))
    with pytest.raises(EmptyTrial):
        build_chained_prompts(ClinicalTrial("NCT00000001", "", ""))


def test_chained_stages():
    plan = build_chained_prompts(TRIAL)
    s1, s2 = plan.stages
    assert s1[0].content == CHAINED_1[0][1]
    assert s1[-1].content == "A B"
    assert s2[0].content == CHAINED_2[0][1]
    assert s2[-1].content == "{EXTRACTION}"


def test_fill_stage2_substitutes_once():
    plan = build_chained_prompts(TRIAL)
    msgs = fill_stage2(plan, "HbA1c")
    assert msgs[-1].content == "HbA1c"
    assert all("{EXTRACTION}" not in m.content for m in msgs)
    assert msgs[:-1] == list(plan.stages[1][:-1])
    assert fill_stage2(plan, "X") == fill_stage2(plan, "X")


def test_fill_stage2_empty_output():
    msgs = fill_stage2(build_chained_prompts(TRIAL), "")
    assert msgs[-1].role == "user" and msgs[-1].content == ""


def test_fill_stage2_passes_turtle_bytes_through():
    payload = '@prefix ex: <http://e/> .\nex:A rdfs:label "q\\"{NCT}" ; ex:p <x> .'
    msgs = fill_stage2(build_chained_prompts(TRIAL), payload)
    assert msgs[-1].content.encode() == payload.encode()


def test_fill_stage2_wrong_mode():
    with pytest.raises(WrongMode):
        fill_stage2(build_single_prompt(TRIAL), "x")


def test_same_main_classes_in_both_modes():
    single = " ".join(m.content for m in build_single_prompt(TRIAL).stages[0])
    stage2 = " ".join(m.content for m in fill_stage2(build_chained_prompts(TRIAL), ""))
    for cls in MAIN_CLASSES:
        assert cls in single and cls in stage2


def test_outcome_slot_is_not_re_expanded():
    trial = ClinicalTrial("NCT00000001", "{NCT}", "{BASE_ONTOLOGY}")
    assert build_single_prompt(trial).stages[0][-1].content == "{NCT} {BASE_ONTOLOGY}"


def test_custom_base_text():
    plan = build_single_prompt(TRIAL, base_ontology_text="BASE")
    assert plan.base_ontology_text == "BASE"
    assert plan.stages[0][3].content.endswith("BASE")


def test_length_check():
    with pytest.raises(PromptTooLong):
        build_single_prompt(ClinicalTrial("NCT00000001", "x" * 500, ""), max_chars=100)


def test_synonym_prompt():
    msgs = build_synonym_prompt("HbA1c", "Biomarker")
    assert msgs[-1].content == "Category: Biomarker\nConcept: HbA1c"


@pytest.fixture
def template_copy(tmp_path):
    src = resources.files("ontoforge") / "templates"
    dst = tmp_path / "templates"
    with resources.as_file(src) as path:
        shutil.copytree(path, dst)
    return dst


def test_custom_template_dir(template_copy):
    (template_copy / "single" / "stage1" / "0_system.txt").write_text("@role system\nYou are a tester {NCT}.\n")
    plan = build_single_prompt(TRIAL, templates=load_templates(template_copy))
    assert plan.stages[0][0].content == "You are a tester NCT00000001."


def test_template_role_must_match_filename(template_copy):
    (template_copy / "single" / "stage1" / "0_system.txt").write_text("@role user\nx\n")
    with pytest.raises(TemplateError):
        load_templates(template_copy)


def test_template_needs_header(template_copy):
    (template_copy / "single" / "stage1" / "0_system.txt").write_text("no header here\n")
    with pytest.raises(TemplateError):
        load_templates(template_copy)


def test_stage2_needs_extraction_slot(template_copy):
    (template_copy / "chained" / "stage2" / "4_user.txt").write_text("@role user\nnothing\n")
    with pytest.raises(TemplateError):
        load_templates(template_copy)

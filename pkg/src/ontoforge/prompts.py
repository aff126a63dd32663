"""Single-shot and chained prompt plans built from on-disk templates.

Template layout: ``<root>/<mode>/<stage>/<index>_<role>.txt``. The first line
of each file is a header ``@role <role>`` (an optional ``# note`` may follow
on the same line); the rest of the file is the message content with one
trailing newline removed. Slots ``{NCT}``, ``{OUTCOMES}``,
``{BASE_ONTOLOGY}``, ``{EXTRACTION}``, ``{LABEL}`` and ``{CATEGORY}`` are
filled in a single pass, so slot-like text inside a value is never expanded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Union

from .trials import ClinicalTrial
from .turtle import base_ontology, serialize

ROLES = ("system", "assistant", "user")
SLOT_RE = re.compile(r"\{(NCT|OUTCOMES|BASE_ONTOLOGY|EXTRACTION|LABEL|CATEGORY)\}")
EXTRACTION_SLOT = "{EXTRACTION}"
DEFAULT_MAX_PROMPT_CHARS = 200_000


class PromptError(Exception):
    pass


class EmptyTrial(PromptError):
    pass


class WrongMode(PromptError):
    pass


class TemplateError(PromptError):
    pass


class PromptTooLong(PromptError):
    pass


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.content is None:
            raise ValueError("message content may not be None")

    def as_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class MessageTemplate:
    role: str
    text: str
    note: str = ""

    def render(self, values: Mapping[str, str]) -> Message:
        def sub(m: re.Match) -> str:
            return values.get(m.group(1), m.group(0))

        return Message(self.role, SLOT_RE.sub(sub, self.text))


@dataclass(frozen=True)
class TemplateSet:
    single: tuple
    chained: tuple
    synonyms: tuple


@dataclass(frozen=True)
class PromptPlan:
    mode: str
    stages: tuple
    base_ontology_text: str
    trial_ref: str
    templates: Optional[tuple] = None
    values: tuple = ()

    def __post_init__(self):
        expected = {"single": 1, "chained": 2}.get(self.mode)
        if expected is None or len(self.stages) != expected:
            raise ValueError(f"{self.mode!r} plan must have {expected} stage(s)")


def _read_template(fname: str, raw: str) -> MessageTemplate:
    header, sep, body = raw.partition("\n")
    m = re.fullmatch(r"@role\s+(\w+)\s*(?:#\s*(.*))?", header.strip())
    if not sep or m is None:
        raise TemplateError(f"{fname}: first line must be '@role <role>'")
    role = m.group(1)
    stem_role = fname.rsplit(".", 1)[0].partition("_")[2]
    if role not in ROLES or role != stem_role:
        raise TemplateError(f"{fname}: header role {role!r} does not match the file name")
    if body.endswith("\n"):
        body = body[:-1]
    return MessageTemplate(role, body, m.group(2) or "")


def _load_stage(stage_dir) -> tuple:
    files = [f for f in stage_dir.iterdir() if f.name.endswith(".txt")]
    try:
        files.sort(key=lambda f: int(f.name.partition("_")[0]))
    except ValueError as exc:
        raise TemplateError(f"{stage_dir}: template names must start with an integer index") from exc
    return tuple(_read_template(f.name, f.read_text(encoding="utf-8")) for f in files)


def load_templates(root: Union[str, Path, None] = None) -> TemplateSet:
    """Load a template directory; ``None`` selects the shipped defaults."""
    base = resources.files("ontoforge") / "templates" if root is None else Path(root)

    def stages(mode: str, count: int) -> tuple:
        out = []
        for i in range(1, count + 1):
            d = base / mode / f"stage{i}"
            if not d.is_dir():
                raise TemplateError(f"missing template directory {mode}/stage{i}")
            out.append(_load_stage(d))
        return tuple(out)

    ts = TemplateSet(stages("single", 1), stages("chained", 2), stages("synonyms", 1))
    for name, mode_stages in (("single", ts.single), ("chained", ts.chained)):
        for idx, stage in enumerate(mode_stages, 1):
            if not stage or stage[-1].role != "user" or sum(t.role == "user" for t in stage) != 1:
                raise TemplateError(f"{name}/stage{idx} must end with its single user message")
    if not any(EXTRACTION_SLOT in t.text for t in ts.chained[1]):
        raise TemplateError("chained/stage2 needs an {EXTRACTION} slot")
    return ts


_DEFAULT_TEMPLATES: Optional[TemplateSet] = None


def default_templates() -> TemplateSet:
    global _DEFAULT_TEMPLATES
    if _DEFAULT_TEMPLATES is None:
        _DEFAULT_TEMPLATES = load_templates()
    return _DEFAULT_TEMPLATES


def default_base_ontology_text() -> str:
    return serialize(base_ontology())


def outcome_text(trial: ClinicalTrial) -> str:
    return trial.primary_outcomes + " " + trial.secondary_outcomes


def _values(trial: ClinicalTrial, base_text: Optional[str]) -> dict:
    if not trial.promotable:
        raise EmptyTrial(f"{trial.nct_id} has neither primary nor secondary outcomes")
    return {
        "NCT": trial.nct_id,
        "OUTCOMES": outcome_text(trial),
        "BASE_ONTOLOGY": default_base_ontology_text() if base_text is None else base_text,
    }


def _check_length(messages, limit: Optional[int]) -> None:
    if limit is not None:
        total = sum(len(m.content) for m in messages)
        if total > limit:
            raise PromptTooLong(f"prompt is {total} characters, limit is {limit}")


def build_single_prompt(
    trial: ClinicalTrial,
    base_ontology_text: Optional[str] = None,
    templates: Optional[TemplateSet] = None,
    max_chars: Optional[int] = DEFAULT_MAX_PROMPT_CHARS,
) -> PromptPlan:
    templates = templates or default_templates()
    values = _values(trial, base_ontology_text)
    messages = tuple(t.render(values) for t in templates.single[0])
    _check_length(messages, max_chars)
    return PromptPlan("single", (messages,), values["BASE_ONTOLOGY"], trial.nct_id)


def build_chained_prompts(
    trial: ClinicalTrial,
    base_ontology_text: Optional[str] = None,
    templates: Optional[TemplateSet] = None,
    max_chars: Optional[int] = DEFAULT_MAX_PROMPT_CHARS,
) -> PromptPlan:
    templates = templates or default_templates()
    values = _values(trial, base_ontology_text)
    stage1 = tuple(t.render(values) for t in templates.chained[0])
    stage2 = tuple(t.render(values) for t in templates.chained[1])
    _check_length(stage1, max_chars)
    return PromptPlan(
        "chained",
        (stage1, stage2),
        values["BASE_ONTOLOGY"],
        trial.nct_id,
        templates=templates.chained[1],
        values=tuple(sorted(values.items())),
    )


def build_prompt(mode: str, trial: ClinicalTrial, **kwargs) -> PromptPlan:
    if mode == "single":
        return build_single_prompt(trial, **kwargs)
    if mode == "chained":
        return build_chained_prompts(trial, **kwargs)
    raise WrongMode(f"unknown prompt mode {mode!r}")


def fill_stage2(
    plan: PromptPlan, stage1_output: str, max_chars: Optional[int] = DEFAULT_MAX_PROMPT_CHARS
) -> list[Message]:
    """Stage-2 messages with the stage-1 output placed verbatim in its slot."""
    if plan.mode != "chained":
        raise WrongMode("fill_stage2 needs a chained plan")
    values = dict(plan.values)
    values["EXTRACTION"] = stage1_output
    messages = [t.render(values) for t in plan.templates]
    _check_length(messages, max_chars)
    return messages


def build_synonym_prompt(label: str, category: str, templates: Optional[TemplateSet] = None) -> list[Message]:
    templates = templates or default_templates()
    values = {"LABEL": label, "CATEGORY": category}
    return [t.render(values) for t in templates.synonyms[0]]

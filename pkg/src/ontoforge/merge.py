"""Merge per-trial ontologies into one categorized main ontology.

Each entity of interest (``X rdfs:subClassOf <main class>``) is looked up,
together with its synonyms, in a category-scoped sorted index. A hit means
the concept is already present and the triple is skipped; a miss adds the
triple and indexes the entity and all its synonyms under the entity's label.
Only entity triples survive the merge, so the result is a categorized list.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, fields
from typing import Callable, Iterable, Optional, Protocol, Sequence

from .llm import Backend, LlmError
from .prompts import TemplateSet, build_synonym_prompt
from .turtle import (
    SUBCLASS_OF,
    EntityOfInterest,
    OntologyDoc,
    Triple,
    base_ontology,
    extract_entities_of_interest,
    main_class_iri,
)

log = logging.getLogger(__name__)


class InvalidDoc(ValueError):
    pass


_CAMEL_1 = re.compile(r"([a-z])([A-Z])")
_CAMEL_2 = re.compile(r"([A-Z]+)([A-Z][a-z])")
_PUNCT = re.compile(r"[_\-./()%\s]+")


def normalize(label: str) -> str:
    """Lower-cased, camel-case split, punctuation collapsed to single spaces."""
    text = _CAMEL_2.sub(r"\1 \2", _CAMEL_1.sub(r"\1 \2", label))
    return _PUNCT.sub(" ", text).strip().casefold()


class SynonymIndex:
    """Per-category sorted keys with a comparison counter for instrumentation."""

    def __init__(self):
        self._keys: dict[str, list[str]] = {}
        self._values: dict[str, list[str]] = {}
        self.comparisons = 0

    def _search(self, category: str, key: str) -> tuple[int, bool]:
        keys = self._keys.get(category, ())
        lo, hi = 0, len(keys)
        while lo < hi:
            mid = (lo + hi) // 2
            probe = keys[mid]
            self.comparisons += 1
            if key == probe:
                return mid, True
            self.comparisons += 1
            if key < probe:
                hi = mid
            else:
                lo = mid + 1
        return lo, False

    def lookup(self, category: str, label: str) -> Optional[str]:
        pos, found = self._search(category, label)
        return self._values[category][pos] if found else None

    def insert(self, category: str, key: str, canonical: str) -> bool:
        pos, found = self._search(category, key)
        if found:
            return False
        self._keys.setdefault(category, []).insert(pos, key)
        self._values.setdefault(category, []).insert(pos, canonical)
        return True

    def __len__(self) -> int:
        return sum(len(v) for v in self._keys.values())

    def items(self, category: str):
        return list(zip(self._keys.get(category, []), self._values.get(category, [])))

    def categories(self) -> list[str]:
        return sorted(self._keys)


class SynonymSource(Protocol):
    calls: int

    def __call__(self, entity: EntityOfInterest) -> list[str]: ...


@dataclass
class SynonymUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0
    calls: int = 0


class _CachedSynonyms:
    """Cache per (category, normalized label); the own label always comes first."""

    def __init__(self):
        self.cache: dict[tuple[str, str], list[str]] = {}
        self.calls = 0
        self.usage_by_source: dict[Optional[str], SynonymUsage] = {}
        self.current_source: Optional[str] = None

    def _raw(self, entity: EntityOfInterest) -> Iterable[str]:
        return ()

    def __call__(self, entity: EntityOfInterest) -> list[str]:
        own = normalize(entity.label)
        key = (entity.category, own)
        if key not in self.cache:
            forms = [own]
            for s in self._raw(entity):
                n = normalize(s)
                if n and n not in forms:
                    forms.append(n)
            self.cache[key] = forms
        return self.cache[key]

    def cache_json(self) -> str:
        grouped: dict[str, dict[str, list[str]]] = {}
        for (cat, label), forms in sorted(self.cache.items()):
            grouped.setdefault(cat, {})[label] = forms
        return json.dumps(grouped, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


class IdentitySynonyms(_CachedSynonyms):
    pass


class MappingSynonyms(_CachedSynonyms):
    """Fixture-driven synonyms: ``{(category, normalized label): [forms]}``.

    A key with category ``None`` applies to every category.
    """

    def __init__(self, mapping: dict):
        super().__init__()
        self.mapping = mapping

    def _raw(self, entity):
        own = normalize(entity.label)
        self.calls += 1
        return self.mapping.get((entity.category, own)) or self.mapping.get((None, own)) or ()


def parse_synonym_reply(text: str) -> list[str]:
    """JSON array if one is present, else one synonym per line."""
    start, end = text.find("["), text.rfind("]")
    if start != -1 and end > start:
        try:
            data = json.loads(text[start : end + 1])
            if isinstance(data, list):
                return [str(x) for x in data if isinstance(x, (str, int, float))]
        except ValueError:
            pass
    out = []
    for line in text.splitlines():
        line = line.strip().lstrip("-*0123456789.) ").strip().strip('"').strip()
        if line:
            out.append(line)
    return out


class LlmSynonyms(_CachedSynonyms):
    """Ask a chat backend for synonyms; backend failures fall back to the label."""

    def __init__(self, backend: Backend, templates: Optional[TemplateSet] = None):
        super().__init__()
        self.backend = backend
        self.templates = templates

    def _raw(self, entity):
        messages = build_synonym_prompt(entity.label, entity.category, self.templates)
        self.calls += 1
        try:
            resp = self.backend.chat(messages)
        except LlmError as exc:
            log.warning("synonym generation failed for %s/%s, using the label only: %s", entity.category, entity.label, exc)
            return ()
        usage = self.usage_by_source.setdefault(self.current_source, SynonymUsage())
        usage.prompt_tokens += resp.prompt_tokens
        usage.completion_tokens += resp.completion_tokens
        usage.latency += resp.latency
        usage.calls += 1
        return parse_synonym_reply(resp.text)


def generate_synonyms(entity: EntityOfInterest, source: SynonymSource) -> list[str]:
    return source(entity)


@dataclass
class MergeStats:
    triples_added: int = 0
    triples_skipped_duplicate: int = 0
    docs_merged: int = 0
    docs_rejected_invalid: int = 0
    synonym_calls: int = 0
    synonyms_indexed: int = 0

    def __iadd__(self, other: "MergeStats") -> "MergeStats":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ProvenanceRow:
    entity: str
    category: str
    source_nct: str
    canonical: bool
    canonical_label: str


class Merger:
    """Single-writer merge state: main ontology, synonym index and provenance."""

    def __init__(self, synonyms: Optional[SynonymSource] = None):
        self.synonyms = synonyms if synonyms is not None else IdentitySynonyms()
        base = base_ontology()
        self.prefixes = dict(base.prefixes)
        self.triples: list[Triple] = list(base.triples)
        self.index = SynonymIndex()
        self.stats = MergeStats()
        self.provenance: list[ProvenanceRow] = []

    def _union_prefixes(self, doc: OntologyDoc) -> None:
        bound = set(self.prefixes.values())
        for name, iri in doc.prefixes.items():
            if iri in bound:
                continue
            new, n = name, 1
            while new in self.prefixes:
                new, n = f"{name}{n}", n + 1
            self.prefixes[new] = iri
            bound.add(iri)

    def merge_one(self, doc: OntologyDoc) -> MergeStats:
        if not doc.valid:
            raise InvalidDoc(f"{doc.source_nct}: {doc.reason}")
        delta = MergeStats(docs_merged=1)
        calls_before = self.synonyms.calls
        if hasattr(self.synonyms, "current_source"):
            self.synonyms.current_source = doc.source_nct
        self._union_prefixes(doc)
        for entity in extract_entities_of_interest(doc):
            forms = self.synonyms(entity)
            hit = None
            for form in forms:
                hit = self.index.lookup(entity.category, form)
                if hit is not None:
                    break
            if hit is not None:
                delta.triples_skipped_duplicate += 1
                self.provenance.append(ProvenanceRow(entity.label, entity.category, doc.source_nct or "", False, hit))
                continue
            self.triples.append(Triple(entity.subject, SUBCLASS_OF, main_class_iri(entity.category)))
            delta.triples_added += 1
            for form in forms:
                if self.index.insert(entity.category, form, entity.label):
                    delta.synonyms_indexed += 1
            self.provenance.append(ProvenanceRow(entity.label, entity.category, doc.source_nct or "", True, entity.label))
        delta.synonym_calls = self.synonyms.calls - calls_before
        self.stats += delta
        return delta

    def offer(self, doc: OntologyDoc) -> MergeStats:
        if not doc.valid:
            delta = MergeStats(docs_rejected_invalid=1)
            self.stats += delta
            return delta
        return self.merge_one(doc)

    def main(self) -> OntologyDoc:
        return OntologyDoc(dict(self.prefixes), tuple(self.triples))

    def provenance_csv(self) -> str:
        import csv
        import io

        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["entity", "category", "source_nct", "canonical", "canonical_label"])
        for row in self.provenance:
            w.writerow([row.entity, row.category, row.source_nct, "true" if row.canonical else "false", row.canonical_label])
        return buf.getvalue()


def merge_one(main: Merger, doc: OntologyDoc) -> MergeStats:
    return main.merge_one(doc)


def merge_all(docs: Iterable[OntologyDoc], synonyms: Optional[SynonymSource] = None):
    """Merge docs in order; returns ``(main_doc, index, stats, merger)``."""
    merger = Merger(synonyms)
    for doc in docs:
        merger.offer(doc)
    return merger.main(), merger.index, merger.stats, merger


class Equivalence:
    """An equivalence predicate over entities, split into ``prepare`` + ``match``.

    ``prepare`` runs once per entity so the pairwise loop only pays for
    ``match``; calling the object directly compares two entities.
    """

    def __init__(self, prepare: Callable, match: Callable):
        self.prepare = prepare
        self.match = match

    def __call__(self, a: EntityOfInterest, b: EntityOfInterest) -> bool:
        return self.match(self.prepare(a), self.prepare(b))


def _sets_overlap(a: frozenset, b: frozenset) -> bool:
    return not a.isdisjoint(b)


label_equivalence = Equivalence(lambda e: normalize(e.label), lambda a, b: a == b)


def synonym_equivalence(source: SynonymSource) -> Equivalence:
    """Two entities match when their label-plus-synonym sets intersect."""
    return Equivalence(lambda e: frozenset(source(e)), _sets_overlap)


class PairwiseMerger:
    """The quadratic baseline: compare each entity with every retained one."""

    def __init__(self, equivalence=label_equivalence):
        if isinstance(equivalence, Equivalence):
            self.prepare, self.match = equivalence.prepare, equivalence.match
        else:
            self.prepare, self.match = (lambda e: e), equivalence
        self.comparisons = 0
        self.retained: dict[str, list] = {}
        base = base_ontology()
        self.prefixes = dict(base.prefixes)
        self.triples: list[Triple] = list(base.triples)

    def add(self, entity: EntityOfInterest) -> bool:
        pool = self.retained.setdefault(entity.category, [])
        mine = self.prepare(entity)
        match = self.match
        for n, kept in enumerate(pool, 1):
            if match(mine, kept):
                self.comparisons += n
                return False
        self.comparisons += len(pool)
        pool.append(mine)
        self.triples.append(Triple(entity.subject, SUBCLASS_OF, main_class_iri(entity.category)))
        return True

    def merge(self, docs: Iterable[OntologyDoc]) -> OntologyDoc:
        for doc in docs:
            if not doc.valid:
                continue
            for name, iri in doc.prefixes.items():
                self.prefixes.setdefault(name, iri)
            for entity in extract_entities_of_interest(doc):
                self.add(entity)
        return OntologyDoc(self.prefixes, tuple(self.triples))


def naive_pairwise_merge(docs: Sequence[OntologyDoc], equivalence=label_equivalence) -> OntologyDoc:
    return PairwiseMerger(equivalence).merge(docs)


def synonym_violations(main: OntologyDoc, source: _CachedSynonyms) -> list[tuple]:
    """Pairs of retained entities in one category whose synonym sets overlap."""
    by_cat: dict[str, list[EntityOfInterest]] = {}
    for e in extract_entities_of_interest(main):
        by_cat.setdefault(e.category, []).append(e)
    bad = []
    for cat, ents in by_cat.items():
        seen: dict[str, str] = {}
        for e in ents:
            for form in source(e):
                if form in seen and seen[form] != e.label:
                    bad.append((cat, seen[form], e.label))
                seen.setdefault(form, e.label)
    return bad


def triple_multiset(doc: OntologyDoc) -> Counter:
    return Counter(doc.triples)

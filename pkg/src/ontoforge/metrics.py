"""NOCOnto and basic structural counts over the subclass graph.

NOCOnto reading used here: the sum, over named classes other than the root,
of their direct superclass counts, divided by the number of those classes
minus the direct subclasses of the root. Only named classes count; literals,
individuals and annotations are ignored.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from graphlib import CycleError, TopologicalSorter
from typing import Optional

from .turtle import (
    MAIN_CATEGORIES,
    OWL_CLASS,
    OWL_THING,
    RDF_TYPE,
    RDFS_CLASS,
    SUBCLASS_OF,
    IRI,
    OntologyDoc,
    local_name,
)


class MetricsError(ValueError):
    pass


class DegenerateOntology(MetricsError):
    pass


class CyclicHierarchy(MetricsError):
    pass


class ZeroInclusion(MetricsError):
    pass


@dataclass
class ClassGraph:
    classes: set
    supers: dict
    root: IRI = OWL_THING

    @classmethod
    def from_doc(cls, doc: OntologyDoc, root: IRI = OWL_THING) -> "ClassGraph":
        classes: set = set()
        supers: dict = {}
        for t in doc.triples:
            if t.predicate == SUBCLASS_OF and isinstance(t.object, IRI):
                classes.update((t.subject, t.object))
                supers.setdefault(t.subject, set()).add(t.object)
            elif t.predicate == RDF_TYPE and t.object in (OWL_CLASS, RDFS_CLASS):
                classes.add(t.subject)
        classes.discard(root)
        g = cls(classes, supers, root)
        g.check_acyclic()
        return g

    def check_acyclic(self) -> None:
        for c, ss in self.supers.items():
            if c in ss:
                raise CyclicHierarchy(f"{c.value} is its own superclass")
        try:
            tuple(TopologicalSorter(self.supers).static_order())
        except CycleError as exc:
            raise CyclicHierarchy(f"cycle in subclass graph: {[c.value for c in exc.args[1]]}") from exc

    def root_children(self) -> set:
        return {c for c in self.classes if self.root in self.supers.get(c, ())}

    def depth(self) -> int:
        memo: dict = {self.root: 0}
        for c in TopologicalSorter(self.supers).static_order():
            if c in memo:
                continue
            ss = self.supers.get(c)
            memo[c] = 1 + max(memo[s] for s in ss) if ss else 1
        return max((memo.get(c, 1) for c in self.classes), default=0)


def noconto_exact(doc: OntologyDoc) -> Fraction:
    g = ClassGraph.from_doc(doc)
    numerator = sum(len(g.supers.get(c, ())) for c in g.classes)
    denominator = len(g.classes) - len(g.root_children())
    if denominator <= 0:
        raise DegenerateOntology(f"{len(g.classes)} classes, {len(g.root_children())} of them under the root")
    return Fraction(numerator, denominator)


def noconto(doc: OntologyDoc) -> float:
    return float(noconto_exact(doc))


def normalized_noconto(value, included_fraction):
    """Scale a NOCOnto value up by the share of ontologies that were included."""
    if not 0 < included_fraction <= 1:
        raise ZeroInclusion(f"included fraction must be in (0, 1], got {included_fraction}")
    return value / included_fraction


@dataclass
class StructuralCounts:
    class_count: int
    root_children: int
    per_category_counts: dict
    max_depth: int


def structural_counts(doc: OntologyDoc) -> StructuralCounts:
    g = ClassGraph.from_doc(doc)
    per_cat = {cat: 0 for cat in MAIN_CATEGORIES}
    for c in g.classes:
        for s in g.supers.get(c, ()):
            name = local_name(s)
            if name in per_cat and local_name(c) not in MAIN_CATEGORIES:
                per_cat[name] += 1
    return StructuralCounts(len(g.classes), len(g.root_children()), per_cat, g.depth())


@dataclass
class MetricsReport:
    class_count: int
    root_children: int
    noconto: Optional[float]
    noconto_normalized: Optional[float]
    included_fraction: float
    per_category_counts: dict = field(default_factory=dict)
    max_depth: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(**data)


def evaluate(doc: OntologyDoc, included_fraction: float) -> MetricsReport:
    if not 0 <= included_fraction <= 1:
        raise MetricsError("included fraction must lie in [0, 1]")
    counts = structural_counts(doc)
    try:
        value = noconto_exact(doc)
    except DegenerateOntology:
        value = None
    normalized = None
    if value is not None and included_fraction > 0:
        normalized = float(normalized_noconto(value, Fraction(included_fraction).limit_denominator(10**6)))
    return MetricsReport(
        class_count=counts.class_count,
        root_children=counts.root_children,
        noconto=None if value is None else float(value),
        noconto_normalized=normalized,
        included_fraction=included_fraction,
        per_category_counts=counts.per_category_counts,
        max_depth=counts.max_depth,
    )


def render_text(report: MetricsReport) -> str:
    def fmt(v):
        return "n/a" if v is None else f"{v:.4f}"

    lines = [
        f"classes            {report.class_count}",
        f"root children      {report.root_children}",
        f"max depth          {report.max_depth}",
        f"included fraction  {report.included_fraction:.2f}",
        f"NOCOnto            {fmt(report.noconto)}",
        f"NOCOnto normalized {fmt(report.noconto_normalized)}",
    ]
    lines += [f"  {cat:<16} {n}" for cat, n in sorted(report.per_category_counts.items())]
    return "\n".join(lines) + "\n"

"""Turtle layer: clean raw model output, parse, validate, serialize.

Supported Turtle subset (anything else is a syntax error):

* ``@prefix`` / ``@base`` directives and their SPARQL-style ``PREFIX`` /
  ``BASE`` forms
* IRIs ``<...>`` (relative IRIs are resolved against the base), prefixed
  names, and the ``a`` keyword
* string literals in all four quote styles, with ``@lang`` or ``^^datatype``
* integer, decimal, double and boolean literals
* predicate lists (``;``), object lists (``,``), statement terminator ``.``
* ``#`` comments

Blank nodes, property lists ``[ ... ]`` and collections ``( ... )`` are
rejected.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional, Union
from urllib.parse import urljoin

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
XSD = "http://www.w3.org/2001/XMLSchema#"
EX = "http://www.example.org/clinical-trials#"

WELL_KNOWN_PREFIXES = {"rdf": RDF, "rdfs": RDFS, "owl": OWL, "xsd": XSD, "ex": EX}

MAIN_CATEGORIES = ("Biomarker", "EndpointScore", "MeasurementTool", "Questionnaire")


class TurtleError(Exception):
    """Base class for parse failures; carries a position when known."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line else ""
        super().__init__(f"{message}{where}")
        self.message = message


class TurtleSyntaxError(TurtleError):
    pass


class UndeclaredPrefix(TurtleError):
    def __init__(self, prefix: str, line: int = 0, column: int = 0):
        self.prefix = prefix
        super().__init__(f"undeclared prefix {prefix!r}", line, column)


class NoOntologyFound(ValueError):
    """Raised by :func:`clean_llm_output` when no Turtle region is present."""


@dataclass(frozen=True, order=True)
class IRI:
    value: str

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, order=True)
class Literal:
    lexical: str
    language: Optional[str] = None
    datatype: Optional[str] = None

    def __post_init__(self):
        # language tags compare case-insensitively; keep one spelling
        if self.language:
            object.__setattr__(self, "language", self.language.lower())

    def __str__(self) -> str:
        return self.lexical


Term = Union[IRI, Literal]


class Triple(NamedTuple):
    subject: IRI
    predicate: IRI
    object: Term


RDF_TYPE = IRI(RDF + "type")
SUBCLASS_OF = IRI(RDFS + "subClassOf")
OWL_CLASS = IRI(OWL + "Class")
RDFS_CLASS = IRI(RDFS + "Class")
OWL_THING = IRI(OWL + "Thing")


def local_name(term: Union[Term, str]) -> str:
    """Substring after the last ``:``, ``/`` or ``#``."""
    text = term.value if isinstance(term, IRI) else str(term)
    cut = max(text.rfind(":"), text.rfind("/"), text.rfind("#"))
    return text[cut + 1 :]


@dataclass(frozen=True)
class OntologyDoc:
    prefixes: dict = field(default_factory=dict)
    triples: tuple = ()
    source_nct: Optional[str] = None
    valid: bool = True
    reason: Optional[str] = None

    def triple_counter(self) -> Counter:
        return Counter(self.triples)

    def with_triples(self, triples: Iterable[Triple]) -> "OntologyDoc":
        return OntologyDoc(dict(self.prefixes), tuple(triples), self.source_nct, self.valid, self.reason)

    @classmethod
    def invalid(cls, reason: str, source_nct: Optional[str] = None) -> "OntologyDoc":
        return cls(source_nct=source_nct, valid=False, reason=reason)


@dataclass(frozen=True)
class EntityOfInterest:
    label: str
    category: str
    source_triple: int
    subject: Optional[IRI] = None


# --------------------------------------------------------------------------
# lexer

_PN_PREFIX = r"(?:[^\W\d_](?:[\w.\-]*[\w\-])?)?"
_PN_LOCAL = r"(?:(?:[\w:%]|\\[_~.\-!$&'()*+,;=/?#@%])(?:(?:[\w.\-:%]|\\[_~.\-!$&'()*+,;=/?#@%])*(?:[\w\-:%]|\\[_~.\-!$&'()*+,;=/?#@%]))?)?"

_TOKEN_SPEC = [
    ("WS", r"[ \t\r\n]+"),
    ("COMMENT", r"#[^\n]*"),
    ("IRIREF", r"<[^<>\"{}|^`\\\x00-\x20]*>"),
    ("STRING_LONG2", r'"""(?:[^"\\]|\\.|"(?!""))*"""'),
    ("STRING_LONG1", r"'''(?:[^'\\]|\\.|'(?!''))*'''"),
    ("STRING2", r'"(?:[^"\\\n\r]|\\.)*"'),
    ("STRING1", r"'(?:[^'\\\n\r]|\\.)*'"),
    ("LANGTAG", r"@[A-Za-z]+(?:-[A-Za-z0-9]+)*"),
    ("DTYPE", r"\^\^"),
    ("DOUBLE", r"[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+)"),
    ("DECIMAL", r"[+-]?\d*\.\d+"),
    ("INTEGER", r"[+-]?\d+"),
    ("PNAME", _PN_PREFIX + ":" + _PN_LOCAL),
    ("KEYWORD", r"[A-Za-z]+"),
    ("PUNCT", r"[.;,]"),
    ("BNODE", r"_:\S*|[\[\]()]"),
]
_MASTER = re.compile("|".join(f"(?P<{name}>{rx})" for name, rx in _TOKEN_SPEC))


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str, lenient: bool = False) -> Iterator[Token]:
    pos = 0
    line = 1
    line_start = 0
    n = len(text)
    while pos < n:
        m = _MASTER.match(text, pos)
        if m is None or m.end() == pos:
            if lenient:
                pos += 1
                continue
            snippet = text[pos : pos + 20].split("\n")[0]
            raise TurtleSyntaxError(f"unexpected input {snippet!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        if kind not in ("WS", "COMMENT"):
            yield Token(kind, tok, line, pos - line_start + 1)
        newlines = tok.count("\n")
        if newlines:
            line += newlines
            line_start = pos + tok.rfind("\n") + 1
        pos = m.end()


_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}
_ESCAPE_RE = re.compile(r"\\(u[0-9A-Fa-f]{4}|U[0-9A-Fa-f]{8}|.)", re.S)


def _unescape(body: str, tok: Token) -> str:
    def sub(m: re.Match) -> str:
        code = m.group(1)
        if code[0] in "uU" and len(code) > 1:
            return chr(int(code[1:], 16))
        if code in _ESCAPES:
            return _ESCAPES[code]
        raise TurtleSyntaxError(f"invalid escape \\{code}", tok.line, tok.column)

    return _ESCAPE_RE.sub(sub, body)


_PN_LOCAL_ESCAPE = re.compile(r"\\(.)")


# --------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.i = 0
        self.prefixes: dict[str, str] = {}
        self.base: Optional[str] = None
        self.triples: list[Triple] = []

    def peek(self) -> Optional[Token]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self, what: str) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else Token("", "", 1, 1)
            raise TurtleSyntaxError(f"unexpected end of input, expected {what}", last.line, last.column)
        self.i += 1
        return tok

    def expect_punct(self, char: str) -> None:
        tok = self.next(repr(char))
        if tok.kind != "PUNCT" or tok.text != char:
            raise TurtleSyntaxError(f"expected {char!r}, found {tok.text!r}", tok.line, tok.column)

    def parse(self) -> None:
        while self.peek() is not None:
            tok = self.peek()
            if tok.kind == "LANGTAG" and tok.text in ("@prefix", "@base"):
                self.i += 1
                self.directive(tok, sparql=False)
            elif tok.kind == "KEYWORD" and tok.text.upper() in ("PREFIX", "BASE"):
                self.i += 1
                self.directive(tok, sparql=True)
            else:
                self.statement()

    def directive(self, tok: Token, sparql: bool) -> None:
        name = tok.text.lstrip("@").lower()
        if name == "prefix":
            ptok = self.next("prefix name")
            if ptok.kind != "PNAME" or not ptok.text.endswith(":") or ptok.text.count(":") != 1:
                raise TurtleSyntaxError(f"bad prefix name {ptok.text!r}", ptok.line, ptok.column)
            iri = self.iriref(self.next("IRI"))
            self.prefixes[ptok.text[:-1]] = iri.value
        else:
            self.base = self.iriref(self.next("IRI")).value
        if not sparql:
            self.expect_punct(".")

    def iriref(self, tok: Token) -> IRI:
        if tok.kind != "IRIREF":
            raise TurtleSyntaxError(f"expected IRI, found {tok.text!r}", tok.line, tok.column)
        value = _unescape(tok.text[1:-1], tok) if "\\" in tok.text else tok.text[1:-1]
        if self.base is not None:
            value = urljoin(self.base, value)
        return IRI(value)

    def pname(self, tok: Token) -> IRI:
        prefix, _, local = tok.text.partition(":")
        if prefix not in self.prefixes:
            raise UndeclaredPrefix(prefix, tok.line, tok.column)
        return IRI(self.prefixes[prefix] + _PN_LOCAL_ESCAPE.sub(r"\1", local))

    def iri(self, tok: Token, role: str) -> IRI:
        if tok.kind == "IRIREF":
            return self.iriref(tok)
        if tok.kind == "PNAME":
            return self.pname(tok)
        if tok.kind == "BNODE":
            raise TurtleSyntaxError(f"blank nodes and collections are not supported ({tok.text!r})", tok.line, tok.column)
        raise TurtleSyntaxError(f"expected {role}, found {tok.text!r}", tok.line, tok.column)

    def statement(self) -> None:
        subject = self.iri(self.next("subject"), "subject")
        while True:
            ptok = self.next("predicate")
            if ptok.kind == "KEYWORD" and ptok.text == "a":
                predicate = RDF_TYPE
            else:
                predicate = self.iri(ptok, "predicate")
            while True:
                self.triples.append(Triple(subject, predicate, self.object()))
                tok = self.next("'.', ';' or ','")
                if tok.kind != "PUNCT":
                    raise TurtleSyntaxError(f"expected '.', ';' or ',', found {tok.text!r}", tok.line, tok.column)
                if tok.text == ",":
                    continue
                break
            if tok.text == ".":
                return
            # ';' may be repeated and may directly precede the terminator
            while self.peek() is not None and self.peek().kind == "PUNCT" and self.peek().text == ";":
                self.i += 1
            nxt = self.peek()
            if nxt is not None and nxt.kind == "PUNCT" and nxt.text == ".":
                self.i += 1
                return

    def object(self) -> Term:
        tok = self.next("object")
        kind = tok.kind
        if kind in ("IRIREF", "PNAME", "BNODE"):
            return self.iri(tok, "object")
        if kind.startswith("STRING"):
            quote = 3 if "LONG" in kind else 1
            lexical = _unescape(tok.text[quote:-quote], tok)
            nxt = self.peek()
            if nxt is not None and nxt.kind == "LANGTAG" and nxt.text not in ("@prefix", "@base"):
                self.i += 1
                return Literal(lexical, language=nxt.text[1:])
            if nxt is not None and nxt.kind == "DTYPE":
                self.i += 1
                dtype = self.iri(self.next("datatype"), "datatype")
                return Literal(lexical, datatype=dtype.value)
            return Literal(lexical)
        if kind == "INTEGER":
            return Literal(tok.text, datatype=XSD + "integer")
        if kind == "DECIMAL":
            return Literal(tok.text, datatype=XSD + "decimal")
        if kind == "DOUBLE":
            return Literal(tok.text, datatype=XSD + "double")
        if kind == "KEYWORD" and tok.text in ("true", "false"):
            return Literal(tok.text, datatype=XSD + "boolean")
        raise TurtleSyntaxError(f"expected object, found {tok.text!r}", tok.line, tok.column)


def parse_turtle(text: str, source_nct: Optional[str] = None) -> OntologyDoc:
    """Parse ``text``; raises :class:`TurtleError` on any failure."""
    parser = _Parser(text)
    parser.parse()
    return OntologyDoc(parser.prefixes, tuple(parser.triples), source_nct)


def load_ontology(text: str, source_nct: Optional[str] = None) -> OntologyDoc:
    """Like :func:`parse_turtle` but returns an invalid doc instead of raising."""
    try:
        return parse_turtle(text, source_nct)
    except TurtleError as exc:
        return OntologyDoc.invalid(f"{type(exc).__name__}: {exc}", source_nct)


# --------------------------------------------------------------------------
# serializer

_PLAIN_LOCAL = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")


def _term_key(term: Term) -> tuple:
    if isinstance(term, IRI):
        return (0, term.value, "", "")
    return (1, term.lexical, term.language or "", term.datatype or "")


def triple_sort_key(t: Triple) -> tuple:
    return (t.subject.value, t.predicate.value, _term_key(t.object))


def _escape_string(s: str) -> str:
    return (
        s.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
        .replace("\t", "\\t")
    )


class _Compactor:
    def __init__(self, prefixes: dict):
        # longest namespace first so nested namespaces pick the tightest prefix
        self.items = sorted(prefixes.items(), key=lambda kv: (-len(kv[1]), kv[0]))

    def __call__(self, iri: IRI) -> str:
        for name, ns in self.items:
            if ns and iri.value.startswith(ns):
                local = iri.value[len(ns) :]
                if local == "" or _PLAIN_LOCAL.fullmatch(local):
                    return f"{name}:{local}"
        return "<" + iri.value.replace("\\", "\\u005C").replace(">", "\\u003E") + ">"


def _format_object(term: Term, compact: _Compactor) -> str:
    if isinstance(term, IRI):
        return compact(term)
    out = '"' + _escape_string(term.lexical) + '"'
    if term.language:
        out += "@" + term.language
    elif term.datatype:
        out += "^^" + compact(IRI(term.datatype))
    return out


def serialize(doc: OntologyDoc) -> str:
    """Canonical Turtle: sorted prefixes, one sorted triple per line."""
    lines = [f"@prefix {name}: <{iri}> ." for name, iri in sorted(doc.prefixes.items())]
    compact = _Compactor(doc.prefixes)
    body = []
    for t in sorted(doc.triples, key=triple_sort_key):
        pred = "a" if t.predicate == RDF_TYPE else compact(t.predicate)
        body.append(f"{compact(t.subject)} {pred} {_format_object(t.object, compact)} .")
    if body:
        lines.append("")
        lines.extend(body)
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# cleaning and repair

_FENCE_RE = re.compile(r"^[ \t]*```[^\n]*\n(.*?)(?:^[ \t]*```[ \t]*$|\Z)", re.M | re.S)
_DIRECTIVE_LINE = re.compile(r"^\s*(?:@prefix|@base)\b|^\s*(?:PREFIX|BASE)\s", re.I)
_TERM_LINE = re.compile(r"^\s*(?:<[^>\s]*>|" + _PN_PREFIX + r":\S*)(?:\s|$)")
_COMMENT_LINE = re.compile(r"^\s*(?:#.*)?$")


def _statement_ends(lines: list[str]) -> list[int]:
    """Indices of lines ending a Turtle statement, scanning until prose resumes.

    A line ends a statement when its last significant character outside
    strings, IRIs and comments is ``.``. Scanning stops at the first line,
    between statements, that cannot open a Turtle statement or directive.
    """
    ends: list[int] = []
    in_long: Optional[str] = None
    between = True
    for idx, line in enumerate(lines):
        if in_long is None and between and not _COMMENT_LINE.match(line):
            if not (_DIRECTIVE_LINE.match(line) or _TERM_LINE.match(line)):
                break
        last_sig = None
        i = 0
        n = len(line)
        while i < n:
            ch = line[i]
            if in_long is not None:
                if line.startswith(in_long, i):
                    i += 3
                    in_long = None
                    last_sig = '"'
                    continue
                i += 2 if ch == "\\" else 1
                continue
            if ch == "#":
                break
            if line.startswith('"""', i) or line.startswith("'''", i):
                in_long = line[i : i + 3]
                i += 3
                continue
            if ch in "\"'":
                j = i + 1
                while j < n and line[j] != ch:
                    j += 2 if line[j] == "\\" else 1
                i = j + 1
                last_sig = '"'
                continue
            if ch == "<":
                j = line.find(">", i)
                if j != -1:
                    i = j + 1
                    last_sig = ">"
                    continue
            if not ch.isspace():
                last_sig = ch
            i += 1
        if in_long is None and last_sig == ".":
            ends.append(idx)
            between = True
        elif last_sig is not None or in_long is not None:
            between = False
    return ends


def _trim_region(text: str) -> Optional[str]:
    lines = text.split("\n")
    start = next((i for i, ln in enumerate(lines) if _DIRECTIVE_LINE.match(ln)), None)
    if start is None:
        start = next((i for i, ln in enumerate(lines) if _TERM_LINE.match(ln)), None)
    if start is None:
        return None
    ends = _statement_ends(lines[start:])
    if not ends:
        return None
    return "\n".join(lines[start : start + ends[-1] + 1]) + "\n"


def clean_llm_output(raw: str) -> str:
    """Cut the ontology code out of a chatty model response.

    A fenced code block wins when one contains Turtle; otherwise the text is
    trimmed to start at the first ``@prefix``/``@base`` line (or, failing
    that, the first line opening a statement) and to end at the last line
    that terminates a statement.
    """
    if not raw or not raw.strip():
        raise NoOntologyFound("empty model output")
    for m in _FENCE_RE.finditer(raw):
        region = _trim_region(m.group(1))
        if region is not None:
            return region
    region = _trim_region(raw)
    if region is None:
        raise NoOntologyFound("no Turtle region found in model output")
    return region


def used_and_declared_prefixes(text: str) -> tuple[list[str], set[str]]:
    used: list[str] = []
    declared: set[str] = set()
    tokens = list(_tokenize(text, lenient=True))
    for i, tok in enumerate(tokens):
        if tok.kind != "PNAME":
            continue
        prev = tokens[i - 1] if i else None
        name = tok.text.partition(":")[0]
        if prev is not None and prev.text.lower() in ("@prefix", "prefix"):
            declared.add(name)
        elif name not in used:
            used.append(name)
    return used, declared


def repair_prefixes(text: str) -> str:
    """Declare well-known prefixes that are used but missing; no-op otherwise."""
    used, declared = used_and_declared_prefixes(text)
    missing = [p for p in used if p not in declared and p in WELL_KNOWN_PREFIXES]
    if not missing:
        return text
    header = "".join(f"@prefix {p}: <{WELL_KNOWN_PREFIXES[p]}> .\n" for p in missing)
    return header + text


# --------------------------------------------------------------------------
# base skeleton and entities


def main_class_iri(category: str) -> IRI:
    return IRI(EX + category)


def base_ontology() -> OntologyDoc:
    prefixes = {p: WELL_KNOWN_PREFIXES[p] for p in ("rdf", "rdfs", "owl", "ex")}
    triples = []
    for cat in MAIN_CATEGORIES:
        triples.append(Triple(main_class_iri(cat), RDF_TYPE, OWL_CLASS))
        triples.append(Triple(main_class_iri(cat), SUBCLASS_OF, OWL_THING))
    return OntologyDoc(prefixes, tuple(triples))


def extract_entities_of_interest(doc: OntologyDoc) -> list[EntityOfInterest]:
    """Every ``X rdfs:subClassOf <main class>`` triple, in document order.

    Main classes are matched by local name so a model that spells the
    ``ex:`` namespace differently still yields entities.
    """
    found = []
    for idx, t in enumerate(doc.triples):
        if t.predicate != SUBCLASS_OF or not isinstance(t.object, IRI):
            continue
        category = local_name(t.object)
        if category not in MAIN_CATEGORIES:
            continue
        label = local_name(t.subject)
        if not label or label in MAIN_CATEGORIES:
            continue
        found.append(EntityOfInterest(label, category, idx, t.subject))
    return found

"""ALC abstract syntax, the native ontology text format, and TBox normalization.

Native format (UTF-8, one statement per line, ``#`` starts a comment)::

    declare concept Person, Male
    declare relation hasChild
    declare individual alice

    Male SubClassOf Person
    (Male and Female) SubClassOf Nothing
    some hasChild.Person SubClassOf Parent
    alice : (Female and Parent)
    hasChild(alice, bob)

Concept expressions::

    E ::= Thing | Nothing | NAME | not E | (E and E) | (E or E)
        | some r.E | only r.E

Binary connectives must be parenthesized; a parenthesized chain of the same
connective, ``(A and B and C)``, associates to the left.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Union

log = logging.getLogger(__name__)

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

KEYWORDS = frozenset(
    {
        "Thing",
        "Nothing",
        "not",
        "and",
        "or",
        "some",
        "only",
        "SubClassOf",
        "declare",
    }
)
UNSUPPORTED_AXIOMS = frozenset(
    {"EquivalentTo", "DisjointWith", "SubPropertyOf", "EquivalentClasses"}
)


class ParseError(ValueError):
    """Malformed ontology text. Carries a 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


class UndeclaredSymbolError(ParseError):
    pass


class ArityError(ParseError):
    """A symbol was used both as a concept/relation/individual name."""


# ---------------------------------------------------------------------------
# Concept descriptions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Name:
    id: str

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True)
class Top:
    def __str__(self) -> str:
        return "Thing"


@dataclass(frozen=True)
class Bottom:
    def __str__(self) -> str:
        return "Nothing"


@dataclass(frozen=True)
class Not:
    child: Concept

    def __str__(self) -> str:
        return f"not {self.child}"


@dataclass(frozen=True)
class And:
    left: Concept
    right: Concept

    def __str__(self) -> str:
        return f"({self.left} and {self.right})"


@dataclass(frozen=True)
class Or:
    left: Concept
    right: Concept

    def __str__(self) -> str:
        return f"({self.left} or {self.right})"


@dataclass(frozen=True)
class Exists:
    relation: str
    child: Concept

    def __str__(self) -> str:
        return f"some {self.relation}.{self.child}"


@dataclass(frozen=True)
class Forall:
    relation: str
    child: Concept

    def __str__(self) -> str:
        return f"only {self.relation}.{self.child}"


Concept = Union[Name, Top, Bottom, Not, And, Or, Exists, Forall]

TOP = Top()
BOTTOM = Bottom()


def free_symbols(c: Concept) -> tuple[frozenset[str], frozenset[str]]:
    """Return the concept names and relation names occurring in ``c``."""
    concepts: set[str] = set()
    relations: set[str] = set()
    stack = [c]
    while stack:
        node = stack.pop()
        if isinstance(node, Name):
            concepts.add(node.id)
        elif isinstance(node, Not):
            stack.append(node.child)
        elif isinstance(node, (And, Or)):
            stack.extend((node.left, node.right))
        elif isinstance(node, (Exists, Forall)):
            relations.add(node.relation)
            stack.append(node.child)
    return frozenset(concepts), frozenset(relations)


def depth(c: Concept) -> int:
    if isinstance(c, (Name, Top, Bottom)):
        return 0
    if isinstance(c, (Not, Exists, Forall)):
        return 1 + depth(c.child)
    return 1 + max(depth(c.left), depth(c.right))


# ---------------------------------------------------------------------------
# Axioms and ontologies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Subsumption:
    sub: Concept
    sup: Concept

    def __str__(self) -> str:
        return f"{self.sub} SubClassOf {self.sup}"


@dataclass(frozen=True)
class ConceptAssertion:
    concept: Concept
    individual: str

    def __str__(self) -> str:
        return f"{self.individual} : {self.concept}"


@dataclass(frozen=True)
class RoleAssertion:
    relation: str
    subject: str
    object: str

    def __str__(self) -> str:
        return f"{self.relation}({self.subject}, {self.object})"


Axiom = Union[Subsumption, ConceptAssertion, RoleAssertion]


@dataclass(frozen=True)
class Signature:
    """Concept, relation and individual names, each in first-seen order."""

    concept_names: tuple[str, ...] = ()
    relation_names: tuple[str, ...] = ()
    individual_names: tuple[str, ...] = ()

    def __post_init__(self):
        groups = (self.concept_names, self.relation_names, self.individual_names)
        seen: set[str] = set()
        for names in groups:
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate names in signature: {names}")
            for n in names:
                if not IDENT_RE.match(n):
                    raise ValueError(f"invalid identifier {n!r}")
                if n in seen:
                    raise ValueError(f"{n!r} appears in more than one name set")
                seen.add(n)

    def kind_of(self, name: str) -> str | None:
        if name in self.concept_names:
            return "concept"
        if name in self.relation_names:
            return "relation"
        if name in self.individual_names:
            return "individual"
        return None

    def with_individuals(self, names: Iterable[str]) -> Signature:
        extra = tuple(n for n in names if n not in self.individual_names)
        return Signature(
            self.concept_names, self.relation_names, self.individual_names + extra
        )


@dataclass(frozen=True)
class UnsatTarget:
    """``sub and not sup``, whose extension must be empty for axiom ``origin``."""

    concept: And
    origin: int


@dataclass(frozen=True)
class Ontology:
    signature: Signature
    tbox: tuple[Subsumption, ...] = ()
    abox_concept: tuple[ConceptAssertion, ...] = ()
    abox_role: tuple[RoleAssertion, ...] = ()
    duplicates_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        sig = self.signature
        for ax in self.tbox:
            for c in (ax.sub, ax.sup):
                _check_resolves(c, sig)
        for ax in self.abox_concept:
            _check_resolves(ax.concept, sig)
            if ax.individual not in sig.individual_names:
                raise ValueError(f"unknown individual {ax.individual!r}")
        for ax in self.abox_role:
            if ax.relation not in sig.relation_names:
                raise ValueError(f"unknown relation {ax.relation!r}")
            for a in (ax.subject, ax.object):
                if a not in sig.individual_names:
                    raise ValueError(f"unknown individual {a!r}")

    @classmethod
    def build(
        cls,
        signature: Signature,
        axioms: Iterable[Axiom],
    ) -> Ontology:
        """Sort axioms into TBox/ABox parts, dropping exact duplicates."""
        tbox: dict[Subsumption, None] = {}
        abox_c: dict[ConceptAssertion, None] = {}
        abox_r: dict[RoleAssertion, None] = {}
        total = 0
        for ax in axioms:
            total += 1
            if isinstance(ax, Subsumption):
                tbox[ax] = None
            elif isinstance(ax, ConceptAssertion):
                abox_c[ax] = None
            elif isinstance(ax, RoleAssertion):
                abox_r[ax] = None
            else:
                raise TypeError(f"not an axiom: {ax!r}")
        dropped = total - len(tbox) - len(abox_c) - len(abox_r)
        if dropped:
            log.warning("dropped %d duplicate axiom(s)", dropped)
        return cls(
            signature, tuple(tbox), tuple(abox_c), tuple(abox_r), duplicates_dropped=dropped
        )

    @property
    def axioms(self) -> tuple[Axiom, ...]:
        return self.tbox + self.abox_concept + self.abox_role

    def extended(self, axioms: Iterable[Axiom], individuals: Iterable[str] = ()) -> Ontology:
        sig = self.signature.with_individuals(individuals)
        return Ontology.build(sig, list(self.axioms) + list(axioms))

    def render(self) -> str:
        return render_ontology(self)

    def digest(self) -> str:
        return hashlib.sha256(self.render().encode("utf-8")).hexdigest()


def _check_resolves(c: Concept, sig: Signature) -> None:
    concepts, relations = free_symbols(c)
    for n in concepts:
        if n not in sig.concept_names:
            raise ValueError(f"unknown concept name {n!r}")
    for r in relations:
        if r not in sig.relation_names:
            raise ValueError(f"unknown relation name {r!r}")


def normalize_tbox(ontology: Ontology) -> list[UnsatTarget]:
    """Rewrite every ``C SubClassOf D`` as the target ``C and not D``."""
    return [
        UnsatTarget(And(ax.sub, Not(ax.sup)), i) for i, ax in enumerate(ontology.tbox)
    ]


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render_concept(c: Concept) -> str:
    return str(c)


def render_axiom(ax: Axiom) -> str:
    return str(ax)


def render_ontology(o: Ontology) -> str:
    sig = o.signature
    lines = []
    for kind, names in (
        ("concept", sig.concept_names),
        ("relation", sig.relation_names),
        ("individual", sig.individual_names),
    ):
        if names:
            lines.append(f"declare {kind} " + ", ".join(names))
    lines.extend(render_axiom(ax) for ax in o.axioms)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(?:([A-Za-z_][A-Za-z0-9_]*)|([().:,])|(\S))")


@dataclass
class _Tok:
    kind: str  # "id" | "punct" | "end"
    text: str
    col: int


def _tokenize(line: str, lineno: int) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if m is None:  # trailing whitespace
            break
        if m.group(1):
            toks.append(_Tok("id", m.group(1), m.start(1) + 1))
        elif m.group(2):
            toks.append(_Tok("punct", m.group(2), m.start(2) + 1))
        elif m.group(3):
            raise ParseError(f"unexpected character {m.group(3)!r}", lineno, m.start(3) + 1)
        else:
            break
        pos = m.end()
    toks.append(_Tok("end", "", len(line.rstrip()) + 1))
    return toks


class _Usage:
    """Collects where each symbol is used, and as what."""

    def __init__(self):
        self.order: dict[str, tuple[str, int, int]] = {}

    def use(self, name: str, kind: str, line: int, col: int) -> None:
        prev = self.order.get(name)
        if prev is None:
            self.order[name] = (kind, line, col)
        elif prev[0] != kind:
            raise ArityError(
                f"{name!r} used as {kind} but already used as {prev[0]} "
                f"(line {prev[1]}, column {prev[2]})",
                line,
                col,
            )


class _LineParser:
    def __init__(self, toks: list[_Tok], lineno: int, usage: _Usage):
        self.toks = toks
        self.i = 0
        self.lineno = lineno
        self.usage = usage

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: _Tok | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(msg, self.lineno, tok.col)

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text or self.tok.kind == "end":
            found = self.tok.text or "end of line"
            raise self.error(f"expected {text!r}, found {found!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self, kind: str) -> str:
        t = self.tok
        if t.kind != "id":
            raise self.error(f"expected {kind} name, found {t.text or 'end of line'!r}")
        if t.text in KEYWORDS:
            raise self.error(f"keyword {t.text!r} cannot be used as a {kind} name")
        self.i += 1
        self.usage.use(t.text, kind, self.lineno, t.col)
        return t.text

    def end(self) -> None:
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")

    # E ::= Thing | Nothing | NAME | not E | ( E op E ... ) | some r.E | only r.E
    def concept(self) -> Concept:
        t = self.tok
        if t.kind == "id":
            if t.text == "Thing":
                self.i += 1
                return TOP
            if t.text == "Nothing":
                self.i += 1
                return BOTTOM
            if t.text == "not":
                self.i += 1
                return Not(self.concept())
            if t.text in ("some", "only"):
                self.i += 1
                r = self.ident("relation")
                self.expect(".")
                child = self.concept()
                return Exists(r, child) if t.text == "some" else Forall(r, child)
            if t.text in UNSUPPORTED_AXIOMS:
                raise self.error(f"{t.text!r} is not supported")
            return Name(self.ident("concept"))
        if t.text == "(":
            self.i += 1
            left = self.concept()
            op = self.tok.text if self.tok.kind == "id" else None
            if op not in ("and", "or"):
                self.expect(")")
                return left
            node_type = And if op == "and" else Or
            while self.tok.kind == "id" and self.tok.text in ("and", "or"):
                if self.tok.text != op:
                    raise self.error("mixing 'and' and 'or' requires parentheses")
                self.i += 1
                left = node_type(left, self.concept())
            self.expect(")")
            return left
        raise self.error(f"expected a concept expression, found {t.text or 'end of line'!r}")

    def statement(self) -> tuple[str, object]:
        t = self.tok
        if t.kind == "id" and t.text == "declare":
            self.i += 1
            kind_tok = self.tok
            if kind_tok.text not in ("concept", "relation", "individual"):
                raise self.error("expected 'concept', 'relation' or 'individual'")
            self.i += 1
            names = [self.ident(kind_tok.text)]
            while self.tok.text == ",":
                self.i += 1
                names.append(self.ident(kind_tok.text))
            self.end()
            return "declare", (kind_tok.text, names)
        # role assertion r(a, b)
        if t.kind == "id" and t.text not in KEYWORDS and self.peek().text == "(":
            r = self.ident("relation")
            self.expect("(")
            a = self.ident("individual")
            self.expect(",")
            b = self.ident("individual")
            self.expect(")")
            self.end()
            return "axiom", RoleAssertion(r, a, b)
        # concept assertion a : E
        if t.kind == "id" and t.text not in KEYWORDS and self.peek().text == ":":
            a = self.ident("individual")
            self.expect(":")
            c = self.concept()
            self.end()
            return "axiom", ConceptAssertion(c, a)
        sub = self.concept()
        op = self.tok
        if op.kind == "id" and op.text in UNSUPPORTED_AXIOMS:
            raise self.error(f"{op.text!r} is not supported; write two SubClassOf axioms")
        if op.text != "SubClassOf":
            raise self.error(f"expected 'SubClassOf', found {op.text or 'end of line'!r}")
        self.i += 1
        sup = self.concept()
        self.end()
        return "axiom", Subsumption(sub, sup)


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def parse_concept(text: str, signature: Signature | None = None) -> Concept:
    """Parse a single concept expression, optionally checking it against a signature."""
    usage = _Usage()
    p = _LineParser(_tokenize(text, 1), 1, usage)
    c = p.concept()
    p.end()
    if signature is not None:
        _check_usage(usage, signature)
    return c


def parse_axiom(text: str, signature: Signature | None = None) -> Axiom:
    """Parse one axiom line (no declarations)."""
    usage = _Usage()
    p = _LineParser(_tokenize(_strip_comment(text), 1), 1, usage)
    kind, value = p.statement()
    if kind != "axiom":
        raise ParseError("expected an axiom, found a declaration", 1, 1)
    if signature is not None:
        _check_usage(usage, signature)
    return value  # type: ignore[return-value]


def _check_usage(usage: _Usage, sig: Signature) -> None:
    for name, (kind, line, col) in usage.order.items():
        actual = sig.kind_of(name)
        if actual is None:
            raise UndeclaredSymbolError(f"unknown {kind} {name!r}", line, col)
        if actual != kind:
            raise ArityError(f"{name!r} is a {actual}, not a {kind}", line, col)


def parse_ontology(text: str, strict: bool = False) -> Ontology:
    """Parse the native text format.

    The signature is the declared names plus every name used, in first-seen
    order. With ``strict=True`` every used name must be declared.
    """
    usage = _Usage()
    declared: set[str] = set()
    axioms: list[Axiom] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        before = set(usage.order)
        p = _LineParser(_tokenize(line, lineno), lineno, usage)
        kind, value = p.statement()
        if kind == "declare":
            declared.update(value[1])  # type: ignore[index]
            continue
        if strict:
            for name in set(usage.order) - before - declared:
                _, ln, col = usage.order[name]
                raise UndeclaredSymbolError(f"undeclared symbol {name!r}", ln, col)
        axioms.append(value)  # type: ignore[arg-type]
    buckets: dict[str, list[str]] = {"concept": [], "relation": [], "individual": []}
    for name, (kind, _, _) in usage.order.items():
        buckets[kind].append(name)
    sig = Signature(
        tuple(buckets["concept"]), tuple(buckets["relation"]), tuple(buckets["individual"])
    )
    return Ontology.build(sig, axioms)

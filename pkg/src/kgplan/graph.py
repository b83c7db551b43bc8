"""Three-part knowledge graph: relation, property and reachability triples.

Graph values are immutable; every mutating operation returns a new graph with
a bumped revision (or the same graph when nothing changed).
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

__all__ = [
    "GraphConfig",
    "GraphDelta",
    "STRICT_CONFIG",
    "KnowledgeGraph",
    "MalformedTriple",
    "ParseError",
    "SubgraphKind",
    "Triple",
    "Violation",
    "apply_delta",
    "check_consistency",
    "deserialize",
    "insert",
    "normalize_token",
    "query",
    "serialize",
    "union_view",
]


class MalformedTriple(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SubgraphKind(str, enum.Enum):
    RELATION = "relation"
    PROPERTY = "property"
    REACH = "reach"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "SubgraphKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown subgraph kind {text!r}") from None


_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
_NON_WORD = re.compile(r"[^0-9a-zA-Z]+")


def normalize_token(text: str) -> str:
    """Lowercase snake_case form of an identifier (``Robot A`` -> ``robot_a``)."""
    text = _CAMEL.sub("_", str(text).strip())
    return _NON_WORD.sub("_", text).strip("_").lower()


class Triple(NamedTuple):
    subject: str
    relation: str
    object: str

    @classmethod
    def of(cls, subject, relation, obj) -> "Triple":
        """Build a normalized triple, rejecting empty fields."""
        parts = tuple(normalize_token(p) for p in (subject, relation, obj))
        if not all(parts):
            raise MalformedTriple(f"empty field in triple {(subject, relation, obj)!r}")
        return cls(*parts)

    def __str__(self) -> str:
        return f"({self.subject}, {self.relation}, {self.object})"


def _check(t: Triple) -> Triple:
    if not isinstance(t, Triple):
        t = Triple.of(*t)
    if any(not p or p != normalize_token(p) for p in t):
        raise MalformedTriple(f"triple is not normalized: {tuple(t)!r}")
    return t


@dataclass(frozen=True)
class GraphConfig:
    functional: frozenset[str] = frozenset({"at_location", "has_state"})
    exclusive_states: tuple[frozenset[str], ...] = (
        frozenset({"open", "closed"}),
        frozenset({"on", "off"}),
    )
    state_relation: str = "has_state"
    location_relation: str = "at_location"
    # reach triples that declare a location: (loc, is_a, location) or either end of `connected`
    location_markers: frozenset[str] = frozenset({"connected"})
    # strict mode keeps conflicting functional facts so check_consistency can report them
    strict: bool = False


STRICT_CONFIG = GraphConfig(strict=True)


DEFAULT_CONFIG = GraphConfig()


@dataclass(frozen=True)
class GraphDelta:
    additions: frozenset = frozenset()
    removals: frozenset = frozenset()

    def __post_init__(self):
        adds = frozenset((SubgraphKind(k), _check(t)) for k, t in self.additions)
        rems = frozenset((SubgraphKind(k), _check(t)) for k, t in self.removals)
        if adds & rems:
            raise ValueError("delta additions and removals overlap")
        object.__setattr__(self, "additions", adds)
        object.__setattr__(self, "removals", rems)

    def __bool__(self) -> bool:
        return bool(self.additions or self.removals)

    def inverse(self) -> "GraphDelta":
        return GraphDelta(additions=self.removals, removals=self.additions)

    def sorted_additions(self) -> list[tuple[SubgraphKind, Triple]]:
        return sorted(self.additions, key=lambda kt: (kt[0].value, kt[1]))


class KnowledgeGraph:
    """Immutable set of typed triples with an entity index.

    ``entities`` is the vertex set (every subject and object), ``relations``
    the relation identifiers, ``union_view`` the edge set.
    """

    __slots__ = ("_by_kind", "_index", "revision", "config")

    def __init__(self, triples: Iterable = (), *, config: GraphConfig = DEFAULT_CONFIG, revision: int = 0):
        self.config = config
        self.revision = revision
        self._by_kind: dict[SubgraphKind, frozenset[Triple]] = {k: frozenset() for k in SubgraphKind}
        staged: dict[SubgraphKind, set[Triple]] = {k: set() for k in SubgraphKind}
        for kind, t in triples:
            _stage_insert(staged, SubgraphKind(kind), _check(t), config)
        self._by_kind = {k: frozenset(v) for k, v in staged.items()}
        self._index = _build_index(self._by_kind)

    @classmethod
    def _raw(cls, by_kind, config, revision) -> "KnowledgeGraph":
        g = cls.__new__(cls)
        g.config = config
        g.revision = revision
        g._by_kind = {k: frozenset(by_kind[k]) for k in SubgraphKind}
        g._index = _build_index(g._by_kind)
        return g

    def subgraph(self, kind: SubgraphKind) -> frozenset[Triple]:
        return self._by_kind[SubgraphKind(kind)]

    @property
    def triples_by_kind(self) -> dict[SubgraphKind, frozenset[Triple]]:
        return dict(self._by_kind)

    @property
    def entity_index(self) -> dict[str, frozenset[tuple[SubgraphKind, Triple]]]:
        return dict(self._index)

    def items(self) -> list[tuple[SubgraphKind, Triple]]:
        """All (kind, triple) pairs in canonical order."""
        return [(k, t) for k in SubgraphKind for t in sorted(self._by_kind[k])]

    @property
    def entities(self) -> frozenset[str]:
        return frozenset(self._index)

    @property
    def relations(self) -> frozenset[str]:
        return frozenset(t.relation for ts in self._by_kind.values() for t in ts)

    def incident(self, entity: str) -> frozenset[tuple[SubgraphKind, Triple]]:
        return self._index.get(entity, frozenset())

    def contains(self, kind: SubgraphKind, t: Triple) -> bool:
        return tuple(t) in self._by_kind[SubgraphKind(kind)]

    def without(self, *kinds: SubgraphKind) -> "KnowledgeGraph":
        """Copy with the given subgraphs emptied (used for ablations)."""
        by_kind = {k: (frozenset() if k in kinds else v) for k, v in self._by_kind.items()}
        return KnowledgeGraph._raw(by_kind, self.config, self.revision)

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_kind.values())

    def content(self) -> frozenset[tuple[SubgraphKind, Triple]]:
        return frozenset((k, t) for k, ts in self._by_kind.items() for t in ts)

    def __eq__(self, other) -> bool:
        # revision-agnostic equality
        return isinstance(other, KnowledgeGraph) and self._by_kind == other._by_kind

    def __hash__(self) -> int:
        return hash(self.content())

    def __repr__(self) -> str:
        sizes = ", ".join(f"{k.value}={len(v)}" for k, v in self._by_kind.items())
        return f"KnowledgeGraph({sizes}, revision={self.revision})"


def _build_index(by_kind) -> dict[str, frozenset]:
    index: dict[str, set] = {}
    for kind, ts in by_kind.items():
        for t in ts:
            index.setdefault(t.subject, set()).add((kind, t))
            index.setdefault(t.object, set()).add((kind, t))
    return {e: frozenset(v) for e, v in index.items()}


def _stage_insert(staged: dict, kind: SubgraphKind, t: Triple, config: GraphConfig) -> bool:
    bucket = staged[kind]
    if t in bucket:
        return False
    if t.relation in config.functional and not config.strict:
        stale = [u for u in bucket if u.subject == t.subject and u.relation == t.relation]
        bucket.difference_update(stale)
    bucket.add(t)
    return True


def insert(graph: KnowledgeGraph, kind: SubgraphKind, t) -> KnowledgeGraph:
    """Add ``t`` to subgraph ``kind``; functional relations are last-writer-wins."""
    t = _check(t)
    kind = SubgraphKind(kind)
    if graph.contains(kind, t):
        return graph
    staged = {k: set(v) for k, v in graph._by_kind.items()}
    _stage_insert(staged, kind, t, graph.config)
    return KnowledgeGraph._raw(staged, graph.config, graph.revision + 1)


def apply_delta(graph: KnowledgeGraph, delta: GraphDelta) -> KnowledgeGraph:
    """Apply removals, then additions. Revision bumps once if anything changed."""
    staged = {k: set(v) for k, v in graph._by_kind.items()}
    for kind, t in sorted(delta.removals, key=lambda kt: (kt[0].value, kt[1])):
        staged[kind].discard(t)
    for kind, t in delta.sorted_additions():
        _stage_insert(staged, kind, t, graph.config)
    if all(staged[k] == graph._by_kind[k] for k in SubgraphKind):
        return graph
    return KnowledgeGraph._raw(staged, graph.config, graph.revision + 1)


def query(graph: KnowledgeGraph, pattern=(None, None, None), kind: SubgraphKind | None = None):
    """Triples matching every bound slot of ``pattern`` (``None`` is a wildcard)."""
    s, r, o = (None if p in (None, "?") else normalize_token(p) for p in pattern)
    kinds = [SubgraphKind(kind)] if kind is not None else list(SubgraphKind)
    if s is not None or o is not None:
        pool = graph.incident(s if s is not None else o)
        candidates = (kt for kt in pool if kt[0] in kinds)
    else:
        candidates = ((k, t) for k in kinds for t in graph.subgraph(k))
    return {
        (k, t)
        for k, t in candidates
        if (s is None or t.subject == s) and (r is None or t.relation == r) and (o is None or t.object == o)
    }


def union_view(graph: KnowledgeGraph) -> frozenset[Triple]:
    return frozenset().union(*graph.triples_by_kind.values())


@dataclass(frozen=True, order=True)
class Violation:
    kind: str  # functional_conflict | dangling_location | exclusive_states
    subgraph: SubgraphKind
    triples: tuple = field(compare=True)

    def __str__(self) -> str:
        return f"{self.kind} in {self.subgraph.value}: " + ", ".join(map(str, self.triples))


def declared_locations(graph: KnowledgeGraph) -> frozenset[str]:
    cfg = graph.config
    locs = set()
    for t in graph.subgraph(SubgraphKind.REACH):
        if t.relation == "is_a" and t.object == "location":
            locs.add(t.subject)
        elif t.relation in cfg.location_markers:
            locs.update((t.subject, t.object))
    return frozenset(locs)


def check_consistency(graph: KnowledgeGraph) -> list[Violation]:
    """Report functional conflicts, dangling locations and exclusive-state pairs."""
    cfg = graph.config
    out: set[Violation] = set()
    for kind in SubgraphKind:
        ts = graph.subgraph(kind)
        groups: dict[tuple[str, str], list[Triple]] = {}
        for t in ts:
            if t.relation in cfg.functional:
                groups.setdefault((t.subject, t.relation), []).append(t)
        for (_, rel), members in groups.items():
            if len(members) < 2:
                continue
            vals = {m.object for m in members}
            if rel == cfg.state_relation and any(len(vals & ex) >= 2 for ex in cfg.exclusive_states):
                continue  # reported below as an exclusive-state pair
            out.add(Violation("functional_conflict", kind, tuple(sorted(members))))
        states: dict[str, set[str]] = {}
        for t in ts:
            if t.relation == cfg.state_relation:
                states.setdefault(t.subject, set()).add(t.object)
        for subj, vals in states.items():
            for excl in cfg.exclusive_states:
                clash = sorted(vals & excl)
                if len(clash) >= 2:
                    out.add(Violation(
                        "exclusive_states", kind,
                        tuple(Triple(subj, cfg.state_relation, v) for v in clash),
                    ))
    locs = declared_locations(graph)
    for t in graph.subgraph(SubgraphKind.REACH):
        if t.relation == cfg.location_relation and t.object not in locs:
            out.add(Violation("dangling_location", SubgraphKind.REACH, (t,)))
    return sorted(out, key=lambda v: (v.kind, v.subgraph.value, v.triples))


def serialize(graph: KnowledgeGraph) -> str:
    """One ``<kind> <subject> <relation> <object>`` line per triple, sorted."""
    return "".join(f"{k.value} {t.subject} {t.relation} {t.object}\n" for k, t in graph.items())


def deserialize(text: str, *, config: GraphConfig = DEFAULT_CONFIG) -> KnowledgeGraph:
    items = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(lineno, f"expected 4 fields, got {len(parts)}")
        try:
            kind = SubgraphKind.parse(parts[0])
            t = Triple.of(*parts[1:])
        except (ValueError, MalformedTriple) as exc:
            raise ParseError(lineno, str(exc)) from None
        items.append((kind, t))
    return KnowledgeGraph(items, config=config)

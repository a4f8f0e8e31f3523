"""In-memory directed labeled multigraph with unique edge identifiers.

Vertices and predicate labels are interned to dense integers; triples are
indexed for every bound/wildcard access pattern.  Edge identifiers are
assigned by a monotone counter and never reused, so provenance symbols
stay unambiguous across deletions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator


@dataclass(frozen=True)
class Edge:
    id: int
    subject: int
    predicate: int
    object: int

    def triple(self) -> tuple[int, int, int]:
        return (self.subject, self.predicate, self.object)


class Interner:
    """Bidirectional name <-> dense integer id dictionary."""

    def __init__(self):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []

    def intern(self, name: str) -> int:
        i = self._ids.get(name)
        if i is None:
            i = len(self._names)
            self._ids[name] = i
            self._names.append(name)
        return i

    def get(self, name: str) -> int | None:
        return self._ids.get(name)

    def name(self, i: int) -> str:
        return self._names[i]

    def names(self) -> list[str]:
        return list(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids


class KnowledgeGraph:
    """Directed labeled multigraph; duplicate triples get distinct ids."""

    def __init__(self):
        self.nodes = Interner()
        self.predicates = Interner()
        self.edges: dict[int, Edge] = {}
        self._next_id = 1
        # triple-pattern indexes, all mapping key -> set of edge ids
        self._by_sp: dict[tuple[int, int], set[int]] = {}
        self._by_po: dict[tuple[int, int], set[int]] = {}
        self._by_so: dict[tuple[int, int], set[int]] = {}
        self._by_spo: dict[tuple[int, int, int], set[int]] = {}
        self._by_s: dict[int, set[int]] = {}
        self._by_p: dict[int, set[int]] = {}
        self._by_o: dict[int, set[int]] = {}

    # --- interning helpers ---

    def node(self, name: str) -> int:
        return self.nodes.intern(name)

    def predicate(self, name: str) -> int:
        return self.predicates.intern(name)

    def node_name(self, i: int) -> str:
        return self.nodes.name(i)

    def predicate_name(self, i: int) -> str:
        return self.predicates.name(i)

    # --- mutation ---

    def insert_edge(self, subject: int, predicate: int, obj: int) -> int:
        eid = self._next_id
        self._next_id += 1
        edge = Edge(eid, subject, predicate, obj)
        self.edges[eid] = edge
        self._by_sp.setdefault((subject, predicate), set()).add(eid)
        self._by_po.setdefault((predicate, obj), set()).add(eid)
        self._by_so.setdefault((subject, obj), set()).add(eid)
        self._by_spo.setdefault((subject, predicate, obj), set()).add(eid)
        self._by_s.setdefault(subject, set()).add(eid)
        self._by_p.setdefault(predicate, set()).add(eid)
        self._by_o.setdefault(obj, set()).add(eid)
        return eid

    def insert_triple(self, subject: str, predicate: str, obj: str) -> int:
        return self.insert_edge(
            self.node(subject), self.predicate(predicate), self.node(obj)
        )

    def delete_edge(self, eid: int) -> Edge | None:
        edge = self.edges.pop(eid, None)
        if edge is None:
            return None
        s, p, o = edge.subject, edge.predicate, edge.object
        for index, key in (
            (self._by_sp, (s, p)),
            (self._by_po, (p, o)),
            (self._by_so, (s, o)),
            (self._by_spo, (s, p, o)),
            (self._by_s, s),
            (self._by_p, p),
            (self._by_o, o),
        ):
            bucket = index[key]
            bucket.discard(eid)
            if not bucket:
                del index[key]
        return edge

    # --- access paths ---

    def lookup_ids(
        self, s: int | None = None, p: int | None = None, o: int | None = None
    ) -> set[int]:
        """Edge ids matching the pattern; None positions are wildcards."""
        if s is not None and p is not None and o is not None:
            return self._by_spo.get((s, p, o), _EMPTY)
        if s is not None and p is not None:
            return self._by_sp.get((s, p), _EMPTY)
        if p is not None and o is not None:
            return self._by_po.get((p, o), _EMPTY)
        if s is not None and o is not None:
            return self._by_so.get((s, o), _EMPTY)
        if s is not None:
            return self._by_s.get(s, _EMPTY)
        if o is not None:
            return self._by_o.get(o, _EMPTY)
        if p is not None:
            return self._by_p.get(p, _EMPTY)
        return set(self.edges)

    def lookup(
        self, s: int | None = None, p: int | None = None, o: int | None = None
    ) -> Iterator[Edge]:
        for eid in self.lookup_ids(s, p, o):
            yield self.edges[eid]

    def count(
        self, s: int | None = None, p: int | None = None, o: int | None = None
    ) -> int:
        return len(self.lookup_ids(s, p, o))

    def has_edge_between(self, s: int, o: int) -> bool:
        return (s, o) in self._by_so

    # --- summary ---

    @property
    def next_edge_id(self) -> int:
        """Id the next inserted edge will receive (ids are never reused)."""
        return self._next_id

    @property
    def num_vertices(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_predicates(self) -> int:
        return len(self.predicates)


_EMPTY: set[int] = set()


class LoadError(Exception):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def _strip_angles(token: str) -> str:
    if token.startswith("<") and token.endswith(">"):
        return token[1:-1]
    return token


def load_ntriples(lines: Iterable[str], graph: KnowledgeGraph | None = None) -> KnowledgeGraph:
    """Load a whitespace-separated `<s> <p> <o> .` triple file.

    Comment lines starting with `#` and blank lines are ignored; edge ids
    are assigned in file order.
    """
    g = graph if graph is not None else KnowledgeGraph()
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens and tokens[-1] == ".":
            tokens = tokens[:-1]
        elif tokens and tokens[-1].endswith("."):
            tokens[-1] = tokens[-1][:-1]
        if len(tokens) != 3:
            raise LoadError(line_no, f"expected `<s> <p> <o> .`, got {line!r}")
        s, p, o = (_strip_angles(t) for t in tokens)
        g.insert_triple(s, p, o)
    return g


def load_ntriples_file(path: str, graph: KnowledgeGraph | None = None) -> KnowledgeGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return load_ntriples(fh, graph)

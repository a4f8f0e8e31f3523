"""Provenance-aware evaluation: full query evaluation, plan-table
materialization, and single-edge delta propagation through the shared
plan DAG.

Every produced row carries a polynomial whose monomials are exactly the
edge multisets of its derivations, so deletion reduces to monomial
pruning and insertion to join deltas.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .planner import GlobalPlan, PlanNode
from .provenance import Polynomial
from .query import QueryGraph, TriplePattern, Var
from .store import Edge, KnowledgeGraph


@dataclass
class BindingRow:
    bindings: dict[str, int]
    provenance: Polynomial


@dataclass
class ResultDelta:
    """Per-node change record from one update."""

    # row -> polynomial added on top of any existing row
    added: dict[tuple[int, ...], Polynomial] = field(default_factory=dict)
    # row -> former polynomial, row dropped entirely
    removed: dict[tuple[int, ...], Polynomial] = field(default_factory=dict)
    # row -> surviving (pruned) polynomial
    pruned: dict[tuple[int, ...], Polynomial] = field(default_factory=dict)


# --------------------------------------------------------------------------
# Direct BGP evaluation
# --------------------------------------------------------------------------


@dataclass
class Table:
    vars: tuple[str, ...]
    rows: dict[tuple[int, ...], Polynomial]


def _resolve(g: KnowledgeGraph, term, predicate: bool) -> int | None:
    """Intern lookup for a constant; None means 'not in the graph'."""
    interner = g.predicates if predicate else g.nodes
    return interner.get(term)


def scan_pattern(p: TriplePattern, g: KnowledgeGraph) -> Table:
    """Single-pattern scan; each row's polynomial is the edge symbol."""
    s = None if isinstance(p.subject, Var) else _resolve(g, p.subject, False)
    pr = None if isinstance(p.predicate, Var) else _resolve(g, p.predicate, True)
    o = None if isinstance(p.object, Var) else _resolve(g, p.object, False)
    for const, term in ((s, p.subject), (pr, p.predicate), (o, p.object)):
        if const is None and not isinstance(term, Var):
            return Table((), {})  # constant absent from the graph

    var_order: list[str] = []
    for t in (p.subject, p.predicate, p.object):
        if isinstance(t, Var) and t.name not in var_order:
            var_order.append(t.name)

    rows: dict[tuple[int, ...], Polynomial] = {}
    for e in g.lookup(s, pr, o):
        binding: dict[str, int] = {}
        ok = True
        for t, value in ((p.subject, e.subject), (p.predicate, e.predicate), (p.object, e.object)):
            if isinstance(t, Var):
                if t.name in binding and binding[t.name] != value:
                    ok = False
                    break
                binding[t.name] = value
        if not ok:
            continue
        key = tuple(binding[v] for v in var_order)
        poly = Polynomial.edge(e.id)
        rows[key] = rows[key] + poly if key in rows else poly
    return Table(tuple(var_order), rows)


def hash_join(a: Table, b: Table) -> Table:
    """Join on shared variables (cross product when none); polynomials
    multiply across the join and add on duplicate output bindings."""
    if len(b.rows) < len(a.rows):
        a, b = b, a  # build on the smaller input
    shared = [v for v in a.vars if v in b.vars]
    a_pos = [a.vars.index(v) for v in shared]
    b_pos = [b.vars.index(v) for v in shared]
    b_extra = [i for i, v in enumerate(b.vars) if v not in a.vars]
    out_vars = a.vars + tuple(b.vars[i] for i in b_extra)

    build: dict[tuple[int, ...], list[tuple[tuple[int, ...], Polynomial]]] = {}
    for row, poly in a.rows.items():
        build.setdefault(tuple(row[i] for i in a_pos), []).append((row, poly))

    rows: dict[tuple[int, ...], Polynomial] = {}
    for brow, bpoly in b.rows.items():
        for arow, apoly in build.get(tuple(brow[i] for i in b_pos), ()):
            key = arow + tuple(brow[i] for i in b_extra)
            poly = apoly * bpoly
            rows[key] = rows[key] + poly if key in rows else poly
    return Table(out_vars, rows)


def _pattern_selectivity(p: TriplePattern, g: KnowledgeGraph) -> int:
    s = None if isinstance(p.subject, Var) else _resolve(g, p.subject, False)
    pr = None if isinstance(p.predicate, Var) else _resolve(g, p.predicate, True)
    o = None if isinstance(p.object, Var) else _resolve(g, p.object, False)
    for const, term in ((s, p.subject), (pr, p.predicate), (o, p.object)):
        if const is None and not isinstance(term, Var):
            return 0
    return g.count(s, pr, o)


def evaluate_patterns(patterns: list[TriplePattern], g: KnowledgeGraph) -> Table:
    """Full-binding evaluation of a pattern conjunction.

    Greedy join order: start from the most selective scan, then always
    extend with a variable-connected pattern of minimal match count.
    """
    if not patterns:
        return Table((), {(): Polynomial.one()})
    remaining = sorted(patterns, key=lambda p: (_pattern_selectivity(p, g), p.ordinal))
    first = remaining.pop(0)
    table = scan_pattern(first, g)
    bound = set(first.variables())
    while remaining:
        connected = [p for p in remaining if p.variables() & bound] or remaining
        nxt = min(connected, key=lambda p: (_pattern_selectivity(p, g), p.ordinal))
        remaining.remove(nxt)
        table = hash_join(table, scan_pattern(nxt, g))
        bound |= nxt.variables()
        if not table.rows:
            break
    return table


def project(table: Table, variables: list[str]) -> Table:
    """Project to the given variables, adding polynomials of merged rows."""
    if not table.rows:
        # empty tables may carry a truncated var list (early-out joins)
        return Table(tuple(variables), {})
    pos = [table.vars.index(v) for v in variables]
    rows: dict[tuple[int, ...], Polynomial] = {}
    for row, poly in table.rows.items():
        key = tuple(row[i] for i in pos)
        rows[key] = rows[key] + poly if key in rows else poly
    return Table(tuple(variables), rows)


def evaluate_bgp(q: QueryGraph, g: KnowledgeGraph) -> list[BindingRow]:
    """All answers of q, projected, with merged provenance polynomials."""
    table = project(evaluate_patterns(q.patterns, g), q.projection)
    return [
        BindingRow(dict(zip(table.vars, row)), poly)
        for row, poly in table.rows.items()
    ]


# --------------------------------------------------------------------------
# Plan materialization
# --------------------------------------------------------------------------


def _slot_of(var: Var) -> int:
    # plan-node patterns use canonical variable names v0, v1, ...
    return int(var.name[1:])


def materialize_node(node: PlanNode, g: KnowledgeGraph) -> dict[tuple[int, ...], Polynomial]:
    """Evaluate a node's expression from the store, keyed by var slot."""
    table = evaluate_patterns(node.patterns, g)
    order = sorted(range(len(table.vars)), key=lambda i: int(table.vars[i][1:]))
    return {
        tuple(row[i] for i in order): poly for row, poly in table.rows.items()
    }


def materialize_plan(plan: GlobalPlan, g: KnowledgeGraph) -> GlobalPlan:
    """Fill every node table (and the edge->row index) from the store."""
    for node in plan.topo_order():
        if node.table:
            continue  # already materialized by an earlier registration
        node.table = materialize_node(node, g)
        node.indexes.clear()
        for row, poly in node.table.items():
            for eid in poly.edges():
                plan.edge_rows.setdefault(eid, set()).add((node.key, row))
    return plan


# --------------------------------------------------------------------------
# Node table indexes
# --------------------------------------------------------------------------


def node_index(node: PlanNode, slots: tuple[int, ...]):
    idx = node.indexes.get(slots)
    if idx is None:
        idx = {}
        for row in node.table:
            idx.setdefault(tuple(row[s] for s in slots), set()).add(row)
        node.indexes[slots] = idx
    return idx


def _index_add(node: PlanNode, row: tuple[int, ...]):
    for slots, idx in node.indexes.items():
        idx.setdefault(tuple(row[s] for s in slots), set()).add(row)


def _index_remove(node: PlanNode, row: tuple[int, ...]):
    for slots, idx in node.indexes.items():
        key = tuple(row[s] for s in slots)
        bucket = idx.get(key)
        if bucket is not None:
            bucket.discard(row)
            if not bucket:
                del idx[key]


# --------------------------------------------------------------------------
# Insertion deltas
# --------------------------------------------------------------------------


def _leaf_delta(node: PlanNode, e: Edge, g: KnowledgeGraph) -> dict[tuple[int, ...], Polynomial]:
    p = node.patterns[0]
    binding: dict[int, int] = {}
    for t, value in ((p.subject, e.subject), (p.predicate, e.predicate), (p.object, e.object)):
        if isinstance(t, Var):
            slot = _slot_of(t)
            if slot in binding and binding[slot] != value:
                return {}
            binding[slot] = value
        else:
            interner = g.predicates if t is p.predicate else g.nodes
            if interner.get(t) != value:
                return {}
    row = tuple(binding[s] for s in range(node.num_vars))
    return {row: Polynomial.edge(e.id)}


def _join_delta(
    delta: dict[tuple[int, ...], Polynomial],
    dmap: dict[int, int],
    other: PlanNode,
    omap: dict[int, int],
    other_rows: dict[tuple[int, ...], Polynomial] | None,
    num_vars: int,
    out: dict[tuple[int, ...], Polynomial],
):
    """Join a small delta against one input side into `out`.

    `other_rows=None` joins against the side's full indexed table;
    otherwise against the given (delta) rows.
    """
    shared = sorted(set(dmap.values()) & set(omap.values()))
    o_slots = tuple(
        next(s for s, ps in omap.items() if ps == p) for p in shared
    )
    d_slots = tuple(
        next(s for s, ps in dmap.items() if ps == p) for p in shared
    )

    def emit(drow, dpoly, orow, opoly):
        parent = [None] * num_vars
        for s, ps in dmap.items():
            parent[ps] = drow[s]
        for s, ps in omap.items():
            parent[ps] = orow[s]
        key = tuple(parent)
        poly = dpoly * opoly
        out[key] = out[key] + poly if key in out else poly

    if other_rows is None:
        idx = node_index(other, o_slots)
        for drow, dpoly in delta.items():
            probe = tuple(drow[s] for s in d_slots)
            for orow in idx.get(probe, ()):
                emit(drow, dpoly, orow, other.table[orow])
    else:
        for drow, dpoly in delta.items():
            probe = tuple(drow[s] for s in d_slots)
            for orow, opoly in other_rows.items():
                if tuple(orow[s] for s in o_slots) == probe:
                    emit(drow, dpoly, orow, opoly)


def compute_insert_deltas(
    plan: GlobalPlan, g: KnowledgeGraph, e: Edge
) -> dict[tuple, dict[tuple[int, ...], Polynomial]]:
    """Bottom-up delta of every plan node for one inserted edge,
    computed against the current (pre-apply) tables; nothing is applied.
    The edge must already be present in the store."""
    pred = g.predicate_name(e.predicate)
    if not plan.pred_index.get(pred):
        return {}
    deltas: dict = {}
    for node in plan.topo_order():
        if pred not in node.predicates:
            continue
        if node.is_leaf:
            d = _leaf_delta(node, e, g)
        else:
            (lkey, lmap), (rkey, rmap) = node.children
            dl = deltas.get(lkey)
            dr = deltas.get(rkey)
            d: dict[tuple[int, ...], Polynomial] = {}
            left, right = plan.nodes[lkey], plan.nodes[rkey]
            if dl:
                _join_delta(dl, lmap, right, rmap, None, node.num_vars, d)
            if dr:
                _join_delta(dr, rmap, left, lmap, None, node.num_vars, d)
            if dl and dr:
                _join_delta(dl, lmap, right, rmap, dr, node.num_vars, d)
        if d:
            deltas[node.key] = d
    return deltas


def apply_insert_deltas(plan: GlobalPlan, deltas: dict) -> dict:
    """Merge computed insert deltas into the node tables and indexes;
    returns {node key: ResultDelta}."""
    report: dict = {}
    for key, d in deltas.items():
        node = plan.nodes[key]
        for row, poly in d.items():
            if row in node.table:
                node.table[row] = node.table[row] + poly
            else:
                node.table[row] = poly
                _index_add(node, row)
            for eid in poly.edges():
                plan.edge_rows.setdefault(eid, set()).add((key, row))
        report[key] = ResultDelta(added=dict(d))
    return report


def delta_insert(plan: GlobalPlan, g: KnowledgeGraph, e: Edge) -> dict:
    """Compute and apply the insert deltas in one step."""
    return apply_insert_deltas(plan, compute_insert_deltas(plan, g, e))


# --------------------------------------------------------------------------
# Deletion
# --------------------------------------------------------------------------


def delta_delete(plan: GlobalPlan, edge_id: int) -> dict:
    """Prune the deleted edge's monomials from every indexed plan row.

    Monomials are exact derivation edge-multisets, so pruning each node
    independently keeps all tables consistent; no re-join is needed.
    """
    entries = plan.edge_rows.pop(edge_id, None)
    if not entries:
        return {}
    report: dict = {}
    for key, row in entries:
        node = plan.nodes[key]
        old = node.table.get(row)
        if old is None:
            continue
        new = old.prune(edge_id)
        delta = report.setdefault(key, ResultDelta())
        if new:
            node.table[row] = new
            delta.pruned[row] = new
        else:
            del node.table[row]
            _index_remove(node, row)
            delta.removed[row] = old
        for gone in old.edges() - new.edges():
            if gone == edge_id:
                continue
            bucket = plan.edge_rows.get(gone)
            if bucket is not None:
                bucket.discard((key, row))
                if not bucket:
                    del plan.edge_rows[gone]
    return report

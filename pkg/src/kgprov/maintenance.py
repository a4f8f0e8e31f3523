"""Standing-query maintenance engine.

Registration evaluates a query once, plans and materializes all its
one-pattern-removed subqueries through the shared global plan, and
annotates every potential match's connection points.  After that each
edge insertion is answered from the annotations (plus a delta path for
queries where one edge can satisfy several patterns) and each deletion
by polynomial pruning driven by two inverted indexes — no query is ever
re-executed from scratch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .evaluate import (
    BindingRow,
    apply_insert_deltas,
    compute_insert_deltas,
    delta_delete,
    evaluate_bgp,
    materialize_plan,
    node_index,
)
from .planner import (
    GlobalPlan,
    RootRef,
    build_and_or_tree,
    compute_statistics,
    merge_into_global,
    select_best_plan,
)
from .provenance import Polynomial, mono_degree
from .query import (
    Classification,
    PredicateMetadata,
    QueryError,
    QueryGraph,
    TriplePattern,
    UnsupportedFeatureError,
    Var,
    canonicalize,
    classify_query,
    variable_connected,
)
from .store import Edge, KnowledgeGraph
from .subquery import Subquery, SubqueryType, generate_subqueries

OUT = "out"
IN = "in"


@dataclass(eq=False)
class Annotation:
    """Connection-point record stored against a graph node.

    A potential match waits at `node` for an edge with label `exp_rel`
    leaving (`out`) or arriving (`in`); `bindings` are the full variable
    bindings of the matched component, `result` the fragment of the
    answer it contributes, and `prov` its provenance polynomial.
    """

    node: int
    exp_rel: str
    direction: str
    query_id: int
    removed: int
    component: int
    result: tuple[int, ...]
    bindings: dict[str, int]
    prov: Polynomial
    key: tuple = None


@dataclass
class RegistrationReceipt:
    query_id: int
    answers: list[BindingRow]
    subquery_count: int
    annotation_count: int
    root_keys: list


@dataclass
class UpdateReport:
    op: str
    edge_id: int
    # query id -> [(projected row, current polynomial)]
    added: dict[int, list] = field(default_factory=dict)
    # query id -> [projected row]
    removed: dict[int, list] = field(default_factory=dict)
    # query id -> [(projected row, surviving polynomial)]
    pruned: dict[int, list] = field(default_factory=dict)
    response_time: float = 0.0
    maintenance_time: float = 0.0

    @property
    def answers_changed(self) -> int:
        return sum(
            len(v) for m in (self.added, self.removed, self.pruned) for v in m.values()
        )


@dataclass
class RegisteredQuery:
    qid: int
    query: QueryGraph
    subqueries: list[Subquery]
    # (removed ordinal, component index) -> global plan node key
    roots: dict[tuple[int, int], tuple]
    # (removed ordinal, component index) -> {component var -> slot}
    root_varmaps: dict[tuple[int, int], dict[str, int]]
    answers: dict[tuple[int, ...], Polynomial]


def _anchor_sides(sq: Subquery) -> list[tuple[int, str]]:
    """Which (component, endpoint) pairs of a subquery get annotations."""
    t = sq.removed_pattern
    if sq.sq_type is SubqueryType.III:
        return [(0, "subject"), (1, "object")]
    if sq.sq_type is SubqueryType.IV:
        return [(0, "subject"), (0, "object")]
    # I and II: the single anchored endpoint, always on component 0
    if sq.subject_comp == 0:
        return [(0, "subject")]
    if sq.object_comp == 0:
        return [(0, "object")]
    # endpoint anchored by a constant only (no variable link survives)
    return [(0, "subject")] if not isinstance(t.subject, Var) else [(0, "object")]


def _keep_min_degree(poly: Polynomial, edge_id: int, k: int) -> Polynomial:
    """Restrict a polynomial to monomials with degree >= k in edge_id."""
    return Polynomial(
        {m: c for m, c in poly.terms if mono_degree(m, edge_id) >= k}
    )


class Engine:
    """One graph, many standing queries; all updates flow through here."""

    def __init__(
        self,
        graph: KnowledgeGraph | None = None,
        metadata: PredicateMetadata | None = None,
    ):
        self.graph = graph if graph is not None else KnowledgeGraph()
        self.metadata = metadata or PredicateMetadata()
        self.plan = GlobalPlan()
        self.queries: dict[int, RegisteredQuery] = {}
        self._next_qid = 1
        self._registered_forms: set = set()
        # (node, expected predicate, direction) -> annotations waiting there
        self._stats_cache: tuple[int, object] | None = None
        self._ann_index: dict[tuple[int, str, str], set[Annotation]] = {}
        self._ann_by_key: dict[tuple, Annotation] = {}
        # inverted indexes: edge -> answers / connection points using it
        self.edge_to_result: dict[int, set[tuple[int, tuple[int, ...]]]] = {}
        self.edge_to_cp: dict[int, set[Annotation]] = {}

    # ------------------------------------------------------------------
    # Registration
    # ------------------------------------------------------------------

    def register_query(self, q: QueryGraph) -> RegistrationReceipt:
        if q.has_variable_predicate():
            raise UnsupportedFeatureError(
                "variable predicates cannot be registered for maintenance"
            )
        if q.size > 1 and not variable_connected(q.patterns):
            raise UnsupportedFeatureError(
                "query components connected only through constants cannot "
                "be registered for maintenance"
            )
        form = canonicalize(q.patterns).key
        if form in self._registered_forms:
            raise QueryError("query already registered")

        q.classification = classify_query(q, self.metadata)
        qid = self._next_qid
        self._next_qid += 1

        answers: dict[tuple[int, ...], Polynomial] = {}
        for row in evaluate_bgp(q, self.graph):
            key = tuple(row.bindings[v] for v in q.projection)
            answers[key] = row.provenance

        rq = RegisteredQuery(qid, q, [], {}, {}, answers)
        if q.size >= 2:
            try:
                rq.subqueries = generate_subqueries(q)
            except ValueError as exc:
                raise UnsupportedFeatureError(str(exc)) from exc
            stats = self._current_stats()
            for sq in rq.subqueries:
                for ci, comp in enumerate(sq.components):
                    tree = build_and_or_tree(comp)
                    local = select_best_plan(tree, stats)
                    root = merge_into_global(
                        self.plan,
                        local,
                        stats,
                        RootRef(qid, sq.removed, ci, ()),
                    )
                    ref = root.roots[-1]
                    rq.roots[(sq.removed, ci)] = root.key
                    rq.root_varmaps[(sq.removed, ci)] = ref.var_to_slot()
            materialize_plan(self.plan, self.graph)

        self.queries[qid] = rq
        self._registered_forms.add(form)

        before = len(self._ann_by_key)
        for sq in rq.subqueries:
            for ci, side in _anchor_sides(sq):
                key = rq.roots[(sq.removed, ci)]
                varmap = rq.root_varmaps[(sq.removed, ci)]
                node = self.plan.nodes[key]
                for row, poly in node.table.items():
                    bindings = {v: row[s] for v, s in varmap.items()}
                    self._upsert_annotation(rq, sq, ci, side, bindings, poly)

        for row, poly in answers.items():
            for eid in poly.edges():
                self.edge_to_result.setdefault(eid, set()).add((qid, row))

        return RegistrationReceipt(
            query_id=qid,
            answers=[
                BindingRow(dict(zip(q.projection, row)), poly)
                for row, poly in answers.items()
            ],
            subquery_count=len(rq.subqueries),
            annotation_count=len(self._ann_by_key) - before,
            root_keys=sorted(set(rq.roots.values()), key=repr),
        )

    def _current_stats(self):
        """Statistics snapshot, reused while the graph is unchanged
        (plans are never re-optimized after updates anyway)."""
        version = self.graph.next_edge_id + self.graph.num_edges
        if self._stats_cache is None or self._stats_cache[0] != version:
            self._stats_cache = (version, compute_statistics(self.graph))
        return self._stats_cache[1]

    def _endpoint_node(self, rq: RegisteredQuery, sq: Subquery, side: str, bindings) -> int:
        t = sq.removed_pattern
        term = t.subject if side == "subject" else t.object
        if isinstance(term, Var):
            return bindings[term.name]
        return self.graph.node(term)

    def _upsert_annotation(self, rq, sq, comp, side, bindings, poly):
        if not poly:
            return
        direction = OUT if side == "subject" else IN
        node = self._endpoint_node(rq, sq, side, bindings)
        key = (
            rq.qid,
            sq.removed,
            comp,
            direction,
            tuple(sorted(bindings.items())),
        )
        existing = self._ann_by_key.get(key)
        if existing is not None:
            old_edges = existing.prov.edges()
            existing.prov = poly
            for eid in poly.edges() - old_edges:
                self.edge_to_cp.setdefault(eid, set()).add(existing)
            return
        ann = Annotation(
            node=node,
            exp_rel=sq.removed_pattern.predicate,
            direction=direction,
            query_id=rq.qid,
            removed=sq.removed,
            component=comp,
            result=tuple(
                bindings[v] for v in rq.query.projection if v in bindings
            ),
            bindings=bindings,
            prov=poly,
            key=key,
        )
        self._ann_by_key[key] = ann
        self._ann_index.setdefault((node, ann.exp_rel, direction), set()).add(ann)
        for eid in poly.edges():
            self.edge_to_cp.setdefault(eid, set()).add(ann)

    # ------------------------------------------------------------------
    # Insertion
    # ------------------------------------------------------------------

    def insert_triple(self, s: str, p: str, o: str) -> UpdateReport:
        eid = self.graph.insert_triple(s, p, o)
        return self.handle_insertion(self.graph.edges[eid])

    def handle_insertion(self, e: Edge) -> UpdateReport:
        """Process one edge already present in the store."""
        report = UpdateReport(op="+", edge_id=e.id)
        pred = self.graph.predicate_name(e.predicate)
        contributions: dict[int, dict[tuple[int, ...], Polynomial]] = {}

        t0 = time.perf_counter()
        self._single_pattern_answers(e, pred, contributions)
        self._completions(e, pred, contributions)
        t1 = time.perf_counter()
        deltas = compute_insert_deltas(self.plan, self.graph, e)
        t2 = time.perf_counter()
        self._trigger_answers(e, pred, deltas, contributions)
        self._apply_answer_additions(contributions, report)
        t3 = time.perf_counter()
        apply_insert_deltas(self.plan, deltas)
        self._refresh_annotations(deltas)
        t4 = time.perf_counter()

        report.response_time = (t1 - t0) + (t3 - t2)
        report.maintenance_time = (t2 - t1) + (t4 - t3)
        return report

    def _single_pattern_answers(self, e, pred, contributions):
        for qid, rq in self.queries.items():
            if rq.query.size != 1:
                continue
            b = self._edge_binding(rq.query.patterns[0], e, pred)
            if b is not None:
                self._contribute(contributions, qid, b, Polynomial.edge(e.id))

    def _edge_binding(self, p: TriplePattern, e: Edge, pred: str):
        if p.predicate != pred:
            return None
        bindings: dict[str, int] = {}
        for term, value in ((p.subject, e.subject), (p.object, e.object)):
            if isinstance(term, Var):
                if bindings.get(term.name, value) != value:
                    return None
                bindings[term.name] = value
            elif self.graph.nodes.get(term) != value:
                return None
        return bindings

    def _completions(self, e, pred, contributions):
        """Discharge connection points waiting for this edge (derivations
        that use the new edge exactly once)."""
        out_anns = list(self._ann_index.get((e.subject, pred, OUT), ()))
        in_anns = list(self._ann_index.get((e.object, pred, IN), ()))
        e_sym = Polynomial.edge(e.id)

        pairs_in: dict[tuple[int, int], list[Annotation]] = {}
        for ann in in_anns:
            sq = self.queries[ann.query_id].subqueries[ann.removed]
            if sq.sq_type is SubqueryType.III and ann.component == 1:
                pairs_in.setdefault((ann.query_id, ann.removed), []).append(ann)

        for ann, from_out in [(a, True) for a in out_anns] + [
            (a, False) for a in in_anns
        ]:
            rq = self.queries[ann.query_id]
            sq = rq.subqueries[ann.removed]
            t = sq.removed_pattern
            if sq.sq_type is SubqueryType.III:
                if from_out and ann.component == 0:
                    for other in pairs_in.get((ann.query_id, ann.removed), ()):
                        full = {**ann.bindings, **other.bindings}
                        poly = ann.prov * other.prov * e_sym
                        self._contribute(contributions, rq.qid, full, poly)
                continue
            if sq.sq_type is SubqueryType.IV and not from_out:
                continue  # processed once, from the out side

            other_term = t.object if from_out else t.subject
            other_val = e.object if from_out else e.subject
            extra: dict[str, int] = {}
            if isinstance(other_term, Var):
                bound = ann.bindings.get(other_term.name)
                if bound is None:
                    extra[other_term.name] = other_val
                elif bound != other_val:
                    continue
            elif self.graph.nodes.get(other_term) != other_val:
                continue

            if sq.sq_type is SubqueryType.II:
                # the lone pattern of the far component must hold too
                sp = sq.components[1][0]
                seed = {**extra, other_term.name: other_val}
                for e2, b2 in self._match_single(sp, seed):
                    if e2.id == e.id:
                        continue  # double use handled by the delta path
                    full = {**ann.bindings, **seed, **b2}
                    poly = ann.prov * e_sym * Polynomial.edge(e2.id)
                    self._contribute(contributions, rq.qid, full, poly)
            else:
                full = {**ann.bindings, **extra}
                self._contribute(contributions, rq.qid, full, ann.prov * e_sym)

    def _match_single(self, p: TriplePattern, bound: dict[str, int]):
        """Edges matching one pattern under partial bindings; yields
        (edge, bindings of the pattern's remaining variables)."""

        def val(term, predicate=False):
            if isinstance(term, Var):
                return bound.get(term.name)
            interner = self.graph.predicates if predicate else self.graph.nodes
            got = interner.get(term)
            return -1 if got is None else got

        s, pr, o = val(p.subject), val(p.predicate, True), val(p.object)
        if -1 in (s, pr, o):
            return
        for e in self.graph.lookup(s, pr, o):
            fresh: dict[str, int] = {}
            ok = True
            for term, value in (
                (p.subject, e.subject),
                (p.predicate, e.predicate),
                (p.object, e.object),
            ):
                if isinstance(term, Var) and term.name not in bound:
                    if fresh.get(term.name, value) != value:
                        ok = False
                        break
                    fresh[term.name] = value
            if ok:
                yield e, fresh

    def _trigger_answers(self, e, pred, deltas, contributions):
        """Answers whose derivations use the new edge more than once.

        For each query where this predicate's patterns can co-bind one
        edge, join the trigger subquery's component deltas with every
        edge matching the removed pattern and keep only monomials of
        degree >= 2 in the new edge (degree-1 derivations were already
        produced by the connection points).
        """
        pid = e.predicate
        for qid, rq in self.queries.items():
            cls = rq.query.classification
            if cls is None or not cls.multimap:
                continue
            tr = cls.triggers.get(pred)
            if tr is None:
                continue
            sq = rq.subqueries[tr]
            t = sq.removed_pattern
            infos = []
            for ci in range(len(sq.components)):
                key = rq.roots[(tr, ci)]
                infos.append(
                    (
                        self.plan.nodes[key],
                        rq.root_varmaps[(tr, ci)],
                        deltas.get(key, {}),
                    )
                )
            if len(infos) == 1:
                self._trigger_one_comp(e, pid, rq, sq, t, infos[0], contributions)
            else:
                self._trigger_two_comps(e, pid, rq, sq, t, infos, contributions)

    def _trigger_one_comp(self, e, pid, rq, sq, t, info, contributions):
        node, vm, drows = info
        for row, dpoly in drows.items():
            b = {v: row[s] for v, s in vm.items()}
            sv = self._trigger_endpoint(t.subject, b)
            ov = self._trigger_endpoint(t.object, b)
            if sv == -1 or ov == -1:
                continue
            for f in self.graph.lookup(sv, pid, ov):
                fb = {}
                if isinstance(t.subject, Var) and t.subject.name not in b:
                    fb[t.subject.name] = f.subject
                if isinstance(t.object, Var) and t.object.name not in b:
                    if fb.get(t.object.name, f.object) != f.object:
                        continue
                    fb[t.object.name] = f.object
                poly = _keep_min_degree(dpoly * Polynomial.edge(f.id), e.id, 2)
                if poly:
                    self._contribute(contributions, rq.qid, {**b, **fb}, poly)

    def _trigger_endpoint(self, term, bindings):
        if isinstance(term, Var):
            return bindings.get(term.name)  # None -> unconstrained
        got = self.graph.nodes.get(term)
        return -1 if got is None else got

    def _trigger_two_comps(self, e, pid, rq, sq, t, infos, contributions):
        cs, co = sq.subject_comp, sq.object_comp
        node_s, vm_s, ds = infos[cs]
        node_o, vm_o, do = infos[co]
        s_slot = vm_s[t.subject.name]
        o_slot = vm_o[t.object.name]
        o_index = node_index(node_o, (o_slot,))  # pre-apply tables
        s_index = node_index(node_s, (s_slot,))
        e_sym_cache: dict[int, Polynomial] = {}

        def emit(r1, p1, r2, p2, f):
            full = {v: r1[s] for v, s in vm_s.items()}
            full.update({v: r2[s] for v, s in vm_o.items()})
            poly = _keep_min_degree(
                p1 * p2 * Polynomial.edge(f.id), e.id, 2
            )
            if poly:
                self._contribute(contributions, rq.qid, full, poly)

        # delta-on-subject side against (old + delta) object side
        for r1, p1 in ds.items():
            for f in self.graph.lookup(r1[s_slot], pid, None):
                for r2 in o_index.get((f.object,), ()):
                    emit(r1, p1, r2, node_o.table[r2], f)
                for r2, p2 in do.items():
                    if r2[o_slot] == f.object:
                        emit(r1, p1, r2, p2, f)
        # old subject side against delta-on-object side
        for r2, p2 in do.items():
            for f in self.graph.lookup(None, pid, r2[o_slot]):
                for r1 in s_index.get((f.subject,), ()):
                    emit(r1, node_s.table[r1], r2, p2, f)

    def _contribute(self, contributions, qid, bindings, poly):
        rq = self.queries[qid]
        row = tuple(bindings[v] for v in rq.query.projection)
        bucket = contributions.setdefault(qid, {})
        bucket[row] = bucket[row] + poly if row in bucket else poly

    def _apply_answer_additions(self, contributions, report: UpdateReport):
        for qid, rows in contributions.items():
            rq = self.queries[qid]
            for row, poly in rows.items():
                if not poly:
                    continue
                old = rq.answers.get(row)
                rq.answers[row] = old + poly if old is not None else poly
                for eid in poly.edges():
                    self.edge_to_result.setdefault(eid, set()).add((qid, row))
                report.added.setdefault(qid, []).append((row, rq.answers[row]))

    def _refresh_annotations(self, deltas):
        """New or extended subquery component rows become new or updated
        connection points (applies to every query sharing the node)."""
        for key, d in deltas.items():
            node = self.plan.nodes[key]
            for ref in node.roots:
                rq = self.queries[ref.query_id]
                sq = rq.subqueries[ref.removed]
                sides = [
                    side
                    for ci, side in _anchor_sides(sq)
                    if ci == ref.component
                ]
                if not sides:
                    continue
                vm = ref.var_to_slot()
                for row in d:
                    poly = node.table[row]
                    bindings = {v: row[s] for v, s in vm.items()}
                    for side in sides:
                        self._upsert_annotation(rq, sq, ref.component, side, bindings, poly)

    # ------------------------------------------------------------------
    # Deletion
    # ------------------------------------------------------------------

    def delete_edge(self, edge_id: int) -> UpdateReport | None:
        e = self.graph.delete_edge(edge_id)
        if e is None:
            return None
        return self.handle_deletion(e)

    def handle_deletion(self, e: Edge) -> UpdateReport:
        """Filter-and-refine: look up everything that used the edge,
        prune its monomials, and drop whatever collapses to zero."""
        report = UpdateReport(op="-", edge_id=e.id)
        eid = e.id

        t0 = time.perf_counter()
        for qid, row in self.edge_to_result.pop(eid, ()):
            rq = self.queries[qid]
            old = rq.answers.get(row)
            if old is None:
                continue
            new = old.prune(eid)
            if new:
                rq.answers[row] = new
                report.pruned.setdefault(qid, []).append((row, new))
            else:
                del rq.answers[row]
                report.removed.setdefault(qid, []).append(row)
            for gone in old.edges() - new.edges():
                if gone == eid:
                    continue
                bucket = self.edge_to_result.get(gone)
                if bucket is not None:
                    bucket.discard((qid, row))
                    if not bucket:
                        del self.edge_to_result[gone]
        t1 = time.perf_counter()

        for ann in self.edge_to_cp.pop(eid, ()):
            old = ann.prov
            new = old.prune(eid)
            ann.prov = new
            if not new:
                del self._ann_by_key[ann.key]
                bucket = self._ann_index.get((ann.node, ann.exp_rel, ann.direction))
                if bucket is not None:
                    bucket.discard(ann)
                    if not bucket:
                        del self._ann_index[(ann.node, ann.exp_rel, ann.direction)]
            for gone in old.edges() - new.edges():
                if gone == eid:
                    continue
                cps = self.edge_to_cp.get(gone)
                if cps is not None:
                    cps.discard(ann)
                    if not cps:
                        del self.edge_to_cp[gone]
        delta_delete(self.plan, eid)
        t2 = time.perf_counter()

        report.response_time = t1 - t0
        report.maintenance_time = t2 - t1
        return report

    # ------------------------------------------------------------------
    # Auditing and introspection
    # ------------------------------------------------------------------

    def index_audit(self) -> list[str]:
        """Rebuild all inverted indexes from first principles and diff
        them against the live ones; an empty list means consistent."""
        problems: list[str] = []

        want_res: dict[int, set] = {}
        for qid, rq in self.queries.items():
            for row, poly in rq.answers.items():
                for eid in poly.edges():
                    want_res.setdefault(eid, set()).add((qid, row))
        have_res = {k: v for k, v in self.edge_to_result.items() if v}
        for eid in set(want_res) | set(have_res):
            if want_res.get(eid, set()) != have_res.get(eid, set()):
                problems.append(f"edge-to-result mismatch at e{eid}")

        want_cp: dict[int, set] = {}
        for ann in self._ann_by_key.values():
            for eid in ann.prov.edges():
                want_cp.setdefault(eid, set()).add(id(ann))
        have_cp = {
            k: {id(a) for a in v} for k, v in self.edge_to_cp.items() if v
        }
        for eid in set(want_cp) | set(have_cp):
            if want_cp.get(eid, set()) != have_cp.get(eid, set()):
                problems.append(f"edge-to-connection-point mismatch at e{eid}")

        want_plan: dict[int, set] = {}
        for key, node in self.plan.nodes.items():
            for row, poly in node.table.items():
                for eid in poly.edges():
                    want_plan.setdefault(eid, set()).add((key, row))
        have_plan = {k: v for k, v in self.plan.edge_rows.items() if v}
        for eid in set(want_plan) | set(have_plan):
            if want_plan.get(eid, set()) != have_plan.get(eid, set()):
                problems.append(f"plan edge-row mismatch at e{eid}")

        return problems

    def answers_of(self, qid: int) -> list[BindingRow]:
        rq = self.queries[qid]
        return [
            BindingRow(dict(zip(rq.query.projection, row)), poly)
            for row, poly in sorted(rq.answers.items())
        ]

    def annotations_at(self, node: int) -> list[Annotation]:
        return sorted(
            (
                a
                for (n, _, _), anns in self._ann_index.items()
                if n == node
                for a in anns
            ),
            key=lambda a: a.key,
        )

    def all_annotations(self) -> list[Annotation]:
        return [self._ann_by_key[k] for k in sorted(self._ann_by_key)]

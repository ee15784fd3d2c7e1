"""Automaton construction: prefix sets, LR/RD NFAs, subset construction."""

import pytest

from xlrgen.grammar import parse_grammar_source, validate_grammar
from xlrgen.flatten import flatten, SENTINEL
from xlrgen.automata import (
    Action,
    InfiniteRecursion,
    LrVertex,
    RdVertex,
    attr_values,
    build_lr_nfa,
    build_rd_nfa,
    canonical_partition,
    check_recur_cycles,
    detect_conflicts,
    first_k,
    follow_universe,
    lr0_partition,
    render_label,
    sentinel_string,
    slr_partition,
    subset_construct,
)

from corpus import CORPUS


def cfg_for(src: str):
    g = parse_grammar_source(src)
    diags = validate_grammar(g)
    assert not [d for d in diags if d.severity == "error"], diags
    return flatten(g)


def corpus_cfg(name: str):
    return cfg_for(CORPUS[name])


NULLABLE_X = """
tokens { A = "a"; B = "b"; }
start S;
rules { S -> X B; X -> A | ; }
"""

SINGLE = """
tokens { A = "a"; }
start S;
rules { S -> A; }
"""

RECUR_SIMPLE = """
tokens { SEMI = ";"; NUM = /[0-9]+/; }
start S;
rules { S -> E SEMI; E -> NUM; }
"""


# --- first_k ------------------------------------------------------------------


class TestFirstK:
    def test_k0_truncates_everything(self):
        cfg = cfg_for(NULLABLE_X)
        assert first_k(cfg, [("X", "B"), ("A",)], 0) == {()}

    def test_nullable_prefix(self):
        cfg = cfg_for(NULLABLE_X)
        assert first_k(cfg, [("X", "B")], 1) == {("A",), ("B",)}

    def test_terminal_prefix(self):
        cfg = cfg_for(NULLABLE_X)
        assert first_k(cfg, [("A", "B")], 1) == {("A",)}

    def test_k2_keeps_exhausted_strings(self):
        cfg = cfg_for(NULLABLE_X)
        assert first_k(cfg, [("X", "B")], 2) == {("A", "B"), ("B",)}

    def test_sentinel_is_a_terminal(self):
        cfg = cfg_for(NULLABLE_X)
        got = first_k(cfg, [("X", SENTINEL)], 1)
        assert got == {("A",), (SENTINEL,)}


# --- follow universes ----------------------------------------------------------


class TestFollowUniverse:
    def test_start_has_sentinel(self):
        for name in ("parens", "fork_tail", "json_mini"):
            cfg = corpus_cfg(name)
            fu = follow_universe(cfg, 1)
            assert fu[cfg.start] == {sentinel_string(1)}

    def test_fork_tail_inner_follows(self):
        cfg = corpus_cfg("fork_tail")
        fu = follow_universe(cfg, 1)
        assert fu["X"] == {("C",)}
        assert fu["Y"] == {("C",)}
        assert fu["S"] == {(SENTINEL,)}

    def test_single_context(self):
        cfg = cfg_for("""
tokens { A = "a"; B = "b"; }
start S;
rules { S -> Sub B; Sub -> A; }
""")
        fu = follow_universe(cfg, 1)
        assert fu["Sub"] == {("B",)}


# --- LR NFA construction ---------------------------------------------------------


def item_count(cfg):
    return sum(len(p.rhs) + 1 for p in cfg.productions)


class TestLrNfa:
    def test_lr0_one_vertex_per_item(self):
        # k = 0 admits a single follow block, so (attribute-free) vertices
        # are exactly the dotted productions
        for name in ("parens", "fork_tail", "left_rec_list", "json_mini",
                     "eps_lookahead", "alt_chain"):
            cfg = corpus_cfg(name)
            nfa = build_lr_nfa(cfg, lr0_partition(cfg), 0)
            assert len(nfa) == item_count(cfg), name

    def test_canonical_g3_vertex_enumeration(self):
        cfg = corpus_cfg("fork_tail")
        part = canonical_partition(cfg, 1)
        nfa = build_lr_nfa(cfg, part, 1)
        expected = sum(len(part.blocks[(p.pid, dot)])
                       for p in cfg.productions
                       for dot in range(len(p.rhs) + 1))
        assert len(nfa) == expected == 14

    def test_start_vertex(self):
        cfg = corpus_cfg("fork_tail")
        nfa = build_lr_nfa(cfg, canonical_partition(cfg, 1), 1)
        v = nfa.vertices[nfa.start]
        assert isinstance(v, LrVertex)
        assert v.pid == cfg.start_production.pid and v.dot == 0
        assert v.block == (sentinel_string(1),)

    def test_shift_and_reduce_lookaheads(self):
        cfg = corpus_cfg("fork_tail")
        nfa = build_lr_nfa(cfg, canonical_partition(cfg, 1), 1)
        by_payload = {v: i for i, v in enumerate(nfa.vertices)}
        # X -> C · with follow block {C}: reduce on C
        xc = next(p for p in cfg.productions if p.lhs == "X")
        rid = by_payload[LrVertex(xc.pid, 1, (("C",),))]
        assert nfa.actions[rid] == (Action("reduce", xc.pid, ("C",)),)
        # X -> · C shifts on C
        sid = by_payload[LrVertex(xc.pid, 0, (("C",),))]
        assert nfa.actions[sid] == (Action("shift", None, ("C",)),)

    def test_grouping_isomorphism(self):
        # an NFA over a coarser partition equals the canonical NFA with
        # vertices grouped by that partition
        for name in ("parens", "fork_tail", "left_rec_list", "eps_lookahead",
                     "slr_vs_lr1", "k2_grammar"):
            cfg = corpus_cfg(name)
            assert len(cfg.productions) <= 8, name
            coarse_part = slr_partition(cfg, 1)
            coarse = build_lr_nfa(cfg, coarse_part, 1)
            canon = build_lr_nfa(cfg, canonical_partition(cfg, 1), 1)

            def grouped(v):
                blk = coarse_part.block_containing((v.pid, v.dot), v.block[0])
                return LrVertex(v.pid, v.dot, blk, v.bounds)

            # quotient the canonical NFA
            q_eps, q_edges, q_acts = {}, {}, {}
            for i, v in enumerate(canon.vertices):
                g = grouped(v)
                q_eps.setdefault(g, set()).update(
                    grouped(canon.vertices[t]) for t in canon.eps[i])
                q_edges.setdefault(g, set()).update(
                    (lab, grouped(canon.vertices[t])) for lab, t in canon.edges[i])
                q_acts.setdefault(g, set()).update(canon.actions[i])

            coarse_ids = {v: i for i, v in enumerate(coarse.vertices)}
            assert set(coarse_ids) == set(q_eps), name
            for g, i in coarse_ids.items():
                assert {coarse.vertices[t] for t in coarse.eps[i]} == q_eps[g], name
                assert {(lab, coarse.vertices[t])
                        for lab, t in coarse.edges[i]} == q_edges[g], name
                assert set(coarse.actions[i]) == q_acts[g], name


# --- subset construction -----------------------------------------------------------


def dfa_shape(dfa):
    return [
        (
            tuple((render_label(lab), t) for lab, t in dfa.edges[s]),
            tuple((a.kind, a.target, a.lookahead) for a in dfa.actions[s]),
        )
        for s in range(len(dfa))
    ]


def members_of(dfa, sid):
    return {dfa.source.vertices[m] for m in dfa.vertices[sid]}


class TestSubsetConstruct:
    def test_single_production_two_states(self):
        cfg = cfg_for(SINGLE)
        dfa = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        assert len(dfa) == 2
        final = dfa.edges[0][0][1]
        p = cfg.start_production
        assert dfa.actions[final] == (Action("reduce", p.pid, (SENTINEL,)),)

    def test_single_production_dump_snapshot(self):
        cfg = cfg_for(SINGLE)
        dfa = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        assert dfa.dump() == (
            "state 0: S -> . A, {⊣}; edges: A->1; actions: shift(A)\n"
            "state 1: S -> A ., {⊣}; edges: none; actions: reduce(S -> A, ⊣)\n"
        )

    def test_g3_conflict_state(self):
        cfg = corpus_cfg("fork_tail")
        dfa = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        x = next(p for p in cfg.productions if p.lhs == "X")
        y = next(p for p in cfg.productions if p.lhs == "Y")
        want = {LrVertex(x.pid, 1, (("C",),)), LrVertex(y.pid, 1, (("C",),))}
        hits = [s for s in range(len(dfa)) if members_of(dfa, s) == want]
        assert len(hits) == 1
        assert dfa.actions[hits[0]] == (
            Action("reduce", x.pid, ("C",)),
            Action("reduce", y.pid, ("C",)),
        )

    def test_g3_exactly_one_conflict_on_c(self):
        cfg = corpus_cfg("fork_tail")
        dfa = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        conflicts = detect_conflicts(dfa)
        assert len(conflicts) == 1
        assert conflicts[0].lookahead == ("C",)
        assert {a.kind for a in conflicts[0].actions} == {"reduce"}

    def test_lr0_eps_grammar_conflicts(self):
        cfg = corpus_cfg("eps_lookahead")
        dfa = subset_construct(build_lr_nfa(cfg, lr0_partition(cfg), 0))
        conflicts = detect_conflicts(dfa)
        assert conflicts
        kinds = {a.kind for c in conflicts for a in c.actions}
        assert "shift" in kinds and "reduce" in kinds

    def test_slr_weaker_than_canonical(self):
        cfg = corpus_cfg("slr_vs_lr1")
        slr = subset_construct(build_lr_nfa(cfg, slr_partition(cfg, 1), 1))
        canon = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        assert detect_conflicts(slr)
        assert not detect_conflicts(canon)

    def test_k2_needed(self):
        cfg = corpus_cfg("k2_grammar")
        k1 = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        k2 = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 2), 2))
        assert detect_conflicts(k1)
        assert not detect_conflicts(k2)

    def test_action_availability_preserved(self):
        # along every label path of length <= 6, the DFA state's action set
        # equals the union over the NFA vertices reachable on that path
        def nfa_closure(nfa, vids):
            out, stack = set(), list(vids)
            while stack:
                x = stack.pop()
                if x not in out:
                    out.add(x)
                    stack.extend(nfa.eps[x])
            return out

        def walk(dfa, nfa, state, frontier, depth):
            want = set()
            for m in frontier:
                want.update(nfa.actions[m])
            assert set(dfa.actions[state]) == want
            if depth == 6:
                return
            for lab, t in dfa.edges[state]:
                nxt = nfa_closure(nfa, {
                    tt for m in frontier for (l, tt) in nfa.edges[m] if l == lab})
                assert nxt
                walk(dfa, nfa, t, nxt, depth + 1)

        for name in ("parens", "fork_tail", "eps_lookahead", "left_rec_list",
                     "slr_vs_lr1"):
            cfg = corpus_cfg(name)
            for nfa in (
                build_lr_nfa(cfg, canonical_partition(cfg, 1), 1),
                build_lr_nfa(cfg, lr0_partition(cfg), 0),
                build_rd_nfa(cfg, "none"),
            ):
                dfa = subset_construct(nfa)
                walk(dfa, nfa, dfa.start,
                     nfa_closure(nfa, {nfa.start}), 0)

    def test_dump_deterministic(self):
        cfg = corpus_cfg("json_mini")
        a = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        b = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        assert a.dump() == b.dump()


# --- attribute-refined automata -----------------------------------------------------


class TestAttributeAutomata:
    def test_inhabited_values_dangling_else(self):
        cfg = corpus_cfg("dangling_else_attr")
        vals = attr_values(cfg)
        assert vals["St"] == ((("nE", 0),), (("nE", 1),))

    def test_inhabited_values_arith(self):
        cfg = corpus_cfg("arith_prec")
        vals = attr_values(cfg)
        vecs = set(vals["E"])
        assert (("prL", 3), ("prR", 3)) in vecs       # atom
        assert (("prL", 0), ("prR", 0)) in vecs       # additive node
        assert (("prL", 3), ("prR", 2)) in vecs       # prefix minus
        assert all(dict(v).keys() == {"prL", "prR"} for v in vecs)

    def test_dangling_else_attr_conflict_free(self):
        cfg = corpus_cfg("dangling_else_attr")
        dfa = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        assert detect_conflicts(dfa) == []

    def test_dangling_else_plain_conflicts(self):
        cfg = corpus_cfg("dangling_else_plain")
        dfa = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        conflicts = detect_conflicts(dfa)
        assert conflicts
        assert any(a.kind == "shift" for c in conflicts for a in c.actions)
        assert all(c.lookahead == ("ELSE",) for c in conflicts)

    def test_bound_prunes_prediction(self):
        # inside "IF E · St ELSE St" the no-else production must not be
        # predicted: nothing with nE = 0 may stand left of the ELSE
        cfg = corpus_cfg("dangling_else_attr")
        nfa = build_lr_nfa(cfg, canonical_partition(cfg, 1), 1)
        ifelse = next(p for p in cfg.productions
                      if p.provenance and p.provenance.variant == "IfElse")
        noelse = next(p for p in cfg.productions
                      if p.provenance and p.provenance.variant == "IfNoElse")
        for i, v in enumerate(nfa.vertices):
            if v.pid == ifelse.pid and v.dot == 2:
                predicted = {nfa.vertices[t].pid for t in nfa.eps[i]}
                assert noelse.pid not in predicted
                assert ifelse.pid in predicted

    def test_valued_goto_edges_split(self):
        cfg = corpus_cfg("dangling_else_attr")
        dfa = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        ifelse = next(p for p in cfg.productions
                      if p.provenance and p.provenance.variant == "IfElse")

        def st_edges(sid):
            return {lab[2]: t for lab, t in dfa.edges[sid]
                    if isinstance(lab, tuple) and lab[0] == "val" and lab[1] == "St"}

        assert set(st_edges(dfa.start)) == {(("nE", 0),), (("nE", 1),)}

        def has_item(sid, pid, dot):
            return any(isinstance(v, LrVertex) and v.pid == pid and v.dot == dot
                       for v in members_of(dfa, sid))

        # wherever the then-branch is being read, the nE=0 valuation must not
        # advance the with-else item: the two valuations go to different states
        mixed = [s for s in range(len(dfa)) if has_item(s, ifelse.pid, 2)]
        assert mixed
        saw_zero_edge = False
        for s in mixed:
            edges = st_edges(s)
            assert (("nE", 1),) in edges
            assert has_item(edges[(("nE", 1),)], ifelse.pid, 3)
            if (("nE", 0),) in edges:
                saw_zero_edge = True
                assert not has_item(edges[(("nE", 0),)], ifelse.pid, 3)
        assert saw_zero_edge

    def test_arith_prec_conflict_free(self):
        cfg = corpus_cfg("arith_prec")
        dfa = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        assert detect_conflicts(dfa) == []

    def test_dot_call_conflict_free(self):
        cfg = corpus_cfg("dot_call")
        dfa = subset_construct(build_lr_nfa(cfg, canonical_partition(cfg, 1), 1))
        assert detect_conflicts(dfa) == []

    def test_left_operand_prediction_pruned(self):
        # at "E . PLUS E" the right-operand position requires prL >= 1,
        # which the additive production itself cannot satisfy: that is
        # exactly left associativity at the automaton level
        cfg = corpus_cfg("arith_prec")
        nfa = build_lr_nfa(cfg, canonical_partition(cfg, 1), 1)
        add = next(p for p in cfg.productions
                   if p.provenance and p.provenance.variant == "Add")
        mul = next(p for p in cfg.productions
                   if p.provenance and p.provenance.variant == "Mul")
        seen = False
        for i, v in enumerate(nfa.vertices):
            if v.pid == add.pid and v.dot == 2:
                predicted = {nfa.vertices[t].pid for t in nfa.eps[i]}
                assert add.pid not in predicted
                assert mul.pid in predicted
                seen = True
        assert seen


# --- RD automata ----------------------------------------------------------------


class TestRdNfa:
    def test_recur_action_and_edge(self):
        cfg = cfg_for(RECUR_SIMPLE)
        nfa = build_rd_nfa(cfg, "none")
        v = nfa.vertices[nfa.start]
        assert isinstance(v, RdVertex) and v.dot == 0
        assert cfg.productions[v.pid].rhs == ("E", "SEMI")
        assert nfa.actions[nfa.start] == (Action("recur", "E", ()),)
        rs = [(lab, t) for lab, t in nfa.edges[nfa.start]
              if isinstance(lab, tuple) and lab[0] == "rs"]
        assert len(rs) == 1 and rs[0][0] == ("rs", "E")
        head = nfa.vertices[rs[0][1]]
        assert head.aux == "E" and head.dot == 0 and head.r == "E"

    def test_left_recursion_predicts_instead_of_recur(self):
        cfg = corpus_cfg("left_rec_list")
        nfa = build_rd_nfa(cfg, "none")
        more = next(p for p in cfg.productions
                    if p.provenance and p.provenance.variant == "More")
        hits = [i for i, v in enumerate(nfa.vertices)
                if v.aux is None and v.pid == more.pid and v.dot == 0
                and v.r == "L"]
        assert hits
        for i in hits:
            assert nfa.eps[i]              # predicted in place
            assert nfa.actions[i] == ()    # no Recur
            assert not any(isinstance(lab, tuple) and lab[0] == "rs"
                           for lab, _ in nfa.edges[i])

    def test_return_vertex(self):
        cfg = cfg_for(RECUR_SIMPLE)
        nfa = build_rd_nfa(cfg, "none")
        rets = [i for i, v in enumerate(nfa.vertices)
                if v.aux == "E" and v.dot == 1]
        assert len(rets) == 1
        assert nfa.actions[rets[0]] == (Action("return", "E", ()),)

    def test_all_unfoldable_has_no_recur_machinery(self):
        for name in ("parens", "left_rec_list", "json_mini", "mutual_rec"):
            cfg = corpus_cfg(name)
            nfa = build_rd_nfa(cfg, "all")
            for i in range(len(nfa)):
                assert not any(a.kind in ("recur", "return")
                               for a in nfa.actions[i]), name
                assert not any(isinstance(lab, tuple) and lab[0] == "rs"
                               for lab, _ in nfa.edges[i]), name
            check_recur_cycles(subset_construct(nfa))

    def test_all_unfoldable_matches_lr0(self):
        for name in ("parens", "fork_tail", "left_rec_list", "json_mini",
                     "eps_lookahead", "slr_vs_lr1", "dangling_else_attr"):
            cfg = corpus_cfg(name)
            rd = subset_construct(build_rd_nfa(cfg, "all"))
            lr = subset_construct(build_lr_nfa(cfg, lr0_partition(cfg), 0))
            assert dfa_shape(rd) == dfa_shape(lr), name

    def test_source_marks(self):
        cfg = corpus_cfg("rd_marked")
        paren = next(p for p in cfg.productions
                     if p.provenance and p.provenance.variant == "Paren")
        nfa = build_rd_nfa(cfg, "source")
        # the marked occurrence unfolds in place
        hits = [i for i, v in enumerate(nfa.vertices)
                if v.aux is None and v.pid == paren.pid and v.dot == 1]
        assert hits
        for i in hits:
            assert nfa.eps[i] and nfa.actions[i] == ()
        # the unmarked start occurrence goes through Recur
        assert nfa.actions[nfa.start] == (Action("recur", "E", ()),)

    def test_mutual_recursion_rejected(self):
        cfg = corpus_cfg("mutual_rec")
        dfa = subset_construct(build_rd_nfa(cfg, "none"))
        with pytest.raises(InfiniteRecursion) as exc:
            check_recur_cycles(dfa)
        assert tuple(exc.value.cycle) == ("A", "B")

    def test_acyclic_recur_ok(self):
        cfg = cfg_for(RECUR_SIMPLE)
        dfa = subset_construct(build_rd_nfa(cfg, "none"))
        assert check_recur_cycles(dfa) is None

    def test_rd_parseable_grammar_conflict_detection(self):
        # with nothing unfoldable the one-expression grammar stays
        # action-uniform per state
        cfg = cfg_for(RECUR_SIMPLE)
        dfa = subset_construct(build_rd_nfa(cfg, "none"))
        assert detect_conflicts(dfa) == []

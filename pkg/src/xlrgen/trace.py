"""Synthesis of minimal confusing-input pairs for automaton conflicts.

A conflict report that only names a state and a lookahead is hard to act
on.  This module turns each conflict into a pair of concrete input strings
that share a prefix, agree on the next k tokens, and still demand two
different parser actions at that point — the shortest such pair the tables
admit, computed in four steps:

  1. a table of shortest terminal strings generated by each symbol,
  2. per-symbol / per-dotted-production-tail tables mapping each possible
     k-token prefix to a shortest generated string with that prefix,
  3. a shortest-string search for "what does this symbol string generate
     that starts with these k tokens" over a (prefix position, input
     position) grid,
  4. the trace itself: a shortest weighted path through the deterministic
     automaton to the conflicting state, realized twice in the underlying
     nondeterministic automaton — once per action — and completed into
     full strings whose next k tokens equal the conflicting lookahead.

All searches break ties identically (weight, then state id, then label),
and equal-length generated strings resolve to the lexicographically least,
so traces are stable across runs and machines.

Attribute bounds are ignored throughout: generated-string tables are
computed on the bare productions, so for attribute-carrying grammars a
reported pair demonstrates the conflict's shape but need not satisfy every
value constraint.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .automata import (
    Action,
    Automaton,
    Conflict,
    _label_key,
    render_lookahead,
)
from .flatten import Cfg, SENTINEL
from .grammar import GrammarError

__all__ = [
    "CompletionNotFound",
    "ConflictTrace",
    "GenTable",
    "PrefixTable",
    "gen_table",
    "prefix_match",
    "prefix_tables",
    "trace_conflict",
]


# --- shortest generated strings -------------------------------------------------


@dataclass
class GenTable:
    """Shortest terminal string generated by each symbol.

    Symbols that generate no terminal string are absent.  Terminals (and the
    end-of-input sentinel) map to themselves with length 1.  Among strings
    of minimal length the lexicographically least is stored, so the table is
    a canonical fixed point.
    """

    lengths: dict[str, int] = field(default_factory=dict)
    strings: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def len_of(self, sym: str) -> int | None:
        return self.lengths.get(sym)

    def str_of(self, sym: str) -> tuple[str, ...] | None:
        return self.strings.get(sym)

    def len_of_seq(self, seq) -> int | None:
        total = 0
        for sym in seq:
            l = self.lengths.get(sym)
            if l is None:
                return None
            total += l
        return total

    def str_of_seq(self, seq) -> tuple[str, ...] | None:
        parts = []
        for sym in seq:
            s = self.strings.get(sym)
            if s is None:
                return None
            parts.extend(s)
        return tuple(parts)


def gen_table(cfg: Cfg) -> GenTable:
    """Fixed point of: a terminal generates itself; a nonterminal generates
    the best concatenation of what its rhs symbols generate, minimized by
    (length, lexicographic order)."""
    gt = GenTable()
    for t in list(cfg.terminals) + [SENTINEL]:
        gt.lengths[t] = 1
        gt.strings[t] = (t,)
    changed = True
    while changed:
        changed = False
        for p in cfg.productions:
            total = 0
            parts = []
            ok = True
            for sym in p.rhs:
                l = gt.lengths.get(sym)
                if l is None:
                    ok = False
                    break
                total += l
                parts.append(gt.strings[sym])
            if not ok:
                continue
            cand = tuple(x for part in parts for x in part)
            cur = gt.lengths.get(p.lhs)
            if cur is None or (total, cand) < (cur, gt.strings[p.lhs]):
                gt.lengths[p.lhs] = total
                gt.strings[p.lhs] = cand
                changed = True
    return gt


# --- k-prefix tables --------------------------------------------------------------


@dataclass
class PrefixTable:
    """Per symbol and per dotted-production tail: each k-token prefix that
    some generated string starts with, mapped to a shortest (then
    lexicographically least) such string.

    symbols: symbol -> {prefix tuple -> generated string tuple}
    tails:   (pid, dot) -> same mapping, for the rhs suffix after the dot
    """

    k: int
    symbols: dict[str, dict[tuple, tuple]] = field(default_factory=dict)
    tails: dict[tuple[int, int], dict[tuple, tuple]] = field(
        default_factory=dict
    )


def _improve(table: dict, key: tuple, value: tuple) -> bool:
    cur = table.get(key)
    if cur is None or (len(value), value) < (len(cur), cur):
        table[key] = value
        return True
    return False


def prefix_tables(cfg: Cfg, k: int) -> PrefixTable:
    """Worklist closure of the prefix tables.

    Terminals seed their own singleton tables; a tail with the dot at the
    end holds {empty -> empty}; a tail X -> α · ζ β combines ζ's table with
    the table of X -> α ζ · β by truncated concatenation; a tail with the
    dot at the start pours into its left-hand side's symbol table."""
    pt = PrefixTable(k)
    for t in list(cfg.terminals) + [SENTINEL]:
        pt.symbols[t] = {(t,)[:k]: (t,)}
    for nt in cfg.nonterminals:
        pt.symbols[nt] = {}
    occurrences: dict[str, list[tuple[int, int]]] = {}
    for p in cfg.productions:
        r = len(p.rhs)
        for dot in range(r + 1):
            pt.tails[(p.pid, dot)] = {(): ()} if dot == r else {}
        for i, sym in enumerate(p.rhs):
            occurrences.setdefault(sym, []).append((p.pid, i + 1))

    from collections import deque

    queue: deque = deque()
    queued: set = set()

    def enqueue(item) -> None:
        if item not in queued:
            queued.add(item)
            queue.append(item)

    for t in sorted(list(cfg.terminals) + [SENTINEL]):
        enqueue(("sym", t))
    for p in cfg.productions:
        enqueue(("tail", p.pid, len(p.rhs)))

    while queue:
        item = queue.popleft()
        queued.discard(item)
        if item[0] == "sym":
            sym = item[1]
            for pid, dot in occurrences.get(sym, ()):
                enqueue(("tail", pid, dot))
            continue
        _, pid, dot = item
        if dot == 0:
            lhs = cfg.productions[pid].lhs
            grew = False
            for key, val in pt.tails[(pid, 0)].items():
                if _improve(pt.symbols[lhs], key, val):
                    grew = True
            if grew:
                enqueue(("sym", lhs))
            continue
        sym = cfg.productions[pid].rhs[dot - 1]
        target = pt.tails[(pid, dot - 1)]
        grew = False
        for g, d in pt.symbols[sym].items():
            for g2, d2 in pt.tails[(pid, dot)].items():
                key = (g + g2)[:k]
                if _improve(target, key, d + d2):
                    grew = True
        if grew:
            enqueue(("tail", pid, dot - 1))
    return pt


def prefix_match(
    cfg: Cfg,
    k: int,
    lookahead: tuple,
    symbols,
    tables: PrefixTable | None = None,
) -> tuple | None:
    """Shortest terminal string generated by the symbol string `symbols`
    that begins with the k tokens of `lookahead`; None if there is none.

    Shortest-path search over positions (i, j): i tokens of the lookahead
    matched, j symbols of the input consumed.  A prefix-table entry of the
    consumed symbol either advances the match by exactly its own text, or
    completes it when its text covers everything still unmatched."""
    if len(lookahead) != k:
        raise ValueError(
            f"lookahead has {len(lookahead)} tokens, expected k={k}"
        )
    if tables is None:
        tables = prefix_tables(cfg, k)
    elif tables.k != k:
        raise ValueError(f"tables are for k={tables.k}, requested k={k}")
    zeta = tuple(symbols)
    s = len(zeta)
    best: dict[tuple[int, int], tuple[int, tuple]] = {(0, 0): (0, ())}
    heap: list = [(0, (), 0, 0)]
    while heap:
        dist, text, i, j = heapq.heappop(heap)
        if best.get((i, j), (None,))[0] != dist or best[(i, j)][1] != text:
            continue
        if i == k and j == s:
            return text
        if j == s:
            continue
        table = tables.symbols.get(zeta[j], {})
        for alpha in sorted(table):
            beta = table[alpha]
            hops = set()
            if (
                alpha == beta
                and i + len(alpha) <= k
                and lookahead[i : i + len(alpha)] == alpha
            ):
                hops.add(i + len(alpha))
            need = k - i
            if len(alpha) >= need and alpha[:need] == lookahead[i:k]:
                hops.add(k)
            for i2 in hops:
                cand = (dist + len(beta), text + beta)
                cur = best.get((i2, j + 1))
                if cur is None or cand < cur:
                    best[(i2, j + 1)] = cand
                    heapq.heappush(heap, (cand[0], cand[1], i2, j + 1))
    return None


# --- conflict tracing ----------------------------------------------------------------


@dataclass(frozen=True)
class ConflictTrace:
    """A conflict made concrete: two input strings sharing a prefix, with
    identical next-k tokens, that force the two conflicting actions.

    state/lookahead/action_a/action_b identify the conflict; dfa_labels is
    the shortest weighted label path reaching the state; shared_prefix is
    that path with nonterminals replaced by minimal generated strings;
    pending_a/pending_b are the symbol strings still expected by each
    action's automaton path; completion_a/completion_b realize them as
    terminal strings starting with the lookahead (sentinel included);
    omega_a/omega_b are the full confusing inputs, sentinel included; and
    path_a/path_b are the nondeterministic-automaton vertex ids realizing
    the label path for each action."""

    state: int
    lookahead: tuple
    action_a: Action
    action_b: Action
    dfa_labels: tuple = ()
    shared_prefix: tuple = ()
    pending_a: tuple = ()
    pending_b: tuple = ()
    completion_a: tuple | None = None
    completion_b: tuple | None = None
    omega_a: tuple | None = None
    omega_b: tuple | None = None
    path_a: tuple = ()
    path_b: tuple = ()

    @staticmethod
    def _strip(text: tuple | None) -> tuple | None:
        if text is None:
            return None
        return tuple(t for t in text if t != SENTINEL)

    @property
    def display_a(self) -> tuple | None:
        return self._strip(self.omega_a)

    @property
    def display_b(self) -> tuple | None:
        return self._strip(self.omega_b)

    def render(self, nfa: Automaton) -> str:
        cfg = nfa.cfg
        lines = [
            f"conflict at state {self.state} on lookahead "
            f"{render_lookahead(self.lookahead)}",
            f"  action a: {self.action_a.render(cfg)}",
            f"  action b: {self.action_b.render(cfg)}",
            f"  shared prefix: {_render_text(self.shared_prefix)}",
        ]
        for side, omega, path in (
            ("a", self.display_a, self.path_a),
            ("b", self.display_b, self.path_b),
        ):
            text = _render_text(omega) if omega is not None else "(not found)"
            lines.append(f"  input {side}: {text}")
            for vid in path:
                lines.append(f"    [{vid}] {nfa.vertices[vid].render(cfg)}")
        return "\n".join(lines)


def _render_text(text: tuple) -> str:
    return " ".join(text) if text else "ε"


class CompletionNotFound(GrammarError):
    """No terminal completion matching the conflicting lookahead was found
    along the traced path.  Carries the partial trace for inspection."""

    def __init__(self, message: str, trace: ConflictTrace):
        super().__init__(message)
        self.trace = trace


def _label_symbol(label) -> str:
    if isinstance(label, str):
        return label
    if label[0] == "val":
        return label[1]
    raise ValueError(f"cannot trace through edge label {label!r}")


def _dfa_shortest_path(
    dfa: Automaton, gen: GenTable, target: int
) -> tuple | None:
    """Labels of a shortest generated-length path from the start state to
    `target`; ties broken by (weight, state id, label).  None when every
    path crosses a symbol that generates no terminal string."""
    dist = {dfa.start: 0}
    parent: dict[int, tuple[int, object]] = {}
    heap = [(0, dfa.start)]
    while heap:
        d, v = heapq.heappop(heap)
        if d != dist.get(v):
            continue
        if v == target:
            break
        for label, t in sorted(dfa.edges[v], key=lambda e: (_label_key(e[0]), e[1])):
            w = gen.len_of(_label_symbol(label))
            if w is None:
                continue
            nd = d + w
            if nd < dist.get(t, float("inf")):
                dist[t] = nd
                parent[t] = (v, label)
                heapq.heappush(heap, (nd, t))
    if target not in dist:
        return None
    labels = []
    v = target
    while v != dfa.start:
        v, label = parent[v]
        labels.append(label)
    labels.reverse()
    return tuple(labels)


def _product_path(
    nfa: Automaton,
    gen: GenTable,
    zeta_syms: tuple,
    action: Action,
    lookahead: tuple,
) -> tuple | None:
    """Vertex ids of a shortest path through the nondeterministic automaton
    that consumes exactly `zeta_syms` and ends on a vertex carrying
    `action` with `lookahead`.  Step edges are free; a prediction edge
    costs the generated length of the predicted production's whole rhs."""
    cfg = nfa.cfg
    r = len(zeta_syms)
    start = (nfa.start, 0)
    dist = {start: 0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    heap = [(0, nfa.start, 0)]

    def is_target(vid: int, stage: int) -> bool:
        if stage != r:
            return False
        for a in nfa.actions[vid]:
            if (
                a.kind == action.kind
                and a.target == action.target
                and a.lookahead == lookahead
            ):
                return True
        return False

    goal: tuple[int, int] | None = None
    while heap:
        d, vid, stage = heapq.heappop(heap)
        if d != dist.get((vid, stage)):
            continue
        if is_target(vid, stage):
            goal = (vid, stage)
            break
        moves = []
        if stage < r:
            for label, t in nfa.edges[vid]:
                if label == zeta_syms[stage]:
                    moves.append((0, t, stage + 1))
        for t in nfa.eps[vid]:
            tv = nfa.vertices[t]
            tail = cfg.productions[tv.pid].rhs[tv.dot :]
            w = gen.len_of_seq(tail)
            if w is None:
                continue
            moves.append((w, t, stage))
        for w, t, st in sorted(moves, key=lambda m: (m[0], m[1], m[2])):
            nd = d + w
            if nd < dist.get((t, st), float("inf")):
                dist[(t, st)] = nd
                parent[(t, st)] = (vid, stage)
                heapq.heappush(heap, (nd, t, st))
    if goal is None:
        return None
    path = []
    node = goal
    while node != start:
        path.append(node[0])
        node = parent[node]
    path.append(nfa.start)
    path.reverse()
    return tuple(path)


def _pending_tail(nfa: Automaton, path: tuple) -> tuple:
    """Symbols still expected after the traced path: the final vertex's
    tail, then for every prediction edge on the path (walking backwards)
    the text after the predicted symbol of its source vertex."""
    cfg = nfa.cfg
    out: list[str] = []
    last = nfa.vertices[path[-1]]
    out.extend(cfg.productions[last.pid].rhs[last.dot :])
    for j in range(len(path) - 2, -1, -1):
        v = nfa.vertices[path[j]]
        if path[j + 1] in nfa.eps[path[j]]:
            out.extend(cfg.productions[v.pid].rhs[v.dot + 1 :])
        # otherwise a step edge: nothing pending from this vertex
    return tuple(out)


def trace_conflict(
    nfa: Automaton,
    dfa: Automaton,
    conflict,
    actions: tuple[Action, Action] | None = None,
    gen: GenTable | None = None,
    tables: PrefixTable | None = None,
) -> ConflictTrace:
    """Trace one conflict of `dfa` (determinized from `nfa`) into a pair of
    concrete confusing inputs.

    `conflict` is a Conflict from detect_conflicts or a (state, lookahead,
    action, action) tuple; when a Conflict lists more than two actions and
    `actions` is not given, the first two in canonical order are traced.
    Raises CompletionNotFound, carrying the partial trace, when some
    conflicting path cannot be realized as a terminal string matching the
    lookahead."""
    if not dfa.deterministic or nfa.deterministic:
        raise ValueError("trace_conflict needs the NFA and its DFA")
    if nfa.k != dfa.k:
        raise ValueError(f"automata disagree on k: {nfa.k} vs {dfa.k}")
    if isinstance(conflict, Conflict):
        state, lookahead = conflict.state, conflict.lookahead
        if actions is None:
            distinct: list[Action] = []
            for a in sorted(conflict.actions, key=Action.sort_key):
                if all(
                    (a.kind, a.target) != (b.kind, b.target) for b in distinct
                ):
                    distinct.append(a)
            if len(distinct) < 2:
                raise ValueError("conflict does not hold two distinct actions")
            act_a, act_b = distinct[0], distinct[1]
        else:
            act_a, act_b = actions
    else:
        state, lookahead, act_a, act_b = conflict
    cfg = nfa.cfg
    k = nfa.k
    if gen is None:
        gen = gen_table(cfg)
    if tables is None:
        tables = prefix_tables(cfg, k)

    base = ConflictTrace(
        state=state, lookahead=lookahead, action_a=act_a, action_b=act_b
    )
    labels = _dfa_shortest_path(dfa, gen, state)
    if labels is None:
        raise CompletionNotFound(
            f"state {state} is unreachable through symbols that generate "
            "terminal strings",
            base,
        )
    zeta_syms = tuple(_label_symbol(l) for l in labels)
    prefix = gen.str_of_seq(zeta_syms)
    assert prefix is not None  # finite path weight implies finite parts

    sides = {}
    for name, act in (("a", act_a), ("b", act_b)):
        path = _product_path(nfa, gen, zeta_syms, act, lookahead)
        if path is None:
            raise CompletionNotFound(
                f"no automaton path consumes {_render_text(zeta_syms)} and "
                f"reaches {act.kind} on {render_lookahead(lookahead)}",
                ConflictTrace(
                    state=state,
                    lookahead=lookahead,
                    action_a=act_a,
                    action_b=act_b,
                    dfa_labels=labels,
                    shared_prefix=prefix,
                ),
            )
        pending = _pending_tail(nfa, path)
        sides[name] = (path, pending)

    completions = {}
    for name, (path, pending) in sides.items():
        completion = prefix_match(
            cfg, k, lookahead, pending + (SENTINEL,) * k, tables
        )
        completions[name] = completion
    trace = ConflictTrace(
        state=state,
        lookahead=lookahead,
        action_a=act_a,
        action_b=act_b,
        dfa_labels=labels,
        shared_prefix=prefix,
        pending_a=sides["a"][1],
        pending_b=sides["b"][1],
        completion_a=completions["a"],
        completion_b=completions["b"],
        omega_a=None
        if completions["a"] is None
        else prefix + completions["a"],
        omega_b=None
        if completions["b"] is None
        else prefix + completions["b"],
        path_a=sides["a"][0],
        path_b=sides["b"][0],
    )
    if completions["a"] is None or completions["b"] is None:
        missing = " and ".join(
            n for n in ("a", "b") if completions[n] is None
        )
        raise CompletionNotFound(
            f"no terminal completion matches lookahead "
            f"{render_lookahead(lookahead)} for side {missing}",
            trace,
        )
    return trace

"""Continuation-passing restructuring of a flat grammar.

Right-recursive helper nonterminals introduced by lowering (each occurring
exactly once outside its own rule) can be rewritten so that everything that
would follow such a helper is pushed *into* the helper's own productions as
an explicit continuation.  The rewritten grammar generates the same strings,
but the decision points that previously forced an early reduction of the
helper are postponed until the continuation itself is recognized, which
removes many lookahead conflicts without growing the grammar.

The rewrite walks each production right to left, carrying the list of
symbols still to be matched after the current point (the *tail*):

  * a plain symbol is prepended to the tail;
  * a *triggering* helper absorbs the tail: the walk descends into the
    helper's productions with the current tail appended, and continues here
    with just the helper's replacement symbol (its name plus a prime);
  * a production of a triggering helper that ends with a direct self
    reference keeps its recursion: the incoming tail is dropped (the
    sibling base-case production carries it instead) and the trailing self
    reference becomes the replacement symbol.

Every original production yields exactly one rewritten production with the
same numeric id, so runtime reconstruction of the original-shape syntax
tree only needs, per production, the original arity and the rewritten
length — both recorded in :class:`CpsMap` together with the tails observed
at every symbol and dot position.

Attribute constraints are remapped along the same routing: a constraint on
a position that was absorbed into a helper is re-expressed as a chain of
bounds through the replacement symbols, which is exact because helper
values are free intermediaries under the min-with-ceiling value semantics.
One documented sharpening: a lower bound (`rhs_ge`) that lands on a
replacement-symbol position constrains that symbol's value, which also
reflects any caps routed through it; no lowered grammar produced by this
package exercises that combination.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .automata import build_lr_nfa, detect_conflicts, slr_partition, subset_construct
from .flatten import Cfg, FlatConstraint, Production
from .grammar import GrammarError

__all__ = [
    "CpsEntry",
    "CpsMap",
    "cps_transform",
    "select_cps_triggering",
]


# --- result types -------------------------------------------------------------


@dataclass(frozen=True)
class CpsEntry:
    """Per-production record linking a rewritten production to its origin.

    orig_pid: id of the original production (equal to the rewritten id);
    arity:    length r of the original right-hand side;
    cps_len:  length m of the rewritten right-hand side.
    """

    orig_pid: int
    arity: int
    cps_len: int


@dataclass
class CpsMap:
    """Everything the runtime needs to undo the rewrite.

    entries:        pid -> CpsEntry (the (r, m) split per production);
    tail_of_symbol: nonterminal -> tail in force when its productions were
                    rewritten (empty for non-triggering symbols);
    tail_of_item:   (pid, dot) -> tail in force when the walk stood at that
                    dot of the *original* production, for dot = 0..r;
    cps_symbol:     original nonterminal -> its name in the rewritten
                    grammar (identity for non-triggering symbols);
    origins:        pid -> per rewritten rhs position, the (original pid,
                    1-based position) the symbol standing there came from.
    """

    entries: dict[int, CpsEntry] = field(default_factory=dict)
    tail_of_symbol: dict[str, tuple[str, ...]] = field(default_factory=dict)
    tail_of_item: dict[tuple[int, int], tuple[str, ...]] = field(default_factory=dict)
    cps_symbol: dict[str, str] = field(default_factory=dict)
    origins: dict[int, tuple[tuple[int, int], ...]] = field(default_factory=dict)


# --- triggering-set selection -------------------------------------------------


def select_cps_triggering(cfg: Cfg, mode: str = "all-eligible") -> frozenset:
    """Choose which eligible helper symbols the rewrite should absorb into.

    all-eligible:    every helper the lowering marked as eligible.
    conflict-driven: only eligible helpers that some SLR(1) reduce conflict
                     implicates, i.e. helpers that are the left-hand side of
                     a reduce action participating in a conflict of the
                     SLR(1) automaton.
    """
    if mode == "all-eligible":
        return frozenset(cfg.cps_eligible)
    if mode != "conflict-driven":
        raise ValueError(f"unknown triggering mode: {mode!r}")
    dfa = subset_construct(build_lr_nfa(cfg, slr_partition(cfg, 1), 1))
    implicated: set[str] = set()
    for c in detect_conflicts(dfa):
        reduces = [a for a in c.actions if a.kind == "reduce"]
        if not reduces:
            continue
        for a in reduces:
            implicated.add(cfg.productions[a.target].lhs)
    return frozenset(implicated & set(cfg.cps_eligible))


# --- the rewrite --------------------------------------------------------------


@dataclass(frozen=True)
class _Elem:
    """One pending rhs symbol: its rewritten name, where it came from in the
    original grammar, and the unfold flag of that original occurrence."""

    sym: str
    origin: tuple[int, int]
    unfold: bool


def _syms(tail: tuple[_Elem, ...]) -> tuple[str, ...]:
    return tuple(e.sym for e in tail)


class _Rewriter:
    def __init__(self, cfg: Cfg, triggering: frozenset):
        self.cfg = cfg
        self.triggering = triggering
        taken = set(cfg.nonterminals) | set(cfg.terminals)
        self.replacement: dict[str, str] = {}
        for name in sorted(triggering):
            new = name + "'"
            while new in taken:
                new += "'"
            taken.add(new)
            self.replacement[name] = new
        # rewritten-name map for every nonterminal (identity off-trigger)
        self.new_name = {
            nt: self.replacement.get(nt, nt) for nt in cfg.nonterminals
        }
        self.visited: set[str] = set()
        self.emitted: dict[int, tuple[str, tuple[_Elem, ...]]] = {}
        self.tail_of_symbol: dict[str, tuple[str, ...]] = {}
        self.tail_of_item: dict[tuple[int, int], tuple[str, ...]] = {}
        # per pid: origin of an element consumed by a trigger during that
        # production's walk -> origin of the trigger's replacement element
        self.routed: dict[int, dict[tuple[int, int], tuple[int, int]]] = {}
        # per pid: origins of tail elements dropped by the trailing-self case
        self.discarded: dict[int, set[tuple[int, int]]] = {}

    # -- walk -------------------------------------------------------------

    def rewrite_symbol(self, nt: str, tail: tuple[_Elem, ...]) -> None:
        if nt in self.visited:
            raise GrammarError(
                f"symbol {nt!r} is absorbed from more than one place; the "
                "rewrite supports helpers that occur exactly once (plus a "
                "trailing self reference inside their own productions)"
            )
        self.visited.add(nt)
        self.tail_of_symbol[nt] = _syms(tail)
        lhs = self.new_name[nt]
        for p in self.cfg.prods_of(nt):
            self.rewrite_production(p, tail, lhs)

    def rewrite_production(
        self, p: Production, tail: tuple[_Elem, ...], lhs: str
    ) -> None:
        pid = p.pid
        self.routed.setdefault(pid, {})
        self.discarded.setdefault(pid, set())
        r = len(p.rhs)
        self.tail_of_item[(pid, r)] = _syms(tail)
        i = r
        if p.rhs and p.rhs[-1] == p.lhs and p.lhs in self.triggering:
            # trailing self reference: keep the recursion, drop the tail
            for e in tail:
                self.discarded[pid].add(e.origin)
            tail = (_Elem(self.new_name[p.lhs], (pid, r), self._flag(p, r)),)
            i = r - 1
            self.tail_of_item[(pid, i)] = _syms(tail)
        while i > 0:
            sym = p.rhs[i - 1]
            if sym in self.triggering:
                for e in tail:
                    self.routed[pid][e.origin] = (pid, i)
                self.rewrite_symbol(sym, tail)
                tail = (_Elem(self.new_name[sym], (pid, i), self._flag(p, i)),)
            else:
                mapped = self.new_name.get(sym, sym)
                tail = (_Elem(mapped, (pid, i), self._flag(p, i)),) + tail
            i -= 1
            self.tail_of_item[(pid, i)] = _syms(tail)
        self.emitted[pid] = (lhs, tail)

    def _flag(self, p: Production, pos: int) -> bool:
        return bool(p.unfold[pos - 1]) if p.unfold else False

    # -- constraint remapping ----------------------------------------------

    def remap_constraints(self) -> dict[int, list[FlatConstraint]]:
        # physical landing spots: origin -> [(pid, 1-based position), ...]
        self.phys: dict[int, dict[tuple[int, int], int]] = {}
        placements: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for pid, (_lhs, tail) in self.emitted.items():
            pos_of = {}
            for idx, e in enumerate(tail, start=1):
                pos_of[e.origin] = idx
                placements.setdefault(e.origin, []).append((pid, idx))
            self.phys[pid] = pos_of

        out: dict[int, list[FlatConstraint]] = {
            pid: [] for pid in self.emitted
        }
        self._out = out
        for p in self.cfg.productions:
            for c in p.constraints:
                if c.form == "lhs_le":
                    out[p.pid].append(c)
                elif c.form == "rhs_ge":
                    spots = placements.get((p.pid, c.index), [])
                    if not spots:
                        raise GrammarError(
                            f"lower bound on position {c.index} of "
                            f"production {p.pid} has no landing spot after "
                            "the rewrite"
                        )
                    for qpid, pos in spots:
                        out[qpid].append(
                            FlatConstraint(
                                "rhs_ge", c.key, bound=c.bound, index=pos
                            )
                        )
                else:  # lhs_le_rhs
                    self._route(
                        p.pid, (p.pid, c.index), c.key, c.other_key, set()
                    )
        return out

    def _route(
        self,
        pid: int,
        origin: tuple[int, int],
        key: str,
        other: str,
        seen: set,
    ) -> None:
        """Attach lhs[key] <= <wherever `origin` ended up>[other], following
        absorption hops with same-key chaining through replacement symbols."""
        tag = (pid, origin, key, other)
        if tag in seen:
            return
        seen.add(tag)
        pos = self.phys[pid].get(origin)
        if pos is not None:
            self._out[pid].append(
                FlatConstraint("lhs_le_rhs", key, index=pos, other_key=other)
            )
            return
        if origin in self.discarded[pid]:
            # the tail was dropped here in favour of the trailing self
            # reference; chain the bound through it so the sibling base
            # case (which physically holds the tail) closes the chain
            r = len(self.cfg.productions[pid].rhs)
            self._route(pid, (pid, r), key, key, seen)
            return
        absorber = self.routed[pid].get(origin)
        if absorber is None:
            raise GrammarError(
                f"constraint target {origin} of production {pid} was lost "
                "by the rewrite"
            )
        self._route(pid, absorber, key, key, seen)
        trigger = self.cfg.productions[absorber[0]].rhs[absorber[1] - 1]
        for q in self.cfg.prods_of(trigger):
            self._route(q.pid, origin, key, other, seen)


def cps_transform(cfg: Cfg, triggering) -> tuple[Cfg, CpsMap]:
    """Rewrite `cfg` so each symbol in `triggering` absorbs its continuation.

    Returns the rewritten grammar and the :class:`CpsMap` relating it back
    to `cfg`.  Production ids are preserved one-to-one.  Raises ValueError
    if `triggering` is not a subset of the eligible helpers, GrammarError
    if a triggering symbol occurs anywhere other than the single position
    the lowering gave it (or other than a trailing self reference).
    """
    trig = frozenset(triggering)
    stray = trig - set(cfg.cps_eligible)
    if stray:
        raise ValueError(
            f"not eligible for the rewrite: {sorted(stray)}"
        )
    rw = _Rewriter(cfg, trig)
    for nt in cfg.nonterminals:
        if nt not in trig:
            rw.rewrite_symbol(nt, ())
    unvisited = set(cfg.nonterminals) - rw.visited
    if unvisited:
        raise GrammarError(
            f"triggering symbols never absorbed anywhere: {sorted(unvisited)}"
        )
    constraints = rw.remap_constraints()

    productions = []
    cps_map = CpsMap()
    for p in cfg.productions:
        lhs, tail = rw.emitted[p.pid]
        productions.append(
            Production(
                pid=p.pid,
                lhs=lhs,
                rhs=_syms(tail),
                constraints=tuple(dict.fromkeys(constraints[p.pid])),
                provenance=p.provenance,
                unfold=tuple(e.unfold for e in tail),
            )
        )
        cps_map.entries[p.pid] = CpsEntry(
            orig_pid=p.pid, arity=len(p.rhs), cps_len=len(tail)
        )
        cps_map.origins[p.pid] = tuple(e.origin for e in tail)
    cps_map.tail_of_symbol = dict(rw.tail_of_symbol)
    cps_map.tail_of_item = dict(rw.tail_of_item)
    cps_map.cps_symbol = dict(rw.new_name)

    new_cfg = Cfg(
        nonterminals=[rw.new_name[nt] for nt in cfg.nonterminals],
        terminals=list(cfg.terminals),
        start=cfg.start,
        productions=productions,
        domains={
            rw.new_name.get(name, name): dict(dom)
            for name, dom in cfg.domains.items()
        },
        cps_eligible=frozenset(cfg.cps_eligible) - trig,
        wrapper=cfg.wrapper,
        token_defs=list(cfg.token_defs),
    )
    return new_cfg, cps_map

"""Parse automata: k-prefix machinery, follow partitions, LR/RD NFAs and DFAs.

The central objects are nondeterministic automata whose vertices are dotted
productions decorated with a block of k-follow strings (LR) or a
left-recursion marker (RD), optionally refined by attribute lower bounds.
A standard subset construction turns either kind into a deterministic
automaton whose per-state action sets drive the table runtime.

Follow blocks and attribute bounds are kept as sorted tuples rather than
sets so every derived structure (vertex identity, state numbering, debug
dumps, serialized tables) is reproducible across processes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import product as _iproduct
from typing import Iterable, Mapping, Sequence, Union

from .flatten import Cfg, Production, SENTINEL

Lookahead = tuple[str, ...]
Item = tuple[int, int]           # (production id, dot position)
Block = tuple[Lookahead, ...]    # sorted tuple of k-follow strings
Bounds = tuple[tuple[str, int], ...]  # sorted ((key, lower bound), ...)
AttrVec = tuple[tuple[str, int], ...]  # sorted ((key, value), ...), full domain

# Edge labels: a plain grammar symbol, a recursion-step marker, or a
# nonterminal paired with a concrete attribute valuation.
RecurStepLabel = tuple[str, str]            # ("rs", symbol)
ValuedLabel = tuple[str, str, AttrVec]      # ("val", symbol, values)
Label = Union[str, RecurStepLabel, ValuedLabel]


class InfiniteRecursion(Exception):
    """A Recur cycle that could loop forever without consuming input."""

    def __init__(self, cycle: tuple[str, ...]):
        self.cycle = cycle
        pretty = " -> ".join(cycle + (cycle[0],)) if cycle else "?"
        super().__init__(f"unbounded recursion through {pretty}")


def sentinel_string(k: int) -> Lookahead:
    return (SENTINEL,) * k


def render_lookahead(lam: Lookahead) -> str:
    return " ".join(lam) if lam else "ε"


# --- First_k(Gen(·)) --------------------------------------------------------


def _cat_k(left: set, right: set, k: int) -> set:
    """Truncated concatenation of k-prefix sets."""
    if k == 0:
        return {()}
    out = set()
    for a in left:
        if len(a) == k:
            out.add(a)
        else:
            for b in right:
                out.add((a + b)[:k])
    return out


class FirstK:
    """k-bounded terminal prefixes of strings derivable from symbol sequences.

    An element shorter than k records a derivable terminal string that ran
    out before reaching k symbols; concatenation therefore extends exactly
    the exhausted prefixes.
    """

    def __init__(self, cfg: Cfg, k: int):
        self.cfg = cfg
        self.k = k
        self._sym: dict[str, set] = {}
        self._suffix_cache: dict[tuple[int, int, Lookahead], frozenset] = {}
        self._compute_symbols()

    def _compute_symbols(self):
        cfg, k = self.cfg, self.k
        sym = self._sym
        for t in cfg.terminals:
            sym[t] = {(t,)[:k]}
        sym[SENTINEL] = {(SENTINEL,)[:k]}
        for nt in cfg.nonterminals:
            sym[nt] = set()
        changed = True
        while changed:
            changed = False
            for p in cfg.productions:
                acc = {()}
                for s in p.rhs:
                    acc = _cat_k(acc, sym[s], k)
                    if not acc:
                        break
                if not acc <= sym[p.lhs]:
                    sym[p.lhs] |= acc
                    changed = True

    def of_sequence(self, seq: Sequence[str]) -> set:
        """First_k(Gen({seq})) for one symbol sequence (terminals and/or
        nonterminals; the sentinel counts as a terminal)."""
        acc = {()}
        for s in seq:
            acc = _cat_k(acc, self._sym[s], self.k)
        return acc

    def of_suffix(self, pid: int, dot: int, lam: Lookahead) -> frozenset:
        """First_k(Gen(rhs[dot:] · lam)), memoized; the dominant query of
        automaton construction and partition refinement."""
        key = (pid, dot, lam)
        hit = self._suffix_cache.get(key)
        if hit is not None:
            return hit
        rhs = self.cfg.productions[pid].rhs
        acc = {()}
        for s in rhs[dot:]:
            acc = _cat_k(acc, self._sym[s], self.k)
        acc = _cat_k(acc, {lam}, self.k)
        out = frozenset(acc)
        self._suffix_cache[key] = out
        return out


def first_k(cfg: Cfg, strings: Iterable[Sequence[str]], k: int) -> set:
    """k-bounded terminal prefixes of everything derivable from `strings`."""
    fk = FirstK(cfg, k)
    out: set = set()
    for seq in strings:
        out |= fk.of_sequence(tuple(seq))
    return out


# --- follow universes and partitions ----------------------------------------


def follow_universe(cfg: Cfg, k: int) -> dict[str, frozenset]:
    """Forward-reachable k-follow strings per nonterminal.

    Flood fill: the start symbol is followed by the sentinel string; a
    nonterminal occurrence X -> α · Y β propagates First_k(Gen(β λ)) for
    every λ already known to follow X.  All productions of one lhs share
    contexts, so the result is uniform per nonterminal.
    """
    fk = FirstK(cfg, k)
    follows: dict[str, set] = {nt: set() for nt in cfg.nonterminals}
    follows[cfg.start].add(sentinel_string(k))
    changed = True
    while changed:
        changed = False
        for p in cfg.productions:
            src = follows[p.lhs]
            if not src:
                continue
            for i, s in enumerate(p.rhs):
                if cfg.is_terminal(s):
                    continue
                dst = follows[s]
                for lam in list(src):
                    contrib = fk.of_suffix(p.pid, i + 1, lam)
                    if not contrib <= dst:
                        dst |= contrib
                        changed = True
    return {nt: frozenset(v) for nt, v in follows.items()}


def _sorted_block(lams: Iterable[Lookahead]) -> Block:
    return tuple(sorted(lams))


def _sorted_blocks(blocks: Iterable[Iterable[Lookahead]]) -> tuple[Block, ...]:
    return tuple(sorted((_sorted_block(b) for b in blocks), key=lambda b: b[0]))


@dataclass(frozen=True)
class FollowPartition:
    """Per dotted production: the universe of reachable k-follow strings,
    split into disjoint blocks.  Coarsest split = SLR; singletons = canonical.
    """

    k: int
    blocks: Mapping[Item, tuple[Block, ...]]

    def universe(self, item: Item) -> tuple[Lookahead, ...]:
        out: list[Lookahead] = []
        for b in self.blocks[item]:
            out.extend(b)
        return tuple(sorted(out))

    def block_containing(self, item: Item, lam: Lookahead) -> Block | None:
        for b in self.blocks[item]:
            if lam in b:
                return b
        return None


def _all_items(cfg: Cfg) -> list[Item]:
    out = []
    for p in cfg.productions:
        for dot in range(len(p.rhs) + 1):
            out.append((p.pid, dot))
    return out


def lr0_partition(cfg: Cfg) -> FollowPartition:
    """k = 0: the single universe {ε} with its single block."""
    blocks = {item: (((),),) for item in _all_items(cfg)}
    return FollowPartition(0, blocks)


def slr_partition(cfg: Cfg, k: int) -> FollowPartition:
    """Coarsest partition: one block per universe."""
    fu = follow_universe(cfg, k)
    blocks = {}
    for p in cfg.productions:
        blk = (_sorted_block(fu[p.lhs]),)
        for dot in range(len(p.rhs) + 1):
            blocks[(p.pid, dot)] = blk
    return FollowPartition(k, blocks)


def canonical_partition(cfg: Cfg, k: int) -> FollowPartition:
    """Finest partition: every follow string in its own block."""
    fu = follow_universe(cfg, k)
    blocks = {}
    for p in cfg.productions:
        blk = tuple((lam,) for lam in sorted(fu[p.lhs]))
        for dot in range(len(p.rhs) + 1):
            blocks[(p.pid, dot)] = blk
    return FollowPartition(k, blocks)


# --- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class Action:
    """One accept action, conditioned on a k-lookahead.

    kind/target: ("shift", None) | ("reduce", pid) | ("recur", symbol) |
    ("return", symbol).  Two actions conflict when they differ but share a
    lookahead.
    """

    kind: str
    target: int | str | None
    lookahead: Lookahead

    def sort_key(self):
        return (self.kind, "" if self.target is None else str(self.target),
                self.lookahead)

    def render(self, cfg: Cfg) -> str:
        la = render_lookahead(self.lookahead)
        if self.kind == "shift":
            return f"shift({la})"
        if self.kind == "reduce":
            p = cfg.productions[self.target]
            body = " ".join(p.rhs) if p.rhs else "(empty)"
            return f"reduce({p.lhs} -> {body}, {la})"
        if self.kind == "recur":
            return f"recur({self.target})"
        return f"return({self.target})"


# --- vertices ----------------------------------------------------------------


@dataclass(frozen=True)
class LrVertex:
    """(dotted production, k-follow block, attribute lower bounds)."""

    pid: int
    dot: int
    block: Block
    bounds: Bounds = ()

    def render(self, cfg: Cfg) -> str:
        p = cfg.productions[self.pid]
        rhs = list(p.rhs)
        rhs.insert(self.dot, ".")
        body = " ".join(rhs)
        blk = ", ".join(render_lookahead(l) for l in self.block)
        s = f"{p.lhs} -> {body}, {{{blk}}}"
        if self.bounds:
            s += " [" + ",".join(f"{k}>={b}" for k, b in self.bounds) + "]"
        return s


@dataclass(frozen=True)
class RdVertex:
    """Recursive-descent vertex: either a dotted production of the grammar
    or the synthetic recursion head #Y -> ·Y / #Y -> Y·, plus the symbol
    currently in left-recursive position (None when there is none)."""

    pid: int | None            # None for a recursion-head vertex
    dot: int
    aux: str | None = None     # the Y of #Y when pid is None
    r: str | None = None
    bounds: Bounds = ()

    def render(self, cfg: Cfg) -> str:
        if self.aux is not None:
            body = f". {self.aux}" if self.dot == 0 else f"{self.aux} ."
            s = f"#{self.aux} -> {body}"
        else:
            p = cfg.productions[self.pid]
            rhs = list(p.rhs)
            rhs.insert(self.dot, ".")
            s = f"{p.lhs} -> {' '.join(rhs)}"
        if self.r is not None:
            s += f", R={self.r}"
        if self.bounds:
            s += " [" + ",".join(f"{k}>={b}" for k, b in self.bounds) + "]"
        return s


# --- the automaton container --------------------------------------------------


def _label_key(label: Label):
    if isinstance(label, str):
        return (0, label, ())
    if label[0] == "val":
        return (1, label[1], label[2])
    return (2, label[1], ())


def render_label(label: Label) -> str:
    if isinstance(label, str):
        return label
    if label[0] == "val":
        vals = ",".join(f"{k}={v}" for k, v in label[2])
        return f"{label[1]}[{vals}]"
    return f"RecurStep({label[1]})"


@dataclass
class Automaton:
    """A parse automaton.  Vertices are numbered in BFS discovery order from
    the start vertex (label-sorted for DFAs), so equal inputs always produce
    byte-identical structures.  For deterministic automata each vertex
    payload is the sorted tuple of source-NFA vertex ids it groups."""

    kind: str                  # "lr" | "rd"
    k: int
    deterministic: bool
    cfg: Cfg
    vertices: list = field(default_factory=list)
    eps: list = field(default_factory=list)       # per vertex: tuple of targets
    edges: list = field(default_factory=list)     # per vertex: ((label, target), ...)
    actions: list = field(default_factory=list)   # per vertex: (Action, ...)
    start: int = 0
    source: "Automaton | None" = None

    def __len__(self) -> int:
        return len(self.vertices)

    def vertex_items(self, vid: int) -> str:
        if self.deterministic:
            members = self.vertices[vid]
            return " | ".join(self.source.vertices[m].render(self.cfg)
                              for m in members)
        return self.vertices[vid].render(self.cfg)

    def dump(self) -> str:
        lines = []
        for vid in range(len(self.vertices)):
            parts = [f"state {vid}: {self.vertex_items(vid)}"]
            bits = []
            for t in self.eps[vid]:
                bits.append(f"eps->{t}")
            for label, t in self.edges[vid]:
                bits.append(f"{render_label(label)}->{t}")
            parts.append("edges: " + (", ".join(bits) if bits else "none"))
            acts = ", ".join(a.render(self.cfg) for a in self.actions[vid])
            parts.append("actions: " + (acts if acts else "none"))
            lines.append("; ".join(parts))
        return "\n".join(lines) + "\n"


# --- attribute machinery -----------------------------------------------------


def child_requirements(p: Production, dot: int, bounds: Bounds) -> dict[str, int]:
    """Lower bounds imposed on the symbol after the dot: direct rhs_ge
    constraints at that position, plus bounds on the lhs flowing through
    lhs_le_rhs constraints that target the position."""
    i = dot + 1
    req: dict[str, int] = {}
    for c in p.constraints:
        if c.form == "rhs_ge" and c.index == i and c.bound > 0:
            req[c.key] = max(req.get(c.key, 0), c.bound)
    if bounds:
        held = dict(bounds)
        for c in p.constraints:
            if c.form == "lhs_le_rhs" and c.index == i and c.key in held:
                b = held[c.key]
                if b > 0:
                    req[c.other_key] = max(req.get(c.other_key, 0), b)
    return req


def production_admits(cfg: Cfg, q: Production, req: dict[str, int]) -> bool:
    """Can any value of q's lhs meet the required lower bounds?  Checked
    against the domain ceiling and q's constant upper bounds only; deeper
    infeasibility surfaces as missing valued edges."""
    if not req:
        return True
    dom = cfg.domain_of(q.lhs)
    for key, b in req.items():
        size = dom.get(key)
        if size is None or b > size - 1:
            return False
    for c in q.constraints:
        if c.form == "lhs_le" and c.key in req and c.bound < req[c.key]:
            return False
    return True


def retained_bounds(req: dict[str, int], q: Production, dot: int) -> Bounds:
    """Keep a bound only while some lhs_le_rhs constraint still targets a
    position after the dot; otherwise it can no longer split behavior."""
    out = []
    for key in sorted(req):
        b = req[key]
        if b <= 0:
            continue
        for c in q.constraints:
            if c.form == "lhs_le_rhs" and c.key == key and c.index > dot:
                out.append((key, b))
                break
    return tuple(out)


def production_value(cfg: Cfg, p: Production,
                     child_vecs: Mapping[int, Mapping[str, int]]) -> AttrVec | None:
    """Concrete attribute values of p's lhs given child values (keyed by
    1-based rhs position; only attribute-carrying children appear).  Each
    key takes its maximum attainable value; None when a rhs_ge constraint
    fails, meaning the production cannot produce a node from these children.
    """
    dom = cfg.domain_of(p.lhs)
    out = {key: size - 1 for key, size in dom.items()}
    for c in p.constraints:
        if c.form == "rhs_ge":
            if child_vecs[c.index][c.key] < c.bound:
                return None
        elif c.form == "lhs_le":
            if c.bound < out[c.key]:
                out[c.key] = c.bound
        else:  # lhs_le_rhs
            v = child_vecs[c.index][c.other_key]
            if v < out[c.key]:
                out[c.key] = v
    return tuple(sorted(out.items()))


def attr_values(cfg: Cfg) -> dict[str, tuple[AttrVec, ...]]:
    """All inhabited attribute valuations per attribute-carrying nonterminal,
    by fixpoint over the productions.  Only these become valued edge labels.
    """
    keyed = {nt for nt in cfg.nonterminals if cfg.domain_of(nt)}
    vals: dict[str, set] = {nt: set() for nt in keyed}
    changed = True
    while changed:
        changed = False
        for p in cfg.productions:
            if p.lhs not in keyed:
                continue
            positions = [(i + 1, s) for i, s in enumerate(p.rhs) if s in keyed]
            pools = [sorted(vals[s]) for _, s in positions]
            if any(not pool for pool in pools):
                continue
            for combo in _iproduct(*pools):
                child = {pos: dict(vec)
                         for (pos, _), vec in zip(positions, combo)}
                v = production_value(cfg, p, child)
                if v is not None and v not in vals[p.lhs]:
                    vals[p.lhs].add(v)
                    changed = True
    return {nt: tuple(sorted(v)) for nt, v in vals.items()}


def _vec_passes(req: dict[str, int], vec: AttrVec) -> bool:
    if not req:
        return True
    d = dict(vec)
    return all(d.get(key, 0) >= b for key, b in req.items())


# --- LR(k) NFA ----------------------------------------------------------------


def build_lr_nfa(cfg: Cfg, L: FollowPartition, k: int) -> Automaton:
    """The LR(k) NFA over follow partition L.

    Vertices are (item, block, bounds) triples, discovered from the start
    item; with universes equal to the forward-reachable follow strings every
    (item, block) pair is discovered.  Prediction from X -> α · Y β with
    block λ̄ reaches (Y -> ·γ, μ̄) iff μ̄ meets First_k(Gen(β λ̄)) and the
    bounds imposed on Y are satisfiable for that production.
    """
    if L.k != k:
        raise ValueError(f"partition is for k={L.k}, requested k={k}")
    fk = FirstK(cfg, k)
    start_item = (cfg.start_production.pid, 0)
    start_block = L.block_containing(start_item, sentinel_string(k))
    if start_block is None:
        raise ValueError("partition lacks the sentinel follow string at start")
    start = LrVertex(start_item[0], start_item[1], start_block)

    nfa = Automaton(kind="lr", k=k, deterministic=False, cfg=cfg)
    vid: dict[LrVertex, int] = {}

    def intern(v: LrVertex) -> int:
        i = vid.get(v)
        if i is None:
            i = len(nfa.vertices)
            vid[v] = i
            nfa.vertices.append(v)
            nfa.eps.append(())
            nfa.edges.append(())
            nfa.actions.append(())
            queue.append(v)
        return i

    queue: deque[LrVertex] = deque()
    intern(start)
    while queue:
        v = queue.popleft()
        i = vid[v]
        p = cfg.productions[v.pid]
        eps: list[int] = []
        edges: list[tuple[Label, int]] = []
        acts: list[Action] = []
        if v.dot == len(p.rhs):
            for lam in v.block:
                acts.append(Action("reduce", v.pid, lam))
        else:
            sym = p.rhs[v.dot]
            # step edge; the follow block carries over (into the matching
            # block when the target item is partitioned more coarsely)
            tgt_block = L.block_containing((v.pid, v.dot + 1), v.block[0])
            if tgt_block is None or not all(l in tgt_block for l in v.block):
                raise ValueError(
                    f"partition is not step-consistent at production {v.pid} "
                    f"dot {v.dot + 1}")
            nb = retained_bounds(dict(v.bounds), p, v.dot + 1)
            edges.append((sym, intern(LrVertex(v.pid, v.dot + 1, tgt_block, nb))))
            if cfg.is_terminal(sym):
                las = set()
                for lam in v.block:
                    las |= fk.of_suffix(v.pid, v.dot, lam)
                for mu in sorted(las):
                    acts.append(Action("shift", None, mu))
            else:
                req = child_requirements(p, v.dot, v.bounds)
                pred_las = set()
                for lam in v.block:
                    pred_las |= fk.of_suffix(v.pid, v.dot + 1, lam)
                for q in cfg.prods_of(sym):
                    if not production_admits(cfg, q, req):
                        continue
                    qb = retained_bounds(req, q, 0)
                    for blk in L.blocks[(q.pid, 0)]:
                        if any(mu in pred_las for mu in blk):
                            eps.append(intern(LrVertex(q.pid, 0, blk, qb)))
        nfa.eps[i] = tuple(eps)
        nfa.edges[i] = tuple(edges)
        nfa.actions[i] = tuple(acts)
    return nfa


# --- RD NFA --------------------------------------------------------------------


def _normalize_marks(cfg: Cfg, unfoldable) -> frozenset:
    """Marks are (pid, 0-based rhs index) pairs naming unfoldable nonterminal
    occurrences; "all"/"none"/"source" expand to every occurrence, no
    occurrence, or the grammar's @-marks."""
    if isinstance(unfoldable, frozenset | set):
        return frozenset(unfoldable)
    marks = set()
    if unfoldable == "all":
        for p in cfg.productions:
            for i, s in enumerate(p.rhs):
                if not cfg.is_terminal(s):
                    marks.add((p.pid, i))
    elif unfoldable == "source":
        for p in cfg.productions:
            for i, flag in enumerate(p.unfold):
                if flag:
                    marks.add((p.pid, i))
    elif unfoldable != "none":
        raise ValueError(f"unknown unfoldable marks: {unfoldable!r}")
    return frozenset(marks)


def build_rd_nfa(cfg: Cfg, unfoldable="source") -> Automaton:
    """The recursive-descent NFA (lookahead length 0).

    A nonterminal occurrence is either expanded in place (when marked
    unfoldable, or when it sits in immediate left-recursive position) or
    entered through an explicit Recur action: a RecurStep(Y) edge leads to
    the recursion head #Y -> ·Y, which returns with a Return action once Y
    has been reduced.  The grammar's own start production plays the role of
    the outermost recursion head, so an all-unfoldable automaton is exactly
    the LR(0) NFA with no Recur/Return actions anywhere.
    """
    marks = _normalize_marks(cfg, unfoldable)
    nfa = Automaton(kind="rd", k=0, deterministic=False, cfg=cfg)
    vid: dict[RdVertex, int] = {}
    queue: deque[RdVertex] = deque()

    def intern(v: RdVertex) -> int:
        i = vid.get(v)
        if i is None:
            i = len(nfa.vertices)
            vid[v] = i
            nfa.vertices.append(v)
            nfa.eps.append(())
            nfa.edges.append(())
            nfa.actions.append(())
            queue.append(v)
        return i

    def predict(sym: str, r: str | None, req: dict[str, int],
                eps: list[int]):
        for q in cfg.prods_of(sym):
            if not production_admits(cfg, q, req):
                continue
            qb = retained_bounds(req, q, 0)
            eps.append(intern(RdVertex(q.pid, 0, None, r, qb)))

    intern(RdVertex(cfg.start_production.pid, 0, None, None))
    while queue:
        v = queue.popleft()
        i = vid[v]
        eps: list[int] = []
        edges: list[tuple[Label, int]] = []
        acts: list[Action] = []
        if v.aux is not None:
            if v.dot == 0:
                # #Y -> ·Y: step over Y, and predict Y's productions with Y
                # in left-recursive position
                edges.append((v.aux, intern(RdVertex(None, 1, v.aux, None))))
                predict(v.aux, v.aux, {}, eps)
            else:
                acts.append(Action("return", v.aux, ()))
        else:
            p = cfg.productions[v.pid]
            if v.dot == len(p.rhs):
                acts.append(Action("reduce", v.pid, ()))
            else:
                sym = p.rhs[v.dot]
                nb = retained_bounds(dict(v.bounds), p, v.dot + 1)
                edges.append((sym, intern(RdVertex(v.pid, v.dot + 1, None, None, nb))))
                if cfg.is_terminal(sym):
                    acts.append(Action("shift", None, ()))
                elif (v.pid, v.dot) in marks or (sym == v.r and v.dot == 0):
                    req = child_requirements(p, v.dot, v.bounds)
                    predict(sym, v.r, req, eps)
                else:
                    edges.append((("rs", sym), intern(RdVertex(None, 0, sym, sym))))
                    acts.append(Action("recur", sym, ()))
        nfa.eps[i] = tuple(eps)
        nfa.edges[i] = tuple(edges)
        nfa.actions[i] = tuple(acts)
    return nfa


# --- subset construction --------------------------------------------------------


def subset_construct(nfa: Automaton) -> Automaton:
    """Powerset determinization, reachable states only.

    ε-closures are memoized per NFA vertex; action sets are unions over the
    grouped vertices.  RecurStep(Y) is an ordinary edge label.  Outgoing
    edges on an attribute-carrying nonterminal are split into one label per
    inhabited valuation of that nonterminal, and a grouped vertex
    contributes its step successor only when the valuation meets the bounds
    that vertex imposes on the symbol (so differently-valued reductions can
    reach different states).
    """
    cfg = nfa.cfg
    closure_memo: dict[int, frozenset] = {}

    def closure(vids: Iterable[int]) -> tuple[int, ...]:
        out: set[int] = set()
        stack = list(vids)
        while stack:
            x = stack.pop()
            if x in out:
                continue
            hit = closure_memo.get(x)
            if hit is not None:
                out |= hit
                continue
            out.add(x)
            stack.extend(nfa.eps[x])
        return tuple(sorted(out))

    for x in range(len(nfa.vertices)):
        single = set()
        stack = [x]
        while stack:
            y = stack.pop()
            if y not in single:
                single.add(y)
                stack.extend(nfa.eps[y])
        closure_memo[x] = frozenset(single)

    vals = attr_values(cfg) if cfg.domains else {}

    def member_requirements(m: int) -> dict[str, int]:
        v = nfa.vertices[m]
        if v.pid is None:  # recursion head imposes nothing
            return {}
        return child_requirements(cfg.productions[v.pid], v.dot, v.bounds)

    dfa = Automaton(kind=nfa.kind, k=nfa.k, deterministic=True, cfg=cfg,
                    source=nfa)
    sid: dict[tuple[int, ...], int] = {}
    queue: deque[tuple[int, ...]] = deque()

    def intern(members: tuple[int, ...]) -> int:
        i = sid.get(members)
        if i is None:
            i = len(dfa.vertices)
            sid[members] = i
            dfa.vertices.append(members)
            dfa.eps.append(())
            dfa.edges.append(())
            dfa.actions.append(())
            queue.append(members)
        return i

    intern(closure([nfa.start]))
    while queue:
        members = queue.popleft()
        i = sid[members]
        # collect per-label target vertex sets
        targets: dict = {}
        for m in members:
            for label, t in nfa.edges[m]:
                if (isinstance(label, str) and not cfg.is_terminal(label)
                        and cfg.domain_of(label)):
                    req = member_requirements(m)
                    for vec in vals.get(label, ()):
                        if _vec_passes(req, vec):
                            targets.setdefault(("val", label, vec), set()).add(t)
                else:
                    targets.setdefault(label, set()).add(t)
        edges = []
        for label in sorted(targets, key=_label_key):
            edges.append((label, intern(closure(targets[label]))))
        dfa.edges[i] = tuple(edges)
        acts: dict = {}
        for m in members:
            for a in nfa.actions[m]:
                acts[a] = None
        dfa.actions[i] = tuple(sorted(acts, key=Action.sort_key))
    return dfa


# --- conflicts and recursion cycles ----------------------------------------------


@dataclass(frozen=True)
class Conflict:
    """Two or more distinct actions available on one lookahead in one state."""

    state: int
    lookahead: Lookahead
    actions: tuple[Action, ...]


def detect_conflicts(dfa: Automaton) -> list[Conflict]:
    if not dfa.deterministic:
        raise ValueError("conflict detection runs on a deterministic automaton")
    out = []
    for sid in range(len(dfa.vertices)):
        by_la: dict[Lookahead, list[Action]] = {}
        for a in dfa.actions[sid]:
            by_la.setdefault(a.lookahead, []).append(a)
        for la in sorted(by_la):
            acts = by_la[la]
            if len({(a.kind, a.target) for a in acts}) >= 2:
                out.append(Conflict(sid, la, tuple(sorted(acts, key=Action.sort_key))))
    return out


def check_recur_cycles(rd_dfa: Automaton) -> None:
    """Reject tables that could recur forever without consuming input: any
    state self-reachable through RecurStep edges is such a loop.  Raises
    InfiniteRecursion naming the recursion symbols along the cycle."""
    rs_edges: dict[int, list[tuple[str, int]]] = {}
    for sid in range(len(rd_dfa.vertices)):
        outs = [(label[1], t) for label, t in rd_dfa.edges[sid]
                if isinstance(label, tuple) and label[0] == "rs"]
        if outs:
            rs_edges[sid] = outs

    color: dict[int, int] = {}  # 1 = on stack, 2 = done
    for root in sorted(rs_edges):
        if color.get(root):
            continue
        # iterative DFS keeping (state, label that entered it)
        path: list[tuple[int, str | None]] = [(root, None)]
        on_path = {root: 0}
        iters = [iter(rs_edges.get(root, ()))]
        color[root] = 1
        while iters:
            try:
                sym, t = next(iters[-1])
            except StopIteration:
                iters.pop()
                state, _ = path.pop()
                color[state] = 2
                del on_path[state]
                continue
            if color.get(t) == 1:
                idx = on_path[t]
                cycle_states = path[idx:]
                # each state's entering symbol within the cycle; the first
                # state is re-entered by the back edge just found
                syms = [sym] + [lab for _, lab in cycle_states[1:]]
                raise InfiniteRecursion(tuple(syms))
            if color.get(t) == 2:
                continue
            color[t] = 1
            on_path[t] = len(path)
            path.append((t, sym))
            iters.append(iter(rs_edges.get(t, ())))
    return None

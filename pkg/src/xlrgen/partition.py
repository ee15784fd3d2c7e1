"""Optimized k-follow-set partitioning.

The canonical LR(k) automaton separates every follow string into its own
block, which is precise but wasteful: most follow strings can never take
part in a conflict, and distinguishing them multiplies states for nothing.
This module computes a partition with the same conflict behavior while
staying far coarser, and it never materializes the canonical automaton.
The pipeline:

1. forward_reachable  - which follow strings can occur at all (flood fill).
2. potentially_conflicting - which lookaheads could be involved in a
   conflict, found on the LR(0) DFA plus follow-universe arithmetic.
3. initial_backward_partition - separate follow strings exactly where they
   disagree about a potentially-conflicting lookahead.
4. backward_refine - pull those separations back along prediction and step
   edges (preimage refinement) until stable.
5. forward_refine - regroup the backward blocks by reachability from the
   start (image refinement over the blocks as base elements), merging
   blocks that are never told apart by any context.
6. optimize - the whole pipeline, plus a per-production meet that makes
   each dot position refine the next one so step edges always land in a
   single block of the target item.

All partitions are per dotted production and are kept as sorted tuples of
sorted blocks so results are byte-reproducible.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Mapping

from .automata import (
    Automaton,
    Block,
    FirstK,
    FollowPartition,
    Item,
    Lookahead,
    _all_items,
    _sorted_block,
    _sorted_blocks,
    build_lr_nfa,
    follow_universe,
    lr0_partition,
    subset_construct,
)
from .flatten import Cfg

Partition = tuple[Block, ...]


# --- step 1: reachable follow strings ----------------------------------------


@dataclass(frozen=True)
class ReachableFollows:
    """Forward-reachable k-follow strings, per production.

    Every production of one nonterminal is reached through the same set of
    contexts, so the set only depends on the left-hand side; it is stored
    per production id because the rest of the pipeline is keyed that way.
    """

    cfg: Cfg
    k: int
    per_production: Mapping[int, Block]

    def universe(self, pid: int) -> Block:
        return self.per_production[pid]


def forward_reachable(cfg: Cfg, k: int) -> ReachableFollows:
    """Least fixed point of: the sentinel string follows the start
    production, and a string following X -> α Y β contributes
    First_k(Gen(β λ)) to every production of Y."""
    fu = follow_universe(cfg, k)
    per = {p.pid: _sorted_block(fu[p.lhs]) for p in cfg.productions}
    return ReachableFollows(cfg, k, per)


# --- step 2: lookaheads that can be involved in a conflict --------------------


@dataclass(frozen=True)
class ConflictLookaheads:
    """Per dotted production: the lookaheads on which it could take part in
    a conflict with some co-reachable dotted production."""

    cfg: Cfg
    k: int
    per_item: Mapping[Item, Block]

    def lookaheads(self, item: Item) -> Block:
        return self.per_item.get(item, ())


def potentially_conflicting(cfg: Cfg, k: int,
                            lr0_dfa: Automaton) -> ConflictLookaheads:
    """A lookahead μ is potentially conflicting at item Π̂ when some item
    Π̂' shares a reachable LR(0) DFA state with Π̂ and, for some reachable
    follow strings, the two items carry distinct actions on μ.  Actions are
    recovered from item shape alone: an end-of-production item reduces on
    each of its follow strings, an item before a terminal shifts on
    First_k(Gen(rhs-remainder · λ)).  The canonical automaton is never
    built."""
    if not lr0_dfa.deterministic or lr0_dfa.k != 0 or lr0_dfa.kind != "lr":
        raise ValueError("potentially_conflicting needs the LR(0) DFA")
    rf = forward_reachable(cfg, k)
    fk = FirstK(cfg, k)

    shift_cache: dict[Item, frozenset] = {}

    def shift_lookaheads(item: Item) -> frozenset:
        hit = shift_cache.get(item)
        if hit is None:
            pid, dot = item
            las: set = set()
            for lam in rf.per_production[pid]:
                las |= fk.of_suffix(pid, dot, lam)
            hit = frozenset(las)
            shift_cache[item] = hit
        return hit

    per: dict[Item, set] = {}

    def note(item: Item, mus) -> None:
        if mus:
            per.setdefault(item, set()).update(mus)

    seen_sets: set = set()
    for sid in range(len(lr0_dfa.vertices)):
        members = lr0_dfa.vertices[sid]
        items = frozenset((lr0_dfa.source.vertices[m].pid,
                           lr0_dfa.source.vertices[m].dot) for m in members)
        if items in seen_sets:
            continue
        seen_sets.add(items)
        enders = []
        shifters = []
        for pid, dot in items:
            if dot == len(cfg.productions[pid].rhs):
                enders.append((pid, dot))
            elif cfg.is_terminal(cfg.productions[pid].rhs[dot]):
                shifters.append((pid, dot))
        if not enders:
            continue
        enders.sort()
        shifters.sort()
        for i, a in enumerate(enders):
            ua = set(rf.per_production[a[0]])
            for b in enders[i + 1:]:
                mus = ua & set(rf.per_production[b[0]])
                note(a, mus)
                note(b, mus)
            for s in shifters:
                mus = ua & shift_lookaheads(s)
                note(a, mus)
                note(s, mus)
    return ConflictLookaheads(cfg, k, {item: _sorted_block(v)
                                       for item, v in sorted(per.items())})


# --- partitions and refinement helpers -----------------------------------------


def _refine(part: Partition, cut: frozenset) -> Partition:
    """Split every block of `part` along the boundary of `cut`."""
    out = []
    changed = False
    for b in part:
        ins = tuple(l for l in b if l in cut)
        if not ins or len(ins) == len(b):
            out.append(b)
            continue
        outs = tuple(l for l in b if l not in cut)
        out.append(ins)
        out.append(outs)
        changed = True
    return _sorted_blocks(out) if changed else part


def _occurrences(cfg: Cfg) -> dict[str, list[Item]]:
    """Items X -> α · Y β per nonterminal Y: the sources of prediction
    edges into Y's productions."""
    occ: dict[str, list[Item]] = {}
    for p in cfg.productions:
        for dot, sym in enumerate(p.rhs):
            if not cfg.is_terminal(sym):
                occ.setdefault(sym, []).append((p.pid, dot))
    return occ


# --- step 3: the immediately-conflicting split ---------------------------------


def initial_backward_partition(cl: ConflictLookaheads,
                               rf: ReachableFollows) -> FollowPartition:
    """Two follow strings stay together at an item exactly when they agree,
    for every potentially-conflicting lookahead μ of that item, on whether
    μ ∈ First_k(Gen(rhs-remainder · λ)).  Items without potentially-
    conflicting lookaheads keep their whole universe in one block."""
    if cl.k != rf.k:
        raise ValueError("conflict lookaheads and follows disagree on k")
    cfg, k = rf.cfg, rf.k
    fk = FirstK(cfg, k)
    blocks: dict[Item, Partition] = {}
    for item in _all_items(cfg):
        pid, dot = item
        uni = rf.per_production[pid]
        if not uni:
            blocks[item] = ()
            continue
        mus = cl.lookaheads(item)
        if not mus:
            blocks[item] = (uni,)
            continue
        groups: dict[tuple, list[Lookahead]] = {}
        for lam in uni:
            compat = fk.of_suffix(pid, dot, lam)
            sig = tuple(mu in compat for mu in mus)
            groups.setdefault(sig, []).append(lam)
        blocks[item] = _sorted_blocks(groups.values())
    return FollowPartition(k, blocks)


# --- step 4: backward (preimage) refinement -------------------------------------


def backward_refine(cfg: Cfg, k: int, L0: FollowPartition) -> FollowPartition:
    """Refine each item's partition by the preimages of its out-edge
    targets' blocks until stable.  A step edge maps a follow string to
    itself one dot later, so its preimage refinement is a meet with the
    next dot's partition; a prediction edge from X -> α · Y β on λ reaches
    (Y -> ·γ, μ) for compatible μ, so the preimage of a block Z is the set
    of λ whose compatible lookaheads meet Z.  Convergence makes every dot
    position refine the one after it."""
    if L0.k != k:
        raise ValueError(f"partition is for k={L0.k}, requested k={k}")
    fk = FirstK(cfg, k)
    parts: dict[Item, Partition] = dict(L0.blocks)
    items = _all_items(cfg)
    occ = _occurrences(cfg)

    def process(item: Item) -> bool:
        pid, dot = item
        p = cfg.productions[pid]
        if dot == len(p.rhs):
            return False
        cur = parts[item]
        if not cur:
            return False
        for z in parts[(pid, dot + 1)]:
            cur = _refine(cur, frozenset(z))
        sym = p.rhs[dot]
        if not cfg.is_terminal(sym):
            uni = [l for b in cur for l in b]
            for q in cfg.prods_of(sym):
                for z in parts[(q.pid, 0)]:
                    zs = frozenset(z)
                    pre = frozenset(l for l in uni
                                    if fk.of_suffix(pid, dot + 1, l) & zs)
                    cur = _refine(cur, pre)
        if cur != parts[item]:
            parts[item] = cur
            return True
        return False

    def predecessors(item: Item):
        pid, dot = item
        out = []
        if dot > 0:
            out.append((pid, dot - 1))
        else:
            out.extend(occ.get(cfg.productions[pid].lhs, ()))
        return out

    _run_worklist(items, process, predecessors, _budget(cfg, parts))
    return FollowPartition(k, parts)


# --- step 5: forward (image) refinement ------------------------------------------


def forward_refine(cfg: Cfg, k: int, L0: FollowPartition) -> FollowPartition:
    """Regroup, then refine by reachability.  The blocks of L0 become base
    elements; each item restarts from a single block (its whole universe)
    and is split only by images of its predecessors' blocks: the step image
    carries a block one dot forward, the prediction image of a block F at
    X -> α · Y β is every base block of (Y -> ·γ, 0) containing a lookahead
    compatible with some member of F.  Base elements are never split, so
    the result is a grouping of L0 — this is where follow strings that
    behave alike (same contexts reach them) fuse back together."""
    if L0.k != k:
        raise ValueError(f"partition is for k={L0.k}, requested k={k}")
    fk = FirstK(cfg, k)
    base: dict[Item, Partition] = dict(L0.blocks)
    parts: dict[Item, Partition] = {}
    for item, bs in base.items():
        uni = _sorted_block(l for b in bs for l in b)
        parts[item] = (uni,) if uni else ()
    items = _all_items(cfg)
    occ = _occurrences(cfg)

    def image(item: Item, lams: frozenset) -> frozenset:
        """Union of base blocks of `item` that meet `lams`."""
        out: set = set()
        for b in base[item]:
            if any(l in lams for l in b):
                out.update(b)
        return frozenset(out)

    def process(item: Item) -> bool:
        pid, dot = item
        cur = parts[item]
        if not cur:
            return False
        if dot > 0:
            for f in parts[(pid, dot - 1)]:
                cur = _refine(cur, image(item, frozenset(f)))
        else:
            for src_pid, src_dot in occ.get(cfg.productions[pid].lhs, ()):
                for f in parts[(src_pid, src_dot)]:
                    compat: set = set()
                    for lam in f:
                        compat |= fk.of_suffix(src_pid, src_dot + 1, lam)
                    cur = _refine(cur, image(item, frozenset(compat)))
        if cur != parts[item]:
            parts[item] = cur
            return True
        return False

    def successors(item: Item):
        pid, dot = item
        p = cfg.productions[pid]
        out = []
        if dot < len(p.rhs):
            out.append((pid, dot + 1))
            sym = p.rhs[dot]
            if not cfg.is_terminal(sym):
                out.extend((q.pid, 0) for q in cfg.prods_of(sym))
        return out

    _run_worklist(items, process, successors, _budget(cfg, parts))
    return FollowPartition(k, parts)


# --- worklist driver ---------------------------------------------------------------


def _budget(cfg: Cfg, parts: Mapping[Item, Partition]) -> int:
    total = sum(len(b) for bs in parts.values() for b in bs)
    return max(64, 4 * len(parts) * (2 + total))


def _run_worklist(items, process, dependents, budget: int) -> None:
    """FIFO fixpoint: seed every item in production-id order, re-enqueue an
    item's dependents when its partition changes.  The budget bounds total
    processed items (each change removes a block boundary forever, so the
    bound is generous); exceeding it means a refinement failed to be
    monotone, which is a bug worth crashing on."""
    queue = deque(items)
    queued = set(items)
    processed = 0
    while queue:
        item = queue.popleft()
        queued.discard(item)
        processed += 1
        if processed > budget:
            raise RuntimeError("partition refinement failed to converge")
        if process(item):
            for dep in dependents(item):
                if dep not in queued:
                    queued.add(dep)
                    queue.append(dep)


# --- step 6: the full pipeline -------------------------------------------------------


def optimize(cfg: Cfg, k: int) -> FollowPartition:
    """Run the whole refinement pipeline and return a partition ready for
    the LR(k) NFA construction.

    After the forward pass the per-dot partitions of one production can
    disagree; the final sweep meets each dot with its successor (from the
    end of the production backwards) so every block steps into exactly one
    block of the next item.  A finer-than-necessary partition is always
    safe: it only moves the automaton closer to canonical."""
    rf = forward_reachable(cfg, k)
    lr0_dfa = subset_construct(build_lr_nfa(cfg, lr0_partition(cfg), 0))
    cl = potentially_conflicting(cfg, k, lr0_dfa)
    l_init = initial_backward_partition(cl, rf)
    l_bwd = backward_refine(cfg, k, l_init)
    l_fwd = forward_refine(cfg, k, l_bwd)
    parts = dict(l_fwd.blocks)
    for p in cfg.productions:
        for dot in range(len(p.rhs) - 1, -1, -1):
            cur = parts[(p.pid, dot)]
            for z in parts[(p.pid, dot + 1)]:
                cur = _refine(cur, frozenset(z))
            parts[(p.pid, dot)] = cur
    return FollowPartition(k, parts)

"""Independent verification back-end: chart parser and language enumeration.

Everything here is deliberately implemented by different methods than the
production code paths so the two sides can check each other:

  * `oracle_parse` is a chart (Earley-style) recognizer with back-pointers
    and bounded tree enumeration — no parse tables involved.
  * `enumerate_language` computes all terminal strings of a flattened
    grammar up to a length cap by a bottom-up fixpoint over productions.
  * `enumerate_bnf` computes the same thing denotationally from the surface
    grammar's expression structure, never going through the flattener.
  * `attr_valid` decides whether a parse tree admits a consistent attribute
    assignment by explicit search over the (small) value domains rather
    than by the max-attainable-value propagation the runtime uses.

Strings are tuples of terminal symbol names throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .grammar import Alt, BnfGrammar, Concat, ListOf, Opt, Plus, Star, Sym, Tagged
from .flatten import Cfg, Production

MAX_ENUM_LEN = 12


@dataclass(frozen=True)
class OTree:
    """Oracle parse tree: a production applied to subtrees / terminal leaves."""
    pid: int
    children: tuple

    def fingerprint(self):
        return (self.pid, tuple(
            c.fingerprint() if isinstance(c, OTree) else c for c in self.children))


@dataclass
class OracleResult:
    accepted: bool
    trees: list[OTree]
    tree_count: int        # number of distinct trees found, capped at the limit
    capped: bool           # True when enumeration stopped at the limit


# --- chart parser -----------------------------------------------------------

def oracle_parse(cfg: Cfg, syms: list[str], limit: int = 16) -> OracleResult:
    """Recognize a terminal-symbol stream; enumerate up to `limit` trees."""
    for s in syms:
        if not cfg.is_terminal(s):
            raise ValueError(f"not a terminal: {s!r}")
    n = len(syms)
    prods = cfg.productions

    # chart[i]: set of (pid, dot, origin); causes[(i, item)]: list of
    # (prev_pos, cause) with cause ("t", terminal_pos) or
    # ("n", child_pid, child_origin, child_end).
    chart: list[set] = [set() for _ in range(n + 1)]
    causes: dict = {}

    def add(i, item, prev=None, cause=None):
        new = item not in chart[i]
        if new:
            chart[i].add(item)
            causes[(i, item)] = []
        if cause is not None:
            entry = (prev, cause)
            if entry not in causes[(i, item)]:
                causes[(i, item)].append(entry)
        return new

    for pid in cfg.by_lhs.get(cfg.start, []):
        add(0, (pid, 0, 0))

    for i in range(n + 1):
        work = list(chart[i])
        while work:
            pid, dot, origin = work.pop()
            rhs = prods[pid].rhs
            if dot == len(rhs):
                # completer; chart[origin] is final for origin < i, and for
                # origin == i later-arriving customers run the check below
                lhs = prods[pid].lhs
                for ppid, pdot, porigin in list(chart[origin]):
                    prhs = prods[ppid].rhs
                    if pdot < len(prhs) and prhs[pdot] == lhs:
                        adv = (ppid, pdot + 1, porigin)
                        if add(i, adv, prev=origin, cause=("n", pid, origin, i)):
                            work.append(adv)
                continue
            nxt = rhs[dot]
            if cfg.is_terminal(nxt):
                if i < n and syms[i] == nxt:
                    add(i + 1, (pid, dot + 1, origin), prev=i, cause=("t", i))
                continue
            for q in cfg.by_lhs.get(nxt, []):
                if add(i, (q, 0, i)):
                    work.append((q, 0, i))
            # the predicted nonterminal may already be complete at i with an
            # empty span; advance over it now (the mirror of the completer)
            for dpid, ddot, dorigin in list(chart[i]):
                if dorigin == i and ddot == len(prods[dpid].rhs) \
                        and prods[dpid].lhs == nxt:
                    adv = (pid, dot + 1, origin)
                    if add(i, adv, prev=i, cause=("n", dpid, i, i)):
                        work.append(adv)

    finals = [(pid, len(prods[pid].rhs), 0)
              for pid in cfg.by_lhs.get(cfg.start, [])
              if (pid, len(prods[pid].rhs), 0) in chart[n]]
    if not finals:
        return OracleResult(False, [], 0, False)

    # bounded tree enumeration from back-pointers
    out: list[OTree] = []
    capped = [False]

    def derive(i, item, stack):
        """Yield children lists for `item` ending at position i."""
        pid, dot, origin = item
        if dot == 0:
            if i == origin:
                yield []
            return
        key = (i, item)
        if key in stack:
            return                       # derivation cycle: skip that route
        stack = stack | {key}
        for prev_pos, cause in causes.get(key, []):
            head = (pid, dot - 1, origin)
            for left in derive(prev_pos, head, stack):
                if cause[0] == "t":
                    yield left + [syms[cause[1]]]
                else:
                    _, cpid, corig, cend = cause
                    citem = (cpid, len(prods[cpid].rhs), corig)
                    for sub in derive(cend, citem, stack):
                        yield left + [OTree(cpid, tuple(sub))]
                        if capped[0]:
                            return

    seen = set()
    for f in finals:
        for children in derive(n, f, frozenset()):
            t = OTree(f[0], tuple(children))
            fp = t.fingerprint()
            if fp in seen:
                continue
            seen.add(fp)
            out.append(t)
            if len(out) >= limit:
                capped[0] = True
                break
        if capped[0]:
            break
    return OracleResult(True, out, len(out), capped[0])


# --- language enumeration ---------------------------------------------------

def _concat_capped(parts: list[set], max_len: int) -> set:
    acc = {()}
    for lang in parts:
        nxt = set()
        for a in acc:
            room = max_len - len(a)
            for b in lang:
                if len(b) <= room:
                    nxt.add(a + b)
        acc = nxt
        if not acc:
            break
    return acc


def enumerate_language(cfg: Cfg, max_len: int) -> set:
    """All terminal strings (symbol tuples) of length <= max_len."""
    if max_len > MAX_ENUM_LEN:
        raise ValueError(f"enumeration capped at length {MAX_ENUM_LEN}")
    langs: dict[str, set] = {nt: set() for nt in cfg.nonterminals}

    def val(sym: str) -> set:
        return {(sym,)} if cfg.is_terminal(sym) else langs[sym]

    changed = True
    while changed:
        changed = False
        for p in cfg.productions:
            parts = [val(s) for s in p.rhs]
            for w in _concat_capped(parts, max_len):
                if w not in langs[p.lhs]:
                    langs[p.lhs].add(w)
                    changed = True
    return set(langs[cfg.start])


def enumerate_bnf(g: BnfGrammar, max_len: int) -> set:
    """Denotational enumeration straight off the surface expressions."""
    if max_len > MAX_ENUM_LEN:
        raise ValueError(f"enumeration capped at length {MAX_ENUM_LEN}")
    tokens = {t.name for t in g.tokens}
    langs: dict[str, set] = {}
    for r in g.rules:
        langs.setdefault(r.lhs, set())

    def ev(e) -> set:
        if isinstance(e, Sym):
            if e.name in tokens:
                return {(e.name,)}
            return set(langs.get(e.name, set()))
        if isinstance(e, Tagged):
            return ev(e.item)
        if isinstance(e, Concat):
            return _concat_capped([ev(c) for c in e.items], max_len)
        if isinstance(e, Alt):
            out = set()
            for c in e.items:
                out |= ev(c)
            return out
        if isinstance(e, Opt):
            return ev(e.item) | {()}
        if isinstance(e, Star):
            base = ev(e.item)
            acc = {()}
            while True:
                nxt = acc | _concat_capped([base, acc], max_len)
                if nxt == acc:
                    return acc
                acc = nxt
        if isinstance(e, Plus):
            base = ev(e.item)
            acc = set(base)
            while True:
                nxt = acc | _concat_capped([base, acc], max_len)
                if nxt == acc:
                    return acc
                acc = nxt
        if isinstance(e, ListOf):
            item, sep = ev(e.item), ev(e.sep)
            acc = set(item)
            while True:
                nxt = acc | _concat_capped([acc, sep, item], max_len)
                if nxt == acc:
                    return acc
                acc = nxt
        raise TypeError(f"unknown expression {e!r}")

    changed = True
    while changed:
        changed = False
        for r in g.rules:
            for w in ev(r.rhs):
                if w not in langs[r.lhs]:
                    langs[r.lhs].add(w)
                    changed = True
    return set(langs[g.start])


# --- attribute validity by explicit search ----------------------------------

def attr_valid(cfg: Cfg, tree: OTree) -> bool:
    """Does some assignment of attribute values satisfy every constraint?

    Works bottom-up over the tree keeping, per node, the full set of
    feasible value vectors for its symbol's attribute keys.
    """
    feas = _feasible(cfg, tree)
    return bool(feas)


def _feasible(cfg: Cfg, tree: OTree) -> list[tuple]:
    p = cfg.productions[tree.pid]
    keys = sorted(cfg.domain_of(p.lhs))
    child_feas: list = []
    child_keys: list = []
    kids = [c for c in tree.children]
    for c in kids:
        if isinstance(c, OTree):
            child_feas.append(_feasible(cfg, c))
            child_keys.append(sorted(cfg.domain_of(cfg.productions[c.pid].lhs)))
        else:
            child_feas.append([()])
            child_keys.append([])

    by_pos: dict[int, list] = {}
    lhs_le: dict[str, int] = {}
    for c in p.constraints:
        if c.form == "lhs_le":
            lhs_le[c.key] = min(lhs_le.get(c.key, c.bound), c.bound)
        else:
            by_pos.setdefault(c.index - 1, []).append(c)

    dom = cfg.domain_of(p.lhs)
    if any(not f for f in child_feas):
        return []                        # some child admits no assignment
    ranges = [range(dom[k]) for k in keys]
    out = []
    for vec in product(*ranges) if keys else [()]:
        v = dict(zip(keys, vec))
        if any(v[k] > b for k, b in lhs_le.items() if k in v):
            continue
        ok = True
        for i, cs in by_pos.items():
            ck = child_keys[i]
            found = False
            for wvec in child_feas[i]:
                w = dict(zip(ck, wvec))
                good = True
                for c in cs:
                    if c.form == "rhs_ge":
                        if w.get(c.key, -1) < c.bound:
                            good = False
                            break
                    else:  # lhs_le_rhs
                        if c.other_key not in w or v[c.key] > w[c.other_key]:
                            good = False
                            break
                if good:
                    found = True
                    break
            if not found:
                ok = False
                break
        if ok:
            out.append(vec)
    return out


def k_prefixes(lang: set, k: int, sentinel: str) -> set:
    """k-length lookahead tuples of each string, padded with the sentinel."""
    return {tuple((w + (sentinel,) * k)[:k]) for w in lang}

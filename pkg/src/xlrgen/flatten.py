"""Lowering from the surface grammar to a plain context-free core.

Each rule body is decomposed into productions over bare symbols.  Complex
subexpressions inside a sequence get fresh nonterminals named
_<RuleLhs>_<counter>; repetition lowers to right recursion:

    e?            X -> e,  X -> (empty)
    e*            X -> e X,  X -> (empty)
    e+            X -> e X,  X -> e
    List[e :: d]  X -> e T,  T -> d e T,  T -> (empty)

Alternation splits into separate productions and sequences of simple symbols
are inlined, so a body like `E LB E (COMMA E)* COMMA? RB` becomes
`E -> E LB E X Y RB` with `X -> COMMA E X | (empty)` and
`Y -> COMMA | (empty)`.

Precedence groups lower to integer attributes prL and prR on the grouped
nonterminals, constrained per associativity so that exactly the intended
operator nestings admit consistent attribute values.  Rule constraints are
resolved positionally: rhs_begin / rhs_end / rhs_mid name the first / last /
inner top-level items of each alternative, rhs names all of them, and
rhs_tag[t] finds the tagged item wherever lowering placed it.  Constraints
on symbols that do not carry the attribute are dropped.  Fresh symbols
inherit the attribute domain of their rule's left-hand side and carry
pass-through constraints lhs[a] <= rhs_i[a] at every position whose symbol
carries the attribute, so bounds imposed on a lowered subexpression reach
its parts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .grammar import (
    Alt, AttrConstraint, BnfGrammar, BnfRule, Concat, GrammarError, ListOf,
    Opt, Plus, Star, Sym, Tagged,
)

SENTINEL = "⊣"


@dataclass(frozen=True)
class FlatConstraint:
    """Constraint on one production, with 1-based rhs positions.

    lhs_le:      lhs[key] <= bound
    rhs_ge:      rhs[index][key] >= bound
    lhs_le_rhs:  lhs[key] <= rhs[index][other_key]
    """
    form: str
    key: str
    bound: int | None = None
    index: int | None = None
    other_key: str | None = None

    def render(self) -> str:
        if self.form == "lhs_le":
            return f"lhs[{self.key}]<={self.bound}"
        if self.form == "rhs_ge":
            return f"rhs{self.index}[{self.key}]>={self.bound}"
        return f"lhs[{self.key}]<=rhs{self.index}[{self.other_key}]"


@dataclass(frozen=True)
class Provenance:
    rule: str                 # display name of the source rule
    lhs: str
    variant: str | None
    role: str                 # 'top', 'sub' or 'wrapper'


@dataclass(frozen=True)
class Production:
    pid: int
    lhs: str
    rhs: tuple[str, ...]
    constraints: tuple[FlatConstraint, ...] = ()
    provenance: Provenance | None = None
    unfold: tuple[bool, ...] = ()

    def render(self) -> str:
        body = " ".join(self.rhs) if self.rhs else "(empty)"
        cs = ""
        if self.constraints:
            cs = "  where " + ", ".join(c.render() for c in self.constraints)
        return f"{self.lhs} -> {body}{cs}"


@dataclass
class Cfg:
    nonterminals: list[str]
    terminals: list[str]
    start: str
    productions: list[Production]
    domains: dict[str, dict[str, int]] = field(default_factory=dict)
    cps_eligible: frozenset = frozenset()
    wrapper: str | None = None          # set when a start wrapper was inserted
    token_defs: list = field(default_factory=list)

    def __post_init__(self):
        self.by_lhs: dict[str, list[int]] = {}
        for p in self.productions:
            self.by_lhs.setdefault(p.lhs, []).append(p.pid)
        self._nonterm_set = set(self.nonterminals)
        self._term_set = set(self.terminals)

    def is_terminal(self, sym: str) -> bool:
        return sym in self._term_set or sym == SENTINEL

    def prods_of(self, nt: str) -> list[Production]:
        return [self.productions[i] for i in self.by_lhs.get(nt, [])]

    @property
    def start_production(self) -> Production:
        pids = self.by_lhs[self.start]
        assert len(pids) == 1
        return self.productions[pids[0]]

    def domain_of(self, sym: str) -> dict[str, int]:
        return self.domains.get(sym, {})

    def render(self) -> str:
        lines = [f"start {self.start}"]
        for p in self.productions:
            lines.append(f"{p.pid}: {p.render()}")
        return "\n".join(lines) + "\n"


# --- precedence lowering ----------------------------------------------------

def lower_precedence(g: BnfGrammar) -> dict[tuple[str, str | None], tuple[AttrConstraint, ...]]:
    """Attribute constraints implementing the precedence stanza.

    Level l is the zero-based group index; later groups bind tighter.  The
    value range of prL/prR is the number of groups.  A node's prL (prR) says
    how tightly its leftmost (rightmost) edge can be captured by an enclosing
    operator, so e.g. a left-associative operator admits its own level on the
    left operand but requires strictly tighter levels elsewhere.
    """
    out: dict[tuple[str, str | None], tuple[AttrConstraint, ...]] = {}
    for level, grp in enumerate(g.prec):
        nxt = level + 1
        for ref in grp.rules:
            c: list[AttrConstraint] = []
            a = grp.assoc
            if a == "none":
                c += [AttrConstraint("lhs_le", "prL", bound=level),
                      AttrConstraint("lhs_le", "prR", bound=level),
                      AttrConstraint("rhs_ge", "prL", bound=nxt, selector="rhs"),
                      AttrConstraint("rhs_ge", "prR", bound=nxt, selector="rhs")]
            elif a == "left":
                c += [AttrConstraint("lhs_le", "prL", bound=level),
                      AttrConstraint("lhs_le", "prR", bound=level),
                      AttrConstraint("rhs_ge", "prR", bound=level, selector="rhs_begin"),
                      AttrConstraint("rhs_ge", "prL", bound=nxt, selector="rhs_mid"),
                      AttrConstraint("rhs_ge", "prR", bound=nxt, selector="rhs_mid"),
                      AttrConstraint("rhs_ge", "prL", bound=nxt, selector="rhs_end"),
                      AttrConstraint("lhs_le_rhs", "prL", selector="rhs_begin", other_key="prL"),
                      AttrConstraint("lhs_le_rhs", "prR", selector="rhs_end", other_key="prR")]
            elif a == "right":
                c += [AttrConstraint("lhs_le", "prL", bound=level),
                      AttrConstraint("lhs_le", "prR", bound=level),
                      AttrConstraint("rhs_ge", "prR", bound=nxt, selector="rhs_begin"),
                      AttrConstraint("rhs_ge", "prL", bound=nxt, selector="rhs_mid"),
                      AttrConstraint("rhs_ge", "prR", bound=nxt, selector="rhs_mid"),
                      AttrConstraint("rhs_ge", "prL", bound=level, selector="rhs_end"),
                      AttrConstraint("lhs_le_rhs", "prL", selector="rhs_begin", other_key="prL"),
                      AttrConstraint("lhs_le_rhs", "prR", selector="rhs_end", other_key="prR")]
            elif a == "prefix":
                c += [AttrConstraint("lhs_le", "prR", bound=level),
                      AttrConstraint("rhs_ge", "prL", bound=nxt, selector="rhs_mid"),
                      AttrConstraint("rhs_ge", "prR", bound=nxt, selector="rhs_mid"),
                      AttrConstraint("rhs_ge", "prL", bound=nxt, selector="rhs_end"),
                      AttrConstraint("lhs_le_rhs", "prR", selector="rhs", other_key="prR")]
            elif a == "postfix":
                c += [AttrConstraint("lhs_le", "prL", bound=level),
                      AttrConstraint("rhs_ge", "prR", bound=nxt, selector="rhs_begin"),
                      AttrConstraint("rhs_ge", "prL", bound=nxt, selector="rhs_mid"),
                      AttrConstraint("rhs_ge", "prR", bound=nxt, selector="rhs_mid"),
                      AttrConstraint("lhs_le_rhs", "prL", selector="rhs", other_key="prL")]
            out[ref] = tuple(c)
    return out


# --- flattening -------------------------------------------------------------

@dataclass
class _Pos:
    sym: str
    tags: tuple[str, ...] = ()
    unfold: bool = False


@dataclass
class _Emitted:
    lhs: str
    positions: list[_Pos]
    role: str


class _RuleFlattener:
    def __init__(self, owner: "_Flattener", rule: BnfRule):
        self.owner = owner
        self.rule = rule
        self.emitted: list[_Emitted] = []
        self.jobs: list[tuple[str, object]] = []
        self._seen_sub: set[tuple[str, tuple[str, ...]]] = set()

    def fresh(self) -> str:
        return self.owner.fresh(self.rule.lhs)

    def run(self):
        self.lower(self.rule.lhs, self.rule.rhs, "top")
        while self.jobs:
            lhs, expr = self.jobs.pop(0)
            self.lower(lhs, expr, "sub")
        return self.emitted

    def emit(self, lhs: str, positions: list[_Pos], role: str):
        if role == "sub":
            key = (lhs, tuple(p.sym for p in positions))
            if key in self._seen_sub:
                return
            self._seen_sub.add(key)
        self.emitted.append(_Emitted(lhs, positions, role))

    def item(self, e) -> _Pos:
        """Resolve one sequence item to a symbol, lowering if complex."""
        tags: list[str] = []
        while isinstance(e, Tagged):
            tags.append(e.tag)
            e = e.item
        if isinstance(e, Sym):
            return _Pos(e.name, tuple(tags), e.unfold)
        f = self.fresh()
        self.jobs.append((f, e))
        return _Pos(f, tuple(tags), False)

    def seq_items(self, e) -> list[_Pos]:
        while isinstance(e, Tagged):
            e = e.item                  # a tag on a whole sequence has no position
        items = e.items if isinstance(e, Concat) else (e,)
        return [self.item(c) for c in items]

    def lower(self, lhs: str, e, role: str):
        while isinstance(e, Tagged):
            e = e.item
        if isinstance(e, Alt):
            for branch in e.items:
                self.lower(lhs, branch, role)
        elif isinstance(e, Opt):
            self.lower(lhs, e.item, role)
            self.emit(lhs, [], role)
        elif isinstance(e, Star):
            body = self.seq_items(e.item)
            self.emit(lhs, body + [_Pos(lhs)], role)
            self.emit(lhs, [], role)
        elif isinstance(e, Plus):
            body = self.seq_items(e.item)
            self.emit(lhs, body + [_Pos(lhs)], role)
            self.emit(lhs, list(body), role)
        elif isinstance(e, ListOf):
            item = self.seq_items(e.item)
            sep = self.seq_items(e.sep)
            t = self.fresh()
            self.emit(lhs, item + [_Pos(t)], role)
            self.emit(t, sep + list(item) + [_Pos(t)], "sub")
            self.emit(t, [], "sub")
        else:
            self.emit(lhs, self.seq_items(e), role)


class _Flattener:
    def __init__(self, g: BnfGrammar):
        self.g = g
        self.counters: dict[str, int] = {}
        self.fresh_names: list[str] = []

    def fresh(self, lhs: str) -> str:
        n = self.counters.get(lhs, 0)
        self.counters[lhs] = n + 1
        name = f"_{lhs}_{n}"
        self.fresh_names.append(name)
        return name


def lower_constraints(
    constraints: tuple[AttrConstraint, ...],
    emitted: list[_Emitted],
    domains: dict[str, dict[str, int]],
) -> dict[int, list[FlatConstraint]]:
    """Resolve a rule's constraints against its lowered productions.

    Returns constraint lists indexed by position in `emitted`.  Positional
    selectors resolve against each top production; rhs_tag finds the tagged
    item in whichever production carries it.  Constraints referencing a
    position whose symbol lacks the attribute are dropped.
    """
    out: dict[int, list[FlatConstraint]] = {i: [] for i in range(len(emitted))}

    def has_key(sym: str, key: str) -> bool:
        return key in domains.get(sym, {})

    def positions(em: _Emitted, selector: str, tag: str | None) -> list[int]:
        n = len(em.positions)
        if selector == "rhs":
            return list(range(1, n + 1))
        if selector == "rhs_begin":
            return [1] if n else []
        if selector == "rhs_end":
            return [n] if n else []
        if selector == "rhs_mid":
            return list(range(2, n))
        if selector == "rhs_tag":
            return [i + 1 for i, p in enumerate(em.positions) if tag in p.tags]
        raise GrammarError(f"unknown selector {selector!r}")

    for c in constraints:
        if c.form == "lhs_le":
            for i, em in enumerate(emitted):
                if em.role == "top":
                    out[i].append(FlatConstraint("lhs_le", c.key, bound=c.bound))
            continue
        scope = range(len(emitted))
        for i in scope:
            em = emitted[i]
            if c.selector != "rhs_tag" and em.role != "top":
                continue
            for pos in positions(em, c.selector, c.tag):
                sym = em.positions[pos - 1].sym
                if c.form == "rhs_ge":
                    if has_key(sym, c.key):
                        out[i].append(FlatConstraint("rhs_ge", c.key, bound=c.bound, index=pos))
                else:  # lhs_le_rhs
                    if has_key(sym, c.other_key):
                        out[i].append(FlatConstraint(
                            "lhs_le_rhs", c.key, index=pos, other_key=c.other_key))
    return out


def flatten(g: BnfGrammar) -> Cfg:
    """Lower a surface grammar to a plain CFG with a unique start production."""
    prec_extra = lower_precedence(g)
    n_levels = len(g.prec)

    domains: dict[str, dict[str, int]] = {}
    for nt, decls in g.attrs.items():
        domains[nt] = {d.key: d.size for d in decls}
    for ref in prec_extra:
        dom = domains.setdefault(ref[0], {})
        dom.setdefault("prL", n_levels)
        dom.setdefault("prR", n_levels)

    fl = _Flattener(g)
    per_rule: list[tuple[BnfRule, list[_Emitted]]] = []
    for rule in g.rules:
        emitted = _RuleFlattener(fl, rule).run()
        per_rule.append((rule, emitted))

    # fresh symbols inherit the domain of their rule's lhs
    for rule, emitted in per_rule:
        inherited = domains.get(rule.lhs, {})
        if not inherited:
            continue
        for em in emitted:
            if em.role == "sub":
                domains.setdefault(em.lhs, dict(inherited))

    nonterminals: list[str] = []
    for rule, emitted in per_rule:
        for em in emitted:
            if em.lhs not in nonterminals:
                nonterminals.append(em.lhs)
    terminals = [t.name for t in g.tokens]
    termset = set(terminals)
    fresh_set = set(fl.fresh_names)

    productions: list[Production] = []
    for rule, emitted in per_rule:
        extra = prec_extra.get((rule.lhs, rule.variant), ())
        lowered = lower_constraints(tuple(rule.constraints) + tuple(extra), emitted, domains)
        for i, em in enumerate(emitted):
            cs = list(lowered[i])
            if em.role == "sub":
                # pass-through: a lowered subexpression bounds its parts
                dom = domains.get(em.lhs, {})
                for key in dom:
                    for pos, p in enumerate(em.positions, start=1):
                        if key in domains.get(p.sym, {}):
                            cs.append(FlatConstraint("lhs_le_rhs", key, index=pos, other_key=key))
            else:
                # the rule's own production is likewise bounded by any
                # lowered subexpression standing in for part of its body
                dom = domains.get(rule.lhs, {})
                for key in dom:
                    for pos, p in enumerate(em.positions, start=1):
                        if p.sym in fresh_set and key in domains.get(p.sym, {}):
                            cs.append(FlatConstraint("lhs_le_rhs", key, index=pos, other_key=key))
            seen_c = set()
            cs = [c for c in cs if not (c in seen_c or seen_c.add(c))]
            role = "wrapper" if rule.lhs == g.wrapper else em.role
            productions.append(Production(
                pid=len(productions),
                lhs=em.lhs,
                rhs=tuple(p.sym for p in em.positions),
                constraints=tuple(cs),
                provenance=Provenance(rule.name, rule.lhs, rule.variant, role),
                unfold=tuple(p.unfold for p in em.positions),
            ))

    # the automaton constructions need a start symbol with exactly one
    # production that never occurs on the right; validation may already
    # have inserted a wrapper rule, otherwise add one here
    start = g.start
    wrapper = g.wrapper
    in_rhs = any(start in p.rhs for p in productions)
    n_start = len([p for p in productions if p.lhs == start])
    if wrapper is None and (in_rhs or n_start != 1):
        wrapper = "_" + start
        names = set(nonterminals) | termset
        while wrapper in names:
            wrapper += "_"
        productions.append(Production(
            pid=len(productions),
            lhs=wrapper,
            rhs=(start,),
            provenance=Provenance(wrapper, wrapper, None, "wrapper"),
            unfold=(False,),
        ))
        nonterminals.append(wrapper)
        start = wrapper

    return Cfg(
        nonterminals=nonterminals,
        terminals=terminals,
        start=start,
        productions=productions,
        domains=domains,
        cps_eligible=frozenset(fl.fresh_names),
        wrapper=wrapper,
        token_defs=list(g.tokens),
    )

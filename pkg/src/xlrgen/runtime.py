"""Table-driven parsing.

The compiled artifact is a ParseTable: the deterministic automaton's edges
and per-state actions, the grammar it was built from, and (when the grammar
was rewritten for conflict elimination) the production map that lets the
parser rebuild trees of the *original* grammar.  On top of it sit

  - tokenize:   maximal-munch lexing from the grammar's token definitions;
  - lr_parse:   the standard deterministic shift/reduce loop;
  - rd_parse:   the same loop plus Recur/Return actions for tables built
                with explicit recursion points;
  - xlr_parse:  breadth-synchronous simulation of every nondeterministic
                branch of a conflicted table, succeeding iff exactly one
                branch accepts;
  - cps_reduce_step: the dual-stack reduction that reconstructs original
                trees while the automaton runs rewritten productions.

Trees are reported against the user's grammar: node labels are original
production ids, node arity is the original right-hand-side length, and the
synthetic start wrapper (when flattening inserted one) is stripped from the
returned root.  All tree traversals here are iterative, so deeply nested
inputs are limited by memory, not the interpreter's recursion limit.

Attribute-carrying grammars are enforced at reduce time: each reduction
computes the concrete attribute values of the new node from its children
and follows the matching valued goto edge; a reduction whose constraints
fail, or whose value has no edge, is a parse failure on that branch.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass

from .automata import (
    Action,
    Automaton,
    Label,
    Lookahead,
    production_value,
    render_lookahead,
)
from .cps import CpsEntry, CpsMap
from .flatten import Cfg, FlatConstraint, Production, Provenance, SENTINEL
from .grammar import TokenDef

log = logging.getLogger("xlrgen.runtime")

TABLE_HEADER = "XLRTAB 1"


# --- errors -------------------------------------------------------------------


class UnlexableInput(Exception):
    """No token definition matches the input at `offset` (bytes)."""

    def __init__(self, offset: int):
        self.offset = offset
        super().__init__(f"unlexable input at byte offset {offset}")


class ParseError(Exception):
    """The input is not a member of the table's language."""

    def __init__(self, offset: int, state: int, expected: str, reason: str):
        self.offset = offset
        self.state = state
        self.expected = expected
        self.reason = reason
        msg = f"parse error at byte offset {offset} (state {state}): {reason}"
        if expected:
            msg += f"; expected {expected}"
        super().__init__(msg)


class Ambiguity(Exception):
    """Two branches of a forked parse both accepted the input."""

    def __init__(self, tree_a: "ParseTree", tree_b: "ParseTree"):
        self.tree_a = tree_a
        self.tree_b = tree_b
        super().__init__("ambiguous input: two distinct parses accepted")


class BranchLimitExceeded(Exception):
    """A forked parse needed more simultaneous branches than allowed."""

    def __init__(self, count: int, offset: int):
        self.count = count
        self.offset = offset
        super().__init__(
            f"{count} live parser instances at byte offset {offset} "
            f"exceed the configured branch limit")


# --- tokens and trees ------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Token:
    """One lexed token: terminal symbol name, source text, byte span."""

    sym: str
    lexeme: str
    span: tuple[int, int]


class ParseTree:
    """A parse node: `label` is an original production id (int) for inner
    nodes or the Token itself for leaves; `children` are ParseTrees; `span`
    covers the node's source bytes (zero-width for empty productions).

    Equality and hashing go through a structural digest computed
    iteratively and cached, so trees of any depth compare safely.
    """

    __slots__ = ("label", "children", "span", "_fp")

    def __init__(self, label, children=(), span=(0, 0)):
        self.label = label
        self.children = tuple(children)
        self.span = tuple(span)
        self._fp = None

    @property
    def is_leaf(self) -> bool:
        return isinstance(self.label, Token)

    def fingerprint(self) -> bytes:
        fp = self._fp
        if fp is not None:
            return fp
        # children-before-parents order without recursion
        pending = [self]
        order = []
        while pending:
            nd = pending.pop()
            if nd._fp is None:
                order.append(nd)
                pending.extend(nd.children)
        for nd in reversed(order):
            if nd._fp is not None:
                continue
            h = hashlib.blake2b(digest_size=16)
            if isinstance(nd.label, Token):
                t = nd.label
                h.update(b"t")
                h.update(repr((t.sym, t.lexeme, t.span, nd.span)).encode())
            else:
                h.update(b"n")
                h.update(repr((nd.label, nd.span)).encode())
            for c in nd.children:
                h.update(c._fp)
            nd._fp = h.digest()
        return self._fp

    def __eq__(self, other):
        if not isinstance(other, ParseTree):
            return NotImplemented
        return self.fingerprint() == other.fingerprint()

    def __hash__(self):
        return hash(self.fingerprint())

    def __repr__(self):
        head = self.label.sym if self.is_leaf else f"p{self.label}"
        return f"ParseTree({head}, {len(self.children)} children, {self.span})"

    def sexpr(self, table: "ParseTable | None" = None) -> str:
        """S-expression rendering; leaves print their lexeme, inner nodes
        their production's display name when a table is given."""
        out: list[str] = []
        stack: list = [self]
        while stack:
            item = stack.pop()
            if isinstance(item, str):
                out.append(item)
                continue
            if item.is_leaf:
                out.append(json.dumps(item.label.lexeme, ensure_ascii=False))
                continue
            name = table.production_name(item.label) if table else str(item.label)
            out.append(f"({name}")
            stack.append(")")
            for c in reversed(item.children):
                stack.append(c)
                stack.append(" ")
        return "".join(out)

    def to_json(self, table: "ParseTable | None" = None):
        """Structured dump: nested dicts mirroring the tree."""
        pending = [self]
        order = []
        while pending:
            nd = pending.pop()
            order.append(nd)
            pending.extend(nd.children)
        made: dict[int, object] = {}
        for nd in reversed(order):
            if nd.is_leaf:
                t = nd.label
                made[id(nd)] = {"token": t.sym, "text": t.lexeme,
                                "span": list(nd.span)}
            else:
                name = (table.production_name(nd.label)
                        if table else str(nd.label))
                made[id(nd)] = {
                    "rule": name,
                    "production": nd.label,
                    "span": list(nd.span),
                    "children": [made[id(c)] for c in nd.children],
                }
        return made[id(self)]


# --- the table --------------------------------------------------------------------


@dataclass
class ParseTable:
    """The compiled parsing artifact.

    kind/k identify the construction ("lr" or "rd", lookahead length);
    edges[s] are the sorted goto edges of state s (labels are plain symbols,
    ("rs", Y) recursion steps, or ("val", X, values) attribute valuations);
    actions[s] are the state's actions.  cfg is the grammar the automaton
    was built from; cps_map, when present, maps its productions back to the
    pre-rewrite originals for tree building.
    """

    kind: str
    k: int
    start_state: int
    edges: tuple
    actions: tuple
    cfg: Cfg
    cps_map: CpsMap | None = None
    version: int = 1

    def __post_init__(self):
        self._goto = [dict(es) for es in self.edges]
        acts: list[dict[Lookahead, tuple[Action, ...]]] = []
        conflicted = False
        for st in self.actions:
            by_la: dict[Lookahead, list[Action]] = {}
            for a in st:
                bucket = by_la.setdefault(a.lookahead, [])
                if all((a.kind, a.target) != (b.kind, b.target)
                       for b in bucket):
                    bucket.append(a)
            acts.append({la: tuple(v) for la, v in by_la.items()})
            conflicted = conflicted or any(len(v) > 1 for v in by_la.values())
        self._acts = acts
        self._conflicted = conflicted
        self._lexer = None
        self._unhat = ({new: old for old, new in self.cps_map.cps_symbol.items()
                        if new != old}
                       if self.cps_map is not None else {})

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_automaton(cls, dfa: Automaton,
                       cps_map: CpsMap | None = None) -> "ParseTable":
        if not dfa.deterministic:
            raise ValueError("parse tables are built from deterministic "
                             "automata; run the subset construction first")
        return cls(
            kind=dfa.kind,
            k=dfa.k,
            start_state=dfa.start,
            edges=tuple(tuple(es) for es in dfa.edges),
            actions=tuple(tuple(st) for st in dfa.actions),
            cfg=dfa.cfg,
            cps_map=cps_map,
        )

    # -- queries ---------------------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.edges)

    @property
    def has_conflicts(self) -> bool:
        return self._conflicted

    def production_name(self, pid: int) -> str:
        p = self.cfg.productions[pid]
        pr = p.provenance
        if pr is None or pr.role == "sub":
            # helper productions display their symbol; under a rewrite the
            # tree labels are original productions, so un-rename it
            return self._unhat.get(p.lhs, p.lhs)
        if pr.role == "wrapper":
            return pr.lhs
        return pr.variant if pr.variant else pr.lhs

    def expected_at(self, state: int, limit: int = 8) -> str:
        las = sorted(self._acts[state])
        shown = [render_lookahead(la) for la in las[:limit]]
        tail = ", …" if len(las) > limit else ""
        return ", ".join(shown) + tail if shown else "nothing (dead state)"

    # -- serialization -----------------------------------------------------------

    def to_text(self) -> str:
        body = json.dumps(_encode_table(self), sort_keys=True,
                          separators=(",", ":"), ensure_ascii=False)
        return f"{TABLE_HEADER}\n{body}\n"

    @classmethod
    def from_text(cls, text: str) -> "ParseTable":
        head, _, body = text.partition("\n")
        if head.strip() != TABLE_HEADER:
            raise ValueError(
                f"not a parse table: expected header {TABLE_HEADER!r}, "
                f"got {head.strip()!r}")
        try:
            obj = json.loads(body)
        except json.JSONDecodeError as e:
            raise ValueError(f"corrupt parse table: {e}") from None
        return _decode_table(cls, obj)


# --- serialization codecs ------------------------------------------------------------


def _enc_label(label: Label):
    if isinstance(label, str):
        return ["p", label]
    if label[0] == "rs":
        return ["r", label[1]]
    return ["v", label[1], [list(kv) for kv in label[2]]]


def _dec_label(enc) -> Label:
    tag = enc[0]
    if tag == "p":
        return enc[1]
    if tag == "r":
        return ("rs", enc[1])
    return ("val", enc[1], tuple((k, v) for k, v in enc[2]))


def _enc_action(a: Action):
    return [a.kind, a.target, list(a.lookahead)]


def _dec_action(enc) -> Action:
    return Action(enc[0], enc[1], tuple(enc[2]))


def _enc_cfg(cfg: Cfg):
    prods = []
    for p in cfg.productions:
        cs = [[c.form, c.key, c.bound, c.index, c.other_key]
              for c in p.constraints]
        prov = (None if p.provenance is None else
                [p.provenance.rule, p.provenance.lhs,
                 p.provenance.variant, p.provenance.role])
        prods.append([p.lhs, list(p.rhs), cs, prov,
                      [1 if f else 0 for f in p.unfold]])
    return {
        "nonterminals": list(cfg.nonterminals),
        "terminals": list(cfg.terminals),
        "start": cfg.start,
        "wrapper": cfg.wrapper,
        "domains": {nt: dict(d) for nt, d in cfg.domains.items()},
        "eligible": sorted(cfg.cps_eligible),
        "tokens": [[t.name, t.kind, t.text] for t in cfg.token_defs],
        "productions": prods,
    }


def _dec_cfg(obj) -> Cfg:
    prods = []
    for pid, (lhs, rhs, cs, prov, unfold) in enumerate(obj["productions"]):
        constraints = tuple(
            FlatConstraint(form, key, bound, index, other)
            for form, key, bound, index, other in cs)
        provenance = None if prov is None else Provenance(*prov)
        prods.append(Production(
            pid=pid, lhs=lhs, rhs=tuple(rhs), constraints=constraints,
            provenance=provenance, unfold=tuple(bool(f) for f in unfold)))
    return Cfg(
        nonterminals=list(obj["nonterminals"]),
        terminals=list(obj["terminals"]),
        start=obj["start"],
        productions=prods,
        domains={nt: dict(d) for nt, d in obj["domains"].items()},
        cps_eligible=frozenset(obj["eligible"]),
        wrapper=obj["wrapper"],
        token_defs=[TokenDef(n, k, t) for n, k, t in obj["tokens"]],
    )


def _enc_cps(cm: CpsMap | None):
    if cm is None:
        return None
    return {
        "entries": [[pid, e.orig_pid, e.arity, e.cps_len]
                    for pid, e in sorted(cm.entries.items())],
        "tail_of_symbol": {nt: list(t) for nt, t in cm.tail_of_symbol.items()},
        "tail_of_item": [[pid, dot, list(t)]
                         for (pid, dot), t in sorted(cm.tail_of_item.items())],
        "cps_symbol": dict(cm.cps_symbol),
        "origins": [[pid, [list(o) for o in origins]]
                    for pid, origins in sorted(cm.origins.items())],
    }


def _dec_cps(obj) -> CpsMap | None:
    if obj is None:
        return None
    cm = CpsMap()
    for pid, orig, arity, cps_len in obj["entries"]:
        cm.entries[pid] = CpsEntry(orig, arity, cps_len)
    for nt, t in obj["tail_of_symbol"].items():
        cm.tail_of_symbol[nt] = tuple(t)
    for pid, dot, t in obj["tail_of_item"]:
        cm.tail_of_item[(pid, dot)] = tuple(t)
    cm.cps_symbol.update(obj["cps_symbol"])
    for pid, origins in obj["origins"]:
        cm.origins[pid] = tuple((a, b) for a, b in origins)
    return cm


def _encode_table(t: ParseTable):
    return {
        "header": TABLE_HEADER,
        "version": t.version,
        "kind": t.kind,
        "k": t.k,
        "start": t.start_state,
        "edges": [[[_enc_label(l), tgt] for l, tgt in es] for es in t.edges],
        "actions": [[_enc_action(a) for a in st] for st in t.actions],
        "cfg": _enc_cfg(t.cfg),
        "cps": _enc_cps(t.cps_map),
    }


def _decode_table(cls, obj) -> ParseTable:
    if obj.get("version") != 1:
        raise ValueError(f"unsupported table version {obj.get('version')!r}")
    return cls(
        kind=obj["kind"],
        k=obj["k"],
        start_state=obj["start"],
        edges=tuple(tuple((_dec_label(l), tgt) for l, tgt in es)
                    for es in obj["edges"]),
        actions=tuple(tuple(_dec_action(a) for a in st)
                      for st in obj["actions"]),
        cfg=_dec_cfg(obj["cfg"]),
        cps_map=_dec_cps(obj["cps"]),
        version=obj["version"],
    )


# --- tokenization ---------------------------------------------------------------------


def _compile_lexer(defs):
    compiled = []
    for d in defs:
        if d.kind == "literal":
            lit = d.text
            compiled.append((d.name, ("lit", lit, len(lit))))
        else:
            compiled.append((d.name, ("re", re.compile(d.text), 0)))
    return compiled


def tokenize(table: ParseTable, text: str) -> list[Token]:
    """Maximal-munch lexing over the table's token definitions: at each
    position the longest match wins; equal lengths go to the earlier
    declaration.  Whitespace separates tokens and is discarded.  Spans and
    the UnlexableInput offset are byte offsets into the UTF-8 encoding."""
    if table._lexer is None:
        table._lexer = _compile_lexer(table.cfg.token_defs)
    lexer = table._lexer
    out: list[Token] = []
    i = 0
    byte = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            byte += len(ch.encode("utf-8"))
            continue
        best_len = 0
        best_name = None
        for name, (kind, pat, litlen) in lexer:
            if kind == "lit":
                if pat and text.startswith(pat, i):
                    ln = litlen
                else:
                    continue
            else:
                m = pat.match(text, i)
                if m is None:
                    continue
                ln = m.end() - i
            if ln > best_len:
                best_len = ln
                best_name = name
        if best_name is None:
            raise UnlexableInput(byte)
        lexeme = text[i:i + best_len]
        blen = len(lexeme.encode("utf-8"))
        out.append(Token(best_name, lexeme, (byte, byte + blen)))
        i += best_len
        byte += blen
    return out


def _as_tokens(tokens) -> list[Token]:
    """Accept ready-made Tokens or bare terminal names (which get unit
    spans), so tests and the oracle can parse symbol sequences directly."""
    out = []
    for j, t in enumerate(tokens):
        if isinstance(t, Token):
            out.append(t)
        else:
            out.append(Token(t, t, (j, j + 1)))
    return out


# --- reductions --------------------------------------------------------------------


def _node_span(kids, prim) -> tuple[int, int]:
    if kids:
        return (kids[0].span[0], kids[-1].span[1])
    at = prim[-1].span[1] if prim else 0
    return (at, at)


def cps_reduce_step(stacks, pid: int, cps_map: CpsMap):
    """One dual-stack reduction: the automaton reduced rewritten production
    `pid` (length m), whose original production has arity r.  The primary
    stack holds one original-tree element per automaton symbol; the
    secondary holds elements parsed inside an absorbed region that still
    belong to enclosing originals, ordered so pops yield them left to
    right.

    r <= m: the m popped elements start with the r original children; the
    node replaces them and the (m - r) leftovers move to the secondary.
    r > m:  the m popped elements are the first m children; the remaining
    (r - m) come off the secondary.

    Returns the stacks (mutated in place); underflow means the table and
    map do not belong together.
    """
    prim, sec = stacks
    e = cps_map.entries[pid]
    m, r = e.cps_len, e.arity
    if len(prim) < m or (r > m and len(sec) < r - m):
        raise RuntimeError(
            f"corrupt table: reduction of production {pid} underflows "
            f"the tree stacks (m={m}, r={r})")
    popped = prim[len(prim) - m:]
    del prim[len(prim) - m:]
    if r <= m:
        kids = popped[:r]
        sec.extend(reversed(popped[r:]))
    else:
        kids = popped + [sec.pop() for _ in range(r - m)]
    prim.append(ParseTree(e.orig_pid, kids, _node_span(kids, prim)))
    return prim, sec


def _reduce(table: ParseTable, pid: int, states, prim, vecs, sec):
    """Shared reduce: pop, build the node (dual-stack when the table carries
    a production map), compute the new node's attribute values, and report
    (lhs symbol, values) for the goto.  Returns None when the production's
    constraints reject these children."""
    cfg = table.cfg
    p = cfg.productions[pid]
    m = len(p.rhs)
    child_vecs = {j + 1: dict(v)
                  for j, v in enumerate(vecs[len(vecs) - m:]) if v is not None}
    vec = production_value(cfg, p, child_vecs)
    if vec is None:
        return None
    del vecs[len(vecs) - m:]
    if table.cps_map is not None:
        cps_reduce_step((prim, sec), pid, table.cps_map)
    else:
        kids = prim[len(prim) - m:]
        del prim[len(prim) - m:]
        prim.append(ParseTree(pid, kids, _node_span(kids, prim)))
    out_vec = vec if cfg.domain_of(p.lhs) else None
    vecs.append(out_vec)
    del states[len(states) - m:]
    return p.lhs, out_vec


def _goto_label(cfg: Cfg, sym: str, vec) -> Label:
    if vec is not None:
        return ("val", sym, vec)
    return sym


def _finish(table: ParseTable, tree: ParseTree) -> ParseTree:
    if table.cfg.wrapper is not None and not tree.is_leaf:
        return tree.children[0]
    return tree


# --- deterministic parsing ------------------------------------------------------------


def _parse_deterministic(table: ParseTable, tokens, stats) -> ParseTree:
    cfg = table.cfg
    k = table.k
    toks = _as_tokens(tokens)
    n = len(toks)
    syms = [t.sym for t in toks] + [SENTINEL] * k
    end_off = toks[-1].span[1] if toks else 0

    def offset(i: int) -> int:
        return toks[i].span[0] if i < n else end_off

    states = [table.start_state]
    prim: list[ParseTree] = []
    vecs: list = []
    sec: list[ParseTree] = []
    i = 0
    steps = 0
    debug = log.isEnabledFor(logging.DEBUG)
    while True:
        steps += 1
        if not states:
            raise ParseError(offset(i), -1, "", "parser state underflow")
        v = states[-1]
        la = tuple(syms[i:i + k])
        acts = table._acts[v].get(la, ())
        if not acts:
            got = toks[i].sym if i < n else "end of input"
            raise ParseError(offset(i), v, table.expected_at(v),
                             f"unexpected {got}")
        if len(acts) > 1:
            raise ValueError(
                f"state {v} has {len(acts)} actions on "
                f"{render_lookahead(la)}; conflicted tables need xlr_parse")
        a = acts[0]
        if a.kind == "shift":
            if i == n:
                raise ParseError(end_off, v, table.expected_at(v),
                                 "unexpected end of input")
            tok = toks[i]
            prim.append(ParseTree(tok, (), tok.span))
            vecs.append(None)
            buf, bufvec = tok.sym, None
            i += 1
            if debug:
                log.debug("shift %s at %d", tok.sym, tok.span[0])
        elif a.kind == "reduce":
            got = _reduce(table, a.target, states, prim, vecs, sec)
            if got is None:
                raise ParseError(
                    offset(i), v, "",
                    f"attribute constraints reject production {a.target}")
            buf, bufvec = got
            if debug:
                log.debug("reduce %d -> %s", a.target, buf)
        elif a.kind == "recur":
            buf, bufvec = ("rs", a.target), None
            if debug:
                log.debug("recur %s", a.target)
        elif a.kind == "return":
            if len(states) < 3:
                raise ParseError(offset(i), v, "", "return underflows")
            del states[-2:]
            buf, bufvec = a.target, (vecs[-1] if vecs else None)
            if debug:
                log.debug("return %s", a.target)
        else:  # pragma: no cover - no other kinds exist
            raise ValueError(f"unknown action kind {a.kind!r}")

        if buf == cfg.start:
            if stats is not None:
                stats["steps"] = steps
            if i == n:
                return _finish(table, prim[-1])
            raise ParseError(offset(i), states[-1] if states else -1,
                             table.expected_at(states[-1]) if states else "",
                             "input continues past a complete parse")
        if isinstance(buf, tuple):
            label: Label = buf
        else:
            label = _goto_label(cfg, buf, bufvec)
        tgt = table._goto[states[-1]].get(label)
        if tgt is None:
            raise ParseError(
                offset(i), states[-1], table.expected_at(states[-1]),
                f"no transition on {buf if isinstance(buf, str) else buf[1]}"
                + ("" if bufvec is None else " with these attribute values"))
        states.append(tgt)


def lr_parse(table: ParseTable, tokens, stats: dict | None = None) -> ParseTree:
    """Deterministic shift/reduce parse.  `tokens` is a sequence of Tokens
    (or bare terminal names); returns the tree over original productions.
    Requires a conflict-free LR table."""
    if table.kind != "lr":
        raise ValueError(f"lr_parse needs an LR table, got {table.kind!r}")
    if table.has_conflicts:
        raise ValueError("table has conflicts; parse with xlr_parse or "
                         "recompile with conflict elimination")
    return _parse_deterministic(table, tokens, stats)


def rd_parse(table: ParseTable, tokens, stats: dict | None = None) -> ParseTree:
    """Deterministic parse over a recursive-descent table: the shift/reduce
    loop plus Recur (enter a recursion point) and Return (leave it, popping
    the two recursion-head states).  The table must be conflict-free and
    should have passed check_recur_cycles when it was built."""
    if table.kind != "rd":
        raise ValueError(f"rd_parse needs an RD table, got {table.kind!r}")
    if table.has_conflicts:
        raise ValueError("RD table has conflicts; adjust the unfoldable "
                         "marks or use an LR construction")
    return _parse_deterministic(table, tokens, stats)


# --- forked parsing ---------------------------------------------------------------------


class _Instance:
    __slots__ = ("states", "prim", "vecs", "sec")

    def __init__(self, states, prim, vecs, sec):
        self.states = states
        self.prim = prim
        self.vecs = vecs
        self.sec = sec

    def clone(self) -> "_Instance":
        return _Instance(list(self.states), list(self.prim),
                         list(self.vecs), list(self.sec))

    def key(self):
        return (
            tuple(self.states),
            tuple(t.fingerprint() for t in self.prim),
            tuple(self.vecs),
            tuple(t.fingerprint() for t in self.sec),
        )


def xlr_parse(table: ParseTable, tokens, t_max: int = 64,
              stats: dict | None = None) -> ParseTree:
    """Parse with a possibly-conflicted LR table by simulating every
    nondeterministic branch, breadth-synchronously per input position.

    Exactly one accepting branch returns its tree; none is a ParseError;
    two or more is Ambiguity.  Branches with identical stacks are merged
    (they behave identically forever after, so this cannot change the
    outcome); if more than t_max distinct branches are alive at any input
    position, BranchLimitExceeded aborts the parse.  `stats`, when given,
    receives the peak live-branch count and total step count."""
    if table.kind != "lr":
        raise ValueError(f"xlr_parse needs an LR table, got {table.kind!r}")
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    cfg = table.cfg
    k = table.k
    toks = _as_tokens(tokens)
    n = len(toks)
    syms = [t.sym for t in toks] + [SENTINEL] * k
    end_off = toks[-1].span[1] if toks else 0

    def offset(i: int) -> int:
        return toks[i].span[0] if i < n else end_off

    live = [_Instance([table.start_state], [], [], [])]
    successes: list[ParseTree] = []
    peak = 1
    steps = 0
    die_pos = 0
    die_states: list[int] = [table.start_state]
    # generous per-position guard: a table within the branch limit cannot
    # keep more frontier branches than final branches alive
    frontier_cap = 4 * t_max + 16
    for i in range(n + 1):
        la = tuple(syms[i:i + k])
        entering = [inst.states[-1] for inst in live]
        work = live
        arrived: list[_Instance] = []
        seen: set = set()
        while work:
            inst = work.pop()
            steps += 1
            key = inst.key()
            if key in seen:
                continue
            seen.add(key)
            if len(work) + len(arrived) + 1 > frontier_cap:
                raise BranchLimitExceeded(len(work) + len(arrived) + 1,
                                          offset(i))
            v = inst.states[-1]
            acts = table._acts[v].get(la, ())
            if not acts:
                continue  # this branch dies here
            for idx, a in enumerate(acts):
                cur = inst if idx == len(acts) - 1 else inst.clone()
                if a.kind == "shift":
                    if i == n:
                        continue
                    tok = toks[i]
                    tgt = table._goto[cur.states[-1]].get(tok.sym)
                    if tgt is None:
                        continue
                    cur.prim.append(ParseTree(tok, (), tok.span))
                    cur.vecs.append(None)
                    cur.states.append(tgt)
                    arrived.append(cur)
                elif a.kind == "reduce":
                    got = _reduce(table, a.target, cur.states, cur.prim,
                                  cur.vecs, cur.sec)
                    if got is None:
                        continue
                    buf, bufvec = got
                    if buf == cfg.start:
                        if i == n:
                            successes.append(_finish(table, cur.prim[-1]))
                        continue
                    tgt = table._goto[cur.states[-1]].get(
                        _goto_label(cfg, buf, bufvec))
                    if tgt is None:
                        continue
                    cur.states.append(tgt)
                    work.append(cur)
                else:
                    raise ValueError(
                        f"forked parsing supports shift/reduce tables only, "
                        f"found a {a.kind!r} action")
        # synchronization point: dedup and count
        deduped: list[_Instance] = []
        arrived_seen: set = set()
        for inst in arrived:
            key = inst.key()
            if key not in arrived_seen:
                arrived_seen.add(key)
                deduped.append(inst)
        live = deduped
        if not live:
            die_pos, die_states = i, entering
            break
        peak = max(peak, len(live))
        if len(live) > t_max:
            raise BranchLimitExceeded(len(live), offset(i))
    if stats is not None:
        stats["peak"] = peak
        stats["steps"] = steps
    if len(successes) == 1:
        return successes[0]
    if len(successes) >= 2:
        raise Ambiguity(successes[0], successes[1])
    v = die_states[0] if die_states else table.start_state
    got = toks[die_pos].sym if die_pos < n else "end of input"
    las = sorted({la for s in die_states for la in table._acts[s]})
    shown = ", ".join(render_lookahead(la) for la in las[:8])
    raise ParseError(offset(die_pos), v, shown + (", …" if len(las) > 8 else ""),
                     f"no branch survives {got}")

"""Surface grammar model and the grammar source format.

A grammar source file is a sequence of sections:

    tokens { NAME = "literal" | /class/; ... }
    start NAME;
    attrs  { Nonterm : key bool, key int(n), ... ; ... }
    rules  { Lhs.Variant -> expr where constraint, ... ; ... }
    prec   { {Lhs.Variant, ...} assoc; ... }

Rule bodies are regular expressions over declared symbols: juxtaposition,
alternation `|`, `e?`, `e*`, `e+`, grouping `(e)`, tagging `e_[t]`, and
delimited repetition `List[e :: d]`.  A symbol occurrence may be prefixed
with `@` to mark it unfoldable for the recursive-descent construction.
Constraints compare attribute values: `lhs[a] <= 2`, `rhs_end[a] >= 1`,
`lhs[a] <= rhs_begin[b]`, with selectors rhs, rhs_begin, rhs_end, rhs_mid,
and rhs_tag[t].  `//` starts a comment running to end of line.
"""

from __future__ import annotations

from dataclasses import dataclass, field


RESERVED = {
    "tokens", "start", "rules", "prec", "attrs", "where", "List",
    "lhs", "rhs", "rhs_begin", "rhs_end", "rhs_mid", "rhs_tag",
    "bool", "int", "none", "left", "right", "prefix", "postfix",
}

ASSOCS = ("none", "left", "right", "prefix", "postfix")


class GrammarError(Exception):
    """Raised for malformed grammar source, with position info."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.message = message
        self.line = line
        self.col = col


# --- expression tree -------------------------------------------------------

@dataclass(frozen=True)
class Sym:
    name: str
    unfold: bool = False


@dataclass(frozen=True)
class Concat:
    items: tuple


@dataclass(frozen=True)
class Alt:
    items: tuple


@dataclass(frozen=True)
class Opt:
    item: object


@dataclass(frozen=True)
class Star:
    item: object


@dataclass(frozen=True)
class Plus:
    item: object


@dataclass(frozen=True)
class ListOf:
    item: object
    sep: object


@dataclass(frozen=True)
class Tagged:
    item: object
    tag: str


# --- declarations ----------------------------------------------------------

@dataclass(frozen=True)
class TokenDef:
    name: str
    kind: str            # 'literal' or 'pattern'
    text: str


@dataclass(frozen=True)
class AttrDecl:
    key: str
    kind: str            # 'bool' or 'int'
    size: int            # value range is [0, size); bool is size 2

    @property
    def max_value(self) -> int:
        return self.size - 1


@dataclass(frozen=True)
class AttrConstraint:
    """One attribute constraint attached to a rule.

    form 'lhs_le':      lhs[key] <= bound
    form 'rhs_ge':      selector[key] >= bound
    form 'lhs_le_rhs':  lhs[key] <= selector[other_key]
    selector is one of rhs, rhs_begin, rhs_end, rhs_mid, rhs_tag
    (rhs_tag carries the tag label).
    """
    form: str
    key: str
    bound: int | None = None
    selector: str | None = None
    other_key: str | None = None
    tag: str | None = None


@dataclass
class BnfRule:
    lhs: str
    variant: str | None
    rhs: object
    constraints: tuple[AttrConstraint, ...] = ()

    @property
    def name(self) -> str:
        return f"{self.lhs}.{self.variant}" if self.variant else self.lhs


@dataclass(frozen=True)
class PrecGroup:
    rules: tuple[tuple[str, str | None], ...]   # (lhs, variant) refs
    assoc: str


@dataclass
class Diagnostic:
    severity: str        # 'error', 'warning' or 'info'
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.message}"


@dataclass
class BnfGrammar:
    tokens: list[TokenDef] = field(default_factory=list)
    start: str = ""
    attrs: dict[str, tuple[AttrDecl, ...]] = field(default_factory=dict)
    rules: list[BnfRule] = field(default_factory=list)
    prec: list[PrecGroup] = field(default_factory=list)
    wrapper: str | None = None     # auto-inserted start wrapper, if any

    def token_names(self) -> set[str]:
        return {t.name for t in self.tokens}

    def nonterminal_names(self) -> list[str]:
        seen: list[str] = []
        for r in self.rules:
            if r.lhs not in seen:
                seen.append(r.lhs)
        return seen


# --- lexer -----------------------------------------------------------------

_PUNCT2 = ("->", "::", "<=", ">=", "_[")
_PUNCT1 = "{}()[];,.|?*+=:@"


def _lex(src: str):
    """Yield (kind, text, line, col) tuples; kind in name/string/class/punct/int."""
    out = []
    i, line, col = 0, 1, 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        if c == '"':
            j = i + 1
            buf = []
            while j < n and src[j] != '"':
                if src[j] == "\\" and j + 1 < n:
                    buf.append(src[j + 1])
                    j += 2
                else:
                    buf.append(src[j])
                    j += 1
            if j >= n:
                raise GrammarError("unterminated string literal", line, col)
            out.append(("string", "".join(buf), line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if c == "/":
            j = i + 1
            buf = []
            while j < n and src[j] != "/":
                if src[j] == "\\" and j + 1 < n and src[j + 1] == "/":
                    buf.append("/")
                    j += 2
                else:
                    buf.append(src[j])
                    j += 1
            if j >= n:
                raise GrammarError("unterminated character-class pattern", line, col)
            out.append(("class", "".join(buf), line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            out.append(("int", src[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            name = src[i:j]
            # a trailing underscore immediately followed by '[' is the tag
            # operator, as in  E_[t]
            if name.endswith("_") and j < n and src[j] == "[" and len(name) > 1:
                out.append(("name", name[:-1], line, col))
                out.append(("punct", "_[", line, col + j - i - 1))
                col += j + 1 - i
                i = j + 1
                continue
            out.append(("name", name, line, col))
            col += j - i
            i = j
            continue
        two = src[i:i + 2]
        if two in _PUNCT2:
            out.append(("punct", two, line, col))
            i += 2
            col += 2
            continue
        if c in _PUNCT1:
            out.append(("punct", c, line, col))
            i += 1
            col += 1
            continue
        raise GrammarError(f"unexpected character {c!r}", line, col)
    out.append(("eof", "", line, col))
    return out


# --- parser ----------------------------------------------------------------

class _Parser:
    def __init__(self, src: str):
        self.toks = _lex(src)
        self.pos = 0

    def peek(self, k: int = 0):
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.pos]
        if t[0] != "eof":
            self.pos += 1
        return t

    def fail(self, msg: str):
        _, text, line, col = self.peek()
        raise GrammarError(msg + (f" (found {text!r})" if text else " (found end of input)"), line, col)

    def expect(self, kind: str, text: str | None = None):
        t = self.peek()
        if t[0] != kind or (text is not None and t[1] != text):
            self.fail(f"expected {text or kind}")
        return self.next()

    def at_punct(self, text: str) -> bool:
        t = self.peek()
        return t[0] == "punct" and t[1] == text

    def eat_punct(self, text: str) -> bool:
        if self.at_punct(text):
            self.next()
            return True
        return False

    def name(self) -> str:
        return self.expect("name")[1]

    # sections

    def grammar(self) -> BnfGrammar:
        g = BnfGrammar()
        seen = set()
        while self.peek()[0] != "eof":
            t = self.peek()
            if t[0] != "name":
                self.fail("expected a section keyword")
            word = t[1]
            if word in seen:
                self.fail(f"duplicate section {word!r}")
            seen.add(word)
            if word == "tokens":
                self.next()
                self.tokens_section(g)
            elif word == "start":
                self.next()
                g.start = self.name()
                self.expect("punct", ";")
            elif word == "attrs":
                self.next()
                self.attrs_section(g)
            elif word == "rules":
                self.next()
                self.rules_section(g)
            elif word == "prec":
                self.next()
                self.prec_section(g)
            else:
                self.fail(f"unknown section {word!r}")
        return g

    def tokens_section(self, g: BnfGrammar):
        self.expect("punct", "{")
        while not self.eat_punct("}"):
            nm = self.name()
            self.expect("punct", "=")
            t = self.peek()
            if t[0] == "string":
                self.next()
                g.tokens.append(TokenDef(nm, "literal", t[1]))
            elif t[0] == "class":
                self.next()
                g.tokens.append(TokenDef(nm, "pattern", t[1]))
            else:
                self.fail("expected a string literal or /class/ pattern")
            self.expect("punct", ";")

    def attrs_section(self, g: BnfGrammar):
        self.expect("punct", "{")
        while not self.eat_punct("}"):
            nt = self.name()
            self.expect("punct", ":")
            decls = []
            while True:
                key = self.name()
                kind = self.name()
                if kind == "bool":
                    decls.append(AttrDecl(key, "bool", 2))
                elif kind == "int":
                    self.expect("punct", "(")
                    size = int(self.expect("int")[1])
                    self.expect("punct", ")")
                    decls.append(AttrDecl(key, "int", size))
                else:
                    self.fail("expected bool or int(n)")
                if not self.eat_punct(","):
                    break
            self.expect("punct", ";")
            if nt in g.attrs:
                raise GrammarError(f"duplicate attrs declaration for {nt}")
            g.attrs[nt] = tuple(decls)

    def rules_section(self, g: BnfGrammar):
        self.expect("punct", "{")
        while not self.eat_punct("}"):
            lhs = self.name()
            variant = None
            if self.eat_punct("."):
                variant = self.name()
            self.expect("punct", "->")
            rhs = self.alt()
            constraints = ()
            t = self.peek()
            if t[0] == "name" and t[1] == "where":
                self.next()
                cs = [self.constraint()]
                while self.eat_punct(","):
                    cs.append(self.constraint())
                constraints = tuple(cs)
            self.expect("punct", ";")
            g.rules.append(BnfRule(lhs, variant, rhs, constraints))

    def prec_section(self, g: BnfGrammar):
        self.expect("punct", "{")
        while not self.eat_punct("}"):
            self.expect("punct", "{")
            refs = [self.ruleref()]
            while self.eat_punct(","):
                refs.append(self.ruleref())
            self.expect("punct", "}")
            assoc = self.name()
            if assoc not in ASSOCS:
                self.fail("expected an associativity (none/left/right/prefix/postfix)")
            self.expect("punct", ";")
            g.prec.append(PrecGroup(tuple(refs), assoc))

    def ruleref(self) -> tuple[str, str | None]:
        lhs = self.name()
        variant = None
        if self.eat_punct("."):
            variant = self.name()
        return (lhs, variant)

    # expressions

    def alt(self):
        items = [self.branch()]
        while self.eat_punct("|"):
            items.append(self.branch())
        return items[0] if len(items) == 1 else Alt(tuple(items))

    def branch(self):
        # an empty branch (nothing before ; ) | or where) denotes the
        # empty sequence
        t = self.peek()
        if (t[0] == "punct" and t[1] in (";", ")", "|")) or \
                (t[0] == "name" and t[1] == "where"):
            return Concat(())
        return self.concat()

    def concat(self):
        items = [self.postfix()]
        while True:
            t = self.peek()
            if t[0] == "name" and t[1] != "where":
                items.append(self.postfix())
            elif t[0] == "punct" and t[1] in ("(", "@"):
                items.append(self.postfix())
            else:
                break
        return items[0] if len(items) == 1 else Concat(tuple(items))

    def postfix(self):
        e = self.atom()
        while True:
            if self.eat_punct("?"):
                e = Opt(e)
            elif self.eat_punct("*"):
                e = Star(e)
            elif self.eat_punct("+"):
                e = Plus(e)
            elif self.at_punct("_["):
                self.next()
                tag = self.name()
                self.expect("punct", "]")
                e = Tagged(e, tag)
            else:
                return e

    def atom(self):
        if self.eat_punct("("):
            e = self.alt()
            self.expect("punct", ")")
            return e
        if self.eat_punct("@"):
            return Sym(self.name(), unfold=True)
        t = self.peek()
        if t[0] == "name" and t[1] == "List":
            self.next()
            self.expect("punct", "[")
            item = self.alt()
            self.expect("punct", "::")
            sep = self.alt()
            self.expect("punct", "]")
            return ListOf(item, sep)
        if t[0] == "name":
            self.next()
            return Sym(t[1])
        self.fail("expected a symbol, group, or List[...]")

    # constraints

    def constraint(self) -> AttrConstraint:
        head = self.name()
        if head == "lhs":
            self.expect("punct", "[")
            key = self.name()
            self.expect("punct", "]")
            self.expect("punct", "<=")
            t = self.peek()
            if t[0] == "int":
                self.next()
                return AttrConstraint("lhs_le", key, bound=int(t[1]))
            sel, tag = self.selector()
            self.expect("punct", "[")
            other = self.name()
            self.expect("punct", "]")
            return AttrConstraint("lhs_le_rhs", key, selector=sel, other_key=other, tag=tag)
        # selector >= bound
        sel, tag = self.selector_from(head)
        self.expect("punct", "[")
        key = self.name()
        self.expect("punct", "]")
        self.expect("punct", ">=")
        bound = int(self.expect("int")[1])
        return AttrConstraint("rhs_ge", key, bound=bound, selector=sel, tag=tag)

    def selector(self) -> tuple[str, str | None]:
        return self.selector_from(self.name())

    def selector_from(self, word: str) -> tuple[str, str | None]:
        if word == "rhs_tag":
            self.expect("punct", "[")
            tag = self.name()
            self.expect("punct", "]")
            return ("rhs_tag", tag)
        if word in ("rhs", "rhs_begin", "rhs_end", "rhs_mid"):
            return (word, None)
        self.fail("expected a constraint selector")
        raise AssertionError


def parse_grammar_source(text: str) -> BnfGrammar:
    """Parse grammar source text; raise GrammarError with position on bad input."""
    g = _Parser(text).grammar()
    _check_declarations(g)
    return g


def _check_declarations(g: BnfGrammar):
    """Referential checks that make a parsed grammar usable at all."""
    declared: dict[str, str] = {}
    for t in g.tokens:
        if t.name in RESERVED or t.name.startswith("_"):
            raise GrammarError(f"token name {t.name!r} is reserved")
        if t.name in declared:
            raise GrammarError(f"duplicate symbol declaration {t.name!r}")
        declared[t.name] = "token"
    for r in g.rules:
        if r.lhs in RESERVED or r.lhs.startswith("_"):
            raise GrammarError(f"rule name {r.lhs!r} is reserved")
        if declared.get(r.lhs) == "token":
            raise GrammarError(f"{r.lhs!r} declared as both token and rule")
        declared[r.lhs] = "rule"
    if not g.rules:
        raise GrammarError("grammar has no rules")
    if not g.start:
        raise GrammarError("grammar has no start declaration")
    if declared.get(g.start) != "rule":
        raise GrammarError(f"start symbol {g.start!r} has no rule")

    def walk(e):
        if isinstance(e, Sym):
            if e.name not in declared:
                raise GrammarError(f"reference to undeclared symbol {e.name!r}")
        elif isinstance(e, (Concat, Alt)):
            for c in e.items:
                walk(c)
        elif isinstance(e, (Opt, Star, Plus)):
            walk(e.item)
        elif isinstance(e, ListOf):
            walk(e.item)
            walk(e.sep)
        elif isinstance(e, Tagged):
            walk(e.item)

    for r in g.rules:
        walk(r.rhs)


# --- validation ------------------------------------------------------------

def _expr_symbols(e) -> list[str]:
    if isinstance(e, Sym):
        return [e.name]
    if isinstance(e, (Concat, Alt)):
        out = []
        for c in e.items:
            out.extend(_expr_symbols(c))
        return out
    if isinstance(e, (Opt, Star, Plus)):
        return _expr_symbols(e.item)
    if isinstance(e, ListOf):
        return _expr_symbols(e.item) + _expr_symbols(e.sep)
    if isinstance(e, Tagged):
        return _expr_symbols(e.item)
    return []


def _expr_tags(e) -> list[str]:
    if isinstance(e, Tagged):
        return [e.tag] + _expr_tags(e.item)
    if isinstance(e, (Concat, Alt)):
        out = []
        for c in e.items:
            out.extend(_expr_tags(c))
        return out
    if isinstance(e, (Opt, Star, Plus)):
        return _expr_tags(e.item)
    if isinstance(e, ListOf):
        return _expr_tags(e.item) + _expr_tags(e.sep)
    return []


def validate_grammar(g: BnfGrammar) -> list[Diagnostic]:
    """Check structural invariants; never raises.

    If the start symbol appears in some rule body, a wrapper rule is inserted
    in place (the grammar is modified) and an info diagnostic is reported.
    """
    out: list[Diagnostic] = []
    nonterms = set(g.nonterminal_names())
    tokens = g.token_names()

    # attribute domains refer to declared rule names
    for nt in g.attrs:
        if nt not in nonterms:
            out.append(Diagnostic("error", f"attrs declared for unknown rule name {nt!r}"))

    domains = {nt: {d.key: d for d in decls} for nt, decls in g.attrs.items()}

    for r in g.rules:
        tags = set(_expr_tags(r.rhs))
        dom = domains.get(r.lhs, {})
        for c in r.constraints:
            if c.form in ("lhs_le", "lhs_le_rhs") and c.key not in dom:
                out.append(Diagnostic(
                    "error", f"rule {r.name}: lhs attribute {c.key!r} not declared for {r.lhs}"))
            if c.form == "rhs_ge":
                if not any(c.key in domains.get(s, {}) for s in _expr_symbols(r.rhs)):
                    out.append(Diagnostic(
                        "warning",
                        f"rule {r.name}: constraint on {c.key!r} matches no symbol in the body"))
            if c.selector == "rhs_tag" and c.tag not in tags:
                out.append(Diagnostic(
                    "error", f"rule {r.name}: tag {c.tag!r} not present in the body"))

    # precedence stanza: refs exist, each rule in at most one group, and for
    # each nonterminal either all rules are leveled or none are
    ref_count: dict[tuple[str, str | None], int] = {}
    rule_keys = {(r.lhs, r.variant) for r in g.rules}
    for grp in g.prec:
        for ref in grp.rules:
            if ref not in rule_keys:
                out.append(Diagnostic("error", f"prec: rule reference {ref[0]}.{ref[1] or ''} not found"))
            ref_count[ref] = ref_count.get(ref, 0) + 1
    for ref, cnt in ref_count.items():
        if cnt > 1:
            out.append(Diagnostic("error", f"prec: rule {ref[0]} appears in {cnt} groups"))
    leveled_lhs = {ref[0] for grp in g.prec for ref in grp.rules}
    for lhs in leveled_lhs:
        for r in g.rules:
            if r.lhs == lhs and (r.lhs, r.variant) not in ref_count:
                out.append(Diagnostic(
                    "error", f"prec: {lhs} has both leveled and unleveled rules ({r.name} missing)"))

    # reachability from start
    reach: set[str] = set()
    frontier = [g.start] if g.start in nonterms else []
    by_lhs: dict[str, list[BnfRule]] = {}
    for r in g.rules:
        by_lhs.setdefault(r.lhs, []).append(r)
    while frontier:
        nt = frontier.pop()
        if nt in reach:
            continue
        reach.add(nt)
        for r in by_lhs.get(nt, []):
            for s in _expr_symbols(r.rhs):
                if s in nonterms and s not in reach:
                    frontier.append(s)
    for nt in g.nonterminal_names():
        if nt not in reach:
            out.append(Diagnostic("warning", f"rule {nt} is unreachable from start"))
    _ = tokens

    # start must not appear in any rule body; insert a wrapper when it does
    used = {s for r in g.rules for s in _expr_symbols(r.rhs)}
    if g.start in used:
        wrapper = "_" + g.start
        while wrapper in nonterms or wrapper in tokens:
            wrapper += "_"
        g.rules.insert(0, BnfRule(wrapper, None, Sym(g.start)))
        out.append(Diagnostic("info", f"wrapper inserted: {wrapper} -> {g.start}"))
        g.start = wrapper
        g.wrapper = wrapper
    return out


# --- renderer --------------------------------------------------------------

def _render_expr(e, prec: int = 0) -> str:
    # prec levels: 0 alt, 1 concat, 2 postfix
    if isinstance(e, Sym):
        return ("@" if e.unfold else "") + e.name
    if isinstance(e, Alt):
        s = " | ".join(_render_expr(c, 1) for c in e.items)
        return f"({s})" if prec > 0 else s
    if isinstance(e, Concat):
        s = " ".join(_render_expr(c, 2) for c in e.items)
        return f"({s})" if prec > 1 else s
    if isinstance(e, Opt):
        return _render_expr(e.item, 3) + "?"
    if isinstance(e, Star):
        return _render_expr(e.item, 3) + "*"
    if isinstance(e, Plus):
        return _render_expr(e.item, 3) + "+"
    if isinstance(e, Tagged):
        return _render_expr(e.item, 3) + f"_[{e.tag}]"
    if isinstance(e, ListOf):
        return f"List[{_render_expr(e.item, 0)} :: {_render_expr(e.sep, 0)}]"
    raise TypeError(f"not an expression: {e!r}")


def _render_constraint(c: AttrConstraint) -> str:
    sel = c.selector
    if sel == "rhs_tag":
        sel = f"rhs_tag[{c.tag}]"
    if c.form == "lhs_le":
        return f"lhs[{c.key}] <= {c.bound}"
    if c.form == "rhs_ge":
        return f"{sel}[{c.key}] >= {c.bound}"
    return f"lhs[{c.key}] <= {sel}[{c.other_key}]"


def render(g: BnfGrammar) -> str:
    """Pretty-print a grammar in canonical section order.

    parse_grammar_source(render(g)) reproduces g for grammars that use
    canonical expression shapes (no redundant nesting).
    """
    lines = []
    lines.append(f"start {g.start};")
    if g.tokens:
        lines.append("tokens {")
        for t in g.tokens:
            if t.kind == "literal":
                body = t.text.replace("\\", "\\\\").replace('"', '\\"')
                lines.append(f'  {t.name} = "{body}";')
            else:
                body = t.text.replace("/", "\\/")
                lines.append(f"  {t.name} = /{body}/;")
        lines.append("}")
    if g.attrs:
        lines.append("attrs {")
        for nt, decls in g.attrs.items():
            parts = [d.key + (" bool" if d.kind == "bool" else f" int({d.size})") for d in decls]
            lines.append(f"  {nt} : {', '.join(parts)};")
        lines.append("}")
    lines.append("rules {")
    for r in g.rules:
        head = r.name
        body = _render_expr(r.rhs)
        where = ""
        if r.constraints:
            where = " where " + ", ".join(_render_constraint(c) for c in r.constraints)
        lines.append(f"  {head} -> {body}{where};")
    lines.append("}")
    if g.prec:
        lines.append("prec {")
        for grp in g.prec:
            refs = ", ".join(l + ("." + v if v else "") for l, v in grp.rules)
            lines.append(f"  {{{refs}}} {grp.assoc};")
        lines.append("}")
    return "\n".join(lines) + "\n"

"""The chart-parser / enumeration oracle, checked on known-by-hand cases."""

import pytest

from xlrgen.flatten import flatten
from xlrgen.grammar import parse_grammar_source, validate_grammar
from xlrgen.oracle import (
    attr_valid, enumerate_bnf, enumerate_language, k_prefixes, oracle_parse,
)
from corpus import CORPUS


def load(name):
    g = parse_grammar_source(CORPUS[name])
    validate_grammar(g)
    return g, flatten(g)


def test_parens_recognition():
    _, cfg = load("parens")
    assert oracle_parse(cfg, []).accepted
    assert oracle_parse(cfg, ["LP", "RP"]).accepted
    assert oracle_parse(cfg, ["LP", "LP", "RP", "RP"]).accepted
    assert not oracle_parse(cfg, ["LP", "RP", "LP", "RP"]).accepted
    assert not oracle_parse(cfg, ["LP"]).accepted
    assert not oracle_parse(cfg, ["RP", "LP"]).accepted


def test_single_tree_shape():
    _, cfg = load("parens")
    r = oracle_parse(cfg, ["LP", "RP"])
    assert r.tree_count == 1
    t = r.trees[0]
    wrapper = cfg.start_production
    assert t.pid == wrapper.pid
    inner = t.children[0]
    assert cfg.productions[inner.pid].rhs == ("LP", "S", "RP")
    assert inner.children[0] == "LP" and inner.children[2] == "RP"


def test_ambiguous_duplicate_productions():
    _, cfg = load("ambig_dup")
    r = oracle_parse(cfg, ["A"])
    assert r.accepted and r.tree_count == 2


def test_ambiguous_infix():
    _, cfg = load("no_fork")
    r = oracle_parse(cfg, ["N", "PLUS", "N", "PLUS", "N"])
    assert r.accepted and r.tree_count == 2     # left- and right-nested


def test_nullable_chains():
    _, cfg = load("eps_lookahead")
    assert oracle_parse(cfg, ["A"]).accepted          # Pre -> empty
    assert oracle_parse(cfg, ["B", "A"]).accepted     # Pre -> B
    assert oracle_parse(cfg, ["B"]).accepted          # S -> B
    assert not oracle_parse(cfg, ["A", "B"]).accepted


def test_enumeration_parens():
    _, cfg = load("parens")
    lang = enumerate_language(cfg, 6)
    assert lang == {
        (), ("LP", "RP"), ("LP", "LP", "RP", "RP"),
        ("LP", "LP", "LP", "RP", "RP", "RP"),
    }


def test_enumeration_cap_guard():
    _, cfg = load("parens")
    with pytest.raises(ValueError):
        enumerate_language(cfg, 13)


def test_bnf_enumeration_matches_flattened():
    for name in ("star_field", "array_index", "alt_chain", "json_mini",
                 "opt_nest", "star_sep", "plus_rep", "parens", "fork_tail"):
        g, cfg = load(name)
        assert enumerate_bnf(g, 5) == enumerate_language(cfg, 5), name


def test_enumeration_agrees_with_parsing():
    g, cfg = load("star_field")
    lang = enumerate_language(cfg, 4)
    assert ("STAR", "E") in lang and ("E", "E") in lang and ("E",) in lang
    import itertools
    alphabet = cfg.terminals
    for n in range(4):
        for w in itertools.product(alphabet, repeat=n):
            assert (w in lang) == oracle_parse(cfg, list(w)).accepted, w


def test_attr_validity_precedence():
    _, cfg = load("arith_prec")
    r = oracle_parse(cfg, ["NUM", "PLUS", "NUM", "TIMES", "NUM"])
    assert r.tree_count == 2
    valid = [t for t in r.trees if attr_valid(cfg, t)]
    assert len(valid) == 1

    def shape(t):
        prov = cfg.productions[t.pid].provenance
        kids = [shape(c) for c in t.children if not isinstance(c, str)]
        name = prov.variant or prov.lhs
        return (name, kids) if kids else name

    assert shape(valid[0]) == ("_E", [("Add", ["Num", ("Mul", ["Num", "Num"])])])


def test_attr_validity_left_assoc():
    _, cfg = load("arith_prec")
    r = oracle_parse(cfg, ["NUM", "PLUS", "NUM", "PLUS", "NUM"])
    valid = [t for t in r.trees if attr_valid(cfg, t)]
    assert len(valid) == 1
    top = valid[0].children[0]
    left = top.children[0]
    assert cfg.productions[top.pid].provenance.variant == "Add"
    assert cfg.productions[left.pid].provenance.variant == "Add"


def test_attr_validity_prefix_vs_infix():
    _, cfg = load("arith_prec")
    r = oracle_parse(cfg, ["MINUS", "NUM", "TIMES", "NUM"])
    valid = [t for t in r.trees if attr_valid(cfg, t)]
    assert len(valid) == 1
    top = valid[0].children[0]
    assert cfg.productions[top.pid].provenance.variant == "Mul"


def test_attr_validity_dangling_else():
    _, cfg = load("dangling_else_attr")
    syms = ["IF", "E", "IF", "E", "X", "ELSE", "X"]
    r = oracle_parse(cfg, syms)
    assert r.tree_count == 2
    valid = [t for t in r.trees if attr_valid(cfg, t)]
    assert len(valid) == 1
    # the else must attach to the inner if
    top = valid[0].children[0]
    assert len(cfg.productions[top.pid].rhs) == 3     # IfNoElse at the top
    inner = top.children[2]
    assert len(cfg.productions[inner.pid].rhs) == 5   # IfElse inside


def test_attr_validity_dot_call_footnote():
    _, cfg = load("dot_call")
    # x().y and x.y() must both admit assignments
    for syms in (["ID", "LP", "RP", "DOT", "ID"],
                 ["ID", "DOT", "ID", "LP", "RP"]):
        r = oracle_parse(cfg, syms)
        assert r.accepted
        valid = [t for t in r.trees if attr_valid(cfg, t)]
        assert len(valid) == 1, syms


def test_k_prefixes():
    _, cfg = load("parens")
    lang = enumerate_language(cfg, 4)
    ps = k_prefixes(lang, 2, "$")
    assert ("$", "$") in ps          # empty string padded
    assert ("LP", "RP") in ps
    assert ("LP", "LP") in ps

"""Parser generator for attribute-constrained grammars.

Compiles declarative grammars (BNF operators, precedence groups, attribute
constraints) into parse tables via lookahead-partition optimized LR(k),
recursive-descent table constructions and a forking XLR mode, with a
table-driven runtime and an independent chart-parser oracle for testing.
"""

from .grammar import (
    BnfGrammar, BnfRule, Diagnostic, GrammarError, parse_grammar_source,
    render, validate_grammar,
)
from .flatten import Cfg, FlatConstraint, Production, SENTINEL, flatten
from .automata import (
    Action, Automaton, Conflict, FirstK, FollowPartition, InfiniteRecursion,
    build_lr_nfa, build_rd_nfa, canonical_partition, detect_conflicts,
    first_k, follow_universe, lr0_partition, slr_partition, subset_construct,
)
from .partition import (
    ConflictLookaheads, ReachableFollows, backward_refine, forward_reachable,
    forward_refine, initial_backward_partition, optimize,
    potentially_conflicting,
)
from .cps import CpsEntry, CpsMap, cps_transform, select_cps_triggering
from .trace import (
    CompletionNotFound, ConflictTrace, GenTable, PrefixTable, gen_table,
    prefix_match, prefix_tables, trace_conflict,
)

__version__ = "0.1.0"

__all__ = [
    "Action", "Automaton", "BnfGrammar", "BnfRule", "Cfg",
    "CompletionNotFound", "Conflict", "ConflictLookaheads", "ConflictTrace",
    "CpsEntry", "CpsMap", "Diagnostic", "FirstK", "FlatConstraint",
    "FollowPartition", "GenTable", "GrammarError", "InfiniteRecursion",
    "PrefixTable", "Production", "ReachableFollows", "SENTINEL",
    "backward_refine", "build_lr_nfa", "build_rd_nfa", "canonical_partition",
    "cps_transform", "detect_conflicts", "first_k", "flatten",
    "follow_universe", "forward_reachable", "forward_refine", "gen_table",
    "initial_backward_partition", "lr0_partition", "optimize",
    "parse_grammar_source", "potentially_conflicting", "prefix_match",
    "prefix_tables", "render", "select_cps_triggering", "slr_partition",
    "subset_construct", "trace_conflict", "validate_grammar", "__version__",
]

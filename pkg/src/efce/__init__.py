"""Extensive-form correlated equilibria via regret minimization over the correlation-plan polytope."""

from .battleship import generate_battleship
from .game import (
    EMPTY,
    GameBuilder,
    GameFormatError,
    GameTree,
    GameValidationError,
    SequenceSpace,
    Violation,
    build_fixture,
    build_sequence_space,
    parse_game,
    serialize_game,
    validate,
)
from .polytope import (
    DecompositionChain,
    FillSimplex,
    RelevanceStructure,
    StructuralError,
    SumSimplex,
    chain_membership,
    chain_sample,
    check_plan_constraints,
    compute_relevance,
    critical_player,
    decompose,
    pure_profile_plan,
)
from .regret import ChainRM, RegretMatching, RegretMatchingPlus, ScaledExtensionRM, treeplex_rm
from .solver import EFCEProblem, SolverOptions, deviation_gap, folk_theorem_check, self_play

__version__ = "0.1.0"

"""Brute-force reference computations for tiny games.

These walk the game tree directly and enumerate pure strategies, so they
share no logic with the chain machinery they are used to check.  Cost is
exponential in the number of infosets.
"""

from __future__ import annotations

import itertools
from typing import Iterator

import numpy as np

from .game import EMPTY, GameTree, SequenceSpace
from .polytope import DecompositionChain, RelevanceStructure, chain_membership

__all__ = ["leaf_paths", "pure_strategies", "brute_force_trigger_gaps", "brute_force_gap", "reduced_strategies", "count_reduced_strategies", "vertex_membership"]


def leaf_paths(game: GameTree) -> dict[int, list[tuple[int, int, int]]]:
    """For every leaf, the ``(player, infoset, action index)`` moves from the root."""
    out: dict[int, list[tuple[int, int, int]]] = {}
    stack = [(game.root, [])]
    while stack:
        v, path = stack.pop()
        if game.is_leaf(v):
            out[v] = path
            continue
        i = int(game.infoset[v])
        for a, c in enumerate(game.children[v]):
            stack.append((c, path + [(int(game.player[v]), i, a)]))
    return out


def _last_sequence(rel: RelevanceStructure, player: int, moves: list[tuple[int, int, int]]) -> int:
    own = [(i, a) for p, i, a in moves if p == player]
    if not own:
        return EMPTY
    i, a = own[-1]
    return rel.space(player).first_seq[i] + a


def pure_strategies(game: GameTree, player: int, infosets: list[int] | None = None) -> Iterator[dict[int, int]]:
    """Every assignment of an action to each of ``infosets`` (default: all of the player's)."""
    if infosets is None:
        infosets = game.infosets_of(player)
    for combo in itertools.product(*(range(len(game.infoset_actions[i])) for i in infosets)):
        yield dict(zip(infosets, combo))


def brute_force_trigger_gaps(game: GameTree, rel: RelevanceStructure, plan: np.ndarray) -> dict[tuple[int, int, int], float]:
    """``(player, I*, a*) -> best deviation value - follow value`` by enumeration."""
    paths = leaf_paths(game)
    last = {z: (_last_sequence(rel, 1, m), _last_sequence(rel, 2, m)) for z, m in paths.items()}
    out = {}
    for p in (1, 2):
        for istar in game.infosets_of(p):
            below = [z for z, m in paths.items() if any(i == istar for _, i, _ in m)]
            # player-p infosets met at or after I* on those paths
            sub = sorted({i for z in below for q, i, _ in _after(paths[z], istar) if q == p})
            for astar in range(len(game.infoset_actions[istar])):
                sstar = rel.space(p).first_seq[istar] + astar
                follow = 0.0
                for z in below:
                    if (p, istar, astar) in paths[z]:
                        follow += game.payoffs[z, p - 1] * plan[rel.index[last[z]]]
                best = -np.inf
                for policy in pure_strategies(game, p, sub):
                    value = 0.0
                    for z in below:
                        if all(policy[i] == a for q, i, a in _after(paths[z], istar) if q == p):
                            other = last[z][2 - p]
                            pair = (sstar, other) if p == 1 else (other, sstar)
                            value += game.payoffs[z, p - 1] * plan[rel.index[pair]]
                    best = max(best, value)
                out[(p, istar, astar)] = best - follow
    return out


def _after(moves: list[tuple[int, int, int]], istar: int) -> list[tuple[int, int, int]]:
    for k, (_, i, _) in enumerate(moves):
        if i == istar:
            return moves[k:]
    return []


def brute_force_gap(game: GameTree, rel: RelevanceStructure, plan: np.ndarray) -> float:
    gaps = brute_force_trigger_gaps(game, rel, plan)
    return max([0.0, *gaps.values()])


def reduced_strategies(space: SequenceSpace) -> list[dict[int, int]]:
    """Pure strategies choosing only at infosets reachable under the player's own earlier choices.

    Every pure strategy has the same sequence-form vector as exactly one of these.
    """

    def below(seq: int) -> list[dict[int, int]]:
        out: list[dict[int, int]] = [{}]
        for i in space.child_infosets[seq]:
            options = []
            for s in space.sequences(i):
                for rest in below(s):
                    options.append({i: s - space.first_seq[i], **rest})
            out = [{**a, **o} for a in out for o in options]
        return out

    return below(EMPTY)


def count_reduced_strategies(space: SequenceSpace) -> int:
    def below(seq: int) -> int:
        n = 1
        for i in space.child_infosets[seq]:
            n *= sum(below(s) for s in space.sequences(i))
        return n

    return below(EMPTY)


def _sequence_vectors(space: SequenceSpace, strategies: list[dict[int, int]]) -> np.ndarray:
    out = np.zeros((len(strategies), space.size))
    out[:, EMPTY] = 1.0
    for row, strat in enumerate(strategies):
        for i, a in strat.items():
            out[row, space.first_seq[i] + a] = 1.0
    return out


def vertex_membership(rel: RelevanceStructure, chain: DecompositionChain, tol: float = 1e-9, limit: int = 10**6) -> int:
    """Number of pure-profile plans the chain rejects (0 when all pass).

    Enumerates reduced strategies of both players; raises ``ValueError`` if
    there are more than ``limit`` profiles.
    """
    total = count_reduced_strategies(rel.spaces[0]) * count_reduced_strategies(rel.spaces[1])
    if total > limit:
        raise ValueError(f"{total} pure profiles exceed the enumeration limit")
    x1, x2 = (_sequence_vectors(sp, reduced_strategies(sp)) for sp in rel.spaces)
    s1, s2 = rel.pairs[:, 0], rel.pairs[:, 1]
    bad = 0
    rows = max(1, 2_000_000 // max(1, len(x2) * rel.num_pairs))
    for start in range(0, len(x1), rows):
        block = x1[start : start + rows, s1][:, None, :] * x2[:, s2][None, :, :]
        bad += int((~chain_membership(chain, block.reshape(-1, rel.num_pairs), tol)).sum())
    return bad

"""Correlation plans over relevant sequence pairs and their scaled-extension chain.

The polytope of extensive-form correlation plans is indexed by *relevant*
sequence pairs: pairs where one side is the empty sequence, or whose
infosets are connected (some node of one lies on the root path of a node of
the other).  :func:`decompose` rewrites the polytope as a chain of two kinds
of step, applied in order to a vector whose root entry is 1:

* :class:`FillSimplex` splits an already filled entry over a simplex,
* :class:`SumSimplex` sets a new entry to the sum of filled entries.

The exact oracles at the bottom (:func:`check_plan_constraints`,
:func:`chain_membership`, :func:`chain_sample`, :func:`pure_profile_plan`)
are what the tests use to show the chain and the constraint description
define the same set.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .game import EMPTY, GameTree, SequenceSpace, build_sequence_space, _require_admissible

__all__ = [
    "RelevanceStructure",
    "FillSimplex",
    "SumSimplex",
    "DecompositionChain",
    "ConstraintViolation",
    "StructuralError",
    "compute_relevance",
    "critical_infosets",
    "critical_player",
    "decompose",
    "check_plan_constraints",
    "chain_sample",
    "chain_membership",
    "chain_linear_min",
    "pure_profile_plan",
    "serialize_chain",
    "parse_chain",
    "prop2_violations",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-9


class StructuralError(RuntimeError):
    """The game violates a structural property the decomposition relies on."""


# ---------------------------------------------------------------------------
# Relevance


@dataclass(frozen=True, eq=False)
class RelevanceStructure:
    """Connected infosets, relevant sequence pairs and their dense index.

    Pairs are numbered in lexicographic ``(sigma1, sigma2)`` order, so the
    pair of empty sequences always has index 0.
    """

    game: GameTree
    spaces: tuple[SequenceSpace, SequenceSpace]
    connected: Mapping[int, frozenset[int]]  # infoset of either player -> connected opponent infosets
    pairs: np.ndarray  # (num_pairs, 2) int64
    index: Mapping[tuple[int, int], int]

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)

    def space(self, player: int) -> SequenceSpace:
        return self.spaces[player - 1]

    def is_connected(self, i1: int, i2: int) -> bool:
        return i2 in self.connected.get(i1, ())

    def infoset_of(self, player: int, sigma: int) -> int:
        return int(self.spaces[player - 1].seq_infoset[sigma])

    def is_relevant(self, sigma1: int, sigma2: int) -> bool:
        return (sigma1, sigma2) in self.index

    def seq_infoset_relevant(self, player: int, sigma: int, infoset: int) -> bool:
        """``sigma ▷◁ infoset`` where ``sigma`` belongs to ``player`` and ``infoset`` to the opponent."""
        return sigma == EMPTY or self.is_connected(self.infoset_of(player, sigma), infoset)

    def label(self, k: int) -> str:
        s1, s2 = self.pairs[k]
        return f"({_seq_label(self.game, self.spaces[0], int(s1))}, {_seq_label(self.game, self.spaces[1], int(s2))})"


def _seq_label(game: GameTree, space: SequenceSpace, s: int) -> str:
    if s == EMPTY:
        return "∅"
    i = int(space.seq_infoset[s])
    return f"{game.infoset_labels[i]}:{game.infoset_actions[i][int(space.seq_action[s])]}"


def compute_relevance(game: GameTree, spaces: tuple[SequenceSpace, SequenceSpace] | None = None) -> RelevanceStructure:
    if spaces is None:
        _require_admissible(game)
        spaces = (build_sequence_space(game, 1), build_sequence_space(game, 2))

    conn: dict[int, set[int]] = {i: set() for i in range(game.num_infosets)}
    # ancestors[p] holds the infosets of player p+1 on the root path
    stack: list[tuple[int, tuple[int, ...], tuple[int, ...]]] = [(game.root, (), ())]
    while stack:
        v, anc1, anc2 = stack.pop()
        if not game.children[v]:
            continue
        i = game.infoset[v]
        if game.player[v] == 1:
            for j in anc2:
                conn[i].add(j)
                conn[j].add(i)
            anc1 = anc1 if i in anc1 else anc1 + (i,)
        else:
            for j in anc1:
                conn[i].add(j)
                conn[j].add(i)
            anc2 = anc2 if i in anc2 else anc2 + (i,)
        for c in game.children[v]:
            stack.append((c, anc1, anc2))

    s1, s2 = spaces
    rows: list[tuple[int, int]] = [(EMPTY, t) for t in range(s2.size)]
    for sigma1 in range(1, s1.size):
        rows.append((sigma1, EMPTY))
        i1 = int(s1.seq_infoset[sigma1])
        cols = sorted(t for j in conn[i1] for t in s2.sequences(j))
        rows.extend((sigma1, t) for t in cols)
    pairs = np.array(rows, dtype=np.int64).reshape(-1, 2)
    index = {(int(a), int(b)): k for k, (a, b) in enumerate(rows)}
    return RelevanceStructure(
        game=game,
        spaces=spaces,
        connected={i: frozenset(js) for i, js in conn.items()},
        pairs=pairs,
        index=index,
    )


def critical_infosets(rel: RelevanceStructure, pair: tuple[int, int], player: int) -> set[int]:
    """Infosets I of ``player`` with sigma(I) equal to the player's side of ``pair``
    that are connected to some opponent infoset J whose parent sequence is the
    opponent's side of ``pair``."""
    own = rel.space(player)
    opp = rel.space(3 - player)
    mine, theirs = pair[player - 1], pair[2 - player]
    opp_children = opp.child_infosets[theirs]
    return {i for i in own.child_infosets[mine] if any(rel.is_connected(i, j) for j in opp_children)}


def critical_player(rel: RelevanceStructure, pair: tuple[int, int]) -> int:
    """A player with at most one critical infoset for ``pair``; player 1 on ties."""
    for p in (1, 2):
        if len(critical_infosets(rel, pair, p)) <= 1:
            return p
    raise StructuralError(
        f"both players have several critical infosets at {pair}; the game cannot be free of chance moves"
    )


# ---------------------------------------------------------------------------
# Chains


@dataclass(frozen=True)
class FillSimplex:
    """Split ``plan[source]`` over ``targets`` (a scaled simplex)."""

    source: int
    targets: tuple[int, ...]
    player: int = 0  # owner of the infoset whose actions the targets stand for; 0 if unknown
    infoset: int = -1


@dataclass(frozen=True)
class SumSimplex:
    """Set ``plan[target]`` to the sum of ``plan[sources]``."""

    target: int
    sources: tuple[int, ...]


Step = Union[FillSimplex, SumSimplex]


@dataclass(frozen=True)
class DecompositionChain:
    """Ordered scaled-extension steps over a vector of ``size`` entries with ``plan[root] = 1``."""

    size: int
    steps: tuple[Step, ...]
    root: int = 0

    @property
    def fills(self) -> list[FillSimplex]:
        return [s for s in self.steps if isinstance(s, FillSimplex)]

    @property
    def sums(self) -> list[SumSimplex]:
        return [s for s in self.steps if isinstance(s, SumSimplex)]

    def widths(self) -> list[int]:
        return [len(s.targets) for s in self.fills]

    def check_well_founded(self) -> None:
        """Every index except the root is written exactly once, after everything it reads."""
        written = np.zeros(self.size, dtype=bool)
        written[self.root] = True
        for n, step in enumerate(self.steps):
            reads = (step.source,) if isinstance(step, FillSimplex) else step.sources
            writes = step.targets if isinstance(step, FillSimplex) else (step.target,)
            if not all(written[r] for r in reads):
                raise StructuralError(f"step {n} reads an entry that is not filled yet")
            if any(written[w] for w in writes):
                raise StructuralError(f"step {n} overwrites a filled entry")
            written[list(writes)] = True
        if not written.all():
            raise StructuralError(f"{int((~written).sum())} entries are never filled")


def decompose(game: GameTree, rel: RelevanceStructure) -> DecompositionChain:
    """Scaled-extension chain for the correlation-plan polytope of ``game``.

    Direct transcription of the recursive Decompose procedure started at the
    pair of empty sequences.  Child infosets are visited in sequence-space
    order, and opponent infosets below the current pair in ascending
    topological order.
    """
    s1, s2 = rel.spaces
    spaces = (s1, s2)
    index = rel.index
    filled = np.zeros(rel.num_pairs, dtype=bool)
    filled[index[(EMPTY, EMPTY)]] = True
    steps: list[Step] = []

    def mark(ks: list[int]) -> None:
        if filled[ks].any():
            raise StructuralError("decomposition filled an entry twice")
        filled[ks] = True

    def below(player: int, sigma: int, mine: int) -> list[int]:
        """Infosets J of ``player`` with sigma(J) ⪰ sigma and ``mine`` ▷◁ J."""
        space = spaces[player - 1]
        if mine == EMPTY:
            return space.descendant_infosets(sigma)
        candidates = rel.connected[rel.infoset_of(3 - player, mine)]
        out = [j for j in candidates if space.is_descendant(space.parent_seq[j], sigma)]
        out.sort(key=space.first_seq.__getitem__)
        return out

    def run(sigma1: int, sigma2: int) -> None:
        pair = (sigma1, sigma2)
        p = critical_player(rel, pair)
        q = 3 - p
        crit = critical_infosets(rel, pair, p)
        own, opp = spaces[p - 1], spaces[q - 1]
        mine, theirs = pair[p - 1], pair[q - 1]

        def key(a: int, b: int) -> int:
            # a: sequence of the critical player, b: sequence of the opponent
            return index[(a, b) if p == 1 else (b, a)]

        here = index[pair]
        for i in own.child_infosets[mine]:
            if not rel.seq_infoset_relevant(q, theirs, i):
                continue
            targets = [key(s, theirs) for s in own.sequences(i)]
            mark(targets)
            steps.append(FillSimplex(here, tuple(targets), p, i))
            for s in own.sequences(i):
                run(*((s, theirs) if p == 1 else (theirs, s)))

        star = next(iter(crit)) if len(crit) == 1 else None
        for j in below(q, theirs, mine):
            if star is not None and rel.is_connected(star, j):
                for t in opp.sequences(j):
                    target = key(mine, t)
                    mark([target])
                    steps.append(SumSimplex(target, tuple(key(s, t) for s in own.sequences(star))))
            else:
                targets = [key(mine, t) for t in opp.sequences(j)]
                mark(targets)
                steps.append(FillSimplex(key(mine, opp.parent_seq[j]), tuple(targets), q, j))

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 10_000 + 4 * int(max(s1.depth.max(), s2.depth.max()))))
    try:
        run(EMPTY, EMPTY)
    finally:
        sys.setrecursionlimit(limit)

    if not filled.all():
        raise StructuralError(f"decomposition left {int((~filled).sum())} relevant pairs unfilled")
    return DecompositionChain(rel.num_pairs, tuple(steps), root=index[(EMPTY, EMPTY)])


# ---------------------------------------------------------------------------
# Exact oracles


@dataclass(frozen=True)
class ConstraintViolation:
    constraint: str
    residual: float


def _check_dim(plan: np.ndarray, n: int) -> np.ndarray:
    plan = np.asarray(plan, dtype=np.float64)
    if plan.shape != (n,):
        raise ValueError(f"plan has shape {plan.shape}, expected ({n},)")
    return plan


def check_plan_constraints(plan: np.ndarray, rel: RelevanceStructure, tol: float = DEFAULT_TOL) -> list[ConstraintViolation]:
    """Every violated defining constraint of the correlation-plan polytope.

    Checks the unit root entry, nonnegativity and mass conservation
    ``sum_a xi[(I,a), s] = xi[sigma(I), s]`` for every infoset I and opponent
    sequence s with ``I ▷◁ s`` (both players).
    """
    plan = _check_dim(plan, rel.num_pairs)
    out: list[ConstraintViolation] = []
    root = plan[rel.index[(EMPTY, EMPTY)]] - 1.0
    if abs(root) > tol:
        out.append(ConstraintViolation("xi[∅,∅] = 1", float(root)))
    for k in np.flatnonzero(plan < -tol):
        out.append(ConstraintViolation(f"xi{rel.label(int(k))} >= 0", float(plan[k])))

    index = rel.index
    for p in (1, 2):
        own, opp = rel.space(p), rel.space(3 - p)
        for i in own.infosets:
            parent = own.parent_seq[i]
            partners = [EMPTY] + sorted(t for j in rel.connected[i] for t in opp.sequences(j))
            for t in partners:
                if p == 1:
                    lhs = sum(plan[index[(s, t)]] for s in own.sequences(i))
                    rhs = plan[index[(parent, t)]]
                    name = f"sum_a xi[({rel.game.infoset_labels[i]},a), {_seq_label(rel.game, opp, t)}]"
                else:
                    lhs = sum(plan[index[(t, s)]] for s in own.sequences(i))
                    rhs = plan[index[(t, parent)]]
                    name = f"sum_a xi[{_seq_label(rel.game, opp, t)}, ({rel.game.infoset_labels[i]},a)]"
                if abs(lhs - rhs) > tol:
                    out.append(ConstraintViolation(name, float(lhs - rhs)))
    return out


def chain_sample(chain: DecompositionChain, seed: int | np.random.Generator | None = None, uniform: bool = False) -> np.ndarray:
    """A random point of the chain's set, built step by step.

    Each simplex draw is a vertex with probability 1/5 and Dirichlet(1)
    otherwise, so degenerate (zero-mass) branches are exercised too.  With
    ``uniform`` every split is even.
    """
    rng = np.random.default_rng(seed)
    plan = np.zeros(chain.size)
    plan[chain.root] = 1.0
    for step in chain.steps:
        if isinstance(step, FillSimplex):
            n = len(step.targets)
            if uniform:
                w = np.full(n, 1.0 / n)
            elif rng.random() < 0.2:
                w = np.zeros(n)
                w[rng.integers(n)] = 1.0
            else:
                w = rng.dirichlet(np.ones(n))
            plan[list(step.targets)] = plan[step.source] * w
        else:
            plan[step.target] = plan[list(step.sources)].sum()
    return plan


def chain_membership(chain: DecompositionChain, plan: np.ndarray, tol: float = DEFAULT_TOL) -> bool | np.ndarray:
    """Whether ``plan`` lies in the set generated by ``chain`` (up to ``tol``).

    A fill step whose source is (numerically) zero must leave all its
    targets at zero.  A 2-D ``plan`` is a batch with one plan per row and
    gives one boolean per row.
    """
    plans = np.asarray(plan, dtype=np.float64)
    batch = plans.ndim == 2
    if not batch:
        plans = _check_dim(plans, chain.size)[None, :]
    elif plans.shape[1] != chain.size:
        raise ValueError(f"plans have {plans.shape[1]} columns, expected {chain.size}")
    ok = np.abs(plans[:, chain.root] - 1.0) <= tol
    for step in chain.steps:
        if isinstance(step, FillSimplex):
            src = plans[:, step.source]
            vals = plans[:, list(step.targets)]
            ok &= (vals >= -tol).all(axis=1)
            ok &= np.where(src <= tol, (vals <= tol).all(axis=1), np.abs(vals.sum(axis=1) - src) <= tol)
        else:
            ok &= np.abs(plans[:, step.target] - plans[:, list(step.sources)].sum(axis=1)) <= tol
    return ok if batch else bool(ok[0])


def chain_linear_min(chain: DecompositionChain, loss: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimum of ``<loss, x>`` over the chain's set, and a minimizing vertex.

    Backward pass: a filled-in simplex contributes its cheapest target to
    its source, a sum step pushes its target's loss onto its sources.
    """
    value = np.array(loss, dtype=np.float64)
    if value.shape != (chain.size,):
        raise ValueError(f"loss has shape {value.shape}, expected ({chain.size},)")
    choice: dict[int, int] = {}
    for n in range(len(chain.steps) - 1, -1, -1):
        step = chain.steps[n]
        if isinstance(step, FillSimplex):
            t = list(step.targets)
            k = int(np.argmin(value[t]))
            choice[n] = k
            value[step.source] += value[t[k]]
        else:
            value[list(step.sources)] += value[step.target]
    x = np.zeros(chain.size)
    x[chain.root] = 1.0
    for n, step in enumerate(chain.steps):
        if isinstance(step, FillSimplex):
            x[step.targets[choice[n]]] = x[step.source]
        else:
            x[step.target] = x[list(step.sources)].sum()
    return float(value[chain.root]), x


def pure_profile_plan(game: GameTree, rel: RelevanceStructure, profile: Mapping[int, int]) -> np.ndarray:
    """Correlation plan of a pure profile: ``xi[s1, s2] = x1[s1] * x2[s2]``.

    ``profile`` maps infoset id to action index, and must cover every infoset
    its owner can reach under their own choices.
    """
    xs = []
    for space in rel.spaces:
        x = np.zeros(space.size)
        x[EMPTY] = 1.0
        for i in space.infosets:
            if x[space.parent_seq[i]] == 0.0:
                continue
            if i not in profile:
                raise ValueError(f"profile has no action at reachable infoset {game.infoset_labels[i]!r}")
            a = profile[i]
            if not 0 <= a < space.num_actions[i]:
                raise ValueError(f"action {a} out of range at infoset {game.infoset_labels[i]!r}")
            x[space.first_seq[i] + a] = 1.0
        xs.append(x)
    return xs[0][rel.pairs[:, 0]] * xs[1][rel.pairs[:, 1]]


# ---------------------------------------------------------------------------
# Text form


def serialize_chain(chain: DecompositionChain, rel: RelevanceStructure | None = None) -> str:
    """``pair <idx> <s1> <s2>`` table (when ``rel`` is given) followed by one line per step."""
    lines = []
    if rel is not None:
        lines.extend(f"pair {k} {a} {b}" for k, (a, b) in enumerate(rel.pairs.tolist()))
    for step in chain.steps:
        if isinstance(step, FillSimplex):
            lines.append("fill " + " ".join(map(str, (step.source, *step.targets))))
        else:
            lines.append("sum " + " ".join(map(str, (step.target, *step.sources))))
    return "\n".join(lines) + "\n"


def parse_chain(text: str) -> tuple[DecompositionChain, np.ndarray]:
    """Inverse of :func:`serialize_chain`; returns the chain and the pair table (possibly empty)."""
    pairs: dict[int, tuple[int, int]] = {}
    steps: list[Step] = []
    biggest = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        try:
            nums = [int(t) for t in tokens[1:]]
        except ValueError:
            raise ValueError(f"line {lineno}: non-integer field") from None
        if tokens[0] == "pair" and len(nums) == 3:
            pairs[nums[0]] = (nums[1], nums[2])
        elif tokens[0] == "fill" and len(nums) >= 2:
            steps.append(FillSimplex(nums[0], tuple(nums[1:])))
        elif tokens[0] == "sum" and len(nums) >= 2:
            steps.append(SumSimplex(nums[0], tuple(nums[1:])))
        else:
            raise ValueError(f"line {lineno}: expected 'pair', 'fill' or 'sum' record")
        if tokens[0] != "pair":
            biggest = max(biggest, *nums)
    size = len(pairs) if pairs else biggest + 1
    table = np.array([pairs[k] for k in range(len(pairs))], dtype=np.int64).reshape(-1, 2)
    chain = DecompositionChain(size, tuple(steps))
    chain.check_well_founded()
    return chain, table


def prop2_violations(rel: RelevanceStructure) -> list[tuple[tuple[int, int], int, int, int, int]]:
    """Quadruples that would make the decomposition impossible.

    For every relevant pair ``(s1, s2)`` and distinct infosets ``I1, I1'``
    below ``s1`` and ``I2, I2'`` below ``s2``, it must not happen that both
    ``I1 ⇌ I2`` and ``I1' ⇌ I2'``.  Returns each offending
    ``(pair, I1, I2, I1', I2')``; without chance moves the list is empty.
    """
    sp1, sp2 = rel.spaces
    out = []
    for s1, s2 in rel.pairs.tolist():
        c1, c2 = sp1.child_infosets[s1], sp2.child_infosets[s2]
        if len(c1) < 2 or len(c2) < 2:
            continue
        edges = [(i, j) for i in c1 for j in c2 if rel.is_connected(i, j)]
        for a, (i, j) in enumerate(edges):
            for i2, j2 in edges[a + 1 :]:
                if i != i2 and j != j2:
                    out.append(((s1, s2), i, j, i2, j2))
    return out

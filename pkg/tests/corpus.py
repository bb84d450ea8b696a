"""Random admissible games and reference implementations shared by the tests."""

from __future__ import annotations

import numpy as np

from efce.game import EMPTY, GameBuilder, GameTree, SequenceSpace
from efce.regret import RegretMatchingPlus, ScaledExtensionRM


def random_game(seed: int, max_nodes: int = 200, max_leaves: int | None = None, max_depth: int = 6) -> GameTree:
    """A random two-player perfect-recall game without chance moves.

    A player's infoset is determined by their own past infosets and actions
    plus a coarse signal of each opponent action (several opponent actions
    may share a signal), so infosets span several nodes while perfect
    recall holds by construction.
    """
    rng = np.random.default_rng(seed)
    b = GameBuilder()
    signal: dict[tuple[str, int], int] = {}
    arity: dict[str, int] = {}
    names: dict[tuple, str] = {}
    budget = {"nodes": 0, "leaves": 0}
    leaf_cap = max_leaves if max_leaves is not None else max_nodes

    def new_leaf() -> int:
        budget["nodes"] += 1
        budget["leaves"] += 1
        return b.leaf(float(rng.integers(-5, 6)), float(rng.integers(-5, 6)))

    def grow(depth: int, views: tuple[tuple, tuple]) -> int:
        room = min(max_nodes - budget["nodes"], 2 * (leaf_cap - budget["leaves"]))
        if depth >= max_depth or room < 8 or (depth > 0 and rng.random() < 0.25):
            return new_leaf()
        p = int(rng.integers(1, 3))
        view = (p, views[p - 1])
        if view not in names:
            names[view] = f"p{p}i{len(names)}"
            arity[names[view]] = int(rng.integers(2, 4))
        label = names[view]
        budget["nodes"] += 1
        actions = [f"a{k}" for k in range(arity[label])]
        v = b.decision(p, label, actions)
        for k, a in enumerate(actions):
            key = (label, k)
            if key not in signal:
                signal[key] = int(rng.integers(0, 2))
            mine = views[p - 1] + ((label, k),)
            theirs = views[2 - p] + (signal[key],)
            nv = (mine, theirs) if p == 1 else (theirs, mine)
            b.connect(v, a, grow(depth + 1, nv))
        return v

    root = grow(0, ((), ()))
    return b.build(root)


def cfr_sequence_strategies(space: SequenceSpace, losses: list[np.ndarray]) -> list[np.ndarray]:
    """Plain counterfactual regret minimization with regret matching on one player's tree.

    ``losses`` are indexed by the player's sequences; returns the
    sequence-form strategy played before each loss is revealed.
    """
    regrets = {i: np.zeros(space.num_actions[i]) for i in space.infosets}

    def policy(i: int) -> np.ndarray:
        pos = np.maximum(regrets[i], 0.0)
        return pos / pos.sum() if pos.sum() > 0 else np.full(len(pos), 1.0 / len(pos))

    def counterfactual(i: int, loss: np.ndarray, pi: dict[int, np.ndarray]) -> float:
        values = np.zeros(space.num_actions[i])
        for a, s in enumerate(space.sequences(i)):
            values[a] = loss[s] + sum(counterfactual(j, loss, pi) for j in space.child_infosets[s])
        expected = float(pi[i] @ values)
        regrets[i] += expected - values
        return expected

    played = []
    for loss in losses:
        pi = {i: policy(i) for i in space.infosets}
        x = np.zeros(space.size)
        x[EMPTY] = 1.0
        for i in space.infosets:  # topological order
            for a, s in enumerate(space.sequences(i)):
                x[s] = x[space.parent_seq[i]] * pi[i][a]
        played.append(x)
        for i in space.child_infosets[EMPTY]:
            counterfactual(i, loss, pi)
    return played


def profile_count(game: GameTree) -> int:
    from efce.game import build_sequence_space
    from efce.oracles import count_reduced_strategies

    return count_reduced_strategies(build_sequence_space(game, 1)) * count_reduced_strategies(build_sequence_space(game, 2))


def deviation_policy_count(game: GameTree) -> int:
    """Largest number of pure deviation policies the brute-force gap oracle enumerates for one trigger."""
    from efce.oracles import _after, leaf_paths

    paths = leaf_paths(game)
    worst = 1
    for istar in range(game.num_infosets):
        p = int(game.infoset_player[istar])
        sub = {i for m in paths.values() for q, i, _ in _after(m, istar) if q == p}
        worst = max(worst, int(np.prod([len(game.infoset_actions[i]) for i in sub])))
    return worst


def game_corpus(count: int, max_nodes: int = 200, max_leaves: int | None = None, max_profiles: int = 20_000,
                max_policies: int | None = None, first_seed: int = 0) -> list[GameTree]:
    """The first ``count`` seeds whose games have at least 10 nodes and fit the given limits."""
    out = []
    seed = first_seed
    while len(out) < count:
        g = random_game(seed, max_nodes=max_nodes, max_leaves=max_leaves)
        seed += 1
        if not 10 <= g.num_nodes <= max_nodes or (max_leaves is not None and len(g.leaves) > max_leaves):
            continue
        if profile_count(g) > max_profiles:
            continue
        if max_policies is not None and deviation_policy_count(g) > max_policies:
            continue
        out.append(g)
    return out


class Recording:
    """Wraps a minimizer and remembers every (decision, loss) pair it sees."""

    def __init__(self, inner):
        self.inner = inner
        self.decisions, self.losses = [], []
        self.incurred = 0.0
        self.cumulative = 0.0

    def recommend(self):
        x = self.inner.recommend()
        self.decisions.append(x.copy())
        return x

    def observe(self, loss):
        loss = np.array(loss, dtype=float)
        self.losses.append(loss)
        self.incurred += float(loss @ self.decisions[-1])
        self.cumulative = self.cumulative + loss
        self.inner.observe(loss)

    def regret(self) -> float:
        """Regret against the best simplex vertex in hindsight, kept incrementally."""
        return self.incurred - float(np.min(self.cumulative))


def simplex_regret(decisions, losses):
    total = np.sum(losses, axis=0)
    return sum(float(l @ x) for x, l in zip(decisions, losses)) - total.min()


def extension_regret_bound_holds(T: int, seed: int) -> bool:
    """Regret of a scaled extension of a 3-simplex with a 4-simplex never exceeds R_X + h* R_Y."""
    rng = np.random.default_rng(seed)
    a = np.array([1.0, 0.5, 0.0])
    h_star = a.max()
    rx, ry = Recording(RegretMatchingPlus(3)), Recording(RegretMatchingPlus(4))
    z = ScaledExtensionRM(rx, ry, a=a)
    cum = np.zeros(7)
    incurred = 0.0
    for _ in range(T):
        point = z.recommend()
        loss = rng.random(7)
        z.observe(loss)
        incurred += loss @ point
        cum += loss
        # best fixed point of Z: affine in x once y is optimal, so a vertex of x
        best = min(cum[i] + a[i] * cum[3:].min() for i in range(3))
        r_z = incurred - best
        if r_z > rx.regret() + h_star * ry.regret() + 1e-6:
            return False
    return True

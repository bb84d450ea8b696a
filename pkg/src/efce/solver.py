"""EFCE as a bilinear saddle point, solved by regret-minimizing self-play.

A trigger ``(i, sigma*)`` with ``sigma* = (I*, a*)`` pairs a player with one
of their non-empty sequences.  For a correlation plan ``xi`` the trigger's
follow value is

    b_t(xi) = sum_{z in Z_sigma*} u_i(z) xi[sigma_1(z), sigma_2(z)]

and the value of deviating at ``I*`` to a strategy ``y`` of player i below
``I*`` is

    d_t(xi, y) = sum_{z in Z_I*} u_i(z) xi_i[sigma*; z] y[sigma_i(z)]

where ``xi_i[sigma*; z]`` is the plan entry pairing ``sigma*`` with the
opponent's last sequence before z.  The plan is an EFCE iff
``max_y d_t(xi, y) <= b_t(xi)`` for every trigger, i.e. iff

    min_xi  max_{lam in simplex, y_t}  sum_t lam_t (d_t(xi, y_t) - b_t(xi))  <=  0.

With ``y~_t = lam_t y_t`` the objective is bilinear in ``xi`` and
``(lam, y~)``.  The deviation side is a decomposition chain too: a width-n
simplex for ``lam`` followed by one treeplex per trigger hanging off its
``lam`` coordinate.  Both sides run a :class:`ChainRM`.

The bilinear form is stored as sparse term lists (plan index, deviation
index, payoff) and losses are assembled with ``np.bincount``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .game import EMPTY, GameTree, SequenceSpace
from .polytope import (
    DEFAULT_TOL,
    DecompositionChain,
    FillSimplex,
    RelevanceStructure,
    StructuralError,
    check_plan_constraints,
    compute_relevance,
    decompose,
)
from .regret import FLAVORS, ChainRM, CompiledChain, RegretMeter

__all__ = [
    "SolverError",
    "TriggerIndex",
    "build_triggers",
    "DeviationSide",
    "build_deviation_side",
    "SolverOptions",
    "Checkpoint",
    "SolverRun",
    "EFCEProblem",
    "self_play",
    "deviation_gap",
    "trigger_gaps",
    "saddle_gap",
    "folk_theorem_check",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when self-play cannot continue (e.g. non-finite losses)."""


# ---------------------------------------------------------------------------
# Triggers


@dataclass(frozen=True, eq=False)
class TriggerIndex:
    """Triggers and the sparse bilinear/linear forms they induce.

    Deviation-side coordinates are *local*: ``dev_seq`` is the player's
    sequence below the trigger infoset; :class:`DeviationSide` maps it to
    its own layout.  Payoffs are in original units.
    """

    player: np.ndarray  # (n,) 1 or 2
    sequence: np.ndarray  # (n,) sigma*
    infoset: np.ndarray  # (n,) I*
    # deviation terms: u * xi[dev_xi] * y_t[dev_seq] for trigger dev_trigger
    dev_trigger: np.ndarray
    dev_xi: np.ndarray
    dev_seq: np.ndarray
    dev_u: np.ndarray
    # follow terms: u * xi[fol_xi] for trigger fol_trigger
    fol_trigger: np.ndarray
    fol_xi: np.ndarray
    fol_u: np.ndarray

    @property
    def n(self) -> int:
        return len(self.player)

    def label(self, t: int, game: GameTree, spaces: tuple[SequenceSpace, SequenceSpace]) -> str:
        p, s = int(self.player[t]), int(self.sequence[t])
        sp = spaces[p - 1]
        i = int(sp.seq_infoset[s])
        return f"P{p} {game.infoset_labels[i]}:{game.infoset_actions[i][int(sp.seq_action[s])]}"


def _own_chain(space: SequenceSpace, sigma: int) -> list[int]:
    """Non-empty sequences on the way from the root to ``sigma`` (inclusive)."""
    out = []
    while sigma != EMPTY:
        out.append(sigma)
        sigma = int(space.seq_parent[sigma])
    return out


def build_triggers(game: GameTree, rel: RelevanceStructure) -> TriggerIndex:
    spaces = rel.spaces
    tid: dict[tuple[int, int], int] = {}
    player, sequence, infoset = [], [], []
    for p in (1, 2):
        sp = spaces[p - 1]
        for s in range(1, sp.size):
            tid[(p, s)] = len(player)
            player.append(p)
            sequence.append(s)
            infoset.append(int(sp.seq_infoset[s]))

    dev = ([], [], [], [])
    fol = ([], [], [])
    index = rel.index
    for z in game.leaves:
        last = (spaces[0].leaf_seq[z], spaces[1].leaf_seq[z])
        k_follow = index[last]
        for p in (1, 2):
            sp = spaces[p - 1]
            u = float(game.payoffs[z, p - 1])
            if u == 0.0:
                continue
            mine, theirs = last[p - 1], last[2 - p]
            for tau in _own_chain(sp, mine):
                fol[0].append(tid[(p, tau)])
                fol[1].append(k_follow)
                fol[2].append(u)
                i = int(sp.seq_infoset[tau])
                for star in sp.sequences(i):
                    pair = (star, theirs) if p == 1 else (theirs, star)
                    k = index.get(pair)
                    if k is None:
                        raise StructuralError(f"trigger pair {pair} of player {p} is not relevant")
                    dev[0].append(tid[(p, star)])
                    dev[1].append(k)
                    dev[2].append(mine)
                    dev[3].append(u)

    def arr(xs, dtype=np.int64):
        return np.array(xs, dtype=dtype)

    return TriggerIndex(
        player=arr(player),
        sequence=arr(sequence),
        infoset=arr(infoset),
        dev_trigger=arr(dev[0]),
        dev_xi=arr(dev[1]),
        dev_seq=arr(dev[2]),
        dev_u=arr(dev[3], np.float64),
        fol_trigger=arr(fol[0]),
        fol_xi=arr(fol[1]),
        fol_u=arr(fol[2], np.float64),
    )


# ---------------------------------------------------------------------------
# Deviation side


@dataclass(frozen=True, eq=False)
class DeviationSide:
    """Chain over ``(lam, y~_1, ..., y~_n)``.

    Layout: index 0 is the unit root, ``1 .. n`` are the ``lam``
    coordinates, then one block per trigger.  Block ``t`` holds the
    sequences of the trigger player at and below ``I*``; the rest of the
    treeplex rooted at ``sigma(I*)`` carries no loss and is left out.
    """

    chain: DecompositionChain
    n: int
    block_start: np.ndarray  # (n,) first index of each block
    block_sequences: tuple[np.ndarray, ...]  # per trigger, sequence of each block entry
    dev_y: np.ndarray  # deviation-side index of every deviation term

    def lam_index(self, t: int) -> int:
        return 1 + t

    def decode(self, y: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """``lam`` and, per trigger, ``y~_t`` aligned with ``block_sequences[t]``."""
        lam = y[1 : 1 + self.n].copy()
        blocks = [y[s : s + len(q)].copy() for s, q in zip(self.block_start, self.block_sequences)]
        return lam, blocks


def _infoset_blocks(space: SequenceSpace, root_infoset: int) -> tuple[list[int], list[tuple[int, list[int]]]]:
    """Sequences at and below ``root_infoset`` and fill steps over them, with local indices.

    Local index 0 stands for the block's scale (``lam_t``).
    """
    infosets = [root_infoset]
    for s in space.sequences(root_infoset):
        infosets.extend(space.descendant_infosets(s))
    infosets.sort(key=space.first_seq.__getitem__)
    seqs: list[int] = []
    local: dict[int, int] = {}
    steps = []
    for i in infosets:
        src = 0 if i == root_infoset else local[space.parent_seq[i]]
        targets = []
        for s in space.sequences(i):
            seqs.append(s)
            local[s] = len(seqs)
            targets.append(local[s])
        steps.append((src, targets))
    return seqs, steps


def build_deviation_side(game: GameTree, rel: RelevanceStructure, triggers: TriggerIndex) -> DeviationSide:
    n = triggers.n
    if n < 1:
        raise ValueError("the game has no triggers; nothing to deviate from")
    spaces = rel.spaces
    steps: list = [FillSimplex(0, tuple(range(1, n + 1)))]
    size = 1 + n
    starts, seq_tables, lookups = [], [], []
    templates: dict[tuple[int, int], tuple[list[int], list]] = {}
    for t in range(n):
        p, i = int(triggers.player[t]), int(triggers.infoset[t])
        if (p, i) not in templates:
            templates[(p, i)] = _infoset_blocks(spaces[p - 1], i)
        seqs, local_steps = templates[(p, i)]
        base = size - 1  # local index k >= 1 lives at base + k
        for src, targets in local_steps:
            s = 1 + t if src == 0 else base + src
            steps.append(FillSimplex(s, tuple(base + k for k in targets), p, -1))
        starts.append(size)
        seq_tables.append(np.array(seqs, dtype=np.int64))
        lookup = np.full(spaces[p - 1].size, -1, dtype=np.int64)
        lookup[seqs] = np.arange(size, size + len(seqs))
        lookups.append(lookup)
        size += len(seqs)
    dev_y = np.array(
        [lookups[t][s] for t, s in zip(triggers.dev_trigger.tolist(), triggers.dev_seq.tolist())], dtype=np.int64
    )
    if len(dev_y) and (dev_y < 0).any():
        raise StructuralError("a deviation term points outside its trigger's treeplex")
    chain = DecompositionChain(size, tuple(steps))
    return DeviationSide(chain, n, np.array(starts, dtype=np.int64), tuple(seq_tables), dev_y)


# ---------------------------------------------------------------------------
# The saddle point


class EFCEProblem:
    """Everything needed to evaluate losses and gaps for one game.

    ``scale`` divides each player's payoffs inside the learning dynamics;
    gaps are always computed with the original payoffs.
    """

    def __init__(self, game: GameTree, rel: RelevanceStructure | None = None, normalize: bool = True):
        if not np.isfinite(game.payoffs).all():
            raise SolverError("game has non-finite payoffs")
        self.game = game
        self.rel = rel if rel is not None else compute_relevance(game)
        self.plan_chain = decompose(game, self.rel)
        self.triggers = build_triggers(game, self.rel)
        tr = self.triggers
        self.n = tr.n
        self.plan_size = self.rel.num_pairs
        if self.n:
            self.side = build_deviation_side(game, self.rel, tr)
            self.y_size = self.side.chain.size
            self.dev_y = self.side.dev_y
        else:
            self.side = None
            self.y_size = 1
            self.dev_y = np.zeros(0, dtype=np.int64)
        self.fol_y = 1 + tr.fol_trigger
        scale = np.ones(2)
        if normalize:
            for p in (0, 1):
                m = float(np.abs(game.payoffs[:, p]).max(initial=0.0))
                scale[p] = m if m > 0 else 1.0
        self.scale = scale
        self.dev_u_scaled = tr.dev_u / scale[tr.player[tr.dev_trigger] - 1] if len(tr.dev_u) else tr.dev_u
        self.fol_u_scaled = tr.fol_u / scale[tr.player[tr.fol_trigger] - 1] if len(tr.fol_u) else tr.fol_u
        self._plan_compiled: CompiledChain | None = None
        self._y_compiled: CompiledChain | None = None

    @property
    def plan_compiled(self) -> CompiledChain:
        if self._plan_compiled is None:
            self._plan_compiled = CompiledChain(self.plan_chain)
        return self._plan_compiled

    @property
    def y_compiled(self) -> CompiledChain:
        if self._y_compiled is None:
            if self.side is None:
                raise ValueError("the game has no triggers")
            self._y_compiled = CompiledChain(self.side.chain)
        return self._y_compiled

    def objective(self, xi: np.ndarray, y: np.ndarray, scaled: bool = True) -> float:
        du, fu = (self.dev_u_scaled, self.fol_u_scaled) if scaled else (self.triggers.dev_u, self.triggers.fol_u)
        tr = self.triggers
        return float(du @ (xi[tr.dev_xi] * y[self.dev_y]) - fu @ (xi[tr.fol_xi] * y[self.fol_y]))

    def plan_loss(self, y: np.ndarray, scaled: bool = True) -> np.ndarray:
        """Gradient of the objective in ``xi`` (the plan side minimizes)."""
        du, fu = (self.dev_u_scaled, self.fol_u_scaled) if scaled else (self.triggers.dev_u, self.triggers.fol_u)
        tr = self.triggers
        m = self.plan_size
        return np.bincount(tr.dev_xi, weights=du * y[self.dev_y], minlength=m) - np.bincount(
            tr.fol_xi, weights=fu * y[self.fol_y], minlength=m
        )

    def deviation_loss(self, xi: np.ndarray, scaled: bool = True) -> np.ndarray:
        """Negated gradient of the objective in ``(lam, y~)`` (the deviation side maximizes)."""
        du, fu = (self.dev_u_scaled, self.fol_u_scaled) if scaled else (self.triggers.dev_u, self.triggers.fol_u)
        tr = self.triggers
        m = self.y_size
        return np.bincount(self.fol_y, weights=fu * xi[tr.fol_xi], minlength=m) - np.bincount(
            self.dev_y, weights=du * xi[tr.dev_xi], minlength=m
        )

    def trigger_gaps(self, xi: np.ndarray) -> np.ndarray:
        """Per trigger, best deviation value minus follow value, original units."""
        if not self.n:
            return np.zeros(0)
        ell, _ = self.y_compiled.backward(self.deviation_loss(xi, scaled=False), None)
        return -ell[1 : 1 + self.n]


def trigger_gaps(problem: EFCEProblem, plan: np.ndarray) -> np.ndarray:
    return problem.trigger_gaps(np.asarray(plan, dtype=np.float64))


def deviation_gap(problem: EFCEProblem, plan: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[float, int | None]:
    """Largest utility increase any trigger gains by deviating, and that trigger.

    Returns ``(0.0, None)`` when no trigger gains (or there are none).
    Raises ``ValueError`` for a plan outside the polytope.
    """
    plan = np.asarray(plan, dtype=np.float64)
    bad = check_plan_constraints(plan, problem.rel, tol)
    if bad:
        raise ValueError(f"plan is infeasible: {bad[0].constraint} off by {bad[0].residual:.3g}")
    return _gap(problem, plan)


def _gap(problem: EFCEProblem, plan: np.ndarray) -> tuple[float, int | None]:
    g = problem.trigger_gaps(plan)
    if not len(g):
        return 0.0, None
    t = int(np.argmax(g))
    return (float(g[t]), t) if g[t] > 0 else (0.0, None)


def saddle_gap(problem: EFCEProblem, xi: np.ndarray, y: np.ndarray, scaled: bool = True) -> float:
    """``max_y' f(xi, y') - min_xi' f(xi', y)`` for the bilinear objective ``f``."""
    best_y = -problem.y_compiled.linear_min(problem.deviation_loss(xi, scaled))
    best_xi = problem.plan_compiled.linear_min(problem.plan_loss(y, scaled))
    return best_y - best_xi


# ---------------------------------------------------------------------------
# Self-play


@dataclass
class SolverOptions:
    flavor: str = "rm_plus"
    alternate: bool = True
    averaging: str = "linear"  # or "uniform"
    gap_target: float | None = None
    max_iters: int | None = None
    checkpoint_period: int | None = None  # None: checkpoints at powers of two
    normalize: bool = True
    track_regret: bool = False  # measure exact cumulative regrets at checkpoints

    def validate(self) -> None:
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown regret minimizer flavor {self.flavor!r}")
        if self.averaging not in ("linear", "uniform"):
            raise ValueError(f"unknown averaging scheme {self.averaging!r}")
        if self.gap_target is None and self.max_iters is None:
            raise ValueError("set a gap target or an iteration budget")
        if self.gap_target is not None and self.gap_target < 0:
            raise ValueError("gap target must be nonnegative")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("iteration budget must be positive")
        if self.checkpoint_period is not None and self.checkpoint_period < 1:
            raise ValueError("checkpoint period must be positive")

    def is_checkpoint(self, t: int) -> bool:
        if self.checkpoint_period is None:
            return t & (t - 1) == 0
        return t % self.checkpoint_period == 0


@dataclass
class Checkpoint:
    iteration: int
    gap: float
    wall_ms: float
    trigger_player: int | None
    trigger_sequence: int | None
    saddle_gap: float | None = None  # of the averages, scaled units; only with track_regret
    regret_plan: float | None = None
    regret_deviation: float | None = None


@dataclass
class SolverRun:
    problem: EFCEProblem
    options: SolverOptions
    iterations: int = 0
    plan: np.ndarray | None = None  # averaged correlation plan
    deviation: np.ndarray | None = None  # averaged deviation-side point
    trace: list[Checkpoint] = field(default_factory=list)
    converged: bool = False

    @property
    def gap(self) -> float:
        return self.trace[-1].gap if self.trace else float("nan")


def self_play(game: GameTree | EFCEProblem, options: SolverOptions, progress=None) -> SolverRun:
    """Run both regret minimizers against each other until the gap target or budget is hit.

    Alternating schedule: the plan side observes the loss induced by the
    deviation side's latest point and recommends again; the deviation side
    then observes the loss induced by that new plan.  Without alternation
    both observe the losses of the current pair simultaneously.  ``progress``
    is called with every :class:`Checkpoint`.
    """
    options.validate()
    problem = game if isinstance(game, EFCEProblem) else EFCEProblem(game, normalize=options.normalize)
    run = SolverRun(problem, options)
    start = time.perf_counter()

    if problem.n == 0:
        # nothing to deviate from: any plan is an equilibrium
        xi = problem.plan_compiled.forward(_uniform_local(problem.plan_compiled))
        run.iterations, run.plan, run.deviation, run.converged = 1, xi, np.ones(1), True
        run.trace.append(Checkpoint(1, 0.0, 1000 * (time.perf_counter() - start), None, None))
        return run

    X = ChainRM(problem.plan_compiled, options.flavor)
    Y = ChainRM(problem.y_compiled, options.flavor)
    meters = (RegretMeter(problem.plan_compiled), RegretMeter(problem.y_compiled)) if options.track_regret else None
    sum_x = np.zeros(problem.plan_size)
    sum_y = np.zeros(problem.y_size)
    weight = 0.0
    x, y = X.recommend(), Y.recommend()

    t = 0
    while options.max_iters is None or t < options.max_iters:
        t += 1
        if options.alternate:
            lx = _finite(problem.plan_loss(y), "plan", t)
            if meters:
                meters[0].record(lx, x)
            _observe(X, lx, "plan", t)
            x = X.recommend()
            ly = _finite(problem.deviation_loss(x), "deviation", t)
            if meters:
                meters[1].record(ly, y)
            _observe(Y, ly, "deviation", t)
            y = Y.recommend()
            cur_x, cur_y = x, y
        else:
            lx = _finite(problem.plan_loss(y), "plan", t)
            ly = _finite(problem.deviation_loss(x), "deviation", t)
            if meters:
                meters[0].record(lx, x)
                meters[1].record(ly, y)
            cur_x, cur_y = x, y
            _observe(X, lx, "plan", t)
            _observe(Y, ly, "deviation", t)
            x, y = X.recommend(), Y.recommend()

        w = float(t) if options.averaging == "linear" else 1.0
        sum_x += w * cur_x
        sum_y += w * cur_y
        weight += w

        if options.is_checkpoint(t) or t == options.max_iters:
            xbar, ybar = sum_x / weight, sum_y / weight
            gap, trig = _gap(problem, xbar)
            cp = Checkpoint(
                t,
                gap,
                1000 * (time.perf_counter() - start),
                None if trig is None else int(problem.triggers.player[trig]),
                None if trig is None else int(problem.triggers.sequence[trig]),
            )
            if meters:
                cp.saddle_gap = saddle_gap(problem, xbar, ybar)
                cp.regret_plan = meters[0].regret()
                cp.regret_deviation = meters[1].regret()
            run.trace.append(cp)
            if progress is not None:
                progress(cp)
            log.debug("iter %d gap %.3e", t, gap)
            if options.gap_target is not None and gap <= options.gap_target:
                run.converged = True
                break

    run.iterations = t
    run.plan = sum_x / weight
    run.deviation = sum_y / weight
    return run


def _uniform_local(c: CompiledChain) -> np.ndarray:
    return 1.0 / c.fill_widths[c.slot_step] if c.num_slots else np.zeros(0)


def _finite(loss: np.ndarray, side: str, t: int) -> np.ndarray:
    if not np.isfinite(loss).all():
        bad = int(np.flatnonzero(~np.isfinite(loss))[0])
        raise SolverError(f"non-finite {side} loss at iteration {t} (entry {bad}); payoffs too large?")
    return loss


def _observe(rm: ChainRM, loss: np.ndarray, side: str, t: int) -> None:
    with np.errstate(over="ignore", invalid="ignore"):
        rm.observe(loss)
    if not np.isfinite(rm.regrets).all():
        raise SolverError(f"non-finite {side} regrets at iteration {t}; payoffs too large?")


def folk_theorem_check(game: GameTree | EFCEProblem, iterations: int, flavor: str = "rm_plus", slack: float = 1e-6) -> tuple[bool, SolverRun]:
    """Run uniform-average simultaneous self-play and test ``gap <= (R_plan + R_dev) / T`` at every checkpoint.

    The gap here is the saddle-point gap of the averages in the units the
    learners saw.
    """
    opts = SolverOptions(flavor=flavor, alternate=False, averaging="uniform", max_iters=iterations, track_regret=True)
    run = self_play(game, opts)
    ok = all(
        cp.saddle_gap <= (cp.regret_plan + cp.regret_deviation) / cp.iteration + slack
        for cp in run.trace
        if cp.saddle_gap is not None
    )
    return ok, run

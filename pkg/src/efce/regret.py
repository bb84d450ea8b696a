"""Regret minimizers over simplexes, scaled extensions and whole chains.

All minimizers follow the same two-call protocol: ``recommend()`` returns
the next decision, ``observe(loss)`` charges a linear loss to the decision
most recently recommended.  Calls must alternate, starting with
``recommend()``.

:class:`ChainRM` composes one simplex minimizer per :class:`FillSimplex`
step of a :class:`DecompositionChain`.  Steps are grouped into dependency
levels so a recommendation is a forward sweep and a loss observation a
backward sweep, each a few array operations per level.

Snapshot layout (little endian): 8-byte magic ``b"EFCERM\\x00\\x01"``, one
byte flavor (0 = regret matching, 1 = regret matching+), uint64 count,
then ``count`` float64 regrets.
"""

from __future__ import annotations

import struct

import numpy as np

from .game import EMPTY, SequenceSpace
from .polytope import DecompositionChain, FillSimplex, SumSimplex

__all__ = [
    "SimplexRM",
    "RegretMatching",
    "RegretMatchingPlus",
    "PointRM",
    "ScaledExtensionRM",
    "CompiledChain",
    "ChainRM",
    "RegretMeter",
    "treeplex_chain",
    "treeplex_rm",
    "FLAVORS",
]

FLAVORS = ("rm", "rm_plus")
_MAGIC = b"EFCERM\x00\x01"


def _pack(flavor: str, regrets: np.ndarray) -> bytes:
    head = _MAGIC + struct.pack("<BQ", FLAVORS.index(flavor), len(regrets))
    return head + np.ascontiguousarray(regrets, dtype="<f8").tobytes()


def _unpack(blob: bytes) -> tuple[str, np.ndarray]:
    if blob[:8] != _MAGIC:
        raise ValueError("not a regret snapshot")
    flavor, n = struct.unpack_from("<BQ", blob, 8)
    body = blob[17:]
    if len(body) != 8 * n:
        raise ValueError("truncated regret snapshot")
    return FLAVORS[flavor], np.frombuffer(body, dtype="<f8").astype(np.float64)


class SimplexRM:
    """Regret matching on the probability simplex of dimension ``n``.

    With ``plus=True`` this is regret matching+: regrets are clipped at zero
    after every update.  When no regret is positive the recommendation is
    uniform.
    """

    def __init__(self, n: int, plus: bool = False):
        if n < 1:
            raise ValueError("simplex dimension must be positive")
        self.n = n
        self.plus = plus
        self.regrets = np.zeros(n)
        self.last: np.ndarray | None = None

    @property
    def flavor(self) -> str:
        return "rm_plus" if self.plus else "rm"

    def recommend(self) -> np.ndarray:
        pos = np.maximum(self.regrets, 0.0)
        total = pos.sum()
        self.last = pos / total if total > 0 else np.full(self.n, 1.0 / self.n)
        return self.last

    def observe(self, loss: np.ndarray) -> None:
        loss = np.asarray(loss, dtype=np.float64)
        if loss.shape != (self.n,):
            raise ValueError(f"loss has shape {loss.shape}, expected ({self.n},)")
        if self.last is None:
            raise RuntimeError("observe() called before recommend()")
        self.regrets += loss @ self.last - loss
        if self.plus:
            np.maximum(self.regrets, 0.0, out=self.regrets)

    def snapshot(self) -> bytes:
        return _pack(self.flavor, self.regrets)

    def restore(self, blob: bytes) -> None:
        flavor, regrets = _unpack(blob)
        if flavor != self.flavor or len(regrets) != self.n:
            raise ValueError("snapshot does not match this minimizer")
        self.regrets = regrets
        self.last = None


def RegretMatching(n: int) -> SimplexRM:
    return SimplexRM(n, plus=False)


def RegretMatchingPlus(n: int) -> SimplexRM:
    return SimplexRM(n, plus=True)


class PointRM:
    """The trivial minimizer over a one-point set."""

    def __init__(self, point: np.ndarray):
        self.point = np.asarray(point, dtype=np.float64)

    def recommend(self) -> np.ndarray:
        return self.point

    def observe(self, loss: np.ndarray) -> None:
        if np.shape(loss) != self.point.shape:
            raise ValueError("loss does not match the point's dimension")


class ScaledExtensionRM:
    """Regret minimizer over ``{(x, h(x) y)}`` with ``h(x) = <a, x> + b``.

    ``rm_y`` sees the ``y`` block of the loss unchanged; ``rm_x`` sees the
    ``x`` block plus ``<loss_y, y> * a``.
    """

    def __init__(self, rm_x, rm_y, a: np.ndarray, b: float = 0.0):
        self.rm_x = rm_x
        self.rm_y = rm_y
        self.a = np.asarray(a, dtype=np.float64)
        self.b = float(b)
        self._y: np.ndarray | None = None

    def scale(self, x: np.ndarray) -> float:
        return float(self.a @ x + self.b)

    def recommend(self) -> np.ndarray:
        x = self.rm_x.recommend()
        y = self.rm_y.recommend()
        h = self.scale(x)
        if h < 0:
            raise ValueError(f"scale function is negative ({h}) at the recommended point")
        self._y = y
        return np.concatenate([x, h * y])

    def observe(self, loss: np.ndarray) -> None:
        loss = np.asarray(loss, dtype=np.float64)
        m = len(self.a)
        if self._y is None:
            raise RuntimeError("observe() called before recommend()")
        if loss.shape != (m + len(self._y),):
            raise ValueError("loss does not match the extension's dimension")
        loss_x, loss_y = loss[:m], loss[m:]
        self.rm_y.observe(loss_y)
        self.rm_x.observe(loss_x + (loss_y @ self._y) * self.a)


class CompiledChain:
    """A chain's steps regrouped into dependency levels as flat index arrays.

    Level of the root is 0; a fill step sits one level above its source and
    a sum step one level above its deepest source.  Steps of one level only
    read entries of lower levels, so each level is processed at once.
    """

    def __init__(self, chain: DecompositionChain):
        chain.check_well_founded()
        self.chain = chain
        self.size = chain.size
        self.root = chain.root
        level = np.zeros(chain.size, dtype=np.int64)
        step_level = []
        for step in chain.steps:
            if isinstance(step, FillSimplex):
                lv = level[step.source] + 1
                level[list(step.targets)] = lv
            else:
                lv = level[list(step.sources)].max() + 1
                level[step.target] = lv
            step_level.append(int(lv))
        self.num_levels = max(step_level, default=0)

        fills = [(n, s) for n, s in enumerate(chain.steps) if isinstance(s, FillSimplex)]
        # global numbering of fill steps and of their target slots, in chain order
        widths = np.array([len(s.targets) for _, s in fills], dtype=np.int64)
        self.fill_starts = np.concatenate([[0], np.cumsum(widths)[:-1]]).astype(np.int64) if len(fills) else np.zeros(0, np.int64)
        self.fill_widths = widths
        self.num_slots = int(widths.sum())
        self.slot_step = np.repeat(np.arange(len(fills)), widths)
        self.slot_target = np.array([t for _, s in fills for t in s.targets], dtype=np.int64)
        self.fill_source = np.array([s.source for _, s in fills], dtype=np.int64)

        self.levels: list[dict[str, np.ndarray]] = []
        fill_level = np.array([step_level[n] for n, _ in fills], dtype=np.int64)
        sums = [(n, s) for n, s in enumerate(chain.steps) if isinstance(s, SumSimplex)]
        sum_level = np.array([step_level[n] for n, _ in sums], dtype=np.int64)
        for lv in range(1, self.num_levels + 1):
            f = np.flatnonzero(fill_level == lv)
            slots = np.concatenate([np.arange(self.fill_starts[k], self.fill_starts[k] + widths[k]) for k in f]) if len(f) else np.zeros(0, np.int64)
            sl = [sums[k][1] for k in np.flatnonzero(sum_level == lv)]
            sum_sizes = np.array([len(s.sources) for s in sl], dtype=np.int64)
            self.levels.append(
                {
                    "fills": f,
                    "slots": slots.astype(np.int64),
                    # position of each slot's step inside this level's fill list
                    "slot_local": np.repeat(np.arange(len(f)), widths[f]) if len(f) else np.zeros(0, np.int64),
                    "fill_starts": (np.concatenate([[0], np.cumsum(widths[f])[:-1]]) if len(f) else np.zeros(0)).astype(np.int64),
                    "sum_targets": np.array([s.target for s in sl], dtype=np.int64),
                    "sum_sources": np.array([t for s in sl for t in s.sources], dtype=np.int64),
                    "sum_owner": np.repeat(np.arange(len(sl)), sum_sizes),
                }
            )

    def forward(self, local: np.ndarray) -> np.ndarray:
        """Fill in the vector, splitting each fill step's source by ``local`` (one weight per slot)."""
        x = np.zeros(self.size)
        x[self.root] = 1.0
        for lv in self.levels:
            slots = lv["slots"]
            if len(slots):
                x[self.slot_target[slots]] = x[self.fill_source[self.slot_step[slots]]] * local[slots]
            if len(lv["sum_targets"]):
                x[lv["sum_targets"]] = np.bincount(lv["sum_owner"], weights=x[lv["sum_sources"]], minlength=len(lv["sum_targets"]))
        return x

    def backward(self, loss: np.ndarray, local: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
        """Back-propagate ``loss``.

        With ``local`` weights each fill step passes ``<slot losses, weights>``
        to its source; with ``local=None`` it passes the minimum slot loss.
        Returns the propagated loss vector and the per-slot losses seen by
        the fill steps.
        """
        ell = np.array(loss, dtype=np.float64)
        seen = np.zeros(self.num_slots)
        for lv in reversed(self.levels):
            if len(lv["sum_targets"]):
                np.add.at(ell, lv["sum_sources"], ell[lv["sum_targets"]][lv["sum_owner"]])
            slots = lv["slots"]
            if len(slots):
                vals = ell[self.slot_target[slots]]
                seen[slots] = vals
                if local is None:
                    v = np.minimum.reduceat(vals, lv["fill_starts"])
                else:
                    v = np.add.reduceat(vals * local[slots], lv["fill_starts"])
                np.add.at(ell, self.fill_source[lv["fills"]], v)
        return ell, seen

    def linear_min(self, loss: np.ndarray) -> float:
        """``min <loss, x>`` over the chain's set."""
        ell, _ = self.backward(loss, None)
        return float(ell[self.root])

    def segment_sum(self, values: np.ndarray) -> np.ndarray:
        """Per-fill-step sums of a per-slot array."""
        if not self.num_slots:
            return np.zeros(0)
        return np.add.reduceat(values, self.fill_starts)


class ChainRM:
    """Regret minimizer over the set generated by a decomposition chain.

    One regret-matching (``flavor="rm"``) or regret-matching+ (``"rm_plus"``)
    minimizer per fill step; sum steps carry no state.  ``observe`` charges
    the loss to the most recent recommendation and never modifies its
    argument.
    """

    def __init__(self, chain: DecompositionChain | CompiledChain, flavor: str = "rm_plus"):
        if flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
        self.compiled = chain if isinstance(chain, CompiledChain) else CompiledChain(chain)
        self.chain = self.compiled.chain
        self.flavor = flavor
        self.regrets = np.zeros(self.compiled.num_slots)
        self._local: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.compiled.size

    def local_strategies(self) -> np.ndarray:
        """Current simplex recommendations, one weight per fill slot."""
        c = self.compiled
        if not c.num_slots:
            return np.zeros(0)
        pos = np.maximum(self.regrets, 0.0)
        total = c.segment_sum(pos)[c.slot_step]
        uniform = 1.0 / c.fill_widths[c.slot_step]
        return np.where(total > 0, pos / np.where(total > 0, total, 1.0), uniform)

    def recommend(self) -> np.ndarray:
        self._local = self.local_strategies()
        return self.compiled.forward(self._local)

    def observe(self, loss: np.ndarray) -> None:
        loss = np.asarray(loss, dtype=np.float64)
        if loss.shape != (self.size,):
            raise ValueError(f"loss has shape {loss.shape}, expected ({self.size},)")
        if self._local is None:
            raise RuntimeError("observe() called before recommend()")
        c = self.compiled
        _, seen = c.backward(loss, self._local)
        if not c.num_slots:
            return
        expected = c.segment_sum(seen * self._local)
        self.regrets += expected[c.slot_step] - seen
        if self.flavor == "rm_plus":
            np.maximum(self.regrets, 0.0, out=self.regrets)

    def snapshot(self) -> bytes:
        return _pack(self.flavor, self.regrets)

    def restore(self, blob: bytes) -> None:
        flavor, regrets = _unpack(blob)
        if flavor != self.flavor or len(regrets) != len(self.regrets):
            raise ValueError("snapshot does not match this minimizer")
        self.regrets = regrets
        self._local = None


class RegretMeter:
    """Exact cumulative regret of a sequence of decisions in a chain's set."""

    def __init__(self, chain: DecompositionChain | CompiledChain):
        self.compiled = chain if isinstance(chain, CompiledChain) else CompiledChain(chain)
        self.cumulative_loss = np.zeros(self.compiled.size)
        self.incurred = 0.0
        self.rounds = 0

    def record(self, loss: np.ndarray, decision: np.ndarray) -> None:
        self.cumulative_loss += loss
        self.incurred += float(loss @ decision)
        self.rounds += 1

    def regret(self) -> float:
        return self.incurred - self.compiled.linear_min(self.cumulative_loss)


def treeplex_chain(space: SequenceSpace, root_sequence: int = EMPTY) -> tuple[DecompositionChain, np.ndarray]:
    """Fill-only chain for ``{x : x[root_sequence] = 1, mass conserved below it}``.

    Entries are renumbered locally; the second return value maps each chain
    index to its sequence (index 0 is ``root_sequence``).
    """
    seqs = [root_sequence]
    local = {root_sequence: 0}
    steps = []
    frontier = [root_sequence]
    infosets = []
    while frontier:
        s = frontier.pop()
        for i in space.child_infosets[s]:
            infosets.append(i)
            frontier.extend(space.sequences(i))
    infosets.sort(key=space.first_seq.__getitem__)
    for i in infosets:
        targets = []
        for s in space.sequences(i):
            local[s] = len(seqs)
            seqs.append(s)
            targets.append(local[s])
        steps.append(FillSimplex(local[space.parent_seq[i]], tuple(targets), space.player, i))
    return DecompositionChain(len(seqs), tuple(steps)), np.array(seqs, dtype=np.int64)


def treeplex_rm(space: SequenceSpace, root_sequence: int = EMPTY, flavor: str = "rm_plus") -> ChainRM:
    chain, seqs = treeplex_chain(space, root_sequence)
    rm = ChainRM(chain, flavor)
    rm.sequences = seqs
    return rm

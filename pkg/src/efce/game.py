"""Two-player extensive-form games without chance moves.

A :class:`GameTree` is an immutable array-of-attributes view of a rooted
tree.  Decision nodes belong to player 1 or 2 and to exactly one
information set; leaves carry a payoff pair.  Trees are assembled through
:class:`GameBuilder` (used by the text parser, the fixtures and the
Battleship generator) and checked with :func:`validate`.

Text format
-----------
One record per line, ``#`` starts a comment::

    game 2
    root <node>
    node <node> player <1|2> infoset <infoset> actions <a1> <a2> ...
    child <action> <node>          # attaches to the preceding ``node`` line
    leaf <node> payoffs <u1> <u2>  # floats or rationals ``p/q``

Node, infoset and action names are whitespace-free tokens.  Nodes and
infosets are renumbered densely in order of first appearance; the tokens
are kept as labels and written back by :func:`serialize_game`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GameTree",
    "GameBuilder",
    "Violation",
    "GameFormatError",
    "GameValidationError",
    "SequenceSpace",
    "parse_game",
    "serialize_game",
    "validate",
    "build_sequence_space",
    "build_fixture",
    "EMPTY",
]

EMPTY = 0  # index of the empty sequence in every SequenceSpace


class GameFormatError(ValueError):
    """Malformed game document."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class GameValidationError(ValueError):
    """Game is well formed but not admissible (chance, >2 players, imperfect recall...)."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = tuple(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class Violation:
    kind: str  # "player" | "infoset" | "perfect_recall" | "structure"
    where: str
    message: str

    def __str__(self) -> str:
        return f"[{self.kind}] {self.where}: {self.message}"


@dataclass(frozen=True, eq=False)
class GameTree:
    """Immutable game tree stored as per-node attribute tuples.

    Leaves have ``player == 0`` and ``infoset == -1``.  Node ids are dense
    integers; ``children[v][k]`` is reached by playing ``actions[v][k]``.
    """

    root: int
    player: tuple[int, ...]
    infoset: tuple[int, ...]
    actions: tuple[tuple[str, ...], ...]
    children: tuple[tuple[int, ...], ...]
    parent: tuple[int, ...]
    payoffs: np.ndarray  # shape (num_nodes, 2), zero on decision nodes
    node_labels: tuple[str, ...]
    infoset_player: tuple[int, ...]
    infoset_actions: tuple[tuple[str, ...], ...]
    infoset_nodes: tuple[tuple[int, ...], ...]
    infoset_labels: tuple[str, ...]

    @property
    def num_nodes(self) -> int:
        return len(self.player)

    @property
    def num_infosets(self) -> int:
        return len(self.infoset_player)

    def is_leaf(self, v: int) -> bool:
        return not self.children[v]

    @property
    def leaves(self) -> list[int]:
        return [v for v in range(self.num_nodes) if not self.children[v]]

    def infosets_of(self, player: int) -> list[int]:
        return [i for i, p in enumerate(self.infoset_player) if p == player]

    def preorder(self) -> list[int]:
        """Node ids in depth-first preorder, children visited in action order."""
        order = []
        stack = [self.root]
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(reversed(self.children[v]))
        return order

    def infoset_by_label(self, label: str) -> int:
        return self.infoset_labels.index(label)

    def with_payoffs(self, payoffs: np.ndarray) -> "GameTree":
        """Copy of the tree with a new (num_nodes, 2) payoff table."""
        payoffs = np.array(payoffs, dtype=np.float64)
        if payoffs.shape != (self.num_nodes, 2):
            raise ValueError(f"payoff table must have shape {(self.num_nodes, 2)}")
        payoffs[[v for v in range(self.num_nodes) if self.children[v]]] = 0.0
        payoffs.setflags(write=False)
        return GameTree(**{**self.__dict__, "payoffs": payoffs})


class GameBuilder:
    """Incremental construction of a :class:`GameTree`.

    Infosets are referenced by label and created on first use; node and
    infoset ids are assigned in creation order.
    """

    def __init__(self) -> None:
        self._player: list[int] = []
        self._infoset_label: list[str | None] = []
        self._actions: list[tuple[str, ...]] = []
        self._children: list[dict[str, int]] = []
        self._payoffs: list[tuple[float, float]] = []
        self._labels: list[str] = []
        self._infoset_ids: dict[str, int] = {}

    def decision(self, player: int, infoset: str, actions: Iterable[str], label: str | None = None) -> int:
        v = self._new(label)
        self._player.append(int(player))
        self._infoset_label.append(str(infoset))
        self._infoset_ids.setdefault(str(infoset), len(self._infoset_ids))
        self._actions.append(tuple(str(a) for a in actions))
        self._payoffs.append((0.0, 0.0))
        return v

    def leaf(self, u1: float, u2: float, label: str | None = None) -> int:
        v = self._new(label)
        self._player.append(0)
        self._infoset_label.append(None)
        self._actions.append(())
        self._payoffs.append((float(u1), float(u2)))
        return v

    def connect(self, parent: int, action: str, child: int) -> None:
        if action not in self._actions[parent]:
            raise GameFormatError(f"node {self._labels[parent]!r} has no action {action!r}")
        if action in self._children[parent]:
            raise GameFormatError(f"node {self._labels[parent]!r} action {action!r} already has a child")
        self._children[parent][action] = child

    def _new(self, label: str | None) -> int:
        v = len(self._labels)
        self._labels.append(str(v) if label is None else str(label))
        self._children.append({})
        return v

    def build(self, root: int = 0) -> GameTree:
        n = len(self._labels)
        if not 0 <= root < n:
            raise GameFormatError("root node is not declared")
        parent = [-2] * n
        parent[root] = -1
        children: list[tuple[int, ...]] = []
        for v in range(n):
            missing = [a for a in self._actions[v] if a not in self._children[v]]
            if missing:
                raise GameFormatError(f"node {self._labels[v]!r} has no child for action(s) {missing}")
            kids = tuple(self._children[v][a] for a in self._actions[v])
            for c in kids:
                if c == root or parent[c] != -2:
                    raise GameFormatError(f"node {self._labels[c]!r} has more than one parent")
                parent[c] = v
            children.append(kids)
        reached = [False] * n
        stack = [root]
        while stack:
            v = stack.pop()
            reached[v] = True
            stack.extend(children[v])
        orphans = [self._labels[v] for v in range(n) if not reached[v]]
        if orphans:
            raise GameFormatError(f"nodes unreachable from the root: {orphans[:5]}")

        infoset = [self._infoset_ids[s] if s is not None else -1 for s in self._infoset_label]
        k = len(self._infoset_ids)
        members: list[list[int]] = [[] for _ in range(k)]
        for v, i in enumerate(infoset):
            if i >= 0:
                members[i].append(v)
        first = [m[0] for m in members]
        payoffs = np.array(self._payoffs, dtype=np.float64).reshape(n, 2)
        payoffs.setflags(write=False)
        return GameTree(
            root=root,
            player=tuple(self._player),
            infoset=tuple(infoset),
            actions=tuple(self._actions),
            children=tuple(children),
            parent=tuple(parent),
            payoffs=payoffs,
            node_labels=tuple(self._labels),
            infoset_player=tuple(self._player[v] for v in first),
            infoset_actions=tuple(self._actions[v] for v in first),
            infoset_nodes=tuple(tuple(m) for m in members),
            infoset_labels=tuple(sorted(self._infoset_ids, key=self._infoset_ids.get)),
        )


# ---------------------------------------------------------------------------
# Text format


def _parse_payoff(token: str, lineno: int) -> float:
    try:
        return float(Fraction(token)) if "/" in token else float(token)
    except (ValueError, ZeroDivisionError):
        raise GameFormatError(f"bad payoff {token!r}", lineno) from None


def parse_game(text: str, check: bool = True) -> GameTree:
    """Parse a game document.

    Raises :class:`GameFormatError` on syntax errors and, when ``check`` is
    set, :class:`GameValidationError` if the game is not admissible.
    """
    builder = GameBuilder()
    ids: dict[str, int] = {}
    pending: list[tuple[int, str, str, int]] = []  # parent, action, child token, line
    root_token: tuple[str, int] | None = None
    current: int | None = None
    seen_header = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        kind = tokens[0]
        if not seen_header:
            if tokens != ["game", "2"]:
                raise GameFormatError("expected header 'game 2'", lineno)
            seen_header = True
            continue
        if kind == "root":
            if len(tokens) != 2 or root_token is not None:
                raise GameFormatError("expected a single 'root <node>' line", lineno)
            root_token = (tokens[1], lineno)
        elif kind == "node":
            if len(tokens) < 7 or tokens[2] != "player" or tokens[4] != "infoset" or tokens[6] != "actions":
                raise GameFormatError("expected 'node <id> player <p> infoset <iid> actions <a>...'", lineno)
            name = tokens[1]
            if name in ids:
                raise GameFormatError(f"duplicate node {name!r}", lineno)
            try:
                player = int(tokens[3])
            except ValueError:
                # symbolic players such as 'chance' are kept for validation to report
                player = -1
            actions = tokens[7:]
            if not actions:
                raise GameFormatError(f"node {name!r} has no actions", lineno)
            if len(set(actions)) != len(actions):
                raise GameFormatError(f"node {name!r} repeats an action", lineno)
            current = ids[name] = builder.decision(player, tokens[5], actions, label=name)
        elif kind == "child":
            if len(tokens) != 3:
                raise GameFormatError("expected 'child <action> <node>'", lineno)
            if current is None:
                raise GameFormatError("'child' line before any 'node' line", lineno)
            pending.append((current, tokens[1], tokens[2], lineno))
        elif kind == "leaf":
            if len(tokens) != 5 or tokens[2] != "payoffs":
                raise GameFormatError("expected 'leaf <id> payoffs <u1> <u2>'", lineno)
            name = tokens[1]
            if name in ids:
                raise GameFormatError(f"duplicate node {name!r}", lineno)
            ids[name] = builder.leaf(_parse_payoff(tokens[3], lineno), _parse_payoff(tokens[4], lineno), label=name)
            current = None
        elif kind == "game":
            raise GameFormatError("only 'game 2' documents are supported", lineno)
        else:
            raise GameFormatError(f"unknown record {kind!r}", lineno)

    if not seen_header:
        raise GameFormatError("empty document")
    if root_token is None:
        raise GameFormatError("missing 'root' line")
    if root_token[0] not in ids:
        raise GameFormatError(f"root {root_token[0]!r} is not declared", root_token[1])
    for parent, action, token, lineno in pending:
        if token not in ids:
            raise GameFormatError(f"child {token!r} is not declared", lineno)
        try:
            builder.connect(parent, action, ids[token])
        except GameFormatError as err:
            raise GameFormatError(str(err), lineno) from None

    game = builder.build(root=ids[root_token[0]])
    if check:
        violations = validate(game)
        if violations:
            raise GameValidationError(violations)
    return game


def serialize_game(game: GameTree) -> str:
    """Canonical text form; ``parse_game`` of the output reproduces it exactly."""
    lab = game.node_labels
    for name in (*lab, *game.infoset_labels, *(a for acts in game.infoset_actions for a in acts)):
        if not name or len(name.split()) != 1 or "#" in name:
            raise ValueError(f"label {name!r} is empty or contains whitespace or '#'")
    lines = ["game 2", f"root {lab[game.root]}"]
    for v in range(game.num_nodes):
        if game.children[v]:
            lines.append(
                f"node {lab[v]} player {game.player[v]} infoset {game.infoset_labels[game.infoset[v]]} "
                f"actions {' '.join(game.actions[v])}"
            )
            lines.extend(f"child {a} {lab[c]}" for a, c in zip(game.actions[v], game.children[v]))
        else:
            u1, u2 = game.payoffs[v]
            lines.append(f"leaf {lab[v]} payoffs {float(u1)!r} {float(u2)!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Validation


def validate(game: GameTree) -> list[Violation]:
    """List every admissibility violation; an empty list means the game is usable."""
    out: list[Violation] = []
    for v in range(game.num_nodes):
        if game.children[v] and game.player[v] not in (1, 2):
            what = "chance node" if game.player[v] in (0, -1) else f"player {game.player[v]} (only 2 players allowed)"
            out.append(Violation("player", f"node {game.node_labels[v]}", f"unsupported actor: {what}"))

    for i, members in enumerate(game.infoset_nodes):
        where = f"infoset {game.infoset_labels[i]}"
        players = {game.player[v] for v in members}
        if len(players) > 1:
            out.append(Violation("infoset", where, f"nodes belong to different players {sorted(players)}"))
        action_sets = {game.actions[v] for v in members}
        if len(action_sets) > 1:
            out.append(Violation("infoset", where, f"nodes have different action sets {sorted(action_sets)}"))

    # perfect recall: every node of an infoset has the same last own (infoset, action)
    last_own: dict[int, set] = {}
    stack: list[tuple[int, tuple | None, tuple | None]] = [(game.root, None, None)]
    while stack:
        v, seq1, seq2 = stack.pop()
        if not game.children[v]:
            continue
        p = game.player[v]
        i = game.infoset[v]
        own = seq1 if p == 1 else seq2 if p == 2 else None
        last_own.setdefault(i, set()).add(own)
        for k, c in enumerate(game.children[v]):
            step = (i, k)
            stack.append((c, step if p == 1 else seq1, step if p == 2 else seq2))
    for i, parents in last_own.items():
        if len(parents) > 1:
            out.append(
                Violation(
                    "perfect_recall",
                    f"infoset {game.infoset_labels[i]}",
                    f"nodes are reached through {len(parents)} different own parent sequences",
                )
            )
    # a player may not visit the same infoset twice on one path
    for v in range(game.num_nodes):
        if not game.children[v]:
            continue
        u = game.parent[v]
        while u >= 0:
            if game.infoset[u] == game.infoset[v]:
                out.append(
                    Violation("perfect_recall", f"infoset {game.infoset_labels[game.infoset[v]]}", "infoset repeats on a path")
                )
                break
            u = game.parent[u]
    return out


def _require_admissible(game: GameTree) -> None:
    violations = validate(game)
    if violations:
        raise GameValidationError(violations)


# ---------------------------------------------------------------------------
# Sequence form


@dataclass(frozen=True, eq=False)
class SequenceSpace:
    """Sequences of one player, numbered topologically with the empty sequence at 0.

    ``first_seq[I]`` is the index of ``(I, actions[0])``; the sequences of
    ``I`` are ``first_seq[I] .. first_seq[I] + |A_I| - 1``.
    """

    player: int
    infosets: tuple[int, ...]  # this player's infosets, topological order
    first_seq: dict[int, int]
    num_actions: dict[int, int]
    parent_seq: dict[int, int]  # sigma(I)
    seq_infoset: np.ndarray  # -1 for the empty sequence
    seq_action: np.ndarray
    seq_parent: np.ndarray  # parent sequence of sigma(I) for sequence (I, a); -1 for the empty sequence
    child_infosets: tuple[tuple[int, ...], ...]  # per sequence, infosets I with sigma(I) == s
    leaf_seq: dict[int, int]  # sigma_i(z) for every leaf z
    infoset_leaves: dict[int, np.ndarray]  # Z_I
    depth: np.ndarray

    @property
    def size(self) -> int:
        return len(self.seq_infoset)

    def sequences(self, infoset: int) -> range:
        start = self.first_seq[infoset]
        return range(start, start + self.num_actions[infoset])

    def is_descendant(self, tau: int, sigma: int) -> bool:
        """``tau ⪰ sigma``."""
        while self.depth[tau] > self.depth[sigma]:
            tau = int(self.seq_parent[tau])
        return tau == sigma

    def sequence_leaves(self, sigma: int) -> np.ndarray:
        """Z_sigma: leaves whose last own sequence descends from ``sigma``."""
        return np.array([z for z, s in self.leaf_seq.items() if self.is_descendant(s, sigma)], dtype=np.int64)

    def descendant_infosets(self, sigma: int) -> list[int]:
        """Infosets J with sigma(J) ⪰ sigma, in topological order."""
        out = []
        frontier = [sigma]
        while frontier:
            s = frontier.pop()
            for j in self.child_infosets[s]:
                out.append(j)
                frontier.extend(self.sequences(j))
        out.sort(key=lambda j: self.first_seq[j])
        return out


def build_sequence_space(game: GameTree, player: int) -> SequenceSpace:
    infosets: list[int] = []
    seen: set[int] = set()
    for v in game.preorder():
        i = game.infoset[v]
        if i >= 0 and game.player[v] == player and i not in seen:
            seen.add(i)
            infosets.append(i)

    first_seq: dict[int, int] = {}
    num_actions: dict[int, int] = {}
    seq_infoset = [-1]
    seq_action = [-1]
    for i in infosets:
        first_seq[i] = len(seq_infoset)
        num_actions[i] = len(game.infoset_actions[i])
        for k in range(num_actions[i]):
            seq_infoset.append(i)
            seq_action.append(k)

    parent_seq: dict[int, int] = {}
    leaf_seq: dict[int, int] = {}
    infoset_leaves: dict[int, list[int]] = {i: [] for i in infosets}
    stack: list[tuple[int, int, tuple[int, ...]]] = [(game.root, EMPTY, ())]
    while stack:
        v, own, above = stack.pop()
        if not game.children[v]:
            leaf_seq[v] = own
            for i in above:
                infoset_leaves[i].append(v)
            continue
        i = game.infoset[v]
        if game.player[v] == player:
            parent_seq.setdefault(i, own)
            below = above + (i,)
            for k, c in enumerate(game.children[v]):
                stack.append((c, first_seq[i] + k, below))
        else:
            for c in game.children[v]:
                stack.append((c, own, above))

    n = len(seq_infoset)
    seq_parent = np.full(n, -1, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    child_infosets: list[list[int]] = [[] for _ in range(n)]
    for i in infosets:
        p = parent_seq[i]
        child_infosets[p].append(i)
        for s in range(first_seq[i], first_seq[i] + num_actions[i]):
            seq_parent[s] = p
            depth[s] = depth[p] + 1

    return SequenceSpace(
        player=player,
        infosets=tuple(infosets),
        first_seq=first_seq,
        num_actions=num_actions,
        parent_seq=parent_seq,
        seq_infoset=np.array(seq_infoset, dtype=np.int64),
        seq_action=np.array(seq_action, dtype=np.int64),
        seq_parent=seq_parent,
        child_infosets=tuple(tuple(c) for c in child_infosets),
        leaf_seq=leaf_seq,
        infoset_leaves={i: np.array(sorted(zs), dtype=np.int64) for i, zs in infoset_leaves.items()},
        depth=depth,
    )


# ---------------------------------------------------------------------------
# Fixtures


def _fig1(payoffs: Sequence[tuple[float, float]] | None) -> GameTree:
    b = GameBuilder()
    leaves = iter(payoffs if payoffs is not None else [(0.0, 0.0)] * 10)
    a = b.decision(1, "A", ["1", "2"], label="a")
    x = b.decision(2, "X", ["x1", "x2"], label="x")
    b.connect(a, "1", x)
    for node_label, iset, acts in (("b", "B", ["3", "4"]), ("c", "C", ["5", "6"])):
        u = b.decision(1, iset, acts, label=node_label)
        b.connect(x, "x1" if iset == "B" else "x2", u)
        for act in acts:
            b.connect(u, act, b.leaf(*next(leaves), label=f"z{act}"))
    y = b.decision(2, "Y", ["y1", "y2"], label="y")
    b.connect(a, "2", y)
    for k, yact in enumerate(("y1", "y2")):
        d = b.decision(1, "D", ["7", "8", "9"], label=f"d{k + 1}")
        b.connect(y, yact, d)
        for act in ("7", "8", "9"):
            b.connect(d, act, b.leaf(*next(leaves), label=f"z{act}{yact}"))
    return b.build()


def _fig2(payoffs: Sequence[tuple[float, float]]) -> GameTree:
    b = GameBuilder()
    leaves = iter(payoffs)
    a = b.decision(1, "A", ["1", "2"], label="a")
    for act, iset, acts in (("1", "B", ["1", "2"]), ("2", "C", ["3", "4"])):
        u = b.decision(2, iset, acts, label=iset.lower())
        b.connect(a, act, u)
        for sub in acts:
            b.connect(u, sub, b.leaf(*next(leaves), label=f"z{sub}"))
    return b.build()


def build_fixture(name: str, payoffs: Sequence[tuple[float, float]] | None = None) -> GameTree:
    """Small example trees.

    ``fig1``: player 1 has infosets A, B, C, D (2, 2, 2 and 3 actions); player 2
    has one binary decision X after A's first action and one binary decision Y
    after the second, and D spans both children of Y.  10 leaves.

    ``fig2``: player 1 picks at A, then player 2 decides at B (after A:1) or
    C (after A:2).  4 leaves; ``payoffs`` is required, one pair per leaf in
    left-to-right order.
    """
    if name == "fig1":
        if payoffs is not None and len(payoffs) != 10:
            raise ValueError("fig1 has 10 leaves")
        return _fig1(payoffs)
    if name == "fig2":
        if payoffs is None:
            raise ValueError("fig2 needs one payoff pair per leaf (4 pairs)")
        if len(payoffs) != 4:
            raise ValueError("fig2 has 4 leaves")
        return _fig2(payoffs)
    raise ValueError(f"unknown fixture {name!r}; expected 'fig1' or 'fig2'")

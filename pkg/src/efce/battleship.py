"""Parametric two-player Battleship without chance moves.

Each player secretly places one ship on a private ``board_w x board_h``
field, player 1 first.  Players then alternate shots at the opponent's
field, player 1 first, each player taking at most ``num_turns`` shots and
never shooting the same cell twice.  The player who sinks the opponent's
ship (every ship cell hit) gets +1 and the opponent -1; if nobody sinks a
ship within the shot budget both get 0.

Shots and their hit/miss outcomes are public by default.  With
``public_shots=False`` a player only sees the outcomes of their own shots.
"""

from __future__ import annotations

from .game import GameBuilder, GameTree

__all__ = ["generate_battleship", "ship_placements"]


def ship_placements(board_w: int, board_h: int, ship_length: int) -> list[tuple[int, ...]]:
    """All axis-aligned ship positions as sorted cell tuples (cell = row * board_w + col)."""
    cells: set[tuple[int, ...]] = set()
    for r in range(board_h):
        for c in range(board_w - ship_length + 1):
            cells.add(tuple(r * board_w + c + k for k in range(ship_length)))
    for r in range(board_h - ship_length + 1):
        for c in range(board_w):
            cells.add(tuple((r + k) * board_w + c for k in range(ship_length)))
    return sorted(cells)


def generate_battleship(
    board_w: int, board_h: int, num_turns: int, ship_length: int, public_shots: bool = True
) -> GameTree:
    if board_w < 1 or board_h < 1 or num_turns < 1 or ship_length < 1:
        raise ValueError("board dimensions, turns and ship length must be positive")
    placements = ship_placements(board_w, board_h, ship_length)
    if not placements:
        raise ValueError(f"a ship of length {ship_length} does not fit on a {board_w}x{board_h} board")
    num_cells = board_w * board_h
    b = GameBuilder()

    def view(p: int, placement: int, history: tuple) -> str:
        events = history if public_shots else tuple(e for e in history if e[0] == p)
        shots = ",".join(f"{who}{cell}{'h' if hit else 'm'}" for who, cell, hit in events)
        return f"{p}|{placement}|{shots}"

    def turn(ships: tuple[int, int], history: tuple, hits: tuple[frozenset, frozenset]) -> int:
        shots_taken = (sum(1 for e in history if e[0] == 1), sum(1 for e in history if e[0] == 2))
        p = 1 if shots_taken[0] == shots_taken[1] else 2
        if shots_taken[p - 1] == num_turns:
            return b.leaf(0.0, 0.0)
        fired = {cell for who, cell, _ in history if who == p}
        options = [c for c in range(num_cells) if c not in fired]
        v = b.decision(p, view(p, ships[p - 1], history), [f"s{c}" for c in options])
        target = set(placements[ships[2 - p]])
        for c in options:
            hit = c in target
            new_hits = list(hits)
            if hit:
                new_hits[p - 1] = hits[p - 1] | {c}
            if hit and new_hits[p - 1] >= target:
                child = b.leaf(1.0, -1.0) if p == 1 else b.leaf(-1.0, 1.0)
            else:
                child = turn(ships, history + ((p, c, hit),), (new_hits[0], new_hits[1]))
            b.connect(v, f"s{c}", child)
        return v

    place_actions = [f"p{k}" for k in range(len(placements))]
    root = b.decision(1, "1|place", place_actions)
    for k1 in range(len(placements)):
        second = b.decision(2, "2|place", place_actions)
        b.connect(root, f"p{k1}", second)
        for k2 in range(len(placements)):
            b.connect(second, f"p{k2}", turn((k1, k2), (), (frozenset(), frozenset())))
    return b.build(root)

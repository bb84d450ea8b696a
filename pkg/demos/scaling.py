"""Decomposition size and per-iteration cost on a ladder of Battleship instances.

One recommend+observe round of the chain minimizer touches every relevant
pair a constant number of times, so its wall time should grow about
linearly with the pair count (slope near 1 on a log-log fit, lower while
fixed overhead still dominates).

    python3 demos/scaling.py
"""

import time

import numpy as np

from efce.battleship import generate_battleship
from efce.polytope import compute_relevance, decompose
from efce.regret import ChainRM

INSTANCES = [(2, 1, 1, 1), (2, 1, 2, 1), (3, 1, 2, 1), (3, 1, 3, 1), (2, 2, 1, 1), (2, 2, 2, 1), (2, 2, 3, 1)]


def per_round(rm: ChainRM, loss: np.ndarray, seconds: float = 0.3) -> float:
    rm.recommend()
    rm.observe(loss)
    rounds, start = 0, time.perf_counter()
    while time.perf_counter() - start < seconds:
        rm.recommend()
        rm.observe(loss)
        rounds += 1
    return (time.perf_counter() - start) / rounds


def main() -> None:
    print(f"{'instance':>12} {'nodes':>6} {'pairs':>7} {'fills':>6} {'sums':>6} {'decomp s':>9} {'round us':>9}")
    pairs, seconds = [], []
    for w, h, turns, ship in INSTANCES:
        game = generate_battleship(w, h, turns, ship)
        start = time.perf_counter()
        rel = compute_relevance(game)
        chain = decompose(game, rel)
        built = time.perf_counter() - start
        loss = np.random.default_rng(0).normal(size=rel.num_pairs)
        t = per_round(ChainRM(chain), loss)
        pairs.append(rel.num_pairs)
        seconds.append(t)
        label = f"{w}x{h}:{turns}:{ship}"
        print(f"{label:>12} {game.num_nodes:6d} {rel.num_pairs:7d} {len(chain.fills):6d} "
              f"{len(chain.sums):6d} {built:9.3f} {1e6 * t:9.1f}")
    big = np.array(pairs) >= 1000
    slope = np.polyfit(np.log(np.array(pairs)[big]), np.log(np.array(seconds)[big]), 1)[0]
    print(f"\nlog-log slope of round time against pairs (instances with >= 1000 pairs): {slope:.2f}")


if __name__ == "__main__":
    main()

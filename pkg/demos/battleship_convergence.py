"""Self-play on a small Battleship instance: the deviation gap of the averaged
plan at each checkpoint, for both regret-matching flavors.

    python3 demos/battleship_convergence.py [--iters 4096] [--csv trace.csv]
"""

import argparse
import csv

from efce.battleship import generate_battleship
from efce.polytope import check_plan_constraints
from efce.solver import EFCEProblem, SolverOptions, self_play


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--board", default="2x2")
    parser.add_argument("--turns", type=int, default=2)
    parser.add_argument("--ship", type=int, default=1)
    parser.add_argument("--iters", type=int, default=4096)
    parser.add_argument("--csv", help="write flavor,iter,gap rows here")
    args = parser.parse_args()

    w, h = (int(v) for v in args.board.split("x"))
    game = generate_battleship(w, h, args.turns, args.ship)
    problem = EFCEProblem(game)
    print(f"battleship {args.board}, {args.turns} turns, ship {args.ship}: {game.num_nodes} nodes, "
          f"{problem.rel.num_pairs} relevant pairs, {problem.n} triggers")

    rows = []
    traces = {}
    for flavor in ("rm", "rm_plus"):
        run = self_play(problem, SolverOptions(flavor=flavor, gap_target=None, max_iters=args.iters))
        traces[flavor] = run.trace
        rows += [(flavor, cp.iteration, cp.gap) for cp in run.trace]
        feasible = check_plan_constraints(run.plan, problem.rel) == []
        print(f"{flavor:8s} final gap {run.gap:.3e} after {run.trace[-1].wall_ms / 1000:.1f} s, plan feasible: {feasible}")

    print(f"\n{'iter':>6} {'rm':>11} {'rm_plus':>11}")
    for a, b in zip(traces["rm"], traces["rm_plus"]):
        print(f"{a.iteration:6d} {a.gap:11.3e} {b.gap:11.3e}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["flavor", "iter", "gap"])
            writer.writerows(rows)


if __name__ == "__main__":
    main()

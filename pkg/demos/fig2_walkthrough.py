"""Walk through the two-level example game: relevant pairs, the decomposition
chain, a sampled correlation plan and a solved correlated equilibrium.

    python3 demos/fig2_walkthrough.py
"""

import numpy as np

from efce import build_fixture
from efce.oracles import brute_force_gap
from efce.polytope import FillSimplex, chain_sample, check_plan_constraints, compute_relevance, decompose
from efce.solver import EFCEProblem, SolverOptions, deviation_gap, self_play

# player 1 picks a branch, player 2 then acts at B or C depending on the branch
PAYOFFS = [(3, 1), (0, 0), (0, 0), (1, 3)]


def main() -> None:
    game = build_fixture("fig2", PAYOFFS)
    rel = compute_relevance(game)
    chain = decompose(game, rel)

    print(f"{rel.num_pairs} relevant sequence pairs:")
    for k in range(rel.num_pairs):
        print(f"  {k:2d} {rel.label(k)}")

    print(f"\nchain with {len(chain.fills)} fill and {len(chain.sums)} sum steps:")
    for step in chain.steps:
        if isinstance(step, FillSimplex):
            print(f"  fill {rel.label(step.source)} -> " + ", ".join(rel.label(t) for t in step.targets))
        else:
            print(f"  sum  {rel.label(step.target)} <- " + " + ".join(rel.label(s) for s in step.sources))

    plan = chain_sample(chain, seed=1)
    print("\na random plan from the chain satisfies every constraint:", check_plan_constraints(plan, rel) == [])

    problem = EFCEProblem(game, rel)
    gap, trigger = deviation_gap(problem, plan)
    print(f"its deviation gap is {gap:.4f}", "" if trigger is None else f"(worst trigger {problem.triggers.label(trigger, game, rel.spaces)})")

    run = self_play(problem, SolverOptions(gap_target=1e-6, max_iters=10_000))
    print(f"\nself-play stops after {run.iterations} iterations with gap {run.gap:.2e}")
    print(f"brute-force check of that gap: {brute_force_gap(game, rel, run.plan):.2e}")
    leaves = list(game.leaves)
    reach = [run.plan[rel.index[(rel.spaces[0].leaf_seq[z], rel.spaces[1].leaf_seq[z])]] for z in leaves]
    for z, r in zip(leaves, reach):
        print(f"  leaf {game.node_labels[z]}: probability {r:.3f}, payoffs {game.payoffs[z].tolist()}")
    print("expected payoffs:", np.round(np.array(reach) @ game.payoffs[leaves], 4))


if __name__ == "__main__":
    main()

import dataclasses
import itertools

import numpy as np
import pytest

from efce.battleship import generate_battleship
from efce.game import GameBuilder, build_fixture
from efce.oracles import brute_force_gap, brute_force_trigger_gaps, pure_strategies
from efce.polytope import chain_membership, chain_sample, check_plan_constraints, pure_profile_plan
from efce.solver import (
    EFCEProblem,
    SolverError,
    SolverOptions,
    deviation_gap,
    folk_theorem_check,
    saddle_gap,
    self_play,
)

from corpus import game_corpus


def fig2(payoffs):
    return build_fixture("fig2", payoffs)


def random_fig2(seed):
    rng = np.random.default_rng(seed)
    return fig2(rng.integers(-5, 6, size=(4, 2)).astype(float).tolist())


def test_fig2_triggers():
    g = fig2([(1, 0)] * 4)
    p = EFCEProblem(g)
    tr = p.triggers
    assert tr.n == 6
    assert tr.player.tolist() == [1, 1, 2, 2, 2, 2]
    # follow value of player 1's first action sums the two leaves below it
    idx = p.rel.index
    follow = sorted(zip(tr.fol_trigger.tolist(), tr.fol_xi.tolist(), tr.fol_u.tolist()))
    assert follow == [(0, idx[(1, 1)], 1.0), (0, idx[(1, 2)], 1.0), (1, idx[(2, 3)], 1.0), (1, idx[(2, 4)], 1.0)]
    # player 2 earns nothing, so only player 1's triggers carry terms
    assert set(tr.dev_trigger.tolist()) == {0, 1}


def test_deviation_side_layout():
    p = EFCEProblem(fig2([(1, -1)] * 4))
    side = p.side
    assert side.chain.fills[0].targets == tuple(range(1, 7))
    assert len(side.chain.fills) == 1 + 6
    for seed in range(50):
        y = chain_sample(side.chain, seed)
        lam, blocks = side.decode(y)
        assert abs(lam.sum() - 1) < 1e-12
        for t, block in enumerate(blocks):
            # every block is a simplex scaled by its lam coordinate
            assert block.min() >= 0
            assert abs(block.sum() - lam[t]) < 1e-12


def test_one_player_game_has_no_opponent_triggers():
    b = GameBuilder()
    r = b.decision(1, "A", ["x", "y"])
    b.connect(r, "x", b.leaf(1, 0))
    b.connect(r, "y", b.leaf(2, 0))
    p = EFCEProblem(b.build(r))
    assert p.triggers.player.tolist() == [1, 1]
    run = self_play(p, SolverOptions(gap_target=1e-9, max_iters=1000))
    assert run.converged
    assert run.plan[p.rel.index[(2, 0)]] == pytest.approx(1.0, abs=1e-3)


def test_single_leaf_game_is_solved_immediately():
    b = GameBuilder()
    g = b.build(b.leaf(3, 4))
    run = self_play(g, SolverOptions(gap_target=1e-3))
    assert run.converged and run.iterations == 1 and run.gap == 0.0
    np.testing.assert_array_equal(run.plan, [1.0])


def test_zero_payoffs_give_zero_gap():
    g = build_fixture("fig1")
    run = self_play(g, SolverOptions(gap_target=0.0, max_iters=10))
    assert run.iterations == 1 and run.gap == 0.0
    assert deviation_gap(EFCEProblem(g), run.plan) == (0.0, None)


def test_gap_matches_brute_force_on_fig2():
    g = fig2([(0, 0), (0, 0), (10, 0), (10, 0)])
    p = EFCEProblem(g)
    uniform = chain_sample(p.plan_chain, uniform=True)
    gap, trig = deviation_gap(p, uniform)
    assert gap == pytest.approx(brute_force_gap(g, p.rel, uniform), abs=1e-12)
    # told to play A:1 (mass 1/2), player 1 gets 0 but 10 by switching to A:2
    assert gap == pytest.approx(5.0)
    assert (p.triggers.player[trig], p.triggers.sequence[trig]) == (1, 1)


def test_trigger_gaps_match_brute_force():
    for k, g in enumerate(game_corpus(8, max_leaves=30, max_policies=2000)):
        p = EFCEProblem(g)
        plan = chain_sample(p.plan_chain, k)
        slow = brute_force_trigger_gaps(g, p.rel, plan)
        fast = p.trigger_gaps(plan)
        sp = p.rel.spaces
        for t in range(p.n):
            pl, s = int(p.triggers.player[t]), int(p.triggers.sequence[t])
            key = (pl, int(sp[pl - 1].seq_infoset[s]), s - sp[pl - 1].first_seq[int(sp[pl - 1].seq_infoset[s])])
            assert fast[t] == pytest.approx(slow[key], abs=1e-9)


def pure_nash_profiles(game, p):
    """Pure profiles no player can improve on by switching to another pure strategy."""
    leaves = game.leaves
    s1 = list(pure_strategies(game, 1))
    s2 = list(pure_strategies(game, 2))

    def value(a, b):
        plan = pure_profile_plan(game, p.rel, {**a, **b})
        reach = np.array([plan[p.rel.index[(p.rel.spaces[0].leaf_seq[z], p.rel.spaces[1].leaf_seq[z])]] for z in leaves])
        return reach @ game.payoffs[leaves]

    table = {(i, j): value(a, b) for (i, a), (j, b) in itertools.product(enumerate(s1), enumerate(s2))}
    for (i, j), (u1, u2) in table.items():
        if all(table[(k, j)][0] <= u1 + 1e-12 for k in range(len(s1))) and all(
            table[(i, k)][1] <= u2 + 1e-12 for k in range(len(s2))
        ):
            yield {**s1[i], **s2[j]}


def test_pure_nash_equilibria_have_zero_gap():
    found = 0
    for g in game_corpus(40, max_leaves=12, max_policies=200):
        p = EFCEProblem(g)
        for profile in itertools.islice(pure_nash_profiles(g, p), 3):
            plan = pure_profile_plan(g, p.rel, profile)
            assert deviation_gap(p, plan)[0] == 0.0
            assert brute_force_gap(g, p.rel, plan) == 0.0
            found += 1
    assert found >= 10


def test_infeasible_plan_is_refused():
    p = EFCEProblem(random_fig2(0))
    plan = chain_sample(p.plan_chain, 0)
    plan[3] += 0.2
    with pytest.raises(ValueError, match="infeasible"):
        deviation_gap(p, plan)


@pytest.mark.parametrize("seed", range(3))
def test_fig2_converges(seed):
    run = self_play(random_fig2(seed), SolverOptions(gap_target=1e-3, max_iters=10_000))
    assert run.converged


def test_fig1_converges_with_both_flavors():
    rng = np.random.default_rng(11)
    g = build_fixture("fig1", rng.integers(-5, 6, size=(10, 2)).astype(float).tolist())
    for flavor in ("rm", "rm_plus"):
        run = self_play(g, SolverOptions(flavor=flavor, gap_target=1e-3, max_iters=50_000))
        assert run.converged, flavor
    # without alternation the iterates keep mixing, so this takes thousands of rounds
    run = self_play(g, SolverOptions(alternate=False, averaging="uniform", gap_target=1e-3, max_iters=50_000))
    assert run.converged and run.iterations > 100


def test_battleship_trace_trends_down():
    g = generate_battleship(2, 1, 2, 1)
    p = EFCEProblem(g)
    run = self_play(p, SolverOptions(max_iters=2048))
    gaps = [cp.gap for cp in run.trace]
    assert gaps[-1] < 0.01 * max(gaps)
    assert all(later <= earlier for earlier, later in zip(gaps[5:], gaps[6:]))  # from T = 32 on
    assert check_plan_constraints(run.plan, p.rel) == []
    assert chain_membership(p.plan_chain, run.plan)


def test_self_play_is_deterministic():
    g = generate_battleship(2, 1, 2, 1)
    a = self_play(g, SolverOptions(max_iters=100))
    b = self_play(g, SolverOptions(max_iters=100))
    np.testing.assert_array_equal(a.plan, b.plan)
    assert [cp.gap for cp in a.trace] == [cp.gap for cp in b.trace]


def test_averages_stay_feasible():
    for g in game_corpus(5):
        p = EFCEProblem(g)
        for alternate, averaging in ((True, "linear"), (False, "uniform")):
            run = self_play(p, SolverOptions(alternate=alternate, averaging=averaging, max_iters=64))
            assert check_plan_constraints(run.plan, p.rel) == []
            assert chain_membership(p.y_compiled.chain, run.deviation)


def test_folk_theorem_bound():
    ok, run = folk_theorem_check(random_fig2(3), 1000)
    assert ok
    assert [cp.iteration for cp in run.trace] == [2**k for k in range(10)] + [1000]


def test_folk_theorem_bound_is_scale_free():
    rng = np.random.default_rng(3)
    pay = (100 * rng.integers(-5, 6, size=(4, 2))).astype(float).tolist()
    ok, run = folk_theorem_check(EFCEProblem(fig2(pay), normalize=False), 500)
    assert ok


def test_saddle_gap_is_nonnegative():
    p = EFCEProblem(random_fig2(4))
    for seed in range(20):
        xi = chain_sample(p.plan_chain, seed)
        y = chain_sample(p.y_compiled.chain, seed + 100)
        assert saddle_gap(p, xi, y) >= -1e-12


def test_nonfinite_payoffs_abort():
    b = GameBuilder()
    r = b.decision(1, "A", ["x", "y"])
    b.connect(r, "x", b.leaf(float("inf"), 0))
    b.connect(r, "y", b.leaf(1, 0))
    with pytest.raises(SolverError, match="non-finite"):
        self_play(b.build(r), SolverOptions(max_iters=10))


def test_overflowing_regrets_abort():
    g = game_corpus(1, max_nodes=40)[0]
    g = dataclasses.replace(g, payoffs=g.payoffs * (1.7e308 / 5))
    with pytest.raises(SolverError, match="non-finite"):
        with np.errstate(over="ignore", invalid="ignore"):
            self_play(EFCEProblem(g, normalize=False), SolverOptions(max_iters=50, gap_target=None))


@pytest.mark.parametrize(
    "options",
    [
        SolverOptions(),
        SolverOptions(max_iters=10, flavor="hedge"),
        SolverOptions(max_iters=10, averaging="quadratic"),
        SolverOptions(max_iters=0),
        SolverOptions(gap_target=-1.0),
        SolverOptions(max_iters=5, checkpoint_period=0),
    ],
)
def test_bad_options(options):
    with pytest.raises(ValueError):
        self_play(random_fig2(0), options)


def test_checkpoint_period():
    run = self_play(random_fig2(1), SolverOptions(max_iters=25, checkpoint_period=10, gap_target=None))
    assert [cp.iteration for cp in run.trace] == [10, 20, 25]

"""Command-line front end.

    efce generate battleship --board 2x2 --turns 2 --ship 1 -o bs.game
    efce generate fixture fig2 --seed 7 -o fig2.game
    efce decompose --game fig2.game -o fig2.chain
    efce solve --game fig2.game --gap 1e-3 --budget 100000 --trace trace.csv --plan plan.txt
    efce verify --game fig2.game --chain fig2.chain --plan plan.txt

Exit codes: 0 success, 1 target not met / check failed, 2 input error,
3 internal invariant violation.  ``EFCE_CHECKPOINT_PERIOD`` overrides the
default (powers of two) checkpoint schedule of ``solve``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from .battleship import generate_battleship
from .game import GameFormatError, GameTree, GameValidationError, build_fixture, parse_game, serialize_game, validate
from .oracles import brute_force_gap, vertex_membership
from .polytope import (
    StructuralError,
    chain_membership,
    chain_sample,
    check_plan_constraints,
    compute_relevance,
    decompose,
    parse_chain,
    prop2_violations,
    serialize_chain,
)
from .solver import EFCEProblem, SolverError, SolverOptions, deviation_gap, self_play

EXIT_OK, EXIT_TARGET, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
CHECKPOINT_ENV = "EFCE_CHECKPOINT_PERIOD"
TINY_LEAVES = 20  # brute-force checks in `verify` only run up to this many leaves


class InputError(Exception):
    pass


def _board(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def _battleship_spec(text: str) -> tuple[int, int, int, int]:
    try:
        board, turns, ship = text.split(":")
        return (*_board(board), int(turns), int(ship))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH:TURNS:SHIP, got {text!r}") from None


def _add_game_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--game", help="game file")
    src.add_argument("--battleship", type=_battleship_spec, metavar="WxH:TURNS:SHIP", help="generate a Battleship instance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="efce", description="Extensive-form correlated equilibria by regret minimization.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a game file")
    gsub = gen.add_subparsers(dest="kind", required=True)
    bs = gsub.add_parser("battleship")
    bs.add_argument("--board", type=_board, required=True, metavar="WxH")
    bs.add_argument("--turns", type=int, default=1)
    bs.add_argument("--ship", type=int, default=1)
    bs.add_argument("--private-shots", action="store_true", help="players see only their own shot outcomes")
    bs.add_argument("-o", "--output")
    fx = gsub.add_parser("fixture")
    fx.add_argument("name", choices=["fig1", "fig2"])
    fx.add_argument("--seed", type=int, help="random integer payoffs in [-5, 5]")
    fx.add_argument("--payoffs", help="u1,u2;u1,u2;... in leaf order")
    fx.add_argument("-o", "--output")

    dec = sub.add_parser("decompose", help="decompose the correlation-plan polytope")
    _add_game_source(dec)
    dec.add_argument("-o", "--output", help="chain file")

    sol = sub.add_parser("solve", help="run self-play until the gap target or budget")
    _add_game_source(sol)
    sol.add_argument("--gap", type=float, help="stop once the deviation gap is at most this")
    sol.add_argument("--budget", type=int, help="maximum number of iterations")
    sol.add_argument("--rm", choices=["rm", "rm_plus"], default="rm_plus")
    sol.add_argument("--alternate", action=argparse.BooleanOptionalAction, default=True)
    sol.add_argument("--avg", choices=["linear", "uniform"], default="linear")
    sol.add_argument("--checkpoint", type=int, help="checkpoint period (default: powers of two)")
    sol.add_argument("--no-normalize", action="store_true", help="learn on raw payoffs")
    sol.add_argument("--trace", help="CSV trace path")
    sol.add_argument("--plan", help="write the averaged plan as 'pair-index value' lines")

    ver = sub.add_parser("verify", help="check a chain and a plan against the game")
    _add_game_source(ver)
    ver.add_argument("--chain", help="chain file (default: decompose the game)")
    ver.add_argument("--plan", help="plan file (default: a random chain sample)")
    ver.add_argument("--seed", type=int, default=0)
    return parser


def _load_game(args) -> GameTree:
    if args.battleship is not None:
        return generate_battleship(*args.battleship)
    try:
        with open(args.game) as fh:
            text = fh.read()
    except OSError as e:
        raise InputError(f"cannot read game file: {e}") from None
    return parse_game(text)


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as e:
        raise InputError(f"cannot write {path}: {e}") from None


def _counts(game: GameTree) -> str:
    rel = compute_relevance(game)
    return (
        f"nodes {game.num_nodes}\nleaves {len(game.leaves)}\ninfosets {game.num_infosets}\n"
        f"sequences1 {rel.spaces[0].size}\nsequences2 {rel.spaces[1].size}\n"
    )


def cmd_generate(args) -> int:
    if args.kind == "battleship":
        w, h = args.board
        game = generate_battleship(w, h, args.turns, args.ship, public_shots=not args.private_shots)
    else:
        n = 10 if args.name == "fig1" else 4
        if args.payoffs is not None:
            try:
                payoffs = [tuple(float(v) for v in item.split(",")) for item in args.payoffs.split(";")]
            except ValueError:
                raise InputError("payoffs must look like 'u1,u2;u1,u2;...'") from None
        elif args.seed is not None:
            payoffs = np.random.default_rng(args.seed).integers(-5, 6, size=(n, 2)).astype(float).tolist()
        else:
            payoffs = None if args.name == "fig1" else [(0.0, 0.0)] * n
        if payoffs is not None and (len(payoffs) != n or any(len(p) != 2 for p in payoffs)):
            raise InputError(f"{args.name} needs {n} payoff pairs")
        game = build_fixture(args.name, payoffs)
    _write(args.output, serialize_game(game))
    (sys.stdout if args.output else sys.stderr).write(_counts(game))
    return EXIT_OK


def cmd_decompose(args) -> int:
    game = _load_game(args)
    start = time.perf_counter()
    rel = compute_relevance(game)
    chain = decompose(game, rel)
    ms = 1000 * (time.perf_counter() - start)
    if args.output:
        _write(args.output, serialize_chain(chain, rel))
    print(f"pairs {rel.num_pairs}")
    print(f"fill {len(chain.fills)}")
    print(f"sum {len(chain.sums)}")
    print(f"max_width {max(chain.widths(), default=0)}")
    print(f"wall_ms {ms:.1f}")
    return EXIT_OK


def _checkpoint_period(args) -> int | None:
    if args.checkpoint is not None:
        return args.checkpoint
    env = os.environ.get(CHECKPOINT_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"{CHECKPOINT_ENV} must be an integer, got {env!r}") from None
    return None


def cmd_solve(args) -> int:
    if args.gap is None and args.budget is None:
        raise InputError("solve needs --gap, --budget or both")
    game = _load_game(args)
    opts = SolverOptions(
        flavor=args.rm,
        alternate=args.alternate,
        averaging=args.avg,
        gap_target=args.gap,
        max_iters=args.budget,
        checkpoint_period=_checkpoint_period(args),
        normalize=not args.no_normalize,
    )
    opts.validate()
    problem = EFCEProblem(game, normalize=opts.normalize)

    trace_fh = None
    writer = None
    if args.trace:
        try:
            trace_fh = open(args.trace, "w", newline="")
        except OSError as e:
            raise InputError(f"cannot write {args.trace}: {e}") from None
        writer = csv.writer(trace_fh, lineterminator="\n")
        writer.writerow(["iter", "gap", "wall_ms", "trigger_player", "trigger_sequence"])

    def progress(cp) -> None:
        if writer is not None:
            writer.writerow(
                [cp.iteration, repr(cp.gap), f"{cp.wall_ms:.3f}", "" if cp.trigger_player is None else cp.trigger_player,
                 "" if cp.trigger_sequence is None else cp.trigger_sequence]
            )
            trace_fh.flush()
        print(f"iter {cp.iteration} gap {cp.gap:.6e}", file=sys.stderr)

    try:
        run = self_play(problem, opts, progress)
    finally:
        if trace_fh is not None:
            trace_fh.close()
    if args.plan:
        _write(args.plan, "".join(f"{k} {v!r}\n" for k, v in enumerate(run.plan.tolist())))
    print(f"iterations {run.iterations}")
    print(f"gap {run.gap!r}")
    if opts.gap_target is not None and not run.converged:
        return EXIT_TARGET
    return EXIT_OK


def _read_plan(path: str, size: int) -> np.ndarray:
    plan = np.full(size, np.nan)
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                tokens = raw.split("#", 1)[0].split()
                if not tokens:
                    continue
                if len(tokens) != 2:
                    raise InputError(f"{path}:{lineno}: expected 'pair-index value'")
                k, v = int(tokens[0]), float(tokens[1])
                if not 0 <= k < size:
                    raise InputError(f"{path}:{lineno}: pair index {k} out of range")
                plan[k] = v
    except OSError as e:
        raise InputError(f"cannot read plan file: {e}") from None
    except ValueError:
        raise InputError(f"{path}: malformed number") from None
    if np.isnan(plan).any():
        raise InputError(f"{path}: missing entries for {int(np.isnan(plan).sum())} pairs")
    return plan


def cmd_verify(args) -> int:
    if args.game is not None:
        try:
            with open(args.game) as fh:
                game = parse_game(fh.read(), check=False)
        except OSError as e:
            raise InputError(f"cannot read game file: {e}") from None
    else:
        game = generate_battleship(*args.battleship)
    problems = validate(game)
    _line("admissible", not problems, "; ".join(str(v) for v in problems[:3]))
    if problems:
        return EXIT_INPUT

    rel = compute_relevance(game)
    reference = decompose(game, rel)
    if args.chain:
        try:
            with open(args.chain) as fh:
                chain, table = parse_chain(fh.read())
        except OSError as e:
            raise InputError(f"cannot read chain file: {e}") from None
        except (ValueError, StructuralError) as e:
            raise InputError(f"bad chain file: {e}") from None
        same = chain.size == rel.num_pairs and (len(table) == 0 or np.array_equal(table, rel.pairs))
        _line("chain matches relevant pairs", same)
        if not same:
            return EXIT_TARGET
    else:
        chain = reference

    if args.plan:
        plan = _read_plan(args.plan, rel.num_pairs)
        source = args.plan
    else:
        plan = chain_sample(chain, seed=args.seed)
        source = f"chain sample (seed {args.seed})"
    print(f"plan: {source}")

    ok = True
    bad = check_plan_constraints(plan, rel)
    ok &= _line("plan constraints", not bad, "; ".join(f"{v.constraint} ({v.residual:+.3g})" for v in bad[:3]))
    ok &= _line("chain membership", chain_membership(chain, plan))
    quads = prop2_violations(rel)
    ok &= _line("no unfavorable quadruples", not quads, f"{len(quads)} found")
    if len(game.leaves) <= TINY_LEAVES:
        ok &= _line("pure profiles in chain", not vertex_membership(rel, chain))
        if not bad:
            problem = EFCEProblem(game, rel)
            fast = deviation_gap(problem, plan)[0]
            slow = brute_force_gap(game, rel, plan)
            ok &= _line("gap matches brute force", abs(fast - slow) <= 1e-9, f"{fast!r} vs {slow!r}")
            print(f"gap {fast!r}")
    return EXIT_OK if ok else EXIT_TARGET


def _line(name: str, passed: bool, detail: str = "") -> bool:
    print(f"{'PASS' if passed else 'FAIL'} {name}" + (f": {detail}" if detail and not passed else ""))
    return passed


COMMANDS = {"generate": cmd_generate, "decompose": cmd_decompose, "solve": cmd_solve, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InputError, GameFormatError, GameValidationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (StructuralError, SolverError) as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

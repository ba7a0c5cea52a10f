"""``nlg`` command-line interface.

Exit codes: 0 success, 2 input error, 3 certified-inequality violation,
4 internal numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import io
from .classicalize import verify_prop13, verify_theorem14
from .config import DEFAULT_TOLERANCES, serial_map
from .errors import InputError, NumericalError
from .games import classical_value, rate_curve
from .strategies import correlation_table, noisy_interpolation, strategy_score
from .structure import detect_perfect_guessing, essentially_classical_form

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION, EXIT_NUMERICAL = 0, 2, 3, 4


class _Run:
    """Resolved global options shared by every command."""

    def __init__(self, args):
        self.args = args
        self.tol = DEFAULT_TOLERANCES.scaled(args.tol) if args.tol != 1.0 else DEFAULT_TOLERANCES
        self.jobs = args.jobs or os.cpu_count() or 1
        self.exit = EXIT_OK

    def pmap(self, func, items):
        items = list(items)
        if self.jobs <= 1 or len(items) < 2:
            return serial_map(func, items)
        with ThreadPoolExecutor(self.jobs) as pool:
            return list(pool.map(func, items))

    def strategy(self, path):
        return io.load_strategy(path).replace(tol=self.tol)

    def emit(self, payload, default_format: str):
        fmt = self.args.format or default_format
        if fmt == "json":
            text = io.dumps(payload.get("json", payload.get("data")))
        elif fmt == "csv":
            rows = payload.get("csv")
            if rows is None:
                raise InputError(f"{self.args.command} has no CSV output")
            buf = _io.StringIO()
            csv.writer(buf, lineterminator="\n").writerows(rows)
            text = buf.getvalue()
        else:
            text = payload.get("text") or _text_table(io.to_jsonable(payload.get("json", payload.get("data"))))
        if self.args.output:
            with open(self.args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _text_table(data, prefix: str = "") -> str:
    lines = []
    if isinstance(data, dict):
        for k, v in data.items():
            if isinstance(v, dict):
                lines.append(_text_table(v, f"{prefix}{k}."))
            else:
                lines.append(f"{prefix}{k} = {v}\n")
    else:
        lines.append(f"{prefix}{data}\n")
    return "".join(lines)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


# --- commands ----------------------------------------------------------------


def cmd_classical_value(run: _Run) -> dict:
    game = io.load_game(run.args.game)
    cv = classical_value(game, pmap=run.pmap)
    f = [game.X[i] for i in cv.witness.f]
    g = [game.Y[i] for i in cv.witness.g]
    data = {"omega_c": cv.value, "witness": {"f": dict(zip(game.A, f)), "g": dict(zip(game.B, g))},
            "count": cv.count}
    text = (f"omega_c = {_fmt(cv.value)}\n"
            f"witness f = {' '.join(f'{a}->{x}' for a, x in zip(game.A, f))}\n"
            f"witness g = {' '.join(f'{b}->{y}' for b, y in zip(game.B, g))}\n"
            f"{cv.count} strategies enumerated\n")
    return {"json": data, "text": text}


def cmd_score(run: _Run) -> dict:
    game = io.load_game(run.args.game)
    s = run.strategy(run.args.strategy)
    s.check_game(game)
    sc = strategy_score(game, s)
    p = correlation_table(s)
    rows = [["a", "b", "x", "y", "p"]] + [[game.A[a], game.B[b], game.X[x], game.Y[y], repr(float(p[a, b, x, y]))]
                                        for a, b, x, y in np.ndindex(p.shape)]
    return {"json": {"score": sc, "correlation": p}, "text": f"score = {_fmt(sc)}\n", "csv": rows}


def cmd_certify(run: _Run) -> dict:
    game = io.load_game(run.args.game)
    game.require_complete_support()
    s = run.strategy(run.args.strategy)
    rep = verify_theorem14(game, s, pmap=run.pmap)
    g = rep.guessing
    cells = g.cells
    if not g.all_converged:
        bad = [tuple(int(i) for i in c) for c in np.argwhere(~cells.converged)]
        warnings.warn(f"discrimination solver did not converge on cells (a, b, y) = {bad}; "
                      "epsilon uses primal values and is conservative")
    if not rep.satisfied:
        run.exit = EXIT_VIOLATION
    data = {
        "score": rep.score, "omega_c": rep.omega_c, "epsilon": rep.epsilon, "delta": g.delta,
        "guessing_probability": g.guessing_probability, "c_g": rep.c_g,
        "lhs": rep.lhs, "rhs": rep.rhs, "slack": rep.slack, "satisfied": rep.satisfied,
        "all_converged": g.all_converged,
        "dist_sums": g.dist_sums, "delta_ab": g.delta_ab,
        "cells": {"dist": cells.dist, "gap": cells.gap, "converged": cells.converged},
    }
    rows = [["a", "b", "y", "dist", "gap", "converged"]]
    for a, b, y in np.ndindex(cells.dist.shape):
        rows.append([game.A[a], game.B[b], game.Y[y], repr(float(cells.dist[a, b, y])),
                     repr(float(cells.gap[a, b, y])), str(bool(cells.converged[a, b, y])).lower()])
    text = (f"score = {_fmt(rep.score)}\nomega_c = {_fmt(rep.omega_c)}\nepsilon = {_fmt(rep.epsilon)}\n"
            f"guessing_probability = {_fmt(g.guessing_probability)}\nC_G = {_fmt(rep.c_g)}\n"
            f"score - omega_c = {_fmt(rep.lhs)} <= C_G*sqrt(epsilon) = {_fmt(rep.rhs)}: "
            f"{'satisfied' if rep.satisfied else 'VIOLATED'}\n")
    return {"json": data, "csv": rows, "text": text}


def cmd_structure(run: _Run) -> dict:
    s = run.strategy(run.args.strategy)
    check = detect_perfect_guessing(s)
    if not check.perfect:
        data = {"perfect_guessing": False, "worst_overlap": check.worst_overlap,
                "violating_index": {"a": check.worst_index[0], "b": check.worst_index[1],
                                    "y": check.worst_index[2], "x": check.worst_index[3],
                                    "x_prime": check.worst_index[4]},
                "essentially_classical": None, "seed": run.args.seed,
                "message": "strategy does not allow perfect guessing; pipeline skipped"}
        return {"json": data}
    out, verdict = essentially_classical_form(s, seed=run.args.seed)
    if run.args.emit_congruent:
        io.write_json(run.args.emit_congruent, io.strategy_to_dict(out))
    return {"json": verdict}


def cmd_classicalize(run: _Run) -> dict:
    s = run.strategy(run.args.strategy)
    order = tuple(run.args.order) if run.args.order else None
    if run.args.sweep:
        if not run.args.game:
            raise InputError("--sweep needs --game")
        game = io.load_game(run.args.game)
        wc = classical_value(game).value
        rows = [["lambda", "score", "epsilon", "lhs", "rhs", "satisfied"]]
        sweep = []
        for lam in run.args.sweep:
            rep = verify_theorem14(game, noisy_interpolation(s, lam), pmap=run.pmap, omega_c=wc)
            rows.append([repr(lam), repr(rep.score), repr(rep.epsilon), repr(rep.lhs), repr(rep.rhs),
                         str(rep.satisfied).lower()])
            sweep.append({"lambda": lam, "score": rep.score, "epsilon": rep.epsilon, "lhs": rep.lhs,
                          "rhs": rep.rhs, "satisfied": rep.satisfied})
            if not rep.satisfied:
                run.exit = EXIT_VIOLATION
        return {"json": {"sweep": sweep}, "csv": rows}
    rep = verify_prop13(s, order=order, all_orders=run.args.all_orders, pmap=run.pmap)
    if not rep.satisfied(run.tol.inequality):
        run.exit = EXIT_VIOLATION
    data = {"delta": rep.delta, "lhs": rep.lhs, "rhs": rep.rhs, "slack": rep.slack,
            "satisfied": rep.satisfied(run.tol.inequality), "order": list(rep.order),
            "classicalized": rep.classicalized}
    if run.args.game:
        game = io.load_game(run.args.game)
        t14 = verify_theorem14(game, s, pmap=run.pmap)
        data["score_excess"] = {"score": t14.score, "omega_c": t14.omega_c, "epsilon": t14.epsilon,
                             "lhs": t14.lhs, "rhs": t14.rhs, "slack": t14.slack, "satisfied": t14.satisfied}
        if not t14.satisfied:
            run.exit = EXIT_VIOLATION
    return {"json": data}


def cmd_rate_curve(run: _Run) -> dict:
    game = io.load_game(run.args.game)
    game.require_complete_support()
    n = run.args.samples
    if n < 1:
        raise InputError("--samples must be positive")
    wc = classical_value(game).value
    ws = np.linspace(wc, 1.0, n) if n > 1 else np.array([wc])
    header = ["w", "f_theorem", "f_display"]
    rows = [[repr(float(w)), repr(rate_curve(game, w, "theorem", wc)), repr(rate_curve(game, w, "display", wc))]
            for w in ws]
    if run.args.strategy:
        s = run.strategy(run.args.strategy)
        s.check_game(game)
        header += ["lambda", "score", "one_minus_epsilon"]
        lams = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.0])
        for row, lam in zip(rows, lams):
            rep = verify_theorem14(game, noisy_interpolation(s, float(lam)), pmap=run.pmap, omega_c=wc)
            guess = 1.0 - rep.epsilon
            if guess > rate_curve(game, rep.score, run.args.variant, wc) + 1e-6:
                run.exit = EXIT_VIOLATION
            row += [repr(float(lam)), repr(rep.score), repr(guess)]
    return {"csv": [header] + rows, "json": [dict(zip(header, map(float, r))) for r in rows]}


def cmd_validate(run: _Run) -> dict:
    lines = []
    for path in run.args.files:
        obj = io.load_any(path)
        if hasattr(obj, "gamma"):
            obj.replace(tol=run.tol)
        lines.append(f"ok {type(obj).__name__.lower()} {path}")
    return {"json": {"valid": list(run.args.files)}, "text": "\n".join(lines) + "\n"}


def cmd_export(run: _Run) -> dict:
    name = run.args.name
    if name.startswith(io.BUILTIN_PREFIX):
        name = name[len(io.BUILTIN_PREFIX):]
    try:
        data = io.game_to_dict(io.load_game(io.BUILTIN_PREFIX + name))
    except InputError:
        data = io.strategy_to_dict(io.load_strategy(io.BUILTIN_PREFIX + name))
    return {"json": data}


# --- parser --------------------------------------------------------------------


def _seed_default() -> int:
    raw = os.environ.get("NLG_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"NLG_SEED must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=1.0, help="scale every numerical tolerance by this factor")
    common.add_argument("--jobs", type=int, default=0, help="worker threads (default 0 = all cores)")
    common.add_argument("--seed", type=int, default=None, help="seed for randomized steps (env NLG_SEED, default 0)")
    common.add_argument("--format", choices=("json", "csv", "text"), default=None)
    common.add_argument("--output", "-o", default=None, help="write to this file instead of stdout")

    p = argparse.ArgumentParser(prog="nlg", description="Local randomness certification for nonlocal games.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classical-value", parents=[common], help="classical value by enumeration")
    c.add_argument("game")
    c.set_defaults(func=cmd_classical_value, default_format="text")

    c = sub.add_parser("score", parents=[common], help="score of an explicit strategy")
    c.add_argument("game")
    c.add_argument("strategy")
    c.set_defaults(func=cmd_score, default_format="text")

    c = sub.add_parser("certify", parents=[common], help="guessing report and the score-excess bound")
    c.add_argument("game")
    c.add_argument("strategy")
    c.set_defaults(func=cmd_certify, default_format="json")

    c = sub.add_parser("structure", parents=[common], help="perfect-guessing structure pipeline")
    c.add_argument("strategy")
    c.add_argument("--emit-congruent", metavar="PATH", help="write the congruent strategy here")
    c.set_defaults(func=cmd_structure, default_format="json")

    c = sub.add_parser("classicalize", parents=[common], help="copy-out construction and its bounds")
    c.add_argument("strategy")
    c.add_argument("--game", help="also check the score-excess bound on this game")
    c.add_argument("--order", type=int, nargs="+", help="copy-out order over Alice's inputs")
    c.add_argument("--all-orders", action="store_true", help="search every order and keep the smallest lhs")
    c.add_argument("--sweep", type=float, nargs="+", metavar="LAMBDA", help="noisy-interpolation sweep (CSV)")
    c.set_defaults(func=cmd_classicalize, default_format="json")

    c = sub.add_parser("rate-curve", parents=[common], help="guessing-probability ceiling against score")
    c.add_argument("game")
    c.add_argument("--samples", type=int, default=11)
    c.add_argument("--variant", choices=("theorem", "display"), default="theorem",
                   help="curve used for the empirical check")
    c.add_argument("--strategy", help="add a noisy-interpolation sweep of this strategy")
    c.set_defaults(func=cmd_rate_curve, default_format="csv")

    c = sub.add_parser("validate", parents=[common], help="parse and validate input files")
    c.add_argument("files", nargs="+")
    c.set_defaults(func=cmd_validate, default_format="text")

    c = sub.add_parser("export", parents=[common], help="write a built-in game or strategy as JSON")
    c.add_argument("name", help="chsh, magic_square, chsh_optimal or magic_square_optimal")
    c.set_defaults(func=cmd_export, default_format="json")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = _seed_default()
        if args.tol <= 0:
            raise InputError("--tol must be positive")
        run = _Run(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
            payload = args.func(run)
        run.emit(payload, args.default_format)
        return run.exit
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

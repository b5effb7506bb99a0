"""Command-line entry point: ``cqs {gen,solve,landscape,vqe,bench,check}``.

Exit codes: 0 success, 1 invalid configuration (the message names the
offending field), 2 non-convergence or failed checks under ``--strict``.
Relative output paths are placed under ``--out-dir``, else
``$CQS_OUTPUT_DIR``, else the working directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_CONFIG, EXIT_STRICT = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------- output


def _out_path(args, name: str) -> Path:
    p = Path(name)
    if not p.is_absolute():
        base = args.out_dir or os.environ.get("CQS_OUTPUT_DIR") or "."
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _echo(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("func", "out_dir", "threads")}
    return json.loads(json.dumps(d, default=str))


def _write_json(path: Path, payload: dict, args) -> None:
    doc = {"version": __version__, "config": _echo(args)}
    doc.update(payload)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


def _write_csv(path: Path, header, rows, args) -> None:
    buf = io.StringIO()
    buf.write(f"# cqs {__version__}\n")
    buf.write("# config: " + json.dumps(_echo(args), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _status(msg: str, args) -> None:
    if not getattr(args, "quiet", False):
        print(msg)


# ---------------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    from .operators import gen_haar_sum_system, gen_pauli_sum_system, save_system, toy_system

    if args.n is None:
        raise ConfigError("n: required")
    if not 1 <= args.n <= 1024:
        raise ConfigError("n: must be in [1, 1024]")
    if args.S < 1:
        raise ConfigError("S: must be >= 1")
    if args.family == "pauli":
        system = gen_pauli_sum_system(args.n, args.S, seed=args.seed)
    elif args.family in ("haar", "real"):
        if args.n > 14:
            raise ConfigError("n: dense families are limited to n <= 14")
        system = gen_haar_sum_system(1 << args.n, args.S, seed=args.seed, real=args.family == "real")
    else:
        system = toy_system(args.n)
    out = _out_path(args, args.out)
    save_system(out, system)
    _status(f"wrote {out}", args)
    return EXIT_OK


def cmd_solve(args) -> int:
    from .measurement import Estimator
    from .operators import load_system
    from .solver import SolveConfig, cqs_solve

    if not args.system:
        raise ConfigError("system: required")
    try:
        system = load_system(args.system)
    except FileNotFoundError:
        raise ConfigError(f"system: file not found: {args.system}")
    cfg = SolveConfig(strategy=args.strategy, depth=args.depth, max_iters=args.max_iters, tol=args.tol,
                      loss=args.loss.upper(), kappa=args.kappa, eps=args.eps, max_nodes=args.max_nodes,
                      backend=args.backend, stall=args.stall, trace=args.trace)
    if args.shots is not None and args.shots < 1:
        raise ConfigError("shots: must be >= 1")
    est = Estimator.exact() if args.shots is None else Estimator.shots(args.shots, seed=args.seed)
    rep = cqs_solve(system, cfg, est)
    stem = args.out or Path(args.system).name.replace(".system.json", "").replace(".json", "") + ".report"
    jpath = _out_path(args, stem + ".json")
    cpath = _out_path(args, stem + ".csv")
    payload = rep.to_dict()
    payload["solver_config"] = payload.pop("config")
    _write_json(jpath, payload, args)
    _write_csv(cpath, ("iter", "loss", "grad_overlap", "nodes", "shots"), rep.csv_rows(), args)
    _status(f"{rep.stop_reason}: loss {rep.final_loss:.6g} after {len(rep.loss_trace)} records -> {jpath}",
            args)
    if args.strict and not rep.converged:
        return EXIT_STRICT
    return EXIT_OK


def cmd_landscape(args) -> int:
    from . import landscape as ls

    if args.n is None or args.n < 1:
        raise ConfigError("n: must be >= 1")
    if args.kind == "toy":
        if args.grid < 2:
            raise ConfigError("grid: must be >= 2")
        lam = np.linspace(0, 1, args.grid)
        loss = ls.toy_loss_cut(args.n, None, args.loss, lam)
        rows = list(zip(lam, loss))
        header = ("lambda", "loss")
    elif args.kind == "adiabatic":
        if args.grid < 2:
            raise ConfigError("grid: must be >= 2")
        lam = np.linspace(0, 1, args.grid)
        s = np.round(np.linspace(0, 1, args.s_points), 12)
        cut = ls.adiabatic_cut(args.n, None, s, lam)
        rows = [(si, lj, cut[i, j]) for i, si in enumerate(s) for j, lj in enumerate(lam)]
        header = ("s", "lambda", "loss")
    else:
        if args.n > 12:
            raise ConfigError("n: locality experiment limited to n <= 12")
        if args.trials < 1:
            raise ConfigError("trials: must be >= 1")
        st = ls.local_loss_concentration(args.n, args.gates, args.trials, args.seed,
                                         finite_difference=args.finite_difference)
        rows = list(zip(range(args.trials), st["losses"], st["grad_max"]))
        header = ("trial", "loss", "grad_max")
        summary = {k: v for k, v in st.items() if k not in ("losses", "grad_max")}
        _write_json(_out_path(args, (args.out or f"landscape_{args.kind}_n{args.n}") + ".json"),
                    {"summary": summary}, args)
    path = _out_path(args, (args.out or f"landscape_{args.kind}_n{args.n}") + ".csv")
    _write_csv(path, header, rows, args)
    _status(f"wrote {path}", args)
    return EXIT_OK


def _csv_list(text, conv, field):
    try:
        return [conv(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{field}: could not parse {text!r}")


def cmd_vqe(args) -> int:
    from .variational import TOPOLOGIES, aavqe_benchmark, vqe_benchmark

    topos = list(TOPOLOGIES) if args.topology == "all" else _csv_list(args.topology, str, "topology")
    for t in topos:
        if t not in TOPOLOGIES:
            raise ConfigError(f"topology: unknown value {t!r}")
    layers = _csv_list(args.layers, int, "layers")
    if not layers or min(layers) < 1:
        raise ConfigError("layers: must be >= 1")
    if args.n < 1 or args.n > 9:
        raise ConfigError("n: must be in [1, 9]")
    if args.trials < 1:
        raise ConfigError("trials: must be >= 1")
    workers = args.threads or os.cpu_count() or 1
    if args.aavqe_steps:
        steps = _csv_list(args.aavqe_steps, int, "aavqe_steps")
        if not steps or min(steps) < 1:
            raise ConfigError("aavqe_steps: must be >= 1")
        rows = aavqe_benchmark(args.n, layers, topos, steps, args.trials, args.seed, workers)
    else:
        rows = vqe_benchmark(args.n, layers, topos, args.trials, args.seed, args.restarts, args.maxfev, workers)
    path = _out_path(args, (args.out or "vqe") + ".csv")
    _write_csv(path, ("trial", "layers", "topology", "steps", "fidelity"),
               [(r["trial"], r["layers"], r["topology"], r["steps"], r["fidelity"]) for r in rows], args)
    means = {}
    for r in rows:
        means.setdefault(f'{r["topology"]}/L{r["layers"]}/T{r["steps"]}', []).append(r["fidelity"])
    summary = {k: float(np.mean(v)) for k, v in means.items()}
    _write_json(_out_path(args, (args.out or "vqe") + ".json"), {"mean_fidelity": summary, "rows": rows}, args)
    for k, v in summary.items():
        _status(f"{k}: mean fidelity {v:.4f}", args)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import comparison_summary, pauli_scaling, strategy_comparison

    if args.kind == "strategies":
        rows = strategy_comparison(args.instances, args.dim, args.S, args.nodes, args.seed)
        summ = comparison_summary(rows)
        flat = [(r["seed"], j + 1, g, b) for r in rows for j, (g, b) in enumerate(zip(r["gradient"], r["bfs"]))]
        _write_csv(_out_path(args, (args.out or "bench_strategies") + ".csv"),
                   ("seed", "nodes", "gradient_loss", "bfs_loss"), flat, args)
        _write_json(_out_path(args, (args.out or "bench_strategies") + ".json"),
                    {"summary": summ, "instances": [{k: v for k, v in r.items() if k != "seconds"} for r in rows]},
                    args)
        _status(f"gradient <= bfs on {summ['fraction']:.1%} of node counts past 20", args)
        ok = summ["fraction"] >= 0.9 and summ["all_final_lower"]
    else:
        ns = _csv_list(args.ns, int, "ns")
        rows = pauli_scaling(ns, args.S, args.iters, args.seed)
        flat = [(r["n"], i, v) for r in rows for i, v in enumerate(r["loss_trace"])]
        _write_csv(_out_path(args, (args.out or "bench_scaling") + ".csv"), ("n", "iter", "loss"), flat, args)
        _write_json(_out_path(args, (args.out or "bench_scaling") + ".json"),
                    {"runs": [{k: v for k, v in r.items() if k != "seconds"} for r in rows]}, args)
        for r in rows:
            _status(f"n={r['n']}: {r['iterations']} iterations, final loss {r['final_loss']:.6g}", args)
        ok = all(r["monotone"] and r["iterations"] == args.iters for r in rows)
    if args.strict and not ok:
        return EXIT_STRICT
    return EXIT_OK


def cmd_check(args) -> int:
    from .guarantees import SUITES

    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = {}
    for name in names:
        res = SUITES[name]()
        results[name] = res
        print(f"{name}: {'PASS' if res['passed'] else 'FAIL'}")
    if args.out:
        _write_json(_out_path(args, args.out + ".json"), {"results": results}, args)
    if args.strict and not all(r["passed"] for r in results.values()):
        return EXIT_STRICT
    return EXIT_OK


# ---------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    from .guarantees import SUITES

    p = _Parser(prog="cqs", description="Combination-of-quantum-states solvers and experiments.")
    p.add_argument("--version", action="version", version=f"cqs {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--out-dir", default=None, help="directory for relative output paths")
    common.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
    common.add_argument("--strict", action="store_true", help="exit 2 on non-convergence / failed checks")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a linear system file")
    g.add_argument("--family", choices=("pauli", "haar", "real", "toy"), default="pauli")
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--S", type=int, default=8)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", parents=[common], help="run the subspace solver on a system file")
    s.add_argument("--system", required=True)
    s.add_argument("--strategy", choices=("gradient", "bfs", "hamiltonian"), default="gradient")
    s.add_argument("--depth", type=int, default=2)
    s.add_argument("--max-iters", type=int, default=50)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--loss", type=str.lower, choices=("lr", "lt"), default="lr")
    s.add_argument("--kappa", type=float, default=None)
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--max-nodes", type=int, default=None)
    s.add_argument("--backend", choices=("auto", "dense", "symbolic"), default="auto")
    s.add_argument("--stall", choices=("lookahead", "stop", "argmax"), default="lookahead")
    s.add_argument("--trace", choices=("node", "depth"), default="node")
    s.add_argument("--shots", type=int, default=None, help="shots per elementary test (default: exact)")
    s.add_argument("--out", default=None, help="output stem (default: <system>.report)")
    s.set_defaults(func=cmd_solve)

    ls = sub.add_parser("landscape", parents=[common], help="loss-landscape grids")
    ls.add_argument("kind", choices=("toy", "adiabatic", "locality"))
    ls.add_argument("--n", type=int, default=None)
    ls.add_argument("--loss", type=str.upper, choices=("LR", "LH"), default="LH")
    ls.add_argument("--grid", type=int, default=101)
    ls.add_argument("--s-points", type=int, default=11)
    ls.add_argument("--trials", type=int, default=100)
    ls.add_argument("--gates", type=int, default=None, help="brickwork gate count (default n^2)")
    ls.add_argument("--finite-difference", action="store_true")
    ls.add_argument("--out", default=None)
    ls.set_defaults(func=cmd_landscape)

    v = sub.add_parser("vqe", parents=[common], help="agnostic-ansatz VQE / AAVQE benchmarks")
    v.add_argument("--topology", default="all", help="star, line, ring, complete, comma list or 'all'")
    v.add_argument("--layers", default="20", help="layer count or comma list")
    v.add_argument("--n", type=int, default=4, help="system qubits")
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--aavqe-steps", default=None, help="adiabatic step counts (comma list); enables AAVQE")
    v.add_argument("--restarts", type=int, default=5)
    v.add_argument("--maxfev", type=int, default=20000)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_vqe)

    b = sub.add_parser("bench", parents=[common], help="expansion-strategy benchmarks")
    b.add_argument("kind", choices=("strategies", "scaling"))
    b.add_argument("--instances", type=int, default=5)
    b.add_argument("--dim", type=int, default=256)
    b.add_argument("--S", type=int, default=None)
    b.add_argument("--nodes", type=int, default=50)
    b.add_argument("--ns", default="10,50,100,300")
    b.add_argument("--iters", type=int, default=50)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("check", parents=[common], help="run guarantee check suites")
    c.add_argument("--suite", choices=tuple(SUITES) + ("all",), default="all")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_check)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "bench" and args.S is None:
            args.S = 10 if args.kind == "strategies" else 8
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads: must be >= 1")
        return args.func(args)
    except ConfigError as e:
        print(f"cqs: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        # library validation messages start with the offending field
        print(f"cqs: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

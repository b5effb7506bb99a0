"""Benchmark drivers comparing expansion strategies.

``strategy_comparison`` runs the gradient heuristic and breadth-first
expansion on dense Haar-sum systems at equal node counts; ``pauli_scaling``
runs the gradient heuristic on Pauli-sum systems of growing size.
"""

from __future__ import annotations

import time

import numpy as np

from .operators import gen_haar_sum_system, gen_pauli_sum_system
from .solver import SolveConfig, cqs_solve

__all__ = ["strategy_comparison", "pauli_scaling", "comparison_summary"]


def strategy_comparison(instances: int = 5, dim: int = 256, S: int = 10, nodes: int = 50,
                        seed: int = 0) -> list:
    """Loss versus node count for gradient and BFS expansion.

    Instance ``i`` uses ``gen_haar_sum_system(dim, S, seed=seed + i)``.
    Returns one dict per instance with equal-length ``gradient`` and
    ``bfs`` traces (index ``j`` = loss with ``j + 1`` nodes).
    """
    out = []
    for i in range(instances):
        system = gen_haar_sum_system(dim, S, seed=seed + i)
        t0 = time.perf_counter()
        g = cqs_solve(system, SolveConfig(strategy="gradient", max_iters=nodes - 1, tol=0.0))
        t1 = time.perf_counter()
        b = cqs_solve(system, SolveConfig(strategy="bfs", depth=nodes, max_nodes=nodes, tol=0.0))
        t2 = time.perf_counter()
        out.append({
            "seed": seed + i,
            "gradient": [float(v) for v in g.loss_trace],
            "bfs": [float(v) for v in b.loss_trace],
            "gradient_stop": g.stop_reason,
            "violations": len(g.decrease_violations),
            "seconds": {"gradient": t1 - t0, "bfs": t2 - t1},
        })
    return out


def comparison_summary(rows, start: int = 20) -> dict:
    """Fraction of node counts past ``start`` where gradient <= BFS, and final gaps."""
    wins, total, final = 0, 0, []
    for r in rows:
        g, b = np.asarray(r["gradient"]), np.asarray(r["bfs"])
        m = min(g.size, b.size)
        sel = np.arange(start, m)
        wins += int(np.sum(g[sel] <= b[sel] + 1e-12))
        total += sel.size
        final.append(float(b[m - 1] - g[m - 1]))
    return {"fraction": wins / total if total else 0.0, "final_gaps": final,
            "all_final_lower": all(x > 0 for x in final)}


def pauli_scaling(ns=(10, 50, 100, 300), S: int = 8, iters: int = 50, seed: int = 0) -> list:
    """Gradient expansion on ``gen_pauli_sum_system(n, S, seed=seed + n)``."""
    out = []
    for n in ns:
        system = gen_pauli_sum_system(n, S, seed=seed + n)
        t0 = time.perf_counter()
        rep = cqs_solve(system, SolveConfig(strategy="gradient", max_iters=iters, tol=0.0))
        loss = np.asarray(rep.loss_trace)
        out.append({
            "n": n,
            "loss_trace": [float(v) for v in loss],
            "iterations": len(loss) - 1,
            "final_loss": float(loss[-1]),
            "monotone": bool(np.all(np.diff(loss) <= 1e-12)),
            "violations": len(rep.decrease_violations),
            "stop_reason": rep.stop_reason,
            "seconds": time.perf_counter() - t0,
        })
    return out

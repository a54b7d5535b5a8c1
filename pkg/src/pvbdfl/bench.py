"""Benchmark of the compiled solver kernel against the numpy fallback.

Both kernels implement the same interior-point method; this measures
per-solve wall time on identical seeded instances (pure LP, regularized
QP, and the QP-plus-sensitivity path used inside training) and checks
that the optimal costs agree.
"""

from __future__ import annotations

import time

import numpy as np

from ._backend import available_backends
from ._ipm_py import build_vectors


def _instances(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        T = 24
        pr_im = 0.1 + 0.4 * rng.random(T)
        pr_ex = np.maximum(pr_im - 0.02 - 0.15 * rng.random(T), 0.0)
        pv = np.maximum(0.0, rng.random(T) * 3.0 - 0.8)
        load = 0.1 + rng.random(T) * 1.5
        cap = 2.0 + 5.0 * rng.random()
        out.append((pr_im, pr_ex, load - pv, cap / 2.7, 0.2 * cap, 0.8 * cap,
                    0.5 * cap))
    return out


def run_benchmark(n_instances: int = 50, seed: int = 0, tol: float = 1e-8) -> list:
    """Time both kernels; returns one row per (backend, case)."""
    instances = _instances(n_instances, seed)
    impls = available_backends()
    rows = []
    costs = {}
    for name, mod in impls.items():
        for case, eps in (("lp", 0.0), ("qp_eps1e-3", 1e-3)):
            iters = []
            case_costs = []
            start = time.perf_counter()
            for inst in instances:
                pr_im, pr_ex, net, pmax, lo, hi, init = inst
                x, y, z, s, it, status = mod.solve(
                    pr_im, pr_ex, net, pmax, lo, hi, init, eps, tol, 200
                )
                iters.append(it)
                c, _, _, _ = build_vectors(pr_im, pr_ex, net, pmax, lo, hi, init,
                                           eps, 24)
                case_costs.append(float(c @ x))
            elapsed = time.perf_counter() - start
            costs[(name, case)] = np.array(case_costs)
            rows.append({
                "backend": name,
                "case": case,
                "ms_per_solve": 1000.0 * elapsed / n_instances,
                "mean_iterations": float(np.mean(iters)),
            })
        # sensitivity factorization + one adjoint solve, as used in training
        start = time.perf_counter()
        for inst in instances:
            pr_im, pr_ex, net, pmax, lo, hi, init = inst
            x, y, z, s, it, status = mod.solve(
                pr_im, pr_ex, net, pmax, lo, hi, init, 1e-3, tol, 200
            )
            handle = mod.kkt_factor(24, pmax, 1e-3, s, z, 0.0)
            rhs = np.zeros(6 * 24 + 1 + 2 * 24 + 2)
            rhs[2 * 24 : 3 * 24] = 0.3
            mod.kkt_solve(handle, rhs)
        elapsed = time.perf_counter() - start
        rows.append({
            "backend": name,
            "case": "qp+gradient",
            "ms_per_solve": 1000.0 * elapsed / n_instances,
            "mean_iterations": float("nan"),
        })

    if len(impls) == 2:
        for case in ("lp", "qp_eps1e-3"):
            gap = float(np.abs(costs[("python", case)] - costs[("cython", case)]).max())
            rows.append({
                "backend": "both",
                "case": f"{case}:maxgap",
                "ms_per_solve": gap,
                "mean_iterations": float("nan"),
            })
    return rows

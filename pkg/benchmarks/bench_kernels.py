"""Compare compiled and pure-Python kernels on one simulator workload.

Run with ``python3 benchmarks/bench_kernels.py [--events N] [--repeat R]``.
Both paths consume the same activation stream; their final states must agree.
"""

import argparse
import time

import numpy as np

from gossipnet import JIT_ENABLED, kernels
from gossipnet._accel import python_impl
from gossipnet.engine import _ppp_chunks
from gossipnet.graph import build_topology, homogeneous_delays, ppp_rates
from gossipnet.objective import averaging_instance, optimum


def workload(n, events, seed=0):
    top = build_topology("cycle", n)
    rates = ppp_rates(homogeneous_delays(top, 1.0))
    horizon = events / rates.sum()
    times, edges = [], []
    for t, e, _, _ in _ppp_chunks(rates, seed, horizon):
        times.append(t)
        edges.append(e)
    return top, averaging_instance(n), np.concatenate(times), np.concatenate(edges)


def run_cdm(fn, top, inst, times, edges):
    a, c = inst.quadratic_arrays()
    opt = optimum(inst)
    v = np.zeros_like(c)
    rec = np.linspace(0.0, times[-1], 50)
    out = np.zeros((rec.shape[0], 3))
    fn(v, a, c, opt.x, opt.v, top.edge_u, top.edge_v, times, edges, rec, 0, out,
       np.zeros(inst.n), np.zeros(2), np.zeros(0), True)
    return v


def bench(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("--events", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    top, inst, times, edges = workload(args.nodes, args.events)
    data = (top, inst, times, edges)
    fast = kernels.cdm_quad_run
    slow = python_impl(kernels.cdm_quad_run)
    if JIT_ENABLED:
        run_cdm(fast, *data)  # compile outside the timing
    t_fast, v_fast = bench(lambda *a: run_cdm(fast, *a), data, args.repeat)
    t_slow, v_slow = bench(lambda *a: run_cdm(slow, *a), data, 1)
    print(f"events: {times.shape[0]}, jit enabled: {JIT_ENABLED}")
    print(f"compiled path: {t_fast:.4f} s ({times.shape[0] / t_fast:.3e} events/s)")
    print(f"python path:   {t_slow:.4f} s ({times.shape[0] / t_slow:.3e} events/s)")
    print(f"speed-up: {t_slow / t_fast:.1f}x, max state difference: {np.max(np.abs(v_fast - v_slow)):.3e}")


if __name__ == "__main__":
    main()

"""Time the Gauss-Newton kernel backends and the LM linear solvers.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 20] [--samples 110]

Reports median wall time per call for the compiled and pure-Python normal
equation kernels, their maximum relative disagreement, and the dense versus
block-structured factor+solve used inside each LM step.
"""

import argparse
import statistics
import time

import numpy as np
from threadpoolctl import threadpool_limits

from nncommittee import kernels
from nncommittee.mlp import MlpTopology, init_weights
from nncommittee.train import BlockNormalEquations, effective_parameters, lm_step


def median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--samples", type=int, default=110)
    ap.add_argument("--hidden", type=int, default=30)
    ap.add_argument("--outputs", type=int, default=22)
    ap.add_argument("--threads", type=int, default=1, help="BLAS threads")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    topo = MlpTopology(9, args.hidden, args.outputs)
    m = init_weights(topo, 0)
    X = rng.standard_normal((args.samples, 9))
    T = np.where(rng.random((args.samples, args.outputs)) < 0.5, 1.0, -1.0)
    a = (m.w1, m.b1, m.w2, m.b2, X, T)
    print(f"topology {topo.input_dim}-{topo.hidden_dim}-{topo.output_dim}, "
          f"W={topo.n_params}, S={args.samples}, repeat={args.repeat}")

    with threadpool_limits(args.threads):
        py = median_time(lambda: kernels.python_gauss_newton(*a), args.repeat)
        print(f"gauss_newton  python  {1e3 * py:8.2f} ms")
        if kernels.compiled_gauss_newton is None:
            print("gauss_newton  cython  (extension not built)")
        else:
            cy = median_time(lambda: kernels.compiled_gauss_newton(*a), args.repeat)
            ref = kernels.python_gauss_newton(*a)[0]
            got = kernels.compiled_gauss_newton(*a)[0]
            err = np.max(np.abs(got - ref)) / np.max(np.abs(ref))
            print(f"gauss_newton  cython  {1e3 * cy:8.2f} ms  "
                  f"speedup {py / cy:5.1f}x  max rel diff {err:.1e}")

        JtJ, Jte, _ = kernels.gauss_newton(m, X, T)
        theta = m.flatten()
        alpha, beta, mu = 0.01, 1.0, 1e-3

        def dense():
            lm_step(JtJ, Jte, mu, theta, alpha, beta)
            effective_parameters(JtJ, alpha, beta)

        def block():
            system = BlockNormalEquations(JtJ, topo)
            system.factor(beta, alpha + mu).solve(beta * Jte - alpha * theta)
            system.factor(beta, alpha).trace_inverse()

        d = median_time(dense, args.repeat)
        b = median_time(block, args.repeat)
        print(f"step+trace    dense   {1e3 * d:8.2f} ms")
        print(f"step+trace    block   {1e3 * b:8.2f} ms  speedup {d / b:5.1f}x")


if __name__ == "__main__":
    main()

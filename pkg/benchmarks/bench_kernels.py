#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs both backends in-process on the hot primitives and on a short
trajectory ensemble, printing per-call timings and speedups.  The package
itself selects the backend at import time from DQE_DISABLE_NUMBA; this
script imports both implementations directly.
"""

import time

import numpy as np

from dqe import _kernels
from dqe.pauli import PauliString, build_heisenberg_chain, support_index_table
from dqe.stopping import EpsilonSchedule, FirstRunOfZeros
from dqe.trajectory import RunConfig, TrajectoryEngine, run_ensemble


def _time(fn, *args, reps=200, warmup=2):
    for _ in range(warmup):
        fn(*args)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - t0) / reps


def bench_primitives(num_qubits=10):
    d = 1 << num_qubits
    rng = np.random.default_rng(0)
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    psi /= np.linalg.norm(psi)
    out = np.empty_like(psi)
    factors = ["I"] * num_qubits
    factors[3], factors[4] = "X", "Y"
    perm, phase = PauliString("".join(factors)).perm_and_phase()
    table = support_index_table(num_qubits, (3, 4))
    op = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    lengths = rng.geometric(0.4, size=2000).astype(np.int64) - 1
    coins = rng.random(lengths.size)

    povm = op.conj().T @ op
    rows = []
    for name, args, reps in (
        ("axpb_pauli", (psi, out, perm, phase, 0.9 + 0j, -0.1 + 0j), 500),
        ("apply_local", (psi, out, table, op), 500),
        ("local_probs", (psi, table), 500),
        ("local_quadform", (psi, table, povm), 500),
        ("secretary_scan", (lengths, 500, 4000, coins), 200),
    ):
        t_np = _time(getattr(_kernels.numpy_impl, name), *args, reps=reps)
        if _kernels.numba_impl is not None:
            t_nb = _time(getattr(_kernels.numba_impl, name), *args, reps=reps)
        else:
            t_nb = float("nan")
        rows.append((name, t_np, t_nb))
    return rows


def bench_trajectories(n=4, trajectories=400):
    ham = build_heisenberg_chain(n)
    cfg = RunConfig(
        ham,
        agsp_mode="product-sweep",
        schedule=EpsilonSchedule.constant(0.2),
        resampler="local",
        rule=FirstRunOfZeros(4),
        seed=1,
        weighting="max",
    )
    engine = TrajectoryEngine(cfg)
    run_ensemble(cfg, 10, engine=engine)  # warm the JIT cache
    t0 = time.perf_counter()
    stats = run_ensemble(cfg, trajectories, engine=engine)
    dt = time.perf_counter() - t0
    return dt, stats


def main():
    print(f"active backend: {'numba' if _kernels.USING_NUMBA else 'numpy'}")
    print()
    print(f"{'primitive':<16} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, t_np, t_nb in bench_primitives():
        ratio = t_np / t_nb if t_nb == t_nb else float("nan")
        print(f"{name:<16} {t_np * 1e6:>10.2f}us {t_nb * 1e6:>10.2f}us {ratio:>8.1f}x")
    print()
    dt, stats = bench_trajectories()
    print(
        f"trajectory ensemble (active backend): 400 runs in {dt:.2f}s "
        f"({dt / 400 * 1e3:.2f} ms/run, mean tau {stats.mean_tau:.1f})"
    )
    print("rerun with DQE_DISABLE_NUMBA=1 to time the ensemble on the numpy path")


if __name__ == "__main__":
    main()

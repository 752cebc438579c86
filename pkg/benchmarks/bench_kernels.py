"""Time the compiled and numpy kernel-sum backends on simulated records.

    python3 benchmarks/bench_kernels.py --n 50 --T 3 --repeat 3
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from semipc import _nwcore_py
from semipc.density import PooledSample, default_grid
from semipc.simulation import SimConfig, generate_dataset

try:
    from semipc._nwcore import kernel_sums as compiled
except ImportError:
    compiled = None


def _queries(sample: PooledSample, dataset):
    cell = next(iter(sample.cells.values()))
    zc = np.ascontiguousarray(dataset.z[:, sample.schema.continuous])
    key = np.ascontiguousarray(zc[:, 0])
    return cell, key, np.ascontiguousarray(dataset.x0), zc


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--T", type=int, default=3)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    ds = generate_dataset(SimConfig(n=args.n, T=args.T, reps=1, seed=1), 0)
    sample = PooledSample.from_dataset(ds)
    h = default_grid(ds, sample)[2]
    cell, qkey, qx, qz = _queries(sample, ds)
    call = (cell.key, cell.x, cell.zc, qkey, qx, qz, h)

    print(f"records={ds.n_records} training={sample.size} h={h:.4f}")
    t_py = _best(lambda: _nwcore_py.kernel_sums(*call), args.repeat)
    print(f"numpy   {t_py:8.3f} s")
    if compiled is None:
        print("cython  not built")
        return
    t_c = _best(lambda: compiled(*call), args.repeat)
    num_a, den_a = compiled(*call)
    num_b, den_b = _nwcore_py.kernel_sums(*call)
    err = max(np.max(np.abs(num_a - num_b) / (1 + np.abs(num_b))), np.max(np.abs(den_a - den_b) / (1 + np.abs(den_b))))
    print(f"cython  {t_c:8.3f} s   speedup {t_py / t_c:5.1f}x   max rel diff {err:.1e}")


if __name__ == "__main__":
    main()

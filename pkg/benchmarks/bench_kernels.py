"""Compare the numba and vectorized-numpy first-hit kernels on identical inputs.

    python benchmarks/bench_kernels.py --trials 20000 --repeat 3

Both backends are always available from one process: the numpy path is
selected per call, independent of MOTIONDB_DISABLE_NUMBA.
"""

import argparse
import time

import numpy as np

from motiondb import _accel, batch
from motiondb.geometry import BunimovichStadium, Rectangle, place_obstacles, sample_free_states
from motiondb.stats import collision_rate, t_max


def bench(label, arena, trials, repeat, rng):
    targets = np.zeros(trials, dtype=np.int64)
    pos, vel = sample_free_states(arena, trials, rng)
    cap = t_max(collision_rate(arena.obstacles[0].radius, 1.0, arena.area), 1)
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    if "numba" in backends:
        batch.first_hits(arena, targets[:8], pos[:8], vel[:8], cap, backend="numba")  # compile
    best, out = {}, {}
    for b in backends:
        runs = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            out[b] = batch.first_hits(arena, targets, pos, vel, cap, backend=b)
            runs.append(time.perf_counter() - t0)
        best[b] = min(runs)
    line = f"{label:<10} trials={trials:<7} " + " ".join(f"{b}={best[b]:.3f}s" for b in backends)
    if len(backends) == 2:
        same = np.allclose(out["numpy"][0], out["numba"][0], rtol=1e-9, atol=1e-9)
        line += f" speedup={best['numpy'] / best['numba']:.1f}x agree={same}"
    print(line)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    bench("square", place_obstacles(Rectangle(), 1, 0.05, rng), args.trials, args.repeat, rng)
    bench("stadium", place_obstacles(BunimovichStadium(), 8, 0.02, rng), args.trials, args.repeat, rng)


if __name__ == "__main__":
    main()

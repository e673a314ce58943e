"""Compiled kernels vs the pure-numpy fallback.

Each mode runs in its own interpreter, since ``GPO_DISABLE_NUMBA`` is read
at import time. Prints one CSV row per (mode, operation) with the median
wall time over the repeats.

    python3 benchmarks/bench_kernels.py [--repeats N] [--duration S]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

WORKER = r"""
import json, sys, time
import numpy as np
from gpo import _jit
from gpo.preopt import preintegrate
from gpo.query import query
from gpo.sim import MotionPattern, simulate

repeats, duration = int(sys.argv[1]), float(sys.argv[2])
sim = simulate(MotionPattern.preset("fast", 0), (0.0, duration))
traj = preintegrate(sim.gyro, sim.accel, (0.0, duration))  # warm-up / compile
taus = np.random.default_rng(0).uniform(0.0, duration, 200)
query(traj, taus[0])

solve, q = [], []
for _ in range(repeats):
    t0 = time.perf_counter()
    traj = preintegrate(sim.gyro, sim.accel, (0.0, duration))
    solve.append(time.perf_counter() - t0)
    t0 = time.perf_counter()
    for tau in taus:
        query(traj, tau)
    q.append((time.perf_counter() - t0) / taus.size)
print(json.dumps({"numba": _jit.USE_NUMBA, "solve": float(np.median(solve)), "query": float(np.median(q)),
                  "position": traj.position[-1].tolist()}))
"""


def run_mode(disable, repeats, duration):
    env = dict(os.environ)
    env["GPO_DISABLE_NUMBA"] = "1" if disable else "0"
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeats), str(duration)], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--duration", type=float, default=0.5)
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    results = {name: run_mode(name == "numpy", args.repeats, args.duration) for name in ("numba", "numpy")}
    print("mode,op,seconds,speedup")
    for op in ("solve", "query"):
        for name in ("numba", "numpy"):
            speedup = results["numpy"][op] / results[name][op]
            print(f"{name},{op},{results[name][op]:.6g},{speedup:.1f}")
    drift = np.max(np.abs(np.subtract(results["numba"]["position"], results["numpy"]["position"])))
    print(f"# endpoint position difference between modes: {drift:.2e}")
    print(f"# total {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()

"""Compare the numba kernels with the pure-numpy fallback.

Each path runs in its own interpreter because the switch is read at import
time.  Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]
"""

import argparse
import csv
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
import delaylin
from delaylin import _kernels
from delaylin.conjugacy import linear_orbit, solve_eta_on_orbit, conjugacy_table
from delaylin.dichotomy import make_diagonal_dichotomy, probe_dichotomy_axioms
from delaylin.delay_system import LinearTapSystem, Nonlinearity, SemilinearSystem
from delaylin.evolution import EvolutionFamily
from delaylin.phase_space import PhaseSpaceParams

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
L, d, S = 64, 3, 200
entries = rng.standard_normal((L, d))
taps = rng.standard_normal((S, 3, d, d)) * 0.3
forcing = rng.standard_normal((S, d))
amps = np.full(S, 0.1)
lags = np.array([0, 1], dtype=np.int64)
weights = rng.standard_normal((2, d))
direction = np.ones(d)
batch = rng.standard_normal((2000, L, d))
tails = np.zeros(2000)

p = PhaseSpaceParams(1.0, 2, 48)
dich = make_diagonal_dichotomy([0.5], [2.0], p)
nl = Nonlinearity(0.05, [0], [[1.0, 1.0]], [1.0, 1.0])
sys_ = SemilinearSystem(LinearTapSystem.diagonal([0.5, 2.0]), nl, p)
ev = EvolutionFamily(dich.linear_system, p)


def conjugacy():
    oe = solve_eta_on_orbit(sys_, dich, linear_orbit(dich, ev, 10, dich.in_F([0.0, 1.0]), 40))
    conjugacy_table(sys_, oe)


cases = {
    "evolve_200_steps": lambda: _kernels.evolve(entries, 0.0, taps, forcing, amps, lags, weights,
                                                direction, 0, 1.0),
    "batch_norm_2000": lambda: _kernels.batch_weighted_sup(batch, tails, 1.0),
    "dichotomy_probe_200": lambda: probe_dichotomy_axioms(dich, ev, 200, max_gap=10,
                                                          rng=np.random.default_rng(1)),
    "conjugacy_horizon_40": conjugacy,
}
out = {"numba": delaylin.NUMBA_ENABLED, "cases": {}}
for name, fn in cases.items():
    t0 = time.perf_counter()
    fn()  # includes compilation (or cache load) on the numba path
    first = time.perf_counter() - t0
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    out["cases"][name] = {"first": first, "best": min(times)}
print(json.dumps(out))
"""


def run(disable: bool, repeat: int) -> dict:
    env = dict(os.environ, DELAYLIN_DISABLE_NUMBA="1" if disable else "0")
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args(argv)
    jit = run(False, args.repeat)
    ref = run(True, args.repeat)
    if not jit["numba"]:
        print("numba unavailable: both runs used the fallback", file=sys.stderr)
    rows = []
    for name in jit["cases"]:
        a, b = jit["cases"][name], ref["cases"][name]
        rows.append([name, a["first"], a["best"], b["best"], b["best"] / a["best"]])
    print(f"{'case':<24}{'numba first':>14}{'numba best':>14}{'numpy best':>14}{'speedup':>10}")
    for r in rows:
        print(f"{r[0]:<24}{r[1]:>14.4f}{r[2]:>14.4f}{r[3]:>14.4f}{r[4]:>10.1f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "numba_first_s", "numba_best_s", "numpy_best_s", "speedup"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())

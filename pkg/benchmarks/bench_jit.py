"""Compare compiled kernels against the pure-Python fallback.

Runs the same chains twice, once in this process and once in a child with
MIXCHAIN_DISABLE_JIT=1, prints steps/second for each path and checks that
both produce identical traces.

    python benchmarks/bench_jit.py [--steps 20000] [--n 30] [--r 20]
"""
import argparse
import json
import os
import subprocess
import sys
import time

CHILD = r"""
import hashlib, json, sys, time
import numpy as np
from mixchain import _jit, chains as ch, semigrad as sg
from mixchain.models import IsingComplete
n, r, steps = map(int, sys.argv[1:4])
model = IsingComplete.critical(n)
q, _ = sg.build_mixture(model, sg.ConstructionConfig(r=r, permutation_mode="random", semigradient_kind="super"))
out = {"jit": _jit.USING_NUMBA}
for name, s in (("gibbs", ch.Gibbs()), ("combined", ch.Combined(q))):
    ch.run_chains(model, s, 2, 10, seed=1)  # warm-up / compile
    t0 = time.perf_counter()
    tr = ch.run_chains(model, s, 2, steps, seed=7)
    dt = time.perf_counter() - t0
    out[name] = {"seconds": dt, "steps_per_second": 2 * steps / dt,
                 "digest": hashlib.sha256(tr.indicators.tobytes()).hexdigest(),
                 "sum": int(tr.indicators.sum()), "accepted": tr.accepted.tolist()}
print(json.dumps(out))
"""


def run(env_flag, n, r, steps):
    env = dict(os.environ)
    env.pop("MIXCHAIN_DISABLE_JIT", None)
    if env_flag:
        env["MIXCHAIN_DISABLE_JIT"] = "1"
    res = subprocess.run([sys.executable, "-c", CHILD, str(n), str(r), str(steps)],
                         capture_output=True, text=True, env=env, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--n", type=int, default=30)
    ap.add_argument("--r", type=int, default=20)
    args = ap.parse_args()
    t0 = time.perf_counter()
    fast = run(False, args.n, args.r, args.steps)
    slow = run(True, args.n, args.r, args.steps)
    print(f"{'sampler':10s} {'jit steps/s':>14s} {'fallback steps/s':>17s} {'speedup':>8s} identical")
    for name in ("gibbs", "combined"):
        a, b = fast[name], slow[name]
        same = a["digest"] == b["digest"] and a["accepted"] == b["accepted"]
        print(f"{name:10s} {a['steps_per_second']:14.0f} {b['steps_per_second']:17.0f} "
              f"{a['steps_per_second'] / b['steps_per_second']:8.1f} {same}")
    print(f"numba active: {fast['jit']}; total {time.perf_counter() - t0:.1f}s")
    return 0 if all(fast[k]["digest"] == slow[k]["digest"] for k in ("gibbs", "combined")) else 1


if __name__ == "__main__":
    sys.exit(main())

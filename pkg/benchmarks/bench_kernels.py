"""Time the loss kernels with numba and with the numpy fallback.

Each path runs in its own interpreter because the choice is made at import
time from ``FMADAPT_DISABLE_NUMBA``.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, timeit
import numpy as np
from fmadapt._accel import USE_NUMBA
from fmadapt.kernels import ctc_kernel, rnnt_kernel

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
out = {"numba": USE_NUMBA}
for T, U, K in ((50, 10, 16), (200, 40, 64)):
    z = rng.normal(size=(T, K))
    logp = z - np.logaddexp.reduce(z, axis=1, keepdims=True)
    labels = rng.integers(1, K, size=U).astype(np.int64)
    blank = np.log(rng.uniform(0.1, 0.9, size=(T, U + 1)))
    emit = np.log(rng.uniform(0.1, 0.9, size=(T, U)))
    ctc_kernel(logp, labels, 0)  # compile outside the timing
    rnnt_kernel(blank, emit)
    for name, fn in (("ctc", lambda: ctc_kernel(logp, labels, 0)), ("rnnt", lambda: rnnt_kernel(blank, emit))):
        best = min(timeit.repeat(fn, number=1, repeat=repeat))
        out[f"{name} T={T} U={U}"] = best * 1e3
print(json.dumps(out))
"""


def run(disable: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("FMADAPT_DISABLE_NUMBA", None)
    if disable:
        env["FMADAPT_DISABLE_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env, capture_output=True, text=True,
                          check=True)
    return json.loads(proc.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    nb, np_ = run(False, args.repeat), run(True, args.repeat)
    if not nb.pop("numba"):
        print("numba is not importable; both columns use the numpy fallback")
    np_.pop("numba")
    print(f"{'kernel':<22}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for key in nb:
        print(f"{key:<22}{nb[key]:>12.3f}{np_[key]:>12.3f}{np_[key] / nb[key]:>10.1f}x")


if __name__ == "__main__":
    main()

"""Compare the numba kernels with their pure-numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

The backend is fixed at import time, so each backend runs in its own child
process (the numpy one with SQGFRONT_PURE_NUMPY=1). Results from the two
backends are compared as well as timed.
"""
import argparse
import json
import math
import os
import subprocess
import sys
import time

CASES = {
    "apply_A N=512 N_y=90": dict(kind="A", L=32 * math.pi, N=512, n_y=90),
    "apply_A N=1024 N_y=512": dict(kind="A", L=32 * math.pi, N=1024, n_y=512),
    "b0_symbol N=1024 N_y=512": dict(kind="B0", L=32 * math.pi, N=1024, n_y=512),
    "apply_Ta N=256": dict(kind="Ta", L=8 * math.pi, N=256),
    "apply_Ta N=1024": dict(kind="Ta", L=8 * math.pi, N=1024),
    "ta_matrix N=256": dict(kind="Tmat", L=8 * math.pi, N=256),
}


def _child(repeat):
    import numpy as np

    from sqgfront import backend
    from sqgfront.front import apply_A, b0_symbol, make_quadrature
    from sqgfront.paradiff import apply_Ta, make_cutoff, ta_matrix
    from sqgfront.spectral import Field, make_grid

    out = {"backend": backend(), "cases": {}}
    for name, c in CASES.items():
        g = make_grid(c["L"], c["N"])
        phi = Field(g, 0.3 * np.exp(-g.x ** 2))
        v = Field(g, np.cos(3.0 * g.x) * np.exp(-0.1 * g.x ** 2))
        if c["kind"] == "A":
            q = make_quadrature(g.L / 2, c["n_y"])
            fn = lambda: apply_A(phi, v, q).values  # noqa: E731
        elif c["kind"] == "B0":
            q = make_quadrature(g.L / 2, c["n_y"])
            fn = lambda: b0_symbol(phi, q).values  # noqa: E731
        elif c["kind"] == "Ta":
            cut = make_cutoff(0.5)
            fn = lambda: apply_Ta(phi, v, cut).values  # noqa: E731
        else:
            cut = make_cutoff(0.5)
            fn = lambda: ta_matrix(phi, cut).matrix  # noqa: E731
        res = fn()  # warm-up, includes compilation on first call
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        arr = np.asarray(res)
        out["cases"][name] = {"best": min(times), "median": sorted(times)[len(times) // 2],
                              "re": np.real(arr).ravel().tolist()[:4096],
                              "im": np.imag(arr).ravel().tolist()[:4096]}
    print(json.dumps(out))


def _run(pure, repeat):
    env = dict(os.environ)
    env.pop("SQGFRONT_PURE_NUMPY", None)
    if pure:
        env["SQGFRONT_PURE_NUMPY"] = "1"
    proc = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        _child(args.repeat)
        return
    fast, slow = _run(False, args.repeat), _run(True, args.repeat)
    print(f"{'case':28s} {fast['backend']:>10s} {slow['backend']:>10s} {'speedup':>8s} {'max diff':>10s}")
    rows = {}
    for name in CASES:
        a, b = fast["cases"][name], slow["cases"][name]
        diff = max(max(abs(x - y) for x, y in zip(a["re"], b["re"])),
                   max(abs(x - y) for x, y in zip(a["im"], b["im"])))
        speed = b["best"] / a["best"] if a["best"] > 0 else float("inf")
        rows[name] = {"numba_s": a["best"], "numpy_s": b["best"], "speedup": speed,
                      "max_abs_diff": diff}
        print(f"{name:28s} {a['best']:10.4f} {b['best']:10.4f} {speed:8.2f} {diff:10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"backends": [fast["backend"], slow["backend"]], "cases": rows}, fh,
                      indent=1)


if __name__ == "__main__":
    main()

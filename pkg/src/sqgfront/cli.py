"""Command line front end: ``sqgfront run <config.json>`` and ``sqgfront suite <name>``.

Exit codes: 0 success, 1 configuration or usage error, 2 numerical failure,
3 one or more acceptance criteria failed.

The thread count must be fixed before numba is loaded, so nothing from the
package beyond this module is imported until the arguments are parsed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import re
import sys
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_FAILED = 0, 1, 2, 3

class ConfigError(Exception):
    """Configuration problem; ``diagnostics`` holds ``file:line:col: message`` strings."""

    def __init__(self, diagnostics):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = list(diagnostics)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads for the compiled kernels")
    common.add_argument("--seed-override", type=_u64, default=None,
                        help="replace every seed in the configuration")
    p = _Parser(prog="sqgfront", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", parents=[common], help="run one experiment from a JSON config")
    r.add_argument("config", type=Path)
    s = sub.add_parser("suite", parents=[common], help="run a named acceptance suite")
    s.add_argument("name")
    return p


# --- configuration -------------------------------------------------------------------

def load_schema():
    return json.loads(resources.files("sqgfront").joinpath("config_schema.json").read_text())


def _locate(text):
    """Map each JSON path (tuple of keys / indices) to the offset of its value."""
    dec = json.JSONDecoder()
    ws = re.compile(r"[ \t\n\r]*")
    pos = {}

    def skip(i):
        return ws.match(text, i).end()

    def value(i, path):
        i = skip(i)
        pos[path] = i
        c = text[i]
        if c in "{[":
            close = "}" if c == "{" else "]"
            i = skip(i + 1)
            k = 0
            if text[i] == close:
                return i + 1
            while True:
                i = skip(i)
                if c == "{":
                    key, i = json.decoder.scanstring(text, i + 1)
                    i = skip(i) + 1  # the colon
                    i = value(i, path + (key,))
                else:
                    i = value(i, path + (k,))
                    k += 1
                i = skip(i)
                if text[i] == ",":
                    i += 1
                    continue
                return i + 1
        _, end = dec.raw_decode(text, i)
        return end

    value(0, ())
    return pos


def _line_col(text, offset):
    line = text.count("\n", 0, offset) + 1
    return line, offset - (text.rfind("\n", 0, offset) + 1) + 1


def _anchor(name, text, positions, path, msg):
    path = tuple(path)
    while path and path not in positions:
        path = path[:-1]
    line, col = _line_col(text, positions.get(path, 0))
    return f"{name}:{line}:{col}: {msg}"


def _semantic_errors(cfg):
    """Checks that the schema cannot express; yields (path, message)."""
    n = cfg["grid"]["N"]
    if n & (n - 1):
        yield ("grid", "N"), f"N must be a power of two, got {n}"
    sol = cfg.get("solver", {})
    T = sol.get("T_final", 1.0)
    for k, t in enumerate(sol.get("record_times", [])):
        if t > T:
            yield ("solver", "record_times", k), f"record time {t} exceeds T_final {T}"
    ny = sol.get("N_y")
    if ny is not None and ny % 2:
        yield ("solver", "N_y"), "N_y must be even"
    prm = cfg.get("params", {})
    if cfg["kind"] == "packet-test":
        lam = prm["lam"]
        if abs(math.log2(lam) - round(math.log2(lam))) > 1e-12:
            yield ("params", "lam"), f"lam must be a power of two, got {lam}"
    for key in ("window",):
        w = prm.get(key)
        if w is not None and not 0 < w[0] < w[1]:
            yield ("params", key), "window must satisfy 0 < start < end"


def parse_config(path):
    """Read, parse and validate a config file; raise :class:`ConfigError` on problems."""
    import jsonschema

    name = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"{name}:1:1: cannot read config: {exc.strerror}"]) from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{name}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from None
    positions = _locate(text)
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    diags = [_anchor(name, text, positions, e.absolute_path, e.message) for e in errors]
    if not diags:
        diags = [_anchor(name, text, positions, p, m) for p, m in _semantic_errors(cfg)]
    if diags:
        raise ConfigError(diags)
    return cfg


def apply_seed_override(cfg, seed):
    if seed is None:
        return cfg
    cfg = json.loads(json.dumps(cfg))
    for block in (cfg.get("datum"), cfg.get("params")):
        if isinstance(block, dict) and "seed" in block:
            block["seed"] = int(seed)
    return cfg


def config_hash(cfg):
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# --- experiments ------------------------------------------------------------------------

def _grid(cfg):
    from .spectral import make_grid

    return make_grid(float(cfg["grid"]["L"]), int(cfg["grid"]["N"]))


def make_datum(grid, spec):
    """Initial datum from a named family."""
    import numpy as np

    from .paradiff import band_noise
    from .spectral import Field

    fam = spec["family"]
    if fam == "zero":
        return Field.zeros(grid)
    if fam == "gaussian":
        A, sig = float(spec["A"]), float(spec["sigma"])
        x0, xi0 = float(spec.get("x0", 0.0)), float(spec.get("xi0", 0.0))
        return Field.from_function(
            grid, lambda x: A * np.exp(-((x - x0) / sig) ** 2) * np.cos(xi0 * (x - x0)))
    if fam == "mode":
        k, A = int(spec["k"]), float(spec["A"])
        return Field.from_function(grid, lambda x: A * np.cos(math.pi * k * x / grid.L))
    if fam == "noise":
        rng = np.random.Generator(np.random.Philox(int(spec["seed"])))
        return band_noise(grid, float(spec["band"]), rng) * float(spec["A"])
    raise ValueError(f"unknown datum family {fam!r}")


def _solver(cfg):
    from .evolution import SolverConfig

    sol = dict(cfg.get("solver", {}))
    if "record_times" in sol:
        sol["record_times"] = tuple(float(t) for t in sol["record_times"])
    return SolverConfig(**sol)


def _write_csv(path, header, rows):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def _run_evolve(cfg, out):
    from .evolution import evolve, save_trajectory

    grid = _grid(cfg)
    sc = _solver(cfg)
    traj = evolve(make_datum(grid, cfg["datum"]), sc)
    save_trajectory(out / "trajectory", traj, cfg)
    last = traj.monitors[-1] if traj.monitors else ()
    return {"times": [float(t) for t in traj.times], "final_monitors": [float(v) for v in last],
            "boundary_warning": traj.boundary_warning,
            "final_l2": traj.final.l2()}


def _run_paradiff_probe(cfg, out):
    from .paradiff import choose_M, default_samples

    grid = _grid(cfg)
    prm = cfg["params"]
    R, s = float(prm.get("R", 1.0)), float(prm.get("s", 3.0))
    samples = default_samples(grid, R, s, seed=int(prm["seed"]))
    res = {}
    for r in prm.get("r", [1, 6]):
        ch = choose_M(R, int(r), s, samples, margin=float(prm.get("margin", 0.05)))
        (out / f"choose_M_r{r}.json").write_text(ch.to_json(len(samples)))
        res[f"r{r}"] = {"M": ch.M, "achieved": ch.achieved,
                        "trace": [[m, v] for m, v in ch.trace]}
    return res


def _run_packet_test(cfg, out):
    from .evolution import evolve
    from .wavepacket import band_velocities, extract_profiles, fit_scattering

    grid = _grid(cfg)
    prm = cfg["params"]
    sc = _solver(cfg)
    phi0 = make_datum(grid, cfg["datum"])
    vs = band_velocities(float(prm["lam"]), int(prm.get("velocities", 16)))
    t_min = float(prm.get("t_min", 1.0))
    project = bool(prm.get("project", True))
    runs = {}
    for nl in (True, False):
        snaps = evolve(phi0, replace(sc, nonlinear=nl)).snapshots
        runs[nl] = extract_profiles(snaps, float(prm["lam"]), vs, t_min, project)
    runs[True].to_csv(out / "profiles.csv")
    runs[False].to_csv(out / "profiles_linear.csv")
    window = tuple(prm["window"]) if "window" in prm else None
    fit = fit_scattering(runs[True], window=window, reference=runs[False])
    (out / "fit.json").write_text(fit.to_json())
    return json.loads(fit.to_json())


def _run_q_constant(cfg, out):
    from .wavepacket import q_constant

    vals = [(float(x), q_constant(float(x))) for x in cfg["params"]["xi"]]
    _write_csv(out / "q.csv", ["xi", "re", "im"], [(x, q.real, q.imag) for x, q in vals])
    return {"values": [{"xi": x, "re": q.real, "im": q.imag} for x, q in vals],
            "closed_form_xi1": -4.0 / 3.0 * math.log(2.0)}


def _run_scaling_check(cfg, out):
    import numpy as np

    from .evolution import evolve, scaling_transform
    from .front import make_quadrature

    grid = _grid(cfg)
    sc = _solver(cfg)
    q = sc.quadrature(grid)
    phi0 = make_datum(grid, cfg["datum"])
    base = replace(sc, monitors=False, record_stride=10 ** 9, record_times=())
    final = evolve(phi0, base, q).final
    res = {}
    for kappa in cfg.get("params", {}).get("kappa", [0.5, 2.0]):
        _, psi_T = scaling_transform((sc.T_final, final), kappa)
        _, psi_0 = scaling_transform((0.0, phi0), kappa)
        ck = replace(base, dt=kappa * sc.dt, T_final=kappa * sc.T_final)
        qk = make_quadrature(kappa * q.Y_max, q.N_y, q.grading)
        run = evolve(psi_0, ck, qk).final
        res[f"{kappa:g}"] = float(np.linalg.norm(run.values - psi_T.values)
                                  / np.linalg.norm(psi_T.values))
    return {"rel_l2": res}


def _run_paralin_check(cfg, out):
    import numpy as np

    from .front import f_shape, paralin_residual
    from .paradiff import apply_Ta, band_noise, make_cutoff
    from .spectral import Field, apply_multiplier, derivative, log_abs_D

    grid = _grid(cfg)
    prm = cfg["params"]
    phi = make_datum(grid, cfg["datum"])
    q = _solver(cfg).quadrature(grid)
    c = make_cutoff(float(prm.get("M", 2.0)))
    rng = np.random.Generator(np.random.Philox(int(prm["seed"])))
    D = derivative(grid)
    Ffx = Field(grid, f_shape(apply_multiplier(phi, D).values))
    rows = []
    for lam in prm.get("bands", [8, 16, 32, 64]):
        v = band_noise(grid, float(lam), rng)
        R = paralin_residual(phi, v, q, c)
        m = apply_Ta(Ffx, apply_multiplier(v, log_abs_D(grid)), c)
        rows.append((float(lam), apply_multiplier(R, D).l2() / v.l2(),
                     apply_multiplier(m, D).l2() / v.l2()))
    _write_csv(out / "paralin.csv", ["band", "residual", "main"], rows)
    return {"bands": [r[0] for r in rows], "residual": [r[1] for r in rows],
            "main": [r[2] for r in rows]}


def _run_decay_study(cfg, out):
    from .evolution import evolve
    from .wavepacket import decay_report

    grid = _grid(cfg)
    prm = cfg.get("params", {})
    sc = _solver(cfg)
    traj = evolve(make_datum(grid, cfg["datum"]), sc)
    window = tuple(prm["window"]) if "window" in prm else None
    rep = decay_report(traj.snapshots, float(prm.get("delta", sc.delta)), window)
    _write_csv(out / "decay.csv", ["t", "Y", "sqrt_t_Y"],
               zip(rep.times, rep.y_norms, rep.scaled))
    return {"slope": rep.slope, "sup_scaled": rep.sup_scaled, "scaled_trend": rep.scaled_trend(),
            "window": list(rep.window)}


RUNNERS = {
    "evolve": _run_evolve,
    "paradiff-probe": _run_paradiff_probe,
    "packet-test": _run_packet_test,
    "q-constant": _run_q_constant,
    "scaling-check": _run_scaling_check,
    "paralin-check": _run_paralin_check,
    "decay-study": _run_decay_study,
}


def _report(kind, cfg_hash, payload, meta):
    from . import __version__

    return {"kind": kind, "config_hash": cfg_hash, "version": __version__,
            "payload": payload, "meta": meta}


def _dump(path, obj):
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n")


def _meta(threads, t0):
    from ._accel import backend

    return {"backend": backend(), "threads": threads, "seconds": time.perf_counter() - t0}


def cmd_run(args):
    try:
        cfg = apply_seed_override(parse_config(args.config), args.seed_override)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    from .errors import InvalidArgument, NumericalFailure

    out = args.out or Path(cfg.get("output", "out"))
    t0 = time.perf_counter()
    h = config_hash(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
        payload = RUNNERS[cfg["kind"]](cfg, out)
    except (InvalidArgument, OSError) as exc:
        print(f"{args.config}:1:1: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        _dump(out / "summary.json", _report(cfg["kind"], h, {"error": str(exc)},
                                            _meta(args.threads, t0)))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _dump(out / "summary.json", _report(cfg["kind"], h, payload, _meta(args.threads, t0)))
    print(f"{cfg['kind']}: ok ({out / 'summary.json'})")
    return EXIT_OK


def cmd_suite(args):
    from . import acceptance

    if args.name not in acceptance.SUITES:
        print(f"unknown suite {args.name!r}; choose from {sorted(acceptance.SUITES)}",
              file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    results = acceptance.run_suite(args.name, callback=lambda r: print(r.line(), flush=True))
    payload = [r.payload() for r in results]
    h = config_hash({"suite": args.name, "criteria": list(acceptance.SUITES[args.name])})
    meta = _meta(args.threads, t0)
    meta["criterion_seconds"] = {str(r.number): r.seconds for r in results}
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        _dump(args.out / f"suite_{args.name}.json", _report(f"suite:{args.name}", h, payload, meta))
    failed = [r.number for r in results if not r.passed]
    print(f"suite {args.name}: {len(results) - len(failed)}/{len(results)} passed"
          f" in {meta['seconds']:.1f} s")
    return EXIT_FAILED if failed else EXIT_OK


def _pin_threads(n):
    # BLAS stays single-threaded so reductions inside it cannot reorder
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")
    if n is not None:
        os.environ["NUMBA_NUM_THREADS"] = str(n)


def main(argv=None):
    args = build_parser().parse_args(argv)
    _pin_threads(args.threads)
    from ._accel import set_threads

    args.threads = set_threads(args.threads) if args.threads is not None else None
    if args.command == "run":
        return cmd_run(args)
    return cmd_suite(args)


if __name__ == "__main__":
    sys.exit(main())

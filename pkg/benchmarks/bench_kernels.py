"""Numba vs numpy kernel timings.

    python benchmarks/bench_kernels.py [--n 4096] [--repeat 20] [--end-to-end]

Each kernel runs on identical inputs in both backends; outputs are compared
before timing.  ``--end-to-end`` additionally times a full example1 solve in
a subprocess per backend (ODI_SOLVE_NUMBA=1/0).
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit
from pathlib import Path

import numpy as np

from odi_solve.expr import parse
from odi_solve.kernels import numba_backend, numpy_backend


def _inputs(n: int, rng):
    f = parse("sqrt(abs(t)) + t^2 * exp(-t)")
    ops, consts = f.compile()
    x = rng.uniform(-3, 3, n * 4)
    ne, nq = n, 4
    phi = np.column_stack([np.linspace(0.1, 0.9, nq)[::-1], np.linspace(0.1, 0.9, nq)])
    vals = rng.normal(size=(ne, nq))
    lower = np.concatenate([[0.0], -np.ones(n - 1)])
    upper = np.concatenate([-np.ones(n - 1), [0.0]])
    diag = np.full(n, 2.5)
    rhs = rng.normal(size=n)
    m = 8
    G = rng.normal(size=(m, m))
    G = G @ G.T + m * np.eye(m)
    batch = 2000
    c = rng.normal(size=(batch, m))
    lo = -np.abs(rng.normal(size=(batch, m)))
    hi = lo + np.abs(rng.normal(size=(batch, m)))
    step = 1.0 / np.linalg.norm(G, 2)
    return {
        "eval_piecewise": (x, np.zeros(0), ops, np.array([0, len(ops)], np.int64), consts,
                           np.array([0, len(consts)], np.int64), np.zeros(0), np.zeros(0, np.bool_), 1),
        "tridiag_solve": (lower, diag, upper, rhs),
        "scatter_load": (vals, phi),
        "weighted_tridiag": (vals, phi),
        "box_qp_grid": (G, c, lo, hi, step, 500, 1e-13),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return bool(np.allclose(a, b, rtol=1e-10, atol=1e-12))


def bench(n: int, repeat: int) -> list[tuple[str, float, float, bool]]:
    nb, npb = numba_backend(), numpy_backend()
    if nb is None:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    rows = []
    for name, args in _inputs(n, rng).items():
        f_nb, f_np = getattr(nb, name), getattr(npb, name)
        out_nb = f_nb(*args)  # compile outside the timing
        out_np = f_np(*args)
        ok = _same(out_nb, out_np)
        t_nb = min(timeit.repeat(lambda: f_nb(*args), number=1, repeat=repeat))
        t_np = min(timeit.repeat(lambda: f_np(*args), number=1, repeat=repeat))
        rows.append((name, t_nb, t_np, ok))
    return rows


def end_to_end() -> dict:
    cfg = Path(__file__).resolve().parents[1] / "src" / "odi_solve" / "configs" / "example1.json"
    code = (
        "import json,time;from odi_solve.cli import run;import tempfile,io,contextlib\n"
        "d=tempfile.mkdtemp();buf=io.StringIO()\n"
        "with contextlib.redirect_stdout(buf): run(['solve','--config',%r,'--out',d])\n"
        "t=time.perf_counter()\n"
        "with contextlib.redirect_stdout(buf): run(['solve','--config',%r,'--out',d+'/b'])\n"
        "print(time.perf_counter()-t)" % (str(cfg), str(cfg))
    )
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, ODI_SOLVE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out["numba" if flag == "1" else "numpy"] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4096, help="mesh size / problem size")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    print(f"{'kernel':<18}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}  agree")
    for name, t_nb, t_np, ok in bench(args.n, args.repeat):
        print(f"{name:<18}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>10.1f}  {'yes' if ok else 'NO'}")
    if args.end_to_end:
        t = end_to_end()
        print(f"example1 solve: numba {t['numba']:.2f} s, numpy {t['numpy']:.2f} s")


if __name__ == "__main__":
    main()

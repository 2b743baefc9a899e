"""odi-solve: check / window / solve / sweep / certify pipelines.

    odi-solve <mode> --config PATH [--lambda X] [--n N] [--seed S]
              [--require-three] [--inside-window] [--out DIR] [--from DIR]

Exit codes: 0 when every requested verdict passes, 1 on a numerical
shortfall or failed verdict (diagnostics on stderr as JSON), 2 on an invalid
configuration (message anchored to the config line).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .certify import certify_coeffs, classical_residual, discontinuity_diagnostic
from .expr import ExprError
from .fem import FEMError, assemble, multiplier_csv, profile_csv
from .hypotheses import HypothesisError, check_H1, check_H2, compute_window, profile_test_function
from .problem import ProblemError, ProblemSpec
from .serialize import csv_text, dumps, read_profile, write_json, write_text
from .setvalued import SetValuedError, resolve_selection
from .solver import BUDGET, SEP_TOL, TOL_STAT, SolverError, find_three

__all__ = ["main", "run", "SCHEMA", "ConfigError", "load_config", "run_id"]

MODES = ("check", "window", "solve", "sweep", "certify")
NONZERO = 1e-6

_num = {"anyOf": [{"type": "number"}, {"type": "string", "minLength": 1}]}
_pw = {
    "anyOf": [
        {"type": "number"},
        {"type": "string", "minLength": 1},
        {
            "type": "object",
            "required": ["pieces"],
            "properties": {
                "breakpoints": {"type": "array", "items": _num},
                "pieces": {"type": "array", "minItems": 1, "items": _num},
                "point_values": {"type": "object", "additionalProperties": _num},
                "at_break": {"enum": ["left", "right"]},
            },
            "additionalProperties": False,
        },
    ]
}
SCHEMA = {
    "type": "object",
    "required": ["problem"],
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "mode": {"enum": list(MODES)},
        "problem": {
            "type": "object",
            "required": ["a", "b", "c", "d"],
            "anyOf": [{"required": ["F"]}, {"required": ["g"]}],
            "properties": {
                "a": _num, "b": _num, "c": _num, "d": _num,
                "p": _pw, "q": _pw, "g": _pw,
                "F": {
                    "type": "object",
                    "required": ["lo", "hi"],
                    "properties": {"lo": _pw, "hi": _pw},
                    "additionalProperties": False,
                },
                "selection": {
                    "anyOf": [
                        {"enum": ["MIN", "MAX", "MID", "SIGN_SWITCH", "min", "max", "mid", "sign_switch"]},
                        {"type": "object", "required": ["custom"], "properties": {"custom": _pw},
                         "additionalProperties": False},
                    ]
                },
                "growth": {
                    "type": "object",
                    "required": ["alpha", "s"],
                    "properties": {"alpha": _num, "s": _num},
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "lambda": {
            "anyOf": [
                _num,
                {
                    "type": "object",
                    "required": ["lo", "hi", "count"],
                    "properties": {"lo": _num, "hi": _num, "count": {"type": "integer", "minimum": 1}},
                    "additionalProperties": False,
                },
            ]
        },
        "mesh": {
            "type": "object",
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "quad_order": {"type": "integer", "minimum": 1, "maximum": 10},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "tol_stat": {"type": "number", "exclusiveMinimum": 0},
                "sep_tol": {"type": "number", "exclusiveMinimum": 0},
                "budget": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["json", "csv"]}, "uniqueItems": True},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points into the config file when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


def _line_of(text: str, keys) -> int | None:
    """Line of the last key in ``keys`` found by scanning forward key by key."""
    pos = 0
    found = None
    for k in keys:
        if isinstance(k, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(k))).search(text, pos)
        if m is None:
            break
        pos = m.end()
        found = text.count("\n", 0, m.start()) + 1
    return found


def load_config(path) -> tuple[dict, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.path) or "<root>"
        raise ConfigError(f"{where}: {err.message}", _line_of(text, list(err.path)))
    return cfg, text


def run_id(cfg: dict, mode: str) -> str:
    canon = json.dumps({k: v for k, v in cfg.items() if k != "output"}, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]
    return f"{cfg.get('name', 'problem')}-{mode}-{digest}"


def _threads() -> int:
    raw = os.environ.get("ODI_SOLVE_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


@dataclass
class Context:
    cfg: dict
    text: str
    spec: ProblemSpec
    out: Path
    args: argparse.Namespace

    @property
    def mesh(self) -> dict:
        return self.cfg.get("mesh", {})

    @property
    def solver(self) -> dict:
        return self.cfg.get("solver", {})

    @property
    def formats(self) -> list:
        return self.cfg.get("output", {}).get("formats", ["json", "csv"])


def _hypotheses(spec: ProblemSpec):
    if spec.g is not None:
        return check_H2(spec.g, spec.growth, spec.c, spec.d, spec.a, spec.b)
    return check_H1(spec.F, spec.selection, spec.growth, spec.c, spec.d, spec.p, spec.q, spec.a, spec.b)


def _lambdas(ctx: Context, sweep: bool) -> list[float]:
    from .problem import Number

    raw = ctx.cfg.get("lambda")
    if raw is None:
        raise ConfigError("lambda: required for this mode", _line_of(ctx.text, ["lambda"]))
    if isinstance(raw, dict):
        if not sweep:
            raise ConfigError("lambda: solve mode needs a single value", _line_of(ctx.text, ["lambda"]))
        lo, hi = Number.of(raw["lo"]).value, Number.of(raw["hi"]).value
        if not lo <= hi:
            raise ConfigError("lambda: requires lo <= hi", _line_of(ctx.text, ["lambda", "lo"]))
        return [float(x) for x in np.linspace(lo, hi, int(raw["count"]))]
    lam = Number.of(raw).value
    if not lam > 0:
        raise ConfigError("lambda: requires lambda > 0", _line_of(ctx.text, ["lambda"]))
    return [lam]


class Shortfall(RuntimeError):
    def __init__(self, diagnostics: dict):
        super().__init__("numerical shortfall")
        self.diagnostics = diagnostics


def _window(ctx: Context):
    rep = _hypotheses(ctx.spec)
    if not rep.passed:
        raise Shortfall({"stage": "hypotheses", "failures": list(rep.failures), "report": rep.to_json()})
    w = compute_window(rep)
    return rep, w


def _solve_one(ctx: Context, lam: float, w, pe, dest: Path) -> dict:
    spec = ctx.spec
    sol = ctx.solver
    tol = float(sol.get("tol_stat", TOL_STAT))
    space = assemble(spec.a.value, spec.b.value, spec.p, spec.q, N=int(ctx.mesh.get("N", 256)),
                     quad_order=int(ctx.mesh.get("quad_order", 4)))
    res = find_three(space, spec.F, spec.selection, lam, w, tol_stat=tol,
                     sep_tol=float(sol.get("sep_tol", SEP_TOL)), budget=int(sol.get("budget", BUDGET)),
                     seed=int(sol.get("seed", 42)), pe=pe)
    rows = []
    n_cert = n_counted = 0
    all_pass = True
    for k, rep in enumerate(res.reports, start=1):
        info = rep.to_json()
        info["lambda"] = lam
        info["profile"] = f"profile-{k}.csv"
        if "json" in ctx.formats:
            write_json(dest / f"report-{k}.json", info)
        write_text(dest / f"profile-{k}.csv", profile_csv(space, rep.u))
        verdict = "not-certified"
        if rep.converged:
            cert = certify_coeffs(space, rep.u.coeffs, spec.F, lam, tol, w0=rep.w, kind=rep.kind, box=pe.clarke)
            cj = cert.to_json()
            cj["classical_residual"] = classical_residual(space, rep.u, cert.w, lam)
            if spec.g is not None:
                cj["discontinuity"] = discontinuity_diagnostic(space, rep.u, spec.g).to_json()
            if "json" in ctx.formats:
                write_json(dest / f"certificate-{k}.json", cj)
            if "csv" in ctx.formats:
                write_text(dest / f"multipliers-{k}.csv", multiplier_csv(space, rep.u, cert.w))
            verdict = cert.verdict
            if cert.passed:
                n_cert += 1
                if spec.g is None or rep.sup_norm >= NONZERO:
                    n_counted += 1
            else:
                all_pass = False
        rows.append([lam, k, rep.kind, rep.energy, rep.stationarity, rep.sup_norm, str(rep.converged).lower(), verdict])
    diag = {k: v for k, v in res.diagnostics.items() if k != "seconds"}
    return {
        "lambda": lam,
        "rows": rows,
        "n_found": len(res.reports),
        "n_certified": n_cert,
        "n_counted": n_counted,
        "shortfall": res.shortfall,
        "all_pass": all_pass,
        "energies": sorted(r.energy for r in res.reports),
        "diagnostics": diag,
        "inside_window": bool(w.contains(lam)),
    }


_ROW_HEADER = ["lambda", "k", "kind", "energy", "stationarity", "sup_norm", "converged", "verdict"]


def _check_inside(ctx: Context, w, lams):
    if ctx.args.inside_window:
        bad = [x for x in lams if not w.contains(x)]
        if bad:
            raise ConfigError(
                f"lambda: {bad[0]!r} is outside the multiplicity window ({w.lambda_lo!r}, {w.lambda_hi!r})",
                _line_of(ctx.text, ["lambda"]))


def _mode_check(ctx: Context) -> int:
    rep = _hypotheses(ctx.spec)
    write_json(ctx.out / "check.json", rep.to_json())
    return 0 if rep.passed else 1


def _window_payload(rep, w, ctx: Context) -> dict:
    payload = {"window": w.to_json(), "hypotheses": rep.to_json(), "lambda_window": [w.lambda_lo, w.lambda_hi]}
    try:
        prof = profile_test_function(ctx.spec, w)
        payload["test_function"] = prof.to_json()
    except HypothesisError as exc:
        payload["test_function"] = {"error": str(exc)}
    return payload


def _mode_window(ctx: Context) -> int:
    rep, w = _window(ctx)
    payload = _window_payload(rep, w, ctx)
    write_json(ctx.out / "window.json", payload)
    return 0 if "error" not in payload["test_function"] else 1


def _finish(ctx: Context, results: list, require: bool) -> int:
    failures = []
    for r in results:
        if not r["all_pass"]:
            failures.append({"lambda": r["lambda"], "reason": "certificate failed"})
        if require and r["n_counted"] < 3:
            failures.append({"lambda": r["lambda"], "reason": "fewer than three certified solutions",
                             "n_certified": r["n_counted"], "diagnostics": r["diagnostics"]})
    if failures:
        sys.stderr.write(dumps({"shortfall": failures}))
        return 1
    return 0


def _mode_solve(ctx: Context) -> int:
    lams = _lambdas(ctx, sweep=False)
    rep, w = _window(ctx)
    _check_inside(ctx, w, lams)
    write_json(ctx.out / "window.json", _window_payload(rep, w, ctx))
    pe = resolve_selection(ctx.spec.F, ctx.spec.selection)
    r = _solve_one(ctx, lams[0], w, pe, ctx.out)
    write_text(ctx.out / "summary.csv", csv_text(_ROW_HEADER, r["rows"]))
    write_json(ctx.out / "run.json", {k: v for k, v in r.items() if k != "rows"})
    return _finish(ctx, [r], ctx.args.require_three)


def _mode_sweep(ctx: Context) -> int:
    lams = _lambdas(ctx, sweep=True)
    rep, w = _window(ctx)
    _check_inside(ctx, w, lams)
    write_json(ctx.out / "window.json", _window_payload(rep, w, ctx))
    pe = resolve_selection(ctx.spec.F, ctx.spec.selection)
    jobs = [(i, lam, ctx.out / f"lambda-{i:03d}") for i, lam in enumerate(lams)]
    with ThreadPoolExecutor(max_workers=min(_threads(), len(jobs))) as pool:
        results = list(pool.map(lambda j: _solve_one(ctx, j[1], w, pe, j[2]), jobs))
    width = max((len(r["energies"]) for r in results), default=0)
    header = ["lambda", "n_found", "n_certified", "shortfall"] + [f"energy_{k}" for k in range(1, width + 1)]
    rows = []
    for r in results:
        en = r["energies"] + [""] * (width - len(r["energies"]))
        rows.append([r["lambda"], r["n_found"], r["n_certified"], str(r["shortfall"]).lower(), *en])
    write_text(ctx.out / "summary.csv", csv_text(header, rows))
    return _finish(ctx, results, ctx.args.require_three)


def _mode_certify(ctx: Context) -> int:
    spec = ctx.spec
    lams = _lambdas(ctx, sweep=False)
    lam = lams[0]
    src = Path(ctx.args.source) if ctx.args.source else ctx.out.parent / run_id(ctx.cfg, "solve")
    profiles = sorted(src.glob("profile-*.csv"), key=lambda p: int(p.stem.split("-")[1]))
    if not profiles:
        sys.stderr.write(dumps({"error": f"no profiles found in {src}"}))
        return 1
    tol = float(ctx.solver.get("tol_stat", TOL_STAT))
    space = assemble(spec.a.value, spec.b.value, spec.p, spec.q, N=int(ctx.mesh.get("N", 256)),
                     quad_order=int(ctx.mesh.get("quad_order", 4)))
    pe = resolve_selection(spec.F, spec.selection)
    ok = True
    rows = []
    for path in profiles:
        k = int(path.stem.split("-")[1])
        x, U = read_profile(path)
        if len(x) != len(space.nodes) or float(np.max(np.abs(x - space.nodes))) > 1e-12:
            sys.stderr.write(dumps({"error": f"{path.name}: mesh does not match the config"}))
            return 1
        cert = certify_coeffs(space, U[1:], spec.F, lam, tol, box=pe.clarke)
        cj = cert.to_json()
        cj["source"] = path.name
        cj["bc_u_a_stored"] = float(U[0])
        write_json(ctx.out / f"certificate-{k}.json", cj)
        ok &= cert.passed and U[0] == 0.0
        rows.append([lam, k, cert.weak_residual, cert.membership_violation, cert.verdict])
    write_text(ctx.out / "summary.csv",
               csv_text(["lambda", "k", "weak_residual", "membership_violation", "verdict"], rows))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="odi-solve", description=__doc__.splitlines()[0])
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", required=True, help="JSON problem configuration")
    ap.add_argument("--lambda", dest="lam", help="override lambda (a number)")
    ap.add_argument("--n", type=int, help="override mesh.N")
    ap.add_argument("--seed", type=int, help="override solver.seed")
    ap.add_argument("--require-three", action="store_true", help="exit 1 unless >= 3 certified solutions")
    ap.add_argument("--inside-window", action="store_true", help="reject lambda outside the window")
    ap.add_argument("--out", help="output root directory (overrides output.dir)")
    ap.add_argument("--from", dest="source", help="certify: directory holding profile-k.csv files")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def _effective(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    if args.lam is not None:
        try:
            lam = float(args.lam)
        except ValueError:
            raise ConfigError(f"--lambda: not a number: {args.lam!r}") from None
        if not (math.isfinite(lam) and lam > 0):
            raise ConfigError("--lambda: requires lambda > 0")
        cfg["lambda"] = lam
    if args.n is not None:
        if args.n < 1:
            raise ConfigError("--n: requires N >= 1")
        cfg.setdefault("mesh", {})["N"] = args.n
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed: requires seed >= 0")
        cfg.setdefault("solver", {})["seed"] = args.seed
    if args.out is not None:
        cfg.setdefault("output", {})["dir"] = args.out
    return cfg


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg_path = args.config
    try:
        cfg, text = load_config(cfg_path)
        cfg = _effective(cfg, args)
        try:
            spec = ProblemSpec.from_dict(cfg["problem"], name=cfg.get("name", "problem"))
        except (ProblemError, SetValuedError, ExprError) as exc:
            msg = str(exc)
            key = {"requires 0 < c < d": "c", "requires a < b": "b"}.get(msg)
            raise ConfigError(f"problem: {msg}", _line_of(text, ["problem", key] if key else ["problem"])) from None
        root = Path(cfg.get("output", {}).get("dir", "out"))
        ctx = Context(cfg, text, spec, root / run_id(cfg, args.mode), args)
        handler = {
            "check": _mode_check,
            "window": _mode_window,
            "solve": _mode_solve,
            "sweep": _mode_sweep,
            "certify": _mode_certify,
        }[args.mode]
        code = handler(ctx)
        sys.stdout.write(str(ctx.out) + "\n")
        return code
    except ConfigError as exc:
        loc = f"{cfg_path}:{exc.line}: " if exc.line else f"{cfg_path}: "
        sys.stderr.write(f"{loc}{exc}\n")
        return 2
    except Shortfall as exc:
        sys.stderr.write(dumps(exc.diagnostics))
        return 1
    except (HypothesisError, SolverError, FEMError) as exc:
        sys.stderr.write(dumps({"error": str(exc)}))
        return 1


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

"""
Command-line driver: ``gaugelab <command> [options]``.

Commands
--------
scenario     instantiate a scenario recipe on a grid
forward      solve the boundary value problem and write u, the DN trace and a report
dataset      generate (linearised) DN data
gauge        gauge-twin refinement study
reconstruct  invert a dataset for Q, T2, T3 and optionally break the gauge
report       collect ``summary.json`` files into one CSV table

Exit codes: 0 ok, 1 configuration error, 2 solver/inversion error,
3 a scientific check failed.

Scenario recipes are JSON documents of analytic terms, so one recipe can
be instantiated on any grid::

    {
      "grid": 33,
      "nonlinearity": {"kind": "polynomial", "coefficients": [0, {"bump": {...}}]},
      "source": "1 + x*y",
      "f0": 0.5,
      "manufactured": "sin(pi*x)*y"        (optional exact solution)
    }

A term is a number, an expression in ``x`` and ``y`` (numpy functions and
``pi`` are available), ``{"bump": {"center": [cx, cy], "radius": r,
"amplitude": A, "power": 3}}``, or a list of terms that are summed.  With
``manufactured`` the source (and, unless given, f0) is computed so that the
term is the exact discrete solution.  Files written by ``gaugelab scenario``
(nodal values plus grid header) are accepted wherever a recipe is.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .errors import GaugeLabError, InvariantViolation
from .forward import Scenario, solve
from .gauge import GaugeFunction, gauge_twin, refinement_study
from .grid import BoundaryField, Field, Grid2D, laplacian, make_bump, normal_derivative
from .linearize import DIRECT, DIVIDED, boundary_family, verify_linearization
from .nonlinearity import KINDS, Nonlinearity
from .reconstruct import (
    DNDataset,
    ReconstructionResult,
    break_gauge_exp_u,
    break_gauge_polynomial,
    build_dataset,
    recover_potential,
    recover_second_field,
    recover_sine_gordon,
    recover_third_field,
    select_alpha,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3


class ConfigError(Exception):
    """Invalid command-line or file input (exit code 1)."""


class CheckFailed(Exception):
    """A scientific check did not pass (exit code 3)."""


# recipes ------------------------------------------------------------------------------

_NAMES = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "arctan", "abs", "minimum", "maximum")
}
_NAMES.update(pi=np.pi, e=np.e)


def _expression(expr: str, x, y, where: str):
    try:
        code = compile(expr, where, "eval")
    except SyntaxError as exc:
        raise ConfigError(f"{where}: cannot parse expression {expr!r} ({exc.msg})") from None
    unknown = set(code.co_names) - set(_NAMES) - {"x", "y"}
    if unknown:
        raise ConfigError(f"{where}: unknown name(s) {sorted(unknown)} in {expr!r}")
    value = eval(code, {"__builtins__": {}}, {**_NAMES, "x": x, "y": y})  # noqa: S307 - names checked above
    return np.broadcast_to(np.asarray(value, dtype=float), np.shape(x)).copy()


def evaluate_term(term, grid: Grid2D, where: str = "term") -> Field:
    """Nodal values of a recipe term on ``grid``."""
    X, Y = grid.mesh()
    if isinstance(term, bool) or term is None:
        raise ConfigError(f"{where}: expected a number, expression, bump or list, got {term!r}")
    if isinstance(term, (int, float)):
        return Field.constant(grid, float(term))
    if isinstance(term, str):
        return Field(grid, _expression(term, X, Y, where))
    if isinstance(term, list):
        if not term:
            raise ConfigError(f"{where}: empty list")
        out = Field.zeros(grid)
        for k, t in enumerate(term):
            out = out + evaluate_term(t, grid, f"{where}[{k}]")
        return out
    if isinstance(term, dict) and set(term) == {"bump"}:
        b = term["bump"]
        try:
            return make_bump(grid, tuple(b["center"]), float(b["radius"]), float(b["amplitude"]), int(b.get("power", 3)))
        except KeyError as exc:
            raise ConfigError(f"{where}.bump: missing field {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ConfigError(f"{where}.bump: {exc}") from None
    raise ConfigError(f"{where}: expected a number, expression, bump or list, got {term!r}")


def _grid_from(spec) -> Grid2D:
    if isinstance(spec, int):
        return Grid2D.square(spec)
    if isinstance(spec, dict):
        try:
            return Grid2D.from_header(spec)
        except KeyError as exc:
            raise ConfigError(f"grid: missing field {exc.args[0]!r}") from None
    raise ConfigError(f"grid: expected a node count or a header, got {spec!r}")


def is_recipe(doc: dict) -> bool:
    """False for nodal scenario files written by ``gaugelab scenario``."""
    src = doc.get("source")
    return not (isinstance(src, dict) and "values" in src)


def build_scenario(doc: dict, grid: Grid2D | None = None) -> tuple[Scenario, Field | None]:
    """Scenario (and manufactured truth, if any) from a recipe or a nodal scenario file."""
    if not isinstance(doc, dict):
        raise ConfigError("scenario: top level must be a JSON object")
    if "nonlinearity" not in doc:
        raise ConfigError("scenario: missing field 'nonlinearity'")
    if not is_recipe(doc):
        try:
            s = Scenario.from_dict(doc)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"scenario: malformed nodal scenario ({exc})") from None
        if grid is not None and grid != s.grid:
            raise ConfigError("scenario: nodal scenario files cannot be re-gridded; use a recipe")
        return s, None
    if grid is None:
        grid = _grid_from(doc.get("grid", 33))
    nl = doc["nonlinearity"]
    kind = nl.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"scenario.nonlinearity.kind: expected one of {KINDS}, got {kind!r}")
    if kind == "polynomial":
        terms = nl.get("coefficients")
        if not isinstance(terms, list) or not terms:
            raise ConfigError("scenario.nonlinearity.coefficients: expected a non-empty list")
        coeffs = [evaluate_term(t, grid, f"scenario.nonlinearity.coefficients[{k}]") for k, t in enumerate(terms)]
        a = Nonlinearity.polynomial(*coeffs)
    else:
        if "q" not in nl:
            raise ConfigError("scenario.nonlinearity: missing field 'q'")
        a = Nonlinearity(kind, (evaluate_term(nl["q"], grid, "scenario.nonlinearity.q"),))
    truth = None
    if "manufactured" in doc:
        truth = evaluate_term(doc["manufactured"], grid, "scenario.manufactured")
        F = laplacian(truth) + Field(grid, a.value(truth.values))
        F = Field.from_interior(grid, F.interior)
        f0 = truth.trace()
    else:
        if "source" not in doc:
            raise ConfigError("scenario: missing field 'source'")
        F = evaluate_term(doc["source"], grid, "scenario.source")
        f0 = None
    if "f0" in doc:
        f0 = evaluate_term(doc["f0"], grid, "scenario.f0").trace()
    if f0 is None:
        f0 = BoundaryField.zeros(grid)
    return Scenario(a, F, f0), truth


# io ------------------------------------------------------------------------------------


def _read_json(path, what: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"--{what}: file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--{what}: {path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _write_json(path: Path, data) -> None:
    """Atomic, deterministic JSON output."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        json.dump(data, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _write_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--refine: expected comma-separated node counts, got {text!r}") from None
    if not sizes:
        raise ConfigError("--refine: empty list")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError(f"--refine: sizes must be strictly increasing, got {sizes}")
    return sizes


def _family(text: str, grid: Grid2D):
    kind, _, count = text.partition(":")
    try:
        n = int(count) if count else 8
        return boundary_family(grid, kind, n), {"kind": kind, "count": n}
    except ValueError as exc:
        raise ConfigError(f"--family: {exc}") from None


def _load_scenario(args, grid: Grid2D | None = None):
    if not args.scenario:
        raise ConfigError("--scenario: required for this command")
    doc = _read_json(args.scenario, "scenario")
    if grid is None and getattr(args, "grid", None):
        grid = Grid2D.square(args.grid)
    return build_scenario(doc, grid)


def _out(args) -> Path:
    return Path(args.out)


# commands ------------------------------------------------------------------------------


def cmd_scenario(args) -> int:
    s, _ = _load_scenario(args)
    out = _out(args)
    _write_json(out / "scenario.json", s.to_dict())
    print(f"scenario: {s.a.kind} on {s.grid.nx}x{s.grid.ny} -> {out / 'scenario.json'}")
    return EXIT_OK


def cmd_forward(args) -> int:
    s, truth = _load_scenario(args)
    u, rep = solve(s, continuation=args.continuation)
    dn = normal_derivative(u)
    g = s.grid
    out = _out(args)
    summary = {
        "command": "forward",
        "grid": g.header(),
        "kind": s.a.kind,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "final_residual": rep.residual_history[-1] if rep.residual_history else None,
    }
    if truth is not None:
        summary["max_error"] = float((u - truth).max_abs())
    _write_json(out / "solution.json", u.to_dict())
    _write_json(out / "report.json", rep.to_dict())
    _write_json(out / "dn.json", dn.to_dict())
    bi, bj = g.boundary_index
    _write_csv(
        out / "dn.csv",
        [
            {"index": k, "arclength": float(s_), "x": float(g.x[i]), "y": float(g.y[j]), "dn": float(v)}
            for k, (s_, i, j, v) in enumerate(zip(g.arclength, bi, bj, dn.values))
        ],
    )
    _write_json(out / "summary.json", summary)
    print(f"forward: converged in {rep.iterations} iterations, residual {summary['final_residual']:.3e}")
    if truth is not None:
        print(f"forward: max-norm error vs manufactured solution {summary['max_error']:.3e}")
    return EXIT_OK


def cmd_dataset(args) -> int:
    s, _ = _load_scenario(args)
    if args.noise < 0:
        raise ConfigError("--noise: must be non-negative")
    if args.eps <= 0:
        raise ConfigError("--eps: must be positive")
    inputs, fam = _family(args.family, s.grid)
    method = DIVIDED if args.method == "divided" else DIRECT
    d = build_dataset(
        s, inputs, args.order, method=method, eps=args.eps, noise=args.noise, seed=args.seed, n_third=args.n_third, family=fam
    )
    out = _out(args)
    summary = {
        "command": "dataset",
        "grid": s.grid.header(),
        "order": args.order,
        "method": method,
        "family": fam,
        "noise": args.noise,
        "seed": args.seed,
        "n_first": len(d.first),
        "n_second": len(d.second),
        "n_third": len(d.third),
    }
    if method == DIVIDED:
        chk = verify_linearization(s, s.f0, inputs[1 : 1 + args.order] or inputs[: args.order], args.eps)
        summary["richardson"] = {
            "eps": args.eps,
            "discrepancy": chk.discrepancy,
            "discrepancy_half": chk.discrepancy_half,
            "ratio": chk.ratio,
        }
        print(f"dataset: divided differences vs direct solve, ratio {chk.ratio:.3f} when eps halves")
    _write_json(out / "dataset.json", d.to_dict())
    _write_json(out / "summary.json", summary)
    print(f"dataset: order {args.order}, {len(inputs)} inputs -> {out / 'dataset.json'}")
    return EXIT_OK


def _bump_spec(text: str):
    try:
        cx, cy, r, amp = (float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"--bump: expected cx,cy,radius,amplitude, got {text!r}") from None
    return (cx, cy), r, amp


def cmd_gauge(args) -> int:
    if not args.scenario:
        raise ConfigError("--scenario: required for this command")
    doc = _read_json(args.scenario, "scenario")
    if not is_recipe(doc):
        raise ConfigError("--scenario: the gauge study needs a recipe (it is rebuilt on every grid)")
    sizes = _sizes(args.refine)
    center, radius, amp = _bump_spec(args.bump)

    def build(grid):
        s2, _ = build_scenario(doc, grid)
        psi = GaugeFunction.bump(grid, center, radius, amp) if amp else GaugeFunction.zero(grid)
        try:
            s1 = gauge_twin(s2, psi)
        except ValueError as exc:
            raise ConfigError(f"--scenario: {exc}") from None
        if args.perturb:
            s1 = s1.replace(F=s1.F + make_bump(grid, (0.5, 0.5), 0.25, args.perturb))
        data, _ = _family(args.family, grid)
        return s1, s2, [args.data_scale * f for f in data], psi

    study = refinement_study(build, sizes)
    ok = study.passes(args.low, args.high, args.floor)
    out = _out(args)
    rows = study.rows()
    _write_csv(out / "gauge.csv", rows)
    summary = {
        "command": "gauge",
        "sizes": sizes,
        "discrepancies": study.discrepancies,
        "ratios": study.ratios,
        "passed": ok,
        "bump": {"center": list(center), "radius": radius, "amplitude": amp},
        "perturb": args.perturb,
    }
    _write_json(out / "summary.json", summary)
    for r in rows:
        ratio = "" if r["ratio"] is None else f"  ratio {r['ratio']:.3f}"
        print(f"gauge: grid {r['grid']:4d}  discrepancy {r['discrepancy']:.3e}{ratio}")
    if not ok:
        raise CheckFailed(f"gauge invariance check failed: ratios {study.ratios} outside [{args.low}, {args.high}]")
    print("gauge: PASS")
    return EXIT_OK


def _smoothing(text: str):
    if text == "none":
        return None
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"--smoothing: expected none, auto or a number, got {text!r}") from None


def cmd_reconstruct(args) -> int:
    if not args.dataset:
        raise ConfigError("--dataset: required for this command")
    path = Path(args.dataset)
    if not path.is_file():
        raise ConfigError(f"--dataset: file not found: {path}")
    try:
        d = DNDataset.load(path)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--dataset: malformed dataset ({exc})") from None
    order = args.order
    if order >= 2 and not d.second:
        raise ConfigError(f"--order {order}: dataset has no second-order block")
    if order >= 3 and not d.third:
        raise ConfigError(f"--order {order}: dataset has no third-order block")
    g = d.grid
    truth = {}
    if args.truth:
        tdoc = _read_json(args.truth, "truth")
        ts, _ = build_scenario(tdoc, g if is_recipe(tdoc) else None)
        if ts.grid != g:
            raise ConfigError("--truth: scenario grid differs from the dataset grid")
        u0, _ = solve(ts)
        for k in range(1, 4):
            truth[f"T{k}" if k > 1 else "Q"] = Field(g, ts.a.derivative(k, u0.values))
        truth["u0"] = u0
        truth["F"] = ts.F
        if ts.a.kind == "polynomial":
            for k in range(1, (ts.a.degree or 0) + 1):
                truth[f"a{k}"] = ts.a.coefficient(k)
        else:
            truth["q"] = ts.a.q
    if args.alpha_search:
        rq = select_alpha(d, truth=truth.get("Q"))
    else:
        rq = recover_potential(d, args.alpha_reg, truth=truth.get("Q"))
    fields = dict(rq.fields)
    info = {"potential": rq.info}
    if order >= 2:
        r2 = recover_second_field(d, fields["Q"], args.alpha_reg, truth=truth.get("T2"))
        fields.update(r2.fields)
        info["second"] = r2.info
    if order >= 3:
        r3 = recover_third_field(d, fields["Q"], fields["T2"], args.alpha_reg, truth=truth.get("T3"))
        fields.update(r3.fields)
        info["third"] = r3.info
    sm = _smoothing(args.smoothing)
    if args.break_gauge != "none":
        if order < 2:
            raise ConfigError("--break: needs --order 2 or higher")
        if args.break_gauge == "polynomial":
            if args.known is None:
                raise ConfigError("--break polynomial: --known (the prior coefficient a^(N-1)) is required")
            known = evaluate_term(json.loads(args.known) if args.known[:1] in "[{" else _number_or_expr(args.known), g, "--known")
            T = [fields["Q"], fields["T2"]] + ([fields["T3"]] if order >= 3 else [])
            coeffs, u0, F = break_gauge_polynomial(T, known, f0=d.f0, smoothing=sm)
            fields.update({f"a{k + 1}": c for k, c in enumerate(coeffs)})
        elif args.break_gauge == "exp_u":
            q, u0, F = break_gauge_exp_u(fields["Q"], fields["T2"], d.f0, smoothing=sm)
            fields["q"] = q
        else:
            q, u0, F = recover_sine_gordon(fields["Q"], fields["T2"], d.f0, smoothing=sm)
            fields["q"] = q
        fields.update(u0=u0, F=F)
    res = ReconstructionResult(fields, rq.residual_history, args.alpha_reg, info=info)
    if truth:
        res.compare(truth)
    out = _out(args)
    _write_json(out / "result.json", res.to_dict())
    rows = [{"field": k, "relative_error": float(v)} for k, v in sorted(res.errors.items())]
    if rows:
        _write_csv(out / "errors.csv", rows)
    _write_json(
        out / "summary.json",
        {"command": "reconstruct", "order": order, "break": args.break_gauge, "errors": res.errors, "fields": sorted(fields)},
    )
    print(f"reconstruct: recovered {', '.join(sorted(fields))}")
    for r in rows:
        print(f"reconstruct: {r['field']:>4s} relative L2 error {r['relative_error']:.4f}")
    return EXIT_OK


def _number_or_expr(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def _flatten(prefix: str, value, out: dict):
    if isinstance(value, dict):
        for k in sorted(value):
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], out)
    elif isinstance(value, list):
        out[prefix] = json.dumps(value)
    else:
        out[prefix] = value


def cmd_report(args) -> int:
    dirs = args.dirs or []
    if not dirs:
        raise ConfigError("report: give one or more output directories")
    rows = []
    for d in dirs:
        p = Path(d) / "summary.json"
        if not p.is_file():
            raise ConfigError(f"report: no summary.json in {d}")
        row = {"run": str(d)}
        _flatten("", json.loads(p.read_text()), row)
        rows.append(row)
    out = _out(args)
    _write_csv(out / "report.csv", rows)
    for row in rows:
        print(" ".join(f"{k}={v}" for k, v in row.items()))
    print(f"report: {len(rows)} run(s) -> {out / 'report.csv'}")
    return EXIT_OK


# parser --------------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gaugelab", description="Semilinear elliptic DN-map experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, scenario=True, grid=True):
        if scenario:
            sp.add_argument("--scenario", help="scenario recipe or nodal scenario JSON")
        if grid:
            sp.add_argument("--grid", type=int, help="square grid node count (overrides the recipe)")
        sp.add_argument("--out", default="out", help="output directory (default: out)")

    sp = sub.add_parser("scenario", help="instantiate a recipe on a grid")
    common(sp)
    sp.set_defaults(func=cmd_scenario)

    sp = sub.add_parser("forward", help="solve the forward problem")
    common(sp)
    sp.add_argument("--continuation", type=int, default=0, help="homotopy steps in the nonlinearity")
    sp.set_defaults(func=cmd_forward)

    sp = sub.add_parser("dataset", help="generate DN data")
    common(sp)
    sp.add_argument("--family", default="fourier:16", help="boundary family kind:count (fourier or hat)")
    sp.add_argument("--order", type=int, choices=(1, 2, 3), default=1)
    sp.add_argument("--method", choices=("direct", "divided"), default="direct")
    sp.add_argument("--eps", type=float, default=1e-2, help="divided-difference step")
    sp.add_argument("--noise", type=float, default=0.0, help="multiplicative noise level")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-third", type=int, default=8, help="inputs used for third-order forms")
    sp.set_defaults(func=cmd_dataset)

    sp = sub.add_parser("gauge", help="gauge-twin refinement study")
    common(sp, grid=False)
    sp.add_argument("--refine", default="33,65,129", help="comma-separated square grid sizes")
    sp.add_argument("--family", default="fourier:8")
    sp.add_argument("--bump", default="0.45,0.55,0.3,0.5", help="gauge bump cx,cy,radius,amplitude")
    sp.add_argument("--data-scale", type=float, default=0.5, help="amplitude of the test data")
    sp.add_argument("--perturb", type=float, default=0.0, help="add a non-gauge bump of this amplitude to F")
    sp.add_argument("--low", type=float, default=3.0)
    sp.add_argument("--high", type=float, default=5.0)
    sp.add_argument("--floor", type=float, default=1e-10)
    sp.set_defaults(func=cmd_gauge)

    sp = sub.add_parser("reconstruct", help="invert a DN dataset")
    common(sp, scenario=False, grid=False)
    sp.add_argument("--dataset", help="dataset JSON written by 'gaugelab dataset'")
    sp.add_argument("--order", type=int, choices=(1, 2, 3), default=1, help="highest Taylor field to recover")
    sp.add_argument("--alpha-reg", type=float, default=1e-6)
    sp.add_argument("--alpha-search", action="store_true", help="pick alpha for Q by the discrepancy principle")
    sp.add_argument("--break", dest="break_gauge", choices=("none", "polynomial", "exp_u", "sine_gordon"), default="none")
    sp.add_argument("--known", help="prior a^(N-1) for --break polynomial (number, expression or JSON term)")
    sp.add_argument("--smoothing", default="auto", help="u0 filter before the source estimate: none, auto or beta")
    sp.add_argument("--truth", help="scenario used to generate the data (error table)")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("report", help="collect summary.json files into a CSV")
    sp.add_argument("dirs", nargs="*", help="output directories")
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help()
            return EXIT_CONFIG
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckFailed, InvariantViolation) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (GaugeLabError, np.linalg.LinAlgError) as exc:
        if isinstance(exc, ValueError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

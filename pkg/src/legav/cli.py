"""Command-line entry point: ``legav run | check | distances | sweep``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checks import omega_bar_bound_check, structure_residuals
from .distances import d0, d1, gentleness_report
from .errors import GateError, InputError, LegavError, NumericalError
from .models import get_model
from .curves import read_curve_csv
from .scenario import ScenarioError, dump_json, load_scenario, run_scenario, run_sweep

EXIT_OK, EXIT_NUMERICAL, EXIT_GATE, EXIT_INPUT = 0, 1, 2, 3


def _err(msg: str) -> None:
    print(f"legav: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    out = args.out or sc.get("output") or f"legav-out/{sc['name']}"
    res = run_scenario(sc, out, strict=args.strict, threads=args.threads)
    sys.stdout.write(res.report)
    print(f"artifacts in {out}")
    return res.exit_code


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    out = args.out or sc.get("output") or f"legav-out/{sc['name']}-sweep"
    res = run_sweep(sc, out, strict=args.strict, threads=args.threads)
    for r in res["rows"]:
        print(f"amplitude {r['amplitude']:.3e}  epsilon {r['epsilon']:.4e}  max d0 {r['max_d0']:.4e}")
    print(f"log-log slope {res['slope']:.4f}")
    print(f"artifacts in {out}")
    return EXIT_OK


def _read(path, model=None):
    if not Path(path).exists():
        raise ScenarioError(f"{path}: no such file")
    return read_curve_csv(path, model)


def cmd_check(args) -> int:
    model = get_model(args.model, args.scale)
    curve = _read(args.curve, model)
    rng = np.random.default_rng(args.seed)
    pts = np.concatenate([curve.points, model.random_points(rng, args.points)])
    out = {
        "model": model.model_id,
        "curve": str(args.curve),
        "samples": curve.n,
        "legendrian_residual": curve.legendrian_residual(),
        "structure": structure_residuals(model, pts, rng),
        "omega_bar_bound": omega_bar_bound_check(model, pts),
        "gentleness": gentleness_report(curve, args.tube).to_dict(),
    }
    out["curvature_sup"] = out["gentleness"]["curvature_sup"]
    norms = model.nabla_form_norms(pts)
    out["nabla_theta"] = float(np.max(norms[0]))
    out["nabla_dtheta"] = float(np.max(norms[1]))
    sys.stdout.write(dump_json(out))
    return EXIT_OK


def cmd_distances(args) -> int:
    curves = [_read(p) for p in args.curves]
    names = [str(p) for p in args.curves]
    rows = []
    for i, a in enumerate(curves):
        for j, b in enumerate(curves):
            same = a.model == b.model and np.array_equal(a.points, b.points)
            v0 = 0.0 if same else d0(a, b)
            v1 = 0.0 if same else d1(a, b)
            rows.append((names[i], names[j], v0, v1))
    lines = ["N,N_prime,d0,d1"] + [f"{a},{b},{v0:.17g},{v1:.17g}" for a, b, v0, v1 in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="legav", description="Averaging of nearby Legendrian curves in 3-dimensional contact models.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", aliases=["average"], help="run a scenario and write curves, summary, report and plot")
    r.add_argument("scenario", help="scenario JSON file or bundled scenario name")
    r.add_argument("--strict", action="store_true", help="refuse families outside the small-epsilon regime or failing gentleness")
    r.add_argument("--out", help="output directory")
    r.add_argument("--threads", type=int, default=None)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="epsilon-scaling study with a log-log slope fit")
    s.add_argument("scenario")
    s.add_argument("--strict", action="store_true")
    s.add_argument("--out")
    s.add_argument("--threads", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check", help="structure identities and gentleness of one curve")
    c.add_argument("--model", required=True, choices=["heisenberg", "cylinder"])
    c.add_argument("--scale", type=float, default=1.0)
    c.add_argument("--curve", required=True)
    c.add_argument("--points", type=int, default=1000, help="extra random sample points")
    c.add_argument("--tube", type=float, default=1.0)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check)

    d = sub.add_parser("distances", help="d0 / d1 table between curve CSV files")
    d.add_argument("curves", nargs="+")
    d.add_argument("--out")
    d.set_defaults(func=cmd_distances)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except GateError as exc:
        _err(f"gate: {exc}")
        return EXIT_GATE
    except NumericalError as exc:
        _err(f"numerical failure: {type(exc).__name__}: {exc}")
        return EXIT_NUMERICAL
    except (InputError, OSError) as exc:
        _err(f"input: {exc}")
        return EXIT_INPUT
    except LegavError as exc:
        _err(str(exc))
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())

"""Scenario files: schema, family generation, runs and their artifacts."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import cover
from .averaging import AverageConfig, contact_moser_average, epsilon_gate, prepare, symplectization_average
from .curves import (
    FamilyInput,
    Isometry,
    apply_map,
    circle,
    fiber_cylinder,
    figure_eight,
    lift_front_cylinder,
    lift_planar_heisenberg,
    perturb,
    read_curve_csv,
    rosette,
    rotations,
    write_curve_csv,
)
from .distances import d0
from .errors import GateError, InputError
from .models import get_model

_TOLERANCE_KEYS = {
    k: {"type": "integer" if isinstance(v, int) else "number"}
    for k, v in AverageConfig().to_dict().items()
    if k != "mode"
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "legav scenario",
    "type": "object",
    "required": ["name", "model", "family"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "model": {
            "type": "object",
            "required": ["id"],
            "additionalProperties": False,
            "properties": {
                "id": {"enum": ["heisenberg", "cylinder"]},
                "scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "family": {
            "type": "object",
            "required": ["base"],
            "additionalProperties": False,
            "properties": {
                "base": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["circle", "rosette", "figure_eight", "fiber", "csv"]},
                        "n": {"type": "integer", "minimum": 16, "maximum": 8192},
                        "size": {"type": "number", "exclusiveMinimum": 0},
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                        "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                        "order": {"type": "integer", "minimum": 2},
                        "path": {"type": "string"},
                    },
                },
                "amplitudes": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "seed": {"type": "integer", "minimum": 0},
                "modes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "copies": {"type": "integer", "minimum": 1},
                "group": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["rotation", "translation"]},
                        "order": {"type": "integer", "minimum": 1},
                        "vectors": {
                            "type": "array",
                            "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3},
                        },
                    },
                },
                "weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "cover": {"type": "boolean"},
            },
        },
        "mode": {"enum": ["strict", "warn"]},
        "methods": {"type": "array", "items": {"enum": ["contact", "symplectization"]}, "minItems": 1, "uniqueItems": True},
        "tolerances": {"type": "object", "additionalProperties": False, "properties": _TOLERANCE_KEYS},
        "equivariance": {"type": "array", "items": {"type": "string"}},
        "threads": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
        "sweep": {
            "type": "object",
            "required": ["amplitudes"],
            "additionalProperties": False,
            "properties": {
                "amplitudes": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
                "members": {"type": "integer", "minimum": 2},
            },
        },
    },
}

BUNDLED = ("identity", "z6-rotation", "paper-regime", "relaxed", "cylinder-translation", "noncoorientable-z4", "sweep")


class ScenarioError(InputError):
    """Scenario file missing, unreadable or schema-invalid; message carries the line."""


# ------------------------------------------------------------------ loading
def _line_of(text: str, path) -> int:
    """Best-effort line number of a JSON key path inside the source text."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            hit = text.find(f'"{key}"', pos)
            if hit < 0:
                break
            pos = hit
    return text.count("\n", 0, pos) + 1


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("legav") / "scenarios" / f"{name}.json"))


def load_scenario(source) -> dict:
    """Read and validate a scenario file (path or bundled name)."""
    path = Path(source)
    if not path.exists() and str(source) in BUNDLED:
        path = bundled_path(str(source))
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{source}: cannot read scenario ({exc.strerror or exc})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}, line {exc.lineno}: invalid JSON: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        where = "/".join(map(str, e.absolute_path)) or "<root>"
        raise ScenarioError(f"{path}, line {_line_of(text, e.absolute_path)}: {where}: {e.message}")
    data["_source"] = str(path)
    return data


def scenario_config(sc: dict, strict: bool = False, threads: int | None = None) -> AverageConfig:
    mode = "strict" if strict else sc.get("mode", "warn")
    cfg = AverageConfig(mode=mode, **sc.get("tolerances", {}))
    if threads or sc.get("threads"):
        cfg = replace(cfg, threads=int(threads or sc["threads"]))
    return cfg


# ----------------------------------------------------------------- families
def _base_curve(sc: dict, model):
    b = sc["family"]["base"]
    kind = b["kind"]
    n = b.get("n", 256)
    if kind == "csv":
        p = Path(b["path"])
        if not p.is_absolute():
            p = Path(sc.get("_source", ".")).parent / p
        return read_curve_csv(p, model, legendrian=True)
    if kind == "fiber":
        if model.model_id != "cylinder":
            raise InputError("fibre curves exist only on the Cylinder model")
        c = b.get("center", [0.0, 0.0])
        return fiber_cylinder(c[0], c[1], n, model)
    if kind == "circle":
        plane = circle(n, b.get("radius", 1.0), tuple(b.get("center", [0.0, 0.0])))
    elif kind == "rosette":
        plane = rosette(n, b.get("size", 1.0), b.get("order", 6))
    else:
        plane = figure_eight(n, b.get("size", 1.0))
    if model.model_id == "heisenberg":
        return lift_planar_heisenberg(plane, 0.0, model, {"generator": kind})
    return lift_front_cylinder(plane, model, {"generator": kind})


def _group(sc: dict, model) -> list:
    g = sc["family"].get("group")
    if not g:
        return [Isometry("identity")]
    if g["kind"] == "rotation":
        return rotations(g.get("order", 1))
    vecs = g.get("vectors") or [[0.0, 0.0]]
    return [Isometry("translation", tuple(float(v) for v in vec)) for vec in vecs]


def _members(sc: dict, model, amplitudes=None):
    fam = sc["family"]
    base = _base_curve(sc, model)
    amps = amplitudes if amplitudes is not None else fam.get("amplitudes", [0.0])
    seed = fam.get("seed", 0)
    modes = tuple(fam.get("modes", (2, 3, 4, 5)))
    out = []
    for j, a in enumerate(amps):
        if a > 0 and base.info.get("generator") == "fiber":
            raise InputError("fibre curves cannot be perturbed through a front")
        out.append((f"a{j}", perturb(base, a, seed + j, modes, with_distance=False) if a > 0 else base.copy()))
    return out


def build_family(sc: dict, amplitudes=None) -> FamilyInput:
    """The (cover-side) family described by a scenario."""
    model = get_model(sc["model"]["id"], sc["model"].get("scale", 1.0))
    members = _members(sc, model, amplitudes)
    group = _group(sc, model)
    copies = sc["family"].get("copies", 1)
    curves, labels = [], []
    for lab, c in members:
        for k, g in enumerate(group):
            mapped = c if g.kind == "identity" else apply_map(c, g)
            for r in range(copies):
                curves.append(mapped)
                labels.append(lab + (f"g{k}" if len(group) > 1 else "") + (f"c{r}" if copies > 1 else ""))
    w = sc["family"].get("weights")
    if w is not None:
        if len(w) != len(curves):
            raise InputError(f"{len(w)} weights given for {len(curves)} members")
        w = np.asarray(w, float) / np.sum(w)
    return FamilyInput(curves, w, labels)


# ----------------------------------------------------------------- running
@dataclass
class RunOutcome:
    summary: dict
    report: str
    results: dict
    family: FamilyInput
    exit_code: int


def invariance_residual(curve, isos) -> float:
    out = 0.0
    for g in isos:
        if g.kind != "identity":
            out = max(out, d0(curve, apply_map(curve, g)))
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def run_scenario(sc: dict, out_dir=None, strict: bool = False, threads: int | None = None) -> RunOutcome:
    """Run a validated scenario and write its artifacts to ``out_dir`` (if given).

    Raises GateError in strict mode and NumericalError subclasses on failure.
    """
    t0 = time.perf_counter()
    cfg = scenario_config(sc, strict, threads)
    methods = sc.get("methods", ["contact", "symplectization"])
    if sc["family"].get("cover"):
        return _run_cover(sc, cfg, methods, out_dir, t0)
    fam = build_family(sc)
    gate = epsilon_gate(fam, cfg)
    prep = prepare(fam, cfg, gate)
    results = {}
    if "contact" in methods:
        results["contact"] = contact_moser_average(prep)
    if "symplectization" in methods:
        results["symplectization"] = symplectization_average(prep)
    summary = {
        "scenario": sc["name"],
        "model": {"id": fam.model.model_id, "scale": fam.model.scale},
        "mode": cfg.mode,
        "members": list(fam.labels),
        "gate": gate.to_dict(),
        "config": {k: v for k, v in cfg.to_dict().items() if k != "threads"},
        "results": {k: r.summary() for k, r in results.items()},
    }
    first = next(iter(results.values()))
    summary.update(epsilon=first.epsilon, regime=first.regime)
    for k in ("d0_per_member", "residual", "margins", "ratios"):
        summary[k] = first.summary()[k]
    summary["bound_check"] = first.bound.passed
    if len(results) == 2:
        summary["pipeline_agreement_d0"] = d0(results["contact"].curve, results["symplectization"].curve)
    group = _group(sc, fam.model)
    if len(group) > 1 and sc["family"]["group"]["kind"] == "rotation":
        summary["invariance_residual"] = invariance_residual(first.curve, group)
    if sc.get("equivariance"):
        summary["equivariance"] = _equivariance(fam, cfg, first, sc["equivariance"])
    ok = all(r.residual_ok for r in results.values())
    if "invariance_residual" in summary:
        ok = ok and summary["invariance_residual"] <= cfg.residual_tol
    runtime = time.perf_counter() - t0
    report = _report(sc, summary, runtime, cfg.threads)
    if out_dir is not None:
        _write_artifacts(Path(out_dir), fam, prep.N, results, summary, report)
    return RunOutcome(summary, report, results, fam, 0 if ok else 1)


def _equivariance(fam, cfg, result, specs) -> dict:
    out = {}
    for spec in specs:
        iso = Isometry.parse(spec)
        other = contact_moser_average(fam.mapped(iso), replace(cfg, mode="warn"))
        out[spec] = d0(apply_map(result.curve, iso), other.curve)
    return out


def _run_cover(sc, cfg, methods, out_dir, t0) -> RunOutcome:
    fam = build_family(sc)
    quots = []
    for c in fam.curves:
        if c.info.get("generator") == "fiber":
            quots.append(cover.QuotientLegendrian([c], [np.arange(c.n) % (c.n // 2)]))
        else:
            pair = [c, apply_map(c, cover.INVOLUTION)]
            quots.append(cover.QuotientLegendrian(pair, [np.arange(c.n)] * 2))
    lifted = cover.lifted_family(quots, fam.weights, fam.labels)
    gate = epsilon_gate(FamilyInput([q.components[0] for q in quots], fam.weights, fam.labels), cfg)
    if cfg.mode == "strict" and not gate.passed:
        raise GateError(f"epsilon {gate.epsilon:.3e} outside the accepted regime")
    res = cover.noncoorientable_average(quots, fam.weights, fam.labels, cfg, methods[0])
    agreement = None
    if len(methods) > 1:
        other = cover.noncoorientable_average(quots, fam.weights, fam.labels, cfg, methods[1])
        agreement = max(min(d0(a, b) for b in other.quotient.components) for a in res.quotient.components)
    group = _group(sc, fam.model)
    comps = res.quotient.components
    quot_inv = 0.0
    for g in group:
        if g.kind != "identity":
            moved = apply_map(comps[0], g)
            quot_inv = max(quot_inv, min(d0(c, moved) for c in comps))
    summary = {
        "scenario": sc["name"],
        "model": {"id": fam.model.model_id, "scale": fam.model.scale},
        "mode": cfg.mode,
        "members": list(fam.labels),
        "lifted_members": list(lifted.labels),
        "lifted_weights": lifted.weights.tolist(),
        "gate": gate.to_dict(),
        "config": {k: v for k, v in cfg.to_dict().items() if k != "threads"},
        "epsilon": gate.epsilon,
        "regime": gate.regime,
        "cover": res.summary(),
        "i_invariance_residual": res.invariance_residual,
        "quotient_invariance_residual": quot_inv,
        "residual": max(r.residual for r in res.results),
        "d0_per_member": {k: v for r in res.results for k, v in r.summary()["d0_per_member"].items()},
        "margins": {"min": min(min(r.trace.min_margin) for r in res.results)},
        "ratios": {"d0_over_epsilon": max(r.bound.ratio for r in res.results)},
    }
    if agreement is not None:
        summary["pipeline_agreement_d0"] = agreement
    ok = all(r.residual_ok for r in res.results) and quot_inv <= cfg.residual_tol
    runtime = time.perf_counter() - t0
    report = _report(sc, summary, runtime, cfg.threads)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for lab, c in zip(lifted.labels, lifted.curves):
            write_curve_csv(out / f"member_{lab}.csv", c)
        for k, (r, C) in enumerate(zip(res.results, comps)):
            write_curve_csv(out / f"weinstein_{k}.csv", r.weinstein)
            write_curve_csv(out / f"L_cover_{k}.csv", C, {"component": np.full(C.n, k), "quotient_index": res.quotient.component_map[k]})
        (out / "summary.json").write_text(dump_json(summary))
        (out / "report.txt").write_text(report)
        (out / "plot.svg").write_text(svg_plot(lifted.curves, [r.weinstein for r in res.results], comps))
    return RunOutcome(summary, report, {"cover": res}, lifted, 0 if ok else 1)


def _write_artifacts(out: Path, fam, N, results, summary, report):
    out.mkdir(parents=True, exist_ok=True)
    for lab, c in zip(fam.labels, fam.curves):
        write_curve_csv(out / f"member_{lab}.csv", c)
    write_curve_csv(out / "weinstein.csv", N)
    for k, r in results.items():
        extra = None if r.s_drift is None else {"s_drift": r.s_drift}
        write_curve_csv(out / f"L_{k}.csv", r.curve, extra)
    (out / "summary.json").write_text(dump_json(summary))
    (out / "report.txt").write_text(report)
    Ls = [r.curve for r in results.values()]
    (out / "plot.svg").write_text(svg_plot(fam.curves, [N], Ls[:1]))


def _report(sc, summary, runtime, threads: int = 1) -> str:
    lines = [f"scenario   {sc['name']}", f"model      {summary['model']['id']} (scale {summary['model']['scale']:g})"]
    lines.append(f"mode       {summary['mode']}")
    lines.append(f"epsilon    {summary['epsilon']:.6e}  regime {summary['regime']}")
    for w in summary["gate"].get("warnings", []):
        lines.append(f"warning    {w}")
    lines.append(f"residual   {summary['residual']:.3e}")
    lines.append(f"min margin {summary['margins']['min']:.12f}")
    lines.append(f"d0/eps     {summary['ratios']['d0_over_epsilon']:.4g}")
    for k, v in sorted(summary["d0_per_member"].items()):
        lines.append(f"d0 {k:<12} {v:.6e}")
    for key in ("pipeline_agreement_d0", "invariance_residual", "i_invariance_residual", "quotient_invariance_residual"):
        if key in summary:
            lines.append(f"{key} {summary[key]:.3e}")
    for spec, v in summary.get("equivariance", {}).items():
        lines.append(f"equivariance {spec} {v:.3e}")
    lines.append(f"runtime    {runtime:.2f} s ({threads} thread{'s' if threads > 1 else ''})")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------- sweep
def run_sweep(sc: dict, out_dir=None, strict: bool = False, threads: int | None = None) -> dict:
    """epsilon-scaling study: max_g d0(N_g, L) against epsilon over amplitudes."""
    cfg = replace(scenario_config(sc, strict, threads), mode="warn")
    sw = sc.get("sweep") or {"amplitudes": sc["family"].get("amplitudes", [])}
    k = sw.get("members", 3)
    rows = []
    for a in sw["amplitudes"]:
        fam = build_family(sc, [a] * k)
        r = contact_moser_average(fam, cfg)
        rows.append({"amplitude": a, "epsilon": r.epsilon, "max_d0": max(r.d0_per_member), "residual": r.residual})
    eps = np.array([r["epsilon"] for r in rows])
    dm = np.array([r["max_d0"] for r in rows])
    slope, intercept = np.polyfit(np.log(eps), np.log(dm), 1)
    out = {"scenario": sc["name"], "rows": rows, "slope": float(slope), "intercept": float(intercept)}
    if out_dir is not None:
        p = Path(out_dir)
        p.mkdir(parents=True, exist_ok=True)
        text = "amplitude,epsilon,max_d0,log_epsilon,log_max_d0,residual\n" + "".join(
            f"{r['amplitude']:.17g},{r['epsilon']:.17g},{r['max_d0']:.17g},{np.log(r['epsilon']):.17g},{np.log(r['max_d0']):.17g},{r['residual']:.17g}\n"
            for r in rows
        )
        (p / "sweep.csv").write_text(text)
        (p / "sweep.json").write_text(dump_json(out))
    return out


# ---------------------------------------------------------------------- plot
def svg_plot(inputs, weinstein, outputs, size: int = 480) -> str:
    """Planar projections: inputs grey, Weinstein average dashed, output solid."""
    allpts = np.concatenate([c.points[:, :2] for c in [*inputs, *weinstein, *outputs]])
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    pad = 0.05 * span

    def path(c, style):
        xy = (c.points[:, :2] - lo + pad) / (span + 2 * pad) * size
        d = " ".join(f"{x:.3f},{size - y:.3f}" for x, y in xy)
        return f'<polygon points="{d}" fill="none" {style}/>'

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">']
    parts.append(f'<rect width="{size}" height="{size}" fill="white"/>')
    parts += [path(c, 'stroke="#999999" stroke-width="1"') for c in inputs]
    parts += [path(c, 'stroke="#1f5fbf" stroke-width="1.2" stroke-dasharray="6,4"') for c in weinstein]
    parts += [path(c, 'stroke="#c0392b" stroke-width="1.5"') for c in outputs]
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

"""Batch experiment runner.

Usage::

    fillrad-lab list-experiments
    fillrad-lab validate --config exp.json
    fillrad-lab run --config exp.json --out results/ [--seed N] [--jobs N] [--plots]

A config is a JSON object with ``"schema": 1``, an experiment ``"kind"``
and kind-specific fields (see :data:`SCHEMA`).  ``run`` writes one CSV per
experiment plus ``manifest.json``; every CSV row carries the hash of the
effective config.  Exit codes: 0 success, 1 task failure, 2 invalid config.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigError, FillradLabError

SCHEMA_VERSION = 1

_model = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {
            "enum": ["circle", "sphere2", "flat-torus", "product-with-interval", "line-segment"]
        },
        "n": {"type": "integer", "minimum": 4},
        "seed": {"type": "integer"},
        "R": {"type": "number", "exclusiveMinimum": 0},
        "L1": {"type": "number", "exclusiveMinimum": 0},
        "L2": {"type": "number", "exclusiveMinimum": 0},
        "T": {"type": "number", "minimum": 0},
        "L": {"type": "number", "exclusiveMinimum": 0},
        "layers": {"type": "integer", "minimum": 2},
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 2, "maxItems": 2},
        "base": {"$ref": "#/$defs/model"},
    },
    "additionalProperties": False,
}

_pos_grid = {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}}
_field = {"enum": ["Q", "Z2"]}
_lattice = {
    "type": "object",
    "required": ["N"],
    "properties": {
        "N": {"type": "integer", "minimum": 8},
        "flux": {"type": "integer"},
        "m0": {"type": "number", "exclusiveMinimum": 0},
        "r": {"type": "number", "exclusiveMinimum": 0},
        "rho": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}


def _kind(name: str, required: list[str], props: dict) -> dict:
    return {
        "if": {"properties": {"kind": {"const": name}}, "required": ["kind"]},
        "then": {"required": required, "properties": props},
    }


SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"model": _model},
    "type": "object",
    "required": ["schema", "kind"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "kind": {
            "enum": [
                "fillrad", "nerve-audit", "product-check", "invariants",
                "defect-sweep", "threshold", "bound-calculator",
            ]
        },
        "seed": {"type": "integer", "minimum": 0},
        "name": {"type": "string"},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
    },
    "allOf": [
        _kind("fillrad", ["model"], {
            "model": {"$ref": "#/$defs/model"},
            "n": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 4}},
            "field": _field,
            "resolution": {"type": "number", "exclusiveMinimum": 0},
        }),
        _kind("nerve-audit", ["model", "cover", "R", "r"], {
            "model": {"$ref": "#/$defs/model"},
            "cover": {"enum": ["strips", "balls"]},
            "R": _pos_grid,
            "r": _pos_grid,
            "flavor": {"type": "array", "minItems": 1, "items": {"enum": ["l1", "spherical"]}},
            "repeats": {"type": "integer", "minimum": 1},
        }),
        _kind("product-check", ["base", "T"], {
            "base": {"$ref": "#/$defs/model"},
            "T": {"type": "number", "minimum": 0},
            "layers": {"type": "integer", "minimum": 2},
            "field": _field,
        }),
        _kind("invariants", ["models"], {
            "models": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/model"}},
        }),
        _kind("defect-sweep", ["lattice", "t_large", "t_small"], {
            "lattice": _lattice,
            "t_large": _pos_grid,
            "t_small": _pos_grid,
            "pair": {"type": "boolean"},
        }),
        _kind("threshold", ["lattice", "lam"], {
            "lattice": _lattice,
            "lam": _pos_grid,
            "degree": {"type": "integer"},
            "c1": {"type": "number", "exclusiveMinimum": 0},
            "c2": {"type": "number", "exclusiveMinimum": 0},
            "t_large": _pos_grid,
            "t_small": _pos_grid,
        }),
        _kind("bound-calculator", ["cases"], {
            "cases": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["sigma", "m", "control", "L0", "A1", "A2"],
                    "properties": {
                        "sigma": {"type": ["number", "string"]},
                        "m": {"type": "integer", "minimum": 0},
                        "control": {
                            "type": "object",
                            "required": ["slope"],
                            "properties": {
                                "slope": {"type": ["number", "string"]},
                                "offset": {"type": ["number", "string"]},
                            },
                            "additionalProperties": False,
                        },
                        "c1": {"type": ["number", "string"]},
                        "c2": {"type": ["number", "string"]},
                        "L0": {"type": ["number", "string"]},
                        "A1": {"type": ["number", "string"]},
                        "A2": {"type": ["number", "string"]},
                        "C1": {"type": "number", "exclusiveMinimum": 0},
                        "C2": {"type": "number", "exclusiveMinimum": 0},
                        "dim": {"type": "integer", "minimum": 0},
                    },
                    "additionalProperties": False,
                },
            },
        }),
    ],
}

DESCRIPTIONS = {
    "fillrad": "discrete filling radius of a sampled model manifold over a grid of sample sizes",
    "nerve-audit": "Lipschitz audit of nerve maps and the g_r round trip over cover grids",
    "product-check": "filling radius of a base against its product with [-T, T]",
    "invariants": "inequality chain inj/(n+2) <= fillrad <= width <= diam with radsphere",
    "defect-sweep": "difference-element defects on the lattice torus and fitted constants",
    "threshold": "index pairing along a Lipschitz sweep below the vanishing threshold",
    "bound-calculator": "exact evaluation of the filling-radius bound from control data",
}

COLUMNS = {
    "fillrad": ["config_hash", "model", "n", "field", "estimate", "lower", "exact", "method", "target", "rel_error"],
    "nerve-audit": ["config_hash", "cover", "R", "r", "flavor", "seed", "members", "multiplicity", "lip", "bound", "lip_ok", "round_trip", "D", "round_trip_ok"],
    "product-check": ["config_hash", "base", "T", "layers", "field", "base_estimate", "product_estimate", "relative_gap", "product_exact"],
    "invariants": ["config_hash", "space", "invariant", "value", "bound", "margin", "pass"],
    "defect-sweep": ["config_hash", "model", "N", "flux", "t", "L", "sigma", "defect1", "defect2", "theta_residual", "index"],
    "threshold": ["config_hash", "lam", "L", "threshold", "below", "t0", "index", "theta_minus_e", "equivalent", "c1", "c2"],
    "bound-calculator": ["config_hash", "case", "branch", "value", "even", "odd", "L_m", "consistent"],
}


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


def _line_of(text: str, path: list) -> int | None:
    """Best-effort line number of the last key in ``path`` inside ``text``."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    needle = f'"{keys[-1]}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def load_config(path: str | Path) -> tuple[dict, str]:
    """Read a config file; raises :class:`ConfigError` with diagnostics."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return cfg, text


def validate_config(cfg: Any, text: str | None = None) -> list[str]:
    """All schema diagnostics for ``cfg`` (empty when valid)."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    out = []
    for err in sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path))):
        field = "/".join(str(p) for p in err.absolute_path) or "<root>"
        where = ""
        if text is not None:
            line = _line_of(text, list(err.absolute_path))
            if line is not None:
                where = f"line {line}: "
        msg = err.message
        if err.validator == "required":
            missing = msg.split("'")[1] if "'" in msg else msg
            field = f"{field}/{missing}" if field != "<root>" else missing
            msg = f"missing required field {missing!r}"
        elif err.validator in ("minimum", "exclusiveMinimum"):
            msg = f"out of range: {msg}"
        out.append(f"{where}{field}: {msg}")
    return out


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        if math.isinf(v) or math.isnan(v):
            return str(float(v))
        return f"{float(v):.10g}"
    if isinstance(v, Fraction):
        return str(v)
    if v is None:
        return ""
    return str(v)


# ---------------------------------------------------------------------------
# Tasks (module level so they pickle for the worker pool)
# ---------------------------------------------------------------------------


def _task_fillrad(args):
    from .homology import discrete_filling_radius, sphere_fillrad_target
    from .metric import ModelSpaceSpec, sample_model_space

    model, fld, res = args
    spec = ModelSpaceSpec.from_dict(model)
    space, cycle = sample_model_space(spec)
    out = discrete_filling_radius(space, cycle, fld, res)
    target = None
    if spec.kind in ("circle", "sphere2"):
        target = sphere_fillrad_target(spec.manifold_dim, spec.R)
    rel = None if target is None else abs(out.estimate - target) / target
    return [spec.kind, spec.n, fld, out.estimate, out.bracket[0], out.exact, out.method, target, rel]


def _task_nerve(args):
    from .estimators import NerveMapTransformer
    from .metric import ModelSpaceSpec, sample_model_space

    model, cover, R, r, flavor, seed = args
    space, _ = sample_model_space(ModelSpaceSpec.from_dict(model))
    est = NerveMapTransformer(cover=cover, R=R, r=r, flavor=flavor, seed=seed).fit(space)
    rt = float(est.round_trip().max())
    D = est.cover_.diameter
    return [
        cover, R, r, flavor, seed, est.cover_.k, est.cover_.multiplicity, est.lipschitz_,
        est.bound_, est.lipschitz_ <= est.bound_ * (1 + 1e-12), rt, D, rt <= D * (1 + 1e-12),
    ]


def _task_invariants(args):
    from .homology import discrete_filling_radius
    from .invariants import (
        invariant_report,
        model_width_cover,
        radsphere_certificate,
        uryson_width_upper,
    )
    from .metric import ModelSpaceSpec, sample_model_space

    model, tol = args
    spec = ModelSpaceSpec.from_dict(model)
    space, cycle = sample_model_space(spec)
    fr = discrete_filling_radius(space, cycle).estimate
    cover, k = model_width_cover(space)
    width = uryson_width_upper(cover, k)
    cert = radsphere_certificate(space)
    eq = tol if spec.kind == "circle" else None
    rep = invariant_report(space, fr, width, radsphere=cert, name=f"{spec.kind}-{spec.n}", equality_tol=eq)
    return [list(r) for r in rep.rows]


def _task_defect(args):
    from .pairing import build_package, lattice_dirac_torus, lattice_lipschitz, pairing

    lat, t, pair = args
    m = lattice_dirac_torus(**lat)
    L = lattice_lipschitz(m.p, m.N)
    pkg = build_package(m.op, t, m.p, m.q, m.support)
    th, idx = None, None
    if pair and pkg.defect_idem < 0.25:
        rep = pairing(m.op, m.p, m.q, t, m.support, crosscheck=False, package=pkg)
        th, idx = rep.theta_residual, rep.index
    return ["wilson-torus", m.N, m.flux, t, L, pkg.sigma, pkg.defect_idem, pkg.defect_e, th, idx]


def _task_threshold(args):
    from .pairing import bott_lattice_field, lattice_dirac_torus, lattice_lipschitz, pairing

    lat, degree, lam, c1, c2 = args
    m = lattice_dirac_torus(**{**lat, "flux": 0})
    p = bott_lattice_field(m.N, m.params["rho"], degree, lam)
    L = lattice_lipschitz(p, m.N)
    thr = m.op.sigma / (16 * c1 * c2)
    t0 = 4 * c1 * L
    rep = pairing(m.op, p, m.q, t0, m.support, crosscheck=False)
    return [lam, L, thr, L < thr, t0, rep.index, rep.theta_minus_e, rep.equivalent_to_e, c1, c2]


def _q(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def _task_bound(case):
    from .ktheory import lm_budget
    from .pairing import main_bound

    a, b = _q(case["control"]["slope"]), _q(case["control"].get("offset", 0))
    m = case["m"]
    budget = lm_budget(
        m + 1, _q(case["A1"]), _q(case["A2"]), _q(case["L0"]),
        case.get("C1", 1e20), case.get("C2", 50.0),
    )
    res = main_bound(
        _q(case["sigma"]), m, lambda s: a * s + b, _q(case.get("c1", 1)), _q(case.get("c2", 1)),
        budget, case.get("dim", 0),
    )
    return [res.branch, res.value, res.even, res.odd, budget.sequence[m], budget.consistent]


def _fit_constants(lat: dict, t_large, t_small, jobs: int):
    from .pairing import estimate_constants

    rows1 = _map(_task_defect, [(lat, t, False) for t in t_large], jobs)
    rows2 = _map(_task_defect, [(lat, t, False) for t in t_small], jobs)
    k1 = [(r[4], r[3], r[6]) for r in rows1]
    k2 = [(r[5], r[3], r[7]) for r in rows2]
    return estimate_constants(k1, k2), rows1 + rows2


def _map(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))  # ordered by grid position


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


def _write_csv(path: Path, columns: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    data = buf.getvalue().encode("utf-8")
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def _plot(kind: str, rows: list[list], out: Path) -> Path | None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    if kind == "fillrad":
        ax.plot([r[2] for r in rows], [r[4] for r in rows], "o-", label="estimate")
        if rows[0][8] is not None:
            ax.axhline(rows[0][8], ls="--", c="k", label="target")
        ax.set_xlabel("n")
        ax.set_ylabel("filling radius")
    elif kind == "defect-sweep":
        ax.loglog([r[4] for r in rows], [r[7] for r in rows], "o", label="||d^2-d||")
        ax.loglog([r[4] for r in rows], [r[8] for r in rows], "s", label="||d-e||")
        ax.set_xlabel("t")
    elif kind == "threshold":
        ax.plot([r[2] for r in rows], [r[7] for r in rows], "o-", label="||Theta(d)-e||")
        ax.axvline(rows[0][3], ls="--", c="k", label="threshold")
        ax.set_xlabel("L")
    elif kind == "nerve-audit":
        bound = [r[9] for r in rows]
        ax.plot(bound, [r[8] for r in rows], "o", label="audited lip")
        ax.plot([0, max(bound)], [0, max(bound)], "--", c="k", label="lip = bound")
        ax.set_xlabel("guaranteed bound")
    else:
        plt.close(fig)
        return None
    ax.legend()
    path = out / f"{kind}.png"
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def run(cfg: dict, out: str | Path, jobs: int = 1, plots: bool = False) -> dict:
    """Execute a validated config; returns the manifest (also written to disk)."""
    errors = validate_config(cfg)
    if errors:
        raise ConfigError("; ".join(errors))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    kind = cfg["kind"]
    seed = cfg.get("seed", 0)
    tol = cfg.get("tolerances", {})
    start = time.perf_counter()
    extra: dict[str, Any] = {}
    extra_files: dict[str, tuple[list[str], list[list]]] = {}

    if kind == "fillrad":
        model = dict(cfg["model"], seed=cfg["model"].get("seed", seed))
        ns = cfg.get("n", [model.get("n", 64)])
        tasks = [(dict(model, n=n), cfg.get("field", "Q"), cfg.get("resolution")) for n in ns]
        rows = _map(_task_fillrad, tasks, jobs)
    elif kind == "nerve-audit":
        model = dict(cfg["model"], seed=cfg["model"].get("seed", seed))
        tasks = [
            (model, cfg["cover"], R, r, fl, seed + k)
            for R in cfg["R"]
            for r in cfg["r"]
            for fl in cfg.get("flavor", ["l1", "spherical"])
            for k in range(cfg.get("repeats", 1))
        ]
        rows = _map(_task_nerve, tasks, jobs)
    elif kind == "product-check":
        from .homology import product_fillrad_check
        from .metric import ModelSpaceSpec

        base = ModelSpaceSpec.from_dict(dict(cfg["base"], seed=cfg["base"].get("seed", seed)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = product_fillrad_check(base, cfg["T"], cfg.get("layers"), field=cfg.get("field", "Q"))
        layers = cfg.get("layers") or int(round(2 * cfg["T"])) + 1
        rows = [[base.kind, cfg["T"], layers, cfg.get("field", "Q"), rep.base.estimate,
                 rep.product.estimate, rep.relative_gap, rep.product.exact]]
    elif kind == "invariants":
        tasks = [(dict(m, seed=m.get("seed", seed)), tol.get("equality", 0.12)) for m in cfg["models"]]
        rows = [r for rs in _map(_task_invariants, tasks, jobs) for r in rs]
    elif kind == "defect-sweep":
        lat = cfg["lattice"]
        pair = cfg.get("pair", False)
        r1 = _map(_task_defect, [(lat, t, pair) for t in cfg["t_large"]], jobs)
        r2 = _map(_task_defect, [(lat, t, pair) for t in cfg["t_small"]], jobs)
        rows = r1 + r2
        from .pairing import estimate_constants

        const = estimate_constants(
            [(r[4], r[3], r[6]) for r in r1], [(r[5], r[3], r[7]) for r in r2]
        )
        extra["constants"] = {"c1": const.c1, "c2": const.c2, "r2_key1": const.fit1.r2, "r2_key2": const.fit2.r2}
        extra_files["constants.csv"] = (
            ["config_hash", "c1", "c2", "r2_key1", "r2_key2"],
            [[h, const.c1, const.c2, const.fit1.r2, const.fit2.r2]],
        )
    elif kind == "threshold":
        lat = cfg["lattice"]
        c1, c2 = cfg.get("c1"), cfg.get("c2")
        if c1 is None or c2 is None:
            const, _ = _fit_constants(
                {**lat, "flux": lat.get("flux", 1) or 1},
                cfg.get("t_large", [2, 4, 8, 16, 32]),
                cfg.get("t_small", [0.0125, 0.025, 0.05, 0.1, 0.2]),
                jobs,
            )
            c1, c2 = const.c1, const.c2
        tasks = [(lat, cfg.get("degree", 0), lam, c1, c2) for lam in cfg["lam"]]
        rows = _map(_task_threshold, tasks, jobs)
    elif kind == "bound-calculator":
        rows = [[i] + _task_bound(c) for i, c in enumerate(cfg["cases"])]
    else:  # pragma: no cover - schema forbids
        raise ConfigError(f"unknown kind {kind}")

    rows = [[h] + list(r) for r in rows]
    files = {}
    files[f"{kind}.csv"] = _write_csv(out / f"{kind}.csv", COLUMNS[kind], rows)
    for name, (cols, rws) in extra_files.items():
        files[name] = _write_csv(out / name, cols, rws)
    if plots:
        p = _plot(kind, rows, out)
        if p is not None:
            files[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "config_hash": h,
        "version": __version__,
        "kind": kind,
        "status": {"tasks": len(rows), "ok": True},
        "wall_clock_s": round(time.perf_counter() - start, 3),
        "outputs": files,
        **extra,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _default_jobs() -> int:
    try:
        return int(os.environ.get("FILLRAD_LAB_JOBS", "1"))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fillrad-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default="results")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--jobs", type=int, default=_default_jobs())
    r.add_argument("--plots", action="store_true")
    v = sub.add_parser("validate", help="check a config against the schema")
    v.add_argument("--config", required=True)
    sub.add_parser("list-experiments", help="list experiment kinds")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-experiments":
        for k, d in DESCRIPTIONS.items():
            print(f"{k:18s} {d}")
        return 0
    try:
        cfg, text = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "run" and args.seed is not None and isinstance(cfg, dict):
        cfg = copy.deepcopy(cfg)
        cfg["seed"] = args.seed
    diags = validate_config(cfg, text)
    if args.command == "validate":
        if diags:
            for d in diags:
                print(d)
            return 2
        print("ok")
        return 0
    if diags:
        for d in diags:
            print(d, file=sys.stderr)
        return 2
    try:
        manifest = run(cfg, args.out, args.jobs, args.plots)
    except (FillradLabError, ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"config_hash": manifest["config_hash"], "outputs": manifest["outputs"]}))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

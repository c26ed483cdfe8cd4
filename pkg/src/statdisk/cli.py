"""Command-line experiment runner.

    python -m statdisk solve-disk --config cfg.json --out runs/a

Every run writes ``result.json`` (deterministic, floats at 17 significant
digits), any CSV artifacts, and ``manifest.json`` (version, config hash,
wall time).  Exit codes: 0 success, 2 solver failure, 3 invalid config,
4 I/O failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, SolverFailure, StatDiskError

log = logging.getLogger("statdisk")

SCHEMA_VERSION = 1
TASKS = ("solve-disk", "solve-boundary-disk", "indices", "good-boundary", "foliation",
         "conical", "continuation", "exhaustion", "check")

_vector = {"type": "array", "items": {"type": "number"}, "minItems": 2}
CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "domain"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "task": {"enum": list(TASKS)},
        "domain": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["ball", "ellipsoid", "polynomial"]},
                "n": {"type": "integer", "minimum": 1},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "weights": {"type": "array", "items": {"type": "number"}},
                "center": _vector,
                "terms": {"type": "array"},
                "interior_point": _vector,
            },
        },
        "structure": {
            "oneOf": [
                {"const": "standard"},
                {"type": "object",
                 "required": ["kind"],
                 "properties": {
                     "kind": {"enum": ["standard", "deformation"]},
                     "generator": {"type": "string"},
                     "seed": {"type": "integer", "minimum": 0},
                     "scale": {"type": "number"},
                     "t": {"type": "number", "minimum": 0},
                 }},
            ]
        },
        "params": {
            "type": "object",
            "properties": {
                "x0": _vector,
                "v0": _vector,
                "a": {"type": "number"},
                "nu": {"type": "number"},
                "N": {"type": "integer", "minimum": 32},
                "M": {"type": "integer", "minimum": 8},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "resolution": {"type": "array", "items": {"type": "integer", "minimum": 1},
                               "minItems": 2, "maxItems": 2},
                "levels": {"type": "integer", "minimum": 1},
                "ring": {"type": "integer", "minimum": 2},
                "side": {"enum": ["right", "left"]},
                "t_target": {"type": "number", "minimum": 0},
                "steps": {"type": "integer", "minimum": 1},
                "leaves": {"type": "integer", "minimum": 1},
                "points_per_leaf": {"type": "integer", "minimum": 1},
                "kind": {"enum": ["center", "boundary"]},
            },
        },
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}

REQUIRED = {
    "solve-disk": ["x0"],
    "solve-boundary-disk": ["x0", "v0"],
    "indices": ["x0"],
    "good-boundary": ["x0"],
    "foliation": ["x0"],
    "conical": ["x0", "a"],
    "continuation": ["x0"],
    "exhaustion": ["x0"],
    "check": [],
}


# --------------------------------------------------------------------------- config

def validate_config(cfg: dict, task: str) -> dict:
    import jsonschema

    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config invalid at {list(exc.absolute_path)}: {exc.message}") from None
    if cfg.get("task", task) != task:
        raise ConfigError(f"config task {cfg['task']!r} does not match subcommand {task!r}")
    params = cfg.get("params", {})
    missing = [k for k in REQUIRED[task] if k not in params]
    if missing:
        raise ConfigError(f"task {task} requires params {missing}")
    N = params.get("N", 64)
    if N & (N - 1):
        raise ConfigError("N must be a power of two")
    dom = cfg["domain"]
    if dom["kind"] in ("ball", "polynomial") and "n" not in dom:
        raise ConfigError("domain needs n")
    n = dom.get("n") or len(dom.get("weights", []))
    for key in ("x0", "v0"):
        if key in params and len(params[key]) != 2 * n:
            raise ConfigError(f"{key} must have {2 * n} real entries")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# --------------------------------------------------------------------------- output

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, np.ndarray):
        return _fmt(x.tolist())
    if isinstance(x, dict):
        items = sorted(x.items(), key=lambda kv: str(kv[0]))
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in items) + "}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj) -> str:
    """JSON text with floats at 17 significant digits and sorted keys."""
    return _fmt(obj) + "\n"


# --------------------------------------------------------------------------- tasks

def _setup(cfg):
    from .foliation import _structure_from
    from .geometry import domain_from_dict
    from .rhsolver import SolverOptions

    dom = domain_from_dict(cfg["domain"])
    J, path = _structure_from(cfg.get("structure", "standard"), dom.n)
    p = cfg.get("params", {})
    opts = SolverOptions(N=int(p.get("N", 64)), M=int(p.get("M", 16)),
                         tol=float(p.get("tol", 1e-10)), max_iter=int(p.get("max_iter", 25)))
    return dom, J, path, p, opts


def _vec(p, key, dim, default=None):
    if key in p:
        return np.asarray(p[key], float)
    if default is None:
        return None
    return np.eye(dim)[0] if default == "e1" else np.asarray(default, float)


def _center_disk(cfg):
    from .rhsolver import solve_stationary_center

    dom, J, path, p, opts = _setup(cfg)
    x0 = _vec(p, "x0", dom.dim)
    v0 = _vec(p, "v0", dom.dim, "e1")
    if path is not None:
        from .geometry import standard_structure
        from .rhsolver import continuation_path

        base = solve_stationary_center(dom, standard_structure(dom.n), x0, v0, opts=opts)
        sol = continuation_path(dom, path, base, float(path_t(cfg)), steps=int(p.get("steps", 1)),
                                opts=opts).family[-1]
    else:
        sol = solve_stationary_center(dom, J, x0, v0, opts=opts)
    return dom, J, sol


def path_t(cfg):
    s = cfg.get("structure", "standard")
    return 0.0 if isinstance(s, str) else float(s.get("t", 0.0))


def _disk_report(sol, dom):
    from .geometry import to_real

    base_b = to_real(sol.base_boundary())
    base_i = to_real(sol.base_interior())
    return {"solution": sol.summary(),
            "rho_boundary_max": float(np.abs(dom.rho(base_b)).max()),
            "rho_interior_max": float(dom.rho(base_i).max()),
            "velocity_at_zero": sol.velocity_at_zero(),
            "velocity_at_one": sol.velocity_at_one()}


def task_solve_disk(cfg, out: Path, seed: int):
    dom, J, sol = _center_disk(cfg)
    sol.trace.to_csv(out / "disk.csv")
    return _disk_report(sol, dom), ["disk.csv"]


def task_solve_boundary_disk(cfg, out: Path, seed: int):
    from .rhsolver import solve_stationary_boundary, tangency_parameter

    dom, J, path, p, opts = _setup(cfg)
    sol = solve_stationary_boundary(dom, J, _vec(p, "x0", dom.dim), _vec(p, "v0", dom.dim),
                                    nu=float(p.get("nu", 0.0)), a=float(p.get("a", 0.0)), opts=opts)
    sol.trace.to_csv(out / "disk.csv")
    rep = _disk_report(sol, dom)
    rep["tangency"] = tangency_parameter(sol, J)
    return rep, ["disk.csv"]


def task_indices(cfg, out: Path, seed: int):
    from .indices import (cokernel_dimension, fredholm_index, kernel_dimension,
                          partial_indices_of_boundary)
    from .rhsolver import linearize

    dom, J, sol = _center_disk(cfg)
    p = cfg.get("params", {})
    lin = linearize(sol, dom, J)
    fact = partial_indices_of_boundary(lin.G, side=p.get("side", "right"))
    A = None if lin.Qtilde is None else lin.A
    B = None if lin.Qtilde is None else lin.B
    ker = kernel_dimension(lin.G, A, B, indices=fact.indices)
    rep = {"indices": sorted((int(k) for k in fact.indices), reverse=True),
           "factorization": fact.to_dict(),
           "fredholm_index": fredholm_index(lin.G),
           "kernel": ker.to_dict(),
           "cokernel": cokernel_dimension(lin.G),
           "min_abs_det_G": float(np.abs(np.linalg.det(lin.G.values)).min())}
    return rep, []


def task_good_boundary(cfg, out: Path, seed: int):
    from .indices import good_boundary_test

    dom, J, sol = _center_disk(cfg)
    return {"good_boundary": good_boundary_test(sol, dom, J).to_dict(),
            "solution": sol.summary()}, []


def task_foliation(cfg, out: Path, seed: int):
    from .foliation import build_center_foliation, center_disjointness, continue_atlas
    from .geometry import standard_structure

    dom, J, path, p, opts = _setup(cfg)
    x0 = _vec(p, "x0", dom.dim)
    res = tuple(p.get("resolution", (2, 4)))
    if path is None:
        atlas = build_center_foliation(dom, J, x0, resolution=res, opts=opts)
    else:
        base = build_center_foliation(dom, standard_structure(dom.n), x0, resolution=res, opts=opts,
                                      check_good=False)
        atlas = continue_atlas(base, path, path_t(cfg), steps=int(p.get("steps", 1)))
    atlas.export(out / "atlas")
    rep = atlas.summary()
    rep["disjointness_min_gap"] = center_disjointness(atlas, seed=seed)
    return rep, ["atlas"]


def task_conical(cfg, out: Path, seed: int):
    from .foliation import ConicalSpec, build_conical_foliation, continue_atlas
    from .geometry import standard_structure

    dom, J, path, p, opts = _setup(cfg)
    spec = ConicalSpec(_vec(p, "x0", dom.dim), float(p["a"]))
    lv, ring = int(p.get("levels", 2)), int(p.get("ring", 4))
    if path is None:
        atlas = build_conical_foliation(dom, J, spec, lv, ring, opts=opts, seed=seed)
    else:
        base = build_conical_foliation(dom, standard_structure(dom.n), spec, lv, ring, opts=opts,
                                       check_good=False, seed=seed)
        atlas = continue_atlas(base, path, path_t(cfg), steps=int(p.get("steps", 1)))
    atlas.export(out / "atlas")
    return atlas.summary(), ["atlas"]


def task_continuation(cfg, out: Path, seed: int):
    from .geometry import standard_structure
    from .rhsolver import continuation_path, solve_stationary_boundary, solve_stationary_center

    dom, J, path, p, opts = _setup(cfg)
    if path is None:
        raise ConfigError("continuation needs a deformation structure")
    J0 = standard_structure(dom.n)
    x0 = _vec(p, "x0", dom.dim)
    v0 = _vec(p, "v0", dom.dim, "e1")
    if p.get("kind", "center") == "center":
        base = solve_stationary_center(dom, J0, x0, v0, opts=opts)
    else:
        base = solve_stationary_boundary(dom, J0, x0, v0, nu=float(p.get("nu", 0.0)), opts=opts)
    t = float(p.get("t_target", path_t(cfg)))
    res = continuation_path(dom, path, base, t, steps=int(p.get("steps", 2)), opts=opts)
    res.family[-1].trace.to_csv(out / "disk.csv")
    rows = ["t,iterations,max_residual"]
    for tt, sol in zip(res.t_values, res.family):
        rows.append(f"{format(tt, '.17g')},{sol.iterations},{format(max(sol.residuals.values()), '.17g')}")
    (out / "family.csv").write_text("\n".join(rows) + "\n")
    return {"t_reached": res.t_reached, "halvings": res.halvings, "t_values": res.t_values,
            "final": res.family[-1].summary()}, ["disk.csv", "family.csv"]


def task_exhaustion(cfg, out: Path, seed: int):
    from .foliation import (LeafChart, build_center_foliation, continue_atlas, riemann_map_eval,
                            sphere_directions)
    from .geometry import standard_structure

    dom, J, path, p, opts = _setup(cfg)
    x0 = _vec(p, "x0", dom.dim)
    rng = np.random.default_rng(seed)
    leaves = int(p.get("leaves", 10))
    per = int(p.get("points_per_leaf", 10))
    dirs = rng.normal(size=(leaves, dom.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if path is None:
        atlas = build_center_foliation(dom, J, x0, dirs, opts=opts, check_good=False)
    else:
        base = build_center_foliation(dom, standard_structure(dom.n), x0, dirs, opts=opts,
                                      check_good=False)
        atlas = continue_atlas(base, path, path_t(cfg), check_good=False)
    rows = []
    for i, u in enumerate(atlas.directions):
        chart = LeafChart(atlas, u, atlas.solutions[i])
        for _ in range(per):
            z = np.sqrt(rng.uniform(0.04, 0.81)) * np.exp(1j * rng.uniform(0, 2 * np.pi))
            e = chart.exhaustion(z)
            rows.append((e["x"], e["u"], e["min_eigenvalue"]))
    lines = [",".join([f"x{j}" for j in range(dom.dim)] + ["u", "defect"])]
    for x, u, d in rows:
        lines.append(",".join(format(v, ".17g") for v in list(x) + [u, min(0.0, d)]))
    (out / "exhaustion.csv").write_text("\n".join(lines) + "\n")
    defects = np.array([min(0.0, d) for _, _, d in rows])
    return {"points": len(rows), "min_defect": float(defects.min()),
            "min_eigenvalue": float(min(d for _, _, d in rows))}, ["exhaustion.csv"]


def task_check(cfg, out: Path, seed: int):
    """Invariant sweep: J² = -I, lifted square, action law, ball disk reproduction."""
    from .cotangent import c_action, lift_structure
    from .geometry import to_real
    from .rhsolver import solve_stationary_center

    dom, J, path, p, opts = _setup(cfg)
    rng = np.random.default_rng(seed)
    d = dom.dim
    xs = dom.sample_interior(200, rng) if hasattr(dom, "sample_interior") else rng.uniform(-0.5, 0.5, (200, d))
    I = np.eye(d)
    sq = max(float(np.abs(J(x) @ J(x) + I).max()) for x in xs)
    ps = rng.normal(size=(200, d))
    I2 = np.eye(2 * d)
    lifted = max(float(np.abs(lift_structure(J, x, q) @ lift_structure(J, x, q) + I2).max())
                 for x, q in zip(xs, ps))
    act = 0.0
    for x, q in zip(xs[:50], ps[:50]):
        z1, z2 = np.exp(1j * rng.uniform(0, 2 * np.pi, 2))
        lhs = c_action(J, x, z1 * z2, q)
        rhs = c_action(J, x, z1, c_action(J, x, z2, q))
        act = max(act, float(np.abs(lhs - rhs).max()))
    checks = {"J_square": sq < 1e-12, "lift_square": lifted < 1e-9, "action_law": act < 1e-12}
    rep = {"J_square_defect": sq, "lift_square_defect": lifted, "action_defect": act}
    if dom.__class__.__name__ == "Ball" and getattr(J, "standard", False):
        v = rng.normal(size=d)
        v /= np.linalg.norm(v)
        sol = solve_stationary_center(dom, J, dom.center, v, opts=opts)
        err = float(np.abs(to_real(sol.base_boundary()) - dom.center
                           - np.outer(np.cos(sol.grid.theta), v)
                           - np.outer(np.sin(sol.grid.theta), J(dom.center) @ v)).max())
        rep["ball_disk_error"] = err
        checks["ball_disk"] = err < 1e-8
    rep["checks"] = checks
    rep["passed"] = all(checks.values())
    return rep, []


HANDLERS = {
    "solve-disk": task_solve_disk,
    "solve-boundary-disk": task_solve_boundary_disk,
    "indices": task_indices,
    "good-boundary": task_good_boundary,
    "foliation": task_foliation,
    "conical": task_conical,
    "continuation": task_continuation,
    "exhaustion": task_exhaustion,
    "check": task_check,
}


# --------------------------------------------------------------------------- driver

def run_experiment(cfg: dict, task: str, out, seed: int = 0) -> int:
    try:
        validate_config(cfg, task)
    except ConfigError as exc:
        log.error("%s", exc)
        return 3
    out = Path(out or cfg.get("output", f"runs/{task}"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create %s: %s", out, exc)
        return 4
    start = time.perf_counter()
    status, artifacts = 0, []
    try:
        report, artifacts = HANDLERS[task](cfg, out, seed)
        if task == "check" and not report["passed"]:
            status = 2
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return 3
    except (SolverFailure, StatDiskError) as exc:
        status = 2
        report = {"error": type(exc).__name__, "message": str(exc)}
        hist = getattr(exc, "history", None)
        if hist is not None:
            report["history"] = [float(h) for h in hist]
        if hasattr(exc, "last_t"):
            report["last_t"] = exc.last_t
        log.error("%s: %s", type(exc).__name__, exc)
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return 4
    wall = time.perf_counter() - start
    manifest = {"tool": "statdisk", "version": __version__, "task": task, "seed": seed,
                "config_sha256": config_hash(cfg), "config": cfg, "wall_time_s": wall,
                "python": platform.python_version(), "numpy": np.__version__,
                "status": status, "artifacts": ["result.json"] + list(artifacts)}
    try:
        (out / "result.json").write_text(dumps(report))
        (out / "manifest.json").write_text(dumps(manifest))
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return 4
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="statdisk", description="Stationary disk experiments.")
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sp = sub.add_parser(task)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
        sp.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = json.loads(Path(args.config).read_text())
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return 4
    except json.JSONDecodeError as exc:
        log.error("config is not valid JSON: %s", exc)
        return 3
    if not isinstance(cfg, dict):
        log.error("config must be a JSON object")
        return 3
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    return run_experiment(cfg, args.task, args.out, seed)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line orchestration: ``lshomog <subcommand> --config run.json``.

Every run writes its artifacts plus ``manifest.json`` into ``--out``. Numeric
outputs depend only on the configuration (after overrides), never on the
worker count or wall clock; timings go to a separate ``timings.json``.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from .effective import Reconstructor, build_table, property_suite, recheck_bracket
from .env import Environment, HamiltonianFamily, sup_hamiltonian, validate_hypotheses
from .errors import ConfigError, HomogError, Inconsistency
from .macro import agreement, estimate_h
from .metric import (
    FORWARD,
    REVERSED,
    Lattice,
    check_lipschitz,
    check_maximality_affine,
    check_mu_monotonicity,
    check_reversal,
    check_subadditivity,
    solve_metric,
)
from .shape import check_convexity, check_mu_monotone, check_reversal_identity, estimate_shape

ENV_PREFIX = "LSHOMOG_"
SUBCOMMANDS = ("gen-env", "metric", "shape", "effective", "macro", "verify", "report")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1, "maxItems": 2}]}

SCHEMA = {
    "type": "object",
    "required": ["family", "env"],
    "properties": {
        "family": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["EIKONAL", "POWER", "DRIFT", "ANISO"]},
                "gamma": _pos,
                "kappa": _num,
                "drift": _vec,
                "drift_coupling": _vec,
            },
            "additionalProperties": False,
        },
        "env": {
            "type": "object",
            "required": ["kind", "seed", "dim"],
            "properties": {
                "kind": {"enum": ["CHECKERBOARD", "POISSON_BUMPS", "PERIODIC_PHASE"]},
                "seed": {"type": "integer"},
                "dim": {"enum": [1, 2]},
                "cell": _pos,
                "values": {"type": "array", "items": _num, "minItems": 1},
                "probs": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "mollify": {"type": "number", "minimum": 0, "maximum": 1},
                "range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "intensity": {"type": "number", "minimum": 0},
                "bump_radius": _pos,
                "tile": _pos,
                "period": _pos,
            },
            "additionalProperties": False,
        },
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "hypotheses": {"type": "object", "properties": {"sample_budget": {"type": "integer", "minimum": 1000}}},
        "gen_env": {
            "type": "object",
            "properties": {"half_width": _pos, "n": {"type": "integer", "minimum": 2}},
        },
        "metric": {
            "type": "object",
            "properties": {
                "mu": _num,
                "h": _pos,
                "rho": {"enum": [1, 2, 3]},
                "half_nodes": {"type": "integer", "minimum": 2},
                "direction": {"enum": [FORWARD, REVERSED]},
                "n_sources": {"type": "integer", "minimum": 2},
                "n_dirs": {"type": "integer", "minimum": 8},
            },
        },
        "shape": {
            "type": "object",
            "properties": {
                "mu": _num,
                "dmu": _pos,
                "ladder": {"type": "array", "items": _pos, "minItems": 1},
                "n_fan": {"type": "integer", "minimum": 2},
                "h": _pos,
                "rho": {"enum": [1, 2, 3]},
                "direction": {"enum": [FORWARD, REVERSED]},
            },
        },
        "effective": {
            "type": "object",
            "properties": {
                "p_grid": {"type": "array", "items": _vec, "minItems": 1},
                "tol": _pos,
                "reversed": {"type": "boolean"},
                "fresh_seeds": {"type": "array", "items": {"type": "integer"}},
            },
        },
        "macro": {
            "type": "object",
            "properties": {
                "p": {"type": "array", "items": _vec, "minItems": 1},
                "deltas": {"type": "array", "items": _pos, "minItems": 1},
                "R": _pos,
                "h": _pos,
                "scheme": {"enum": ["lf", "godunov", "auto"]},
                "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                "rel_tol": _pos,
                "abs_tol": _pos,
            },
        },
    },
}


# ---------------------------------------------------------------------------
# configuration


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def load_config(path, seed_override: int | None = None, tol_scale: float | None = None) -> dict:
    """Read, validate and apply overrides; raises :class:`ConfigError`."""
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {loc}: {exc.message}") from None
    cfg = copy.deepcopy(cfg)
    if seed_override is not None:
        k = int(seed_override)
        cfg["env"]["seed"] = k
        n = len(cfg.get("seeds", [0]))
        cfg["seeds"] = [k + i for i in range(n)]
        if "macro" in cfg and "seeds" in cfg["macro"]:
            cfg["macro"]["seeds"] = [k + i for i in range(len(cfg["macro"]["seeds"]))]
    if tol_scale is not None:
        if not tol_scale > 0:
            raise ConfigError("--tol-scale must be positive")
        cfg["tol_scale"] = float(tol_scale)
    # construct once to surface semantic errors as configuration errors
    HamiltonianFamily.from_config(cfg["family"])
    Environment.from_config(cfg["env"])
    return cfg


def _objects(cfg):
    return HamiltonianFamily.from_config(cfg["family"]), Environment.from_config(cfg["env"])


def _seeds(cfg) -> list[int]:
    return list(cfg.get("seeds", [cfg["env"]["seed"] + i for i in range(8)]))


def _pvec(p, dim: int) -> np.ndarray:
    v = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if v.shape != (dim,):
        raise ConfigError(f"momentum {p} does not match dimension {dim}")
    return v


def _default_mu(family, env) -> float:
    return sup_hamiltonian(family, env, np.zeros(env.dim)) + 1.0


def _versions() -> dict:
    out = {}
    for pkg in ("artifact", "numpy", "scipy", "numba", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands (each returns (artifacts, verdicts))


def cmd_gen_env(cfg, out: Path, workers: int):
    family, env = _objects(cfg)
    opts = cfg.get("gen_env", {})
    hw, n = float(opts.get("half_width", 8.0)), int(opts.get("n", 65))
    ax = np.linspace(-hw, hw, n)
    pts = ax[:, None] if env.dim == 1 else np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
    env.snapshot_csv(out / "field.csv", pts)
    rep = validate_hypotheses(family, env, cfg.get("hypotheses", {}).get("sample_budget", 10_000))
    _write_json(out / "hypotheses.json", rep.as_dict())
    return ["field.csv", "hypotheses.json"], {"hypotheses": rep.passed}


def _metric_opts(cfg, family, env):
    m = cfg.get("metric", {})
    return (
        float(m.get("mu", _default_mu(family, env))),
        float(m.get("h", 1.0)),
        int(m.get("rho", 2)),
        int(m.get("half_nodes", 16)),
        m.get("direction", FORWARD),
        int(m.get("n_dirs", 64)),
    )


def cmd_metric(cfg, out: Path, workers: int):
    family, env = _objects(cfg)
    mu, h, rho, half, direction, n_dirs = _metric_opts(cfg, family, env)
    lat = Lattice.centered(h, half, env.dim, rho)
    src = (half, half if env.dim == 2 else 0)
    fld = solve_metric(lat, family, env, mu, src, direction, n_dirs=n_dirs)
    fld.to_csv(out / "metric.csv")
    return ["metric.csv", "metric.json"], {"lipschitz": check_lipschitz(fld)["pass"]}


def _shape_opts(cfg, family, env, workers):
    s = cfg.get("shape", {})
    mu = float(s.get("mu", _default_mu(family, env)))
    kw = dict(
        ladder=tuple(s.get("ladder", (16.0, 32.0, 64.0) if env.dim == 2 else (64.0, 128.0, 256.0, 512.0))),
        n_fan=int(s.get("n_fan", 16)),
        h=float(s.get("h", 1.0)),
        rho=int(s.get("rho", 2)),
        workers=workers,
    )
    return mu, s.get("direction", FORWARD), float(s.get("dmu", 0.25)), kw


def cmd_shape(cfg, out: Path, workers: int):
    family, env = _objects(cfg)
    mu, direction, _, kw = _shape_opts(cfg, family, env, workers)
    est = estimate_shape(family, env, mu, _seeds(cfg), direction=direction, **kw)
    est.to_csv(out / "shape.csv")
    return ["shape.csv", "shape.json"], {"fekete": est.diagnostics["fekete"]["pass_2sigma"]}


def _effective(cfg, family, env, workers):
    e = cfg.get("effective", {})
    grid = [_pvec(p, env.dim) for p in e.get("p_grid", [[0.0] * env.dim])]
    _, _, _, kw = _shape_opts(cfg, family, env, workers)
    ceiling = max(sup_hamiltonian(family, env, p) for p in grid)
    tol = e.get("tol")
    if tol is not None:
        tol = float(tol) * cfg.get("tol_scale", 1.0)
    elif "tol_scale" in cfg:
        tol = 1e-2 * (ceiling - sup_hamiltonian(family, env, np.zeros(env.dim))) * cfg["tol_scale"]
    rec = Reconstructor(family, env, _seeds(cfg), ceiling, tol, **kw)
    fwd = build_table(family, env, grid, rec.seeds, reconstructor=rec)
    rev = build_table(family, env, grid, rec.seeds, direction=REVERSED, reconstructor=rec) if e.get("reversed", True) else None
    ptol = None if "tol_scale" not in cfg else max(3.0 * rec.max_halfwidth, 2.0 * rec.step) * cfg["tol_scale"]
    verdicts = property_suite(fwd, rev, family, env, ptol)
    if e.get("fresh_seeds"):
        fresh = Reconstructor(family, env, e["fresh_seeds"], ceiling, tol, **kw)
        verdicts["recheck"] = recheck_bracket(fwd, fresh)
    return fwd, rev, verdicts


def _effective_verdicts(verdicts: dict) -> dict:
    out = {}
    for name, v in verdicts.items():
        if not isinstance(v, dict) or "pass" not in v:
            continue
        if name == "evenness":
            out[name] = v["pass"] == v["expected"]
        elif name == "recheck":
            out[name] = bool(v["within_ci"])
        else:
            out[name] = bool(v["pass"])
    return out


def cmd_effective(cfg, out: Path, workers: int):
    family, env = _objects(cfg)
    fwd, rev, verdicts = _effective(cfg, family, env, workers)
    fwd.to_csv(out / "effective.csv")
    arts = ["effective.csv", "effective.json"]
    if rev is not None:
        rev.to_csv(out / "effective_reversed.csv")
        arts += ["effective_reversed.csv", "effective_reversed.json"]
    return arts, _effective_verdicts(verdicts)


def cmd_macro(cfg, out: Path, workers: int, brackets=None):
    family, env = _objects(cfg)
    m = cfg.get("macro", {})
    ps = [_pvec(p, env.dim) for p in m.get("p", [[1.0] * env.dim])]
    deltas = list(m.get("deltas", [0.1, 0.05] if env.dim == 1 else [0.2, 0.1]))
    seeds = list(m.get("seeds", _seeds(cfg)[:2]))
    kw = {k: m[k] for k in ("R", "h", "scheme") if k in m}
    rows, summary, verdicts = [], [], {}
    if brackets is None and "effective" in cfg:
        fwd, _, _ = _effective(cfg, family, env, workers)
        brackets = {tuple(p): (float(a), float(b)) for p, a, b in zip(fwd.p_grid, fwd.lo, fwd.hi)}
    for p in ps:
        res = estimate_h(family, env, p, deltas, seeds, workers, **kw)
        h_est = res["means"][str(deltas[-1])]
        entry = {k: res[k] for k in ("h_lower", "h_upper", "means", "spread", "inconsistent")}
        entry["p"] = p.tolist()
        if brackets is not None and tuple(p) in brackets:
            ag = agreement(h_est, brackets[tuple(p)], m.get("rel_tol", 0.10), m.get("abs_tol", 0.05))
            entry["agreement"] = ag
            verdicts[f"agreement p={p.tolist()}"] = ag["pass"]
        summary.append(entry)
        for d in deltas:
            for s, val in zip(seeds, res["samples"][str(d)]):
                rows.append([*p.tolist(), d, s, val])
    import csv

    with (out / "macro.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"p{i}" for i in range(env.dim)] + ["delta", "seed", "minus_delta_v0"])
        for r in rows:
            w.writerow([repr(float(x)) for x in r[: env.dim]] + [repr(float(r[env.dim])), r[env.dim + 1], repr(float(r[env.dim + 2]))])
    _write_json(out / "macro.json", summary)
    return ["macro.csv", "macro.json"], verdicts


def cmd_verify(cfg, out: Path, workers: int):
    """Hypotheses, exact metric identities, shape properties, effective suite, macro agreement."""
    family, env = _objects(cfg)
    report: dict = {}
    verdicts: dict = {}

    hyp = validate_hypotheses(family, env, cfg.get("hypotheses", {}).get("sample_budget", 10_000))
    report["hypotheses"] = hyp.as_dict()
    verdicts["hypotheses"] = hyp.passed

    mu, h, rho, half, _, n_dirs = _metric_opts(cfg, family, env)
    lat = Lattice.centered(h, half, env.dim, rho)
    rng = np.random.default_rng(cfg["env"]["seed"])
    n_src = int(cfg.get("metric", {}).get("n_sources", 3))
    lo_, hi_ = half // 2, half + half // 2
    srcs = [(int(rng.integers(lo_, hi_ + 1)), int(rng.integers(lo_, hi_ + 1)) if env.dim == 2 else 0) for _ in range(n_src)]
    fwd = [solve_metric(lat, family, env, mu, s, FORWARD, n_dirs=n_dirs) for s in srcs]
    rev = solve_metric(lat, family, env, mu, srcs[0], REVERSED, n_dirs=n_dirs)
    up = solve_metric(lat, family, env, mu + 0.25, srcs[0], FORWARD, n_dirs=n_dirs)
    met = {
        "subadditivity": check_subadditivity(fwd),
        "reversal": check_reversal(rev, fwd),
        "mu_monotonicity": check_mu_monotonicity(fwd[0], up, k_bound=4),
        "affine_p0": check_maximality_affine(fwd[0], np.zeros(env.dim), family, env),
        "lipschitz": check_lipschitz(fwd[0]),
    }
    report["metric"] = met
    verdicts.update({f"metric.{k}": v["pass"] for k, v in met.items()})

    smu, _, dmu, kw = _shape_opts(cfg, family, env, workers)
    seeds = _seeds(cfg)
    sf = estimate_shape(family, env, smu, seeds, direction=FORWARD, **kw)
    sr = estimate_shape(family, env, smu, seeds, direction=REVERSED, **kw)
    su = estimate_shape(family, env, smu + dmu, seeds, direction=FORWARD, **kw)
    shp = {
        "fekete": {"pass": sf.diagnostics["fekete"]["pass_2sigma"], **sf.diagnostics["fekete"]},
        "reversal_identity": check_reversal_identity(sf, sr),
        "convexity": check_convexity(sf),
        "mu_strict": check_mu_monotone(sf, su),
        "estimate": sf.summary(),
    }
    report["shape"] = shp
    verdicts.update({f"shape.{k}": v["pass"] for k, v in shp.items() if isinstance(v, dict) and "pass" in v})

    brackets = None
    if "effective" in cfg:
        t_fwd, t_rev, ev = _effective(cfg, family, env, workers)
        report["effective"] = {
            "p_grid": t_fwd.p_grid,
            "lo": t_fwd.lo,
            "hi": t_fwd.hi,
            "reversed_lo": None if t_rev is None else t_rev.lo,
            "reversed_hi": None if t_rev is None else t_rev.hi,
            "verdicts": ev,
        }
        verdicts.update({f"effective.{k}": v for k, v in _effective_verdicts(ev).items()})
        brackets = {tuple(p): (float(a), float(b)) for p, a, b in zip(t_fwd.p_grid, t_fwd.lo, t_fwd.hi)}
    arts = ["verify.json"]
    if "macro" in cfg:
        more, mv = cmd_macro(cfg, out, workers, brackets)
        arts += more
        verdicts.update({f"macro.{k}": v for k, v in mv.items()})
    report["verdicts"] = verdicts
    _write_json(out / "verify.json", report)
    return arts, verdicts


def cmd_report(cfg, out: Path, workers: int):
    """Flatten every JSON artifact in the output directory into one table."""
    rows = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else str(k), obj[k])
        elif isinstance(obj, list) and all(not isinstance(x, (dict, list)) for x in obj):
            rows.append((prefix, json.dumps(obj)))
        elif isinstance(obj, list):
            for i, x in enumerate(obj):
                walk(f"{prefix}[{i}]", x)
        else:
            rows.append((prefix, json.dumps(obj)))

    skip = {"manifest.json", "timings.json", "report.json"}
    for path in sorted(out.glob("*.json")):
        if path.name in skip:
            continue
        walk(path.stem, json.loads(path.read_text()))
    import csv

    with (out / "report.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(rows)
    _write_json(out / "report.json", {k: json.loads(v) for k, v in rows})
    return ["report.csv", "report.json"], {}


COMMANDS = {
    "gen-env": cmd_gen_env,
    "metric": cmd_metric,
    "shape": cmd_shape,
    "effective": cmd_effective,
    "macro": cmd_macro,
    "verify": cmd_verify,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lshomog", description="Effective Hamiltonians via metric problems.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON run configuration (env LSHOMOG_CONFIG)")
    ap.add_argument("--workers", type=int, help="thread count (env LSHOMOG_WORKERS, default 1)")
    ap.add_argument("--out", help="output directory (env LSHOMOG_OUT, default ./out)")
    ap.add_argument("--seed-override", type=int, help="replace the seed list by K, K+1, ... (env LSHOMOG_SEED_OVERRIDE)")
    ap.add_argument("--tol-scale", type=float, help="multiply bisection and property tolerances (env LSHOMOG_TOL_SCALE)")
    return ap


def _from_env(value, name, cast):
    if value is not None:
        return value
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None:
        return None
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"{ENV_PREFIX}{name}={raw!r} is not a valid {cast.__name__}") from None


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        config = _from_env(args.config, "CONFIG", str)
        workers = _from_env(args.workers, "WORKERS", int) or 1
        out = Path(_from_env(args.out, "OUT", str) or "out")
        seed = _from_env(args.seed_override, "SEED_OVERRIDE", int)
        tol_scale = _from_env(args.tol_scale, "TOL_SCALE", float)
        if workers < 1:
            raise ConfigError("--workers must be at least 1")
        out.mkdir(parents=True, exist_ok=True)
        if args.subcommand == "report" and config is None:
            cfg = {}
        else:
            if config is None:
                raise ConfigError("--config is required")
            cfg = load_config(config, seed, tol_scale)
        arts, verdicts = COMMANDS[args.subcommand](cfg, out, workers)
        failed = [k for k, v in verdicts.items() if not v]
        manifest = {
            "subcommand": args.subcommand,
            "config_hash": config_hash(cfg),
            "config": cfg,
            "seeds": cfg.get("seeds", []) if cfg else [],
            "versions": _versions(),
            "tolerances": {"tol_scale": cfg.get("tol_scale", 1.0)} if cfg else {},
            "artifacts": arts,
            "verdicts": verdicts,
            "failed": failed,
        }
        _write_json(out / "manifest.json", manifest)
        _write_json(out / "timings.json", {"wall_seconds": time.perf_counter() - t0, "workers": workers})
        for k in sorted(verdicts):
            print(f"{'PASS' if verdicts[k] else 'FAIL'} {k}")
        if failed:
            raise Inconsistency(f"{len(failed)} verdict(s) failed: {', '.join(failed)}")
        return 0
    except HomogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

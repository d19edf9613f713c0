"""Command-line front door: run experiment configs, sweep parameters, and
execute verification suites.

Reports are canonical JSON (sorted keys, repr floats), so identical
(config, seed, version) runs produce byte-identical files; wall-clock timing
goes to a separate .timing.json sidecar to keep the report deterministic.
Completed runs are cached under the SHA-256 of the canonicalized config.
"""

import argparse
import hashlib
import json
import os
import shutil
import sys
import time

import numpy as np

from . import __version__
from . import campanato as camp
from . import carleson as carl
from . import hardy
from .config import ExperimentConfig
from .errors import ConfigError, ToolkitError, UnknownSuite
from .exponents import check_log_holder, luxemburg_norm
from .suites import SUITE_NAMES, run_suite

REPORT_SCHEMA = "anivex-report/1"


def _cache_dir():
    return os.environ.get("ANIVEX_CACHE_DIR", os.path.join(".", ".anivex-cache"))


def _canonical_json(payload):
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _parse_configuration(cfg, entries):
    from .search import BallConfiguration

    return BallConfiguration(
        [
            (cfg.dilation.ball(e["center"], int(e["scale"])), float(e.get("weight", 1.0)))
            for e in entries
        ]
    )


def _execute_compute(cfg, spec):
    """One computation request from the config's 'compute' list."""
    op = spec.get("op")
    d, g, p = cfg.dilation, cfg.grid, cfg.exponent
    params = cfg.params
    if op == "luxemburg_norm":
        return luxemburg_norm(cfg.functions[spec["function"]], p)
    if op == "campanato_functional":
        prm = camp.CampanatoParams(
            p=p,
            q=float(params.get("q", 2.0)),
            s=int(params.get("s", 0)),
            eta=params.get("eta"),
            epsilon=params.get("epsilon"),
        )
        config = _parse_configuration(cfg, spec["configuration"])
        f = cfg.functions[spec["function"]]
        out = {
            "value": camp.campanato_type_functional(f, config, prm, d),
            "inf_variant": camp.variant_inf_functional(f, config, prm, d),
        }
        if prm.epsilon is not None:
            out["kernel_variant"] = camp.variant_eps_functional(f, config, prm, d)
        return out
    if op == "campanato_norm":
        prm = camp.CampanatoParams(
            p=p,
            q=float(params.get("q", 2.0)),
            s=int(params.get("s", 0)),
            eta=params.get("eta"),
        )
        res = camp.campanato_type_norm(
            cfg.functions[spec["function"]],
            prm,
            d,
            budget=cfg.budget,
            seed=cfg.seed,
        )
        return {"value": res.value, "evaluations": res.evaluations}
    if op == "classic_functional":
        ball = d.ball(spec["center"], int(spec["scale"]))
        res = camp.classic_functional(
            cfg.functions[spec["function"]],
            d,
            ball,
            p,
            float(params.get("q", 2.0)),
            int(params.get("s", 0)),
        )
        return {"projection": res.projection_value, "refined": res.refined_value}
    if op == "hardy_estimate":
        phi, _ = carl.build_analyzing_function(d, int(params.get("s", 0)), g)
        window = tuple(params.get("scale_window", (-6, 4)))
        # An analyzing kernel has vanishing integral; the radial maximal
        # function needs a unit-mass bump instead.
        from .suites import _bump

        bump = _bump(g.spacing, 0.5)
        return hardy.hardy_norm_estimate(
            cfg.functions[spec["function"]], bump, p, d, window, margin=1.0
        )
    if op == "carleson_norm":
        phi, _ = carl.build_analyzing_function(d, int(params.get("s", 0)), g)
        window = tuple(params.get("scale_window", (-4, 2)))
        mu = carl.carleson_from_function(
            cfg.functions[spec["function"]], phi, d, window,
            moment_cancel=int(params.get("s", 0)),
        )
        res = carl.carleson_functional(
            mu, p, d, eta=params.get("eta"), budget=cfg.budget, seed=cfg.seed
        )
        return {"value": res.value, "evaluations": res.evaluations}
    if op == "log_holder":
        report = check_log_holder(p, d, sample_pairs=int(spec.get("pairs", 4000)))
        return {
            "c_log": report.c_log,
            "c_infinity": report.c_infinity,
            "unstable": report.unstable,
        }
    if op == "fubini_residual":
        # Counting-identity residual of the area function on a canonical
        # multi-scale blob; shrinks first order under grid refinement.
        from .tent import ScaleFunction, lusin_area

        window = tuple(params.get("scale_window", (-3, 1)))
        xs = g.meshes()
        layers = []
        for ell in range(window[0], window[1] + 1):
            w = {-2: 0.6, -1: 0.8, 0: 1.0, 1: 0.5}.get(ell, 0.0)
            layer = np.zeros(g.resolution)
            if w:
                for c, sd in ((0.5, 0.6), (-1.0, 0.9)):
                    r2 = sum((m - c) ** 2 for m in xs)
                    layer += w * np.exp(-r2 / (2 * sd**2)) * (np.sqrt(r2) < 3 * sd)
            layers.append(layer)
        G = ScaleFunction(g, window[0], window[1], np.stack(layers))
        lhs = float(np.sum(lusin_area(G, d).values ** 2) * g.cell_volume)
        rhs = float(np.sum(np.abs(G.values) ** 2) * g.cell_volume)
        return {"residual": abs(lhs - rhs) / rhs, "cone_side": lhs, "layer_side": rhs}
    raise ConfigError(f"unknown compute op {op!r}", field="compute")


def run_config(config_path, out_path, seed=None, budget=None, resolution=None, use_cache=True):
    if resolution is not None:
        raw = ExperimentConfig.from_path(config_path).raw
        n_axes = len(raw["grid"]["lower"])
        raw["grid"]["resolution"] = [int(resolution)] * n_axes
        cfg = ExperimentConfig(raw)
    else:
        cfg = ExperimentConfig.from_path(config_path)
    if seed is not None:
        cfg.seed = int(seed)
        cfg.raw["seed"] = int(seed)
    if budget is not None:
        cfg.budget = int(budget)
        cfg.raw["budget"] = int(budget)
    digest_src = dict(cfg.raw)
    digest_src["__version__"] = __version__
    digest = hashlib.sha256(
        json.dumps(digest_src, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()

    cache_file = os.path.join(_cache_dir(), f"{digest}.json")
    if use_cache and os.path.exists(cache_file):
        shutil.copyfile(cache_file, out_path)
        with open(out_path) as fh:
            report = json.load(fh)
        return report, True

    started = time.time()
    values = {}
    errors = []
    for i, spec in enumerate(cfg.raw.get("compute", [])):
        name = spec.get("name", f"compute{i}")
        try:
            values[name] = _execute_compute(cfg, spec)
        except ToolkitError as exc:
            errors.append({"name": name, "error": f"{type(exc).__name__}: {exc}"})

    checks = []
    for suite_name in cfg.checks:
        try:
            for res in run_suite(suite_name):
                checks.append(res.as_dict())
        except UnknownSuite as exc:
            errors.append({"name": suite_name, "error": str(exc)})

    report = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "config": cfg.raw,
        "config_hash": digest,
        "seed": cfg.seed,
        "values": values,
        "checks": checks,
        "errors": errors,
        "all_passed": bool(all(c["passed"] for c in checks)) and not errors,
    }
    text = _canonical_json(report)
    with open(out_path, "w") as fh:
        fh.write(text)
    with open(str(out_path) + ".timing.json", "w") as fh:
        json.dump({"seconds": time.time() - started}, fh)
    os.makedirs(_cache_dir(), exist_ok=True)
    with open(cache_file, "w") as fh:
        fh.write(text)
    return report, False


def sweep_config(config_path, parameter, values, out_path, seed=None, budget=None):
    """Run the config across a parameter grid; emit a CSV comparison table.

    'resolution' sweeps the grid's samples per axis; any other parameter is
    a dotted path into the config (e.g. params.epsilon).
    """
    rows = []
    for value in values:
        cfg_raw = ExperimentConfig.from_path(config_path).raw
        resolution = None
        if parameter == "resolution":
            resolution = int(value)
        else:
            target = cfg_raw
            *path, leaf = parameter.split(".")
            for key in path:
                target = target.setdefault(key, {})
            target[leaf] = value
        tmp = f"{out_path}.{len(rows)}.json"
        with open(tmp + ".config", "w") as fh:
            json.dump(cfg_raw, fh)
        report, _ = run_config(tmp + ".config", tmp, seed=seed, budget=budget, resolution=resolution)
        flat = {"parameter": parameter, "value": value}
        for name, val in report["values"].items():
            if isinstance(val, dict):
                for k, v in val.items():
                    flat[f"{name}.{k}"] = v
            else:
                flat[name] = val
        for check in report["checks"]:
            flat[f"check.{check['name']}"] = check["residual"]
        rows.append(flat)

    keys = ["parameter", "value"]
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    with open(out_path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(repr(row.get(k, "")) for k in keys) + "\n")
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(prog="anivex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--budget", type=int, default=None)
    p_run.add_argument("--resolution", type=int, default=None, help="override samples per axis")
    p_run.add_argument("--no-cache", action="store_true")

    p_sweep = sub.add_parser("sweep", help="run a config across a parameter grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--parameter", required=True, help="dotted path, e.g. params.epsilon")
    p_sweep.add_argument("--values", required=True, help="comma-separated numbers")
    p_sweep.add_argument("--out", required=True, help="CSV output path")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--budget", type=int, default=None)

    p_verify = sub.add_parser("verify", help="run a module invariant suite")
    p_verify.add_argument("--suite", required=True, choices=sorted(SUITE_NAMES))

    args = parser.parse_args(argv)

    if args.command == "run":
        try:
            report, cached = run_config(
                args.config, args.out, seed=args.seed, budget=args.budget,
                resolution=args.resolution, use_cache=not args.no_cache,
            )
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        status = "cached" if cached else "computed"
        print(f"{status}: {args.out} (hash {report['config_hash'][:12]})")
        return 0 if report["all_passed"] or not report["checks"] else 1

    if args.command == "sweep":
        values = [float(v) for v in args.values.split(",")]
        try:
            sweep_config(
                args.config, args.parameter, values, args.out,
                seed=args.seed, budget=args.budget,
            )
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        print(f"wrote {args.out}")
        return 0

    if args.command == "verify":
        try:
            results = run_suite(args.suite)
        except UnknownSuite as exc:
            print(str(exc), file=sys.stderr)
            return 2
        failed = 0
        for res in results:
            mark = "PASS" if res.passed else "FAIL"
            print(f"[{mark}] {res.name}  residual={res.residual:.3e} {res.note}")
            failed += 0 if res.passed else 1
        print(f"{len(results) - failed}/{len(results)} checks passed")
        return 0 if failed == 0 else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())

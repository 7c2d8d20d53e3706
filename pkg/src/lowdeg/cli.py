"""Experiment runner: config parsing, seed management, scans, artifacts.

Configuration lives in a TOML file; command-line flags override file values.
Every artifact is written atomically (temp file + rename) and embeds or
sidecars a provenance block (config hash, seed, package version, generator
id) sufficient to re-run it exactly.  Worker count comes only from the
LOWDEG_WORKERS environment variable; outputs are byte-identical for any
worker count.

Exit codes: 0 success, 2 config error, 3 partial failures, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__, bounds, detect, hermite, models, oracles
from . import ldlr as ldlr_mod
from .ldlr import DSchedule, ModelSpec
from .priors import PriorSpec, make_prior
from .rng import GENERATOR_ID

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
EXIT_INTERNAL = 4


class ConfigError(ValueError):
    pass


def worker_count() -> int:
    raw = os.environ.get("LOWDEG_WORKERS", "1")
    try:
        w = int(raw)
    except ValueError as exc:
        raise ConfigError(f"LOWDEG_WORKERS must be an integer, got {raw!r}") from exc
    if w < 1:
        raise ConfigError("LOWDEG_WORKERS must be >= 1")
    return w


def _pool_map(fn, jobs):
    w = worker_count()
    if w == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(w, len(jobs))) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * w))))


# -- config handling -----------------------------------------------------------


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc


# flag destinations whose config-file spelling differs
_CONFIG_ALIASES = {"lam": "lambda", "lam_hat": "lambda_hat"}


def merged_value(args, config: dict, key: str, default=None):
    """Flag value if given, else config file value, else default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    return config.get(_CONFIG_ALIASES.get(key, key), default)


def require(value, key: str):
    if value is None:
        raise ConfigError(f"missing required option '{key}' (flag or config file)")
    return value


def parse_prior(args, config: dict) -> PriorSpec:
    node = config.get("prior", {})
    kind = getattr(args, "prior", None) or node.get("kind") or "rademacher"
    if kind == "rademacher":
        return PriorSpec.rademacher()
    if kind == "gaussian_iid":
        return PriorSpec.gaussian_iid()
    if kind == "sparse_rademacher":
        rho = getattr(args, "rho", None) or node.get("rho")
        rho = require(rho, "prior.rho")
        return PriorSpec.sparse_rademacher(Fraction(str(rho)))
    if kind == "discrete_custom":
        atoms = node.get("atoms")
        atoms = require(atoms, "prior.atoms (config file only)")
        return PriorSpec.discrete_custom(
            [(Fraction(str(v)), Fraction(str(p))) for v, p in atoms]
        )
    raise ConfigError(f"unknown prior kind {kind!r}")


def config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def provenance(payload: dict, seed: Optional[int]) -> dict:
    return {
        "config_hash": config_hash(payload),
        "seed": seed,
        "version": __version__,
        "generator": GENERATOR_ID,
    }


# -- atomic artifact writers ---------------------------------------------------


def _atomic_write(path: str, data: bytes):
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=target.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Optional[str], obj) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        _atomic_write(path, text.encode())


def write_csv(path: Optional[str], rows: list[dict], fieldnames: list[str], meta: dict) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        _atomic_write(path, buf.getvalue().encode())
        _atomic_write(path + ".meta.json", (json.dumps(meta, sort_keys=True, indent=2) + "\n").encode())


# -- subcommands ----------------------------------------------------------------


def _build_model(args, config: dict) -> ModelSpec:
    p = int(require(merged_value(args, config, "p", 2), "p"))
    n = int(require(merged_value(args, config, "n"), "n"))
    prior = parse_prior(args, config)
    lam = merged_value(args, config, "lam")
    lam_hat = merged_value(args, config, "lam_hat")
    if (lam is None) == (lam_hat is None):
        raise ConfigError("give exactly one of --lambda and --lambda-hat")
    if lam_hat is not None:
        if p != 2:
            raise ConfigError("--lambda-hat requires p = 2")
        return ModelSpec.with_lambda_hat(n, prior, Fraction(str(lam_hat)))
    return ModelSpec.with_lambda(p, n, prior, Fraction(str(lam)))


def cmd_ldlr_norm(args, config: dict) -> int:
    model = _build_model(args, config)
    D = int(require(merged_value(args, config, "D"), "D"))
    mode = merged_value(args, config, "mode")
    result = ldlr_mod.ldlr_norm_sq(model, D, mode)
    ratios = ldlr_mod.term_ratios(result)
    payload = {
        "command": "ldlr-norm",
        "p": model.p,
        "n": model.n,
        "D": D,
        "lambda": repr(model.lam),
        "lambda_hat": repr(model.lambda_hat) if model.p == 2 else None,
        "lambda_sq_exact": str(model.lam_sq_exact) if model.lam_sq_exact is not None else None,
        "norm_sq_exact": str(result.exact_norm_sq) if result.exact_norm_sq is not None else None,
        "prior": model.prior.kind,
        "mode": result.mode,
        "log_norm_sq": result.log_norm_sq,
        "terms": [
            {"d": d, "sign": int(result.term_signs[d]), "log_T": float(result.term_logs[d])}
            for d in range(D + 1)
        ],
        "skipped_degrees": list(result.skipped),
        "ratios": [
            {"from": e.d_from, "to": e.d_to, "ratio": e.ratio, "geometric": e.geometric}
            for e in ratios.entries
        ],
        "all_geometric": ratios.all_geometric,
    }
    payload["provenance"] = provenance(payload, None)
    write_json(args.out, payload)
    if args.out:
        print(f"log ||L^<={D}||^2 = {result.log_norm_sq!r}  [{result.mode}] -> {args.out}")
    return EXIT_OK


def _parse_grid(text) -> list:
    if isinstance(text, str):
        return [x.strip() for x in text.split(",") if x.strip()]
    return list(text)


def cmd_scan(args, config: dict) -> int:
    p = int(require(merged_value(args, config, "p", 2), "p"))
    prior = parse_prior(args, config)
    seed = merged_value(args, config, "seed")
    n_grid = [int(x) for x in _parse_grid(require(merged_value(args, config, "n_grid"), "n-grid"))]
    lam_grid = merged_value(args, config, "lambda_grid")
    lam_hat_grid = merged_value(args, config, "lambda_hat_grid")
    if (lam_grid is None) == (lam_hat_grid is None):
        raise ConfigError("give exactly one of --lambda-grid and --lambda-hat-grid")
    use_hat = lam_hat_grid is not None
    if use_hat and p != 2:
        raise ConfigError("--lambda-hat-grid requires p = 2")
    grid = [Fraction(str(x)) for x in _parse_grid(lam_hat_grid if use_hat else lam_grid)]
    if not grid or not n_grid:
        raise ConfigError("scan grids must be nonempty")
    schedule = DSchedule.parse(str(require(merged_value(args, config, "schedule"), "schedule")))
    mode = merged_value(args, config, "mode")

    result = ldlr_mod.scan(
        p, prior, grid, n_grid, schedule, use_lam_hat=use_hat, mode=mode, map_fn=_pool_map_star
    )
    rows = ldlr_mod.scan_csv_rows(result)
    payload = {
        "command": "scan",
        "p": p,
        "prior": prior.kind,
        "n_grid": n_grid,
        "grid": [str(x) for x in grid],
        "grid_is_lambda_hat": use_hat,
        "schedule": str(schedule),
        "mode": mode,
    }
    meta = {
        "provenance": provenance(payload, seed),
        "config": payload,
        "classifications": {repr(k): v for k, v in sorted(result.classifications.items())},
        "slopes": {repr(k): v for k, v in sorted(result.slopes.items())},
    }
    write_csv(
        args.out, rows,
        ["p", "n", "D", "lambda", "lambda_hat", "log_norm_sq", "mode", "classification"],
        meta,
    )
    if args.out:
        for lam, cls in sorted(result.classifications.items()):
            print(f"{'lambda_hat' if use_hat else 'lambda'}={lam:g}: {cls}")
    return EXIT_PARTIAL if result.has_failures else EXIT_OK


def _pool_map_star(fn, jobs):
    return _pool_map(fn, list(jobs))


def cmd_simulate(args, config: dict) -> int:
    p = int(require(merged_value(args, config, "p", 2), "p"))
    n = int(require(merged_value(args, config, "n"), "n"))
    seed = int(require(merged_value(args, config, "seed"), "seed"))
    out = require(args.out, "--out")
    null_only = bool(merged_value(args, config, "null", False))
    memory_cap = int(config.get("caps", {}).get("memory", models.MEMORY_CAP))
    if null_only:
        obs = models.sample_null(p, n, seed, memory_cap)
    else:
        model = _build_model(args, config)
        obs, _ = models.sample_planted(model, seed, memory_cap)
    payload = {"command": "simulate", "p": p, "n": n, "seed": seed, "null": null_only}
    obs.provenance.update(provenance(payload, seed))
    models.write_tensor(out, obs)
    print(f"wrote {n}^{p} tensor -> {out}")
    return EXIT_OK


def cmd_pca_test(args, config: dict) -> int:
    n = int(require(merged_value(args, config, "n"), "n"))
    lam_hat = float(require(merged_value(args, config, "lam_hat"), "lambda-hat"))
    trials = int(merged_value(args, config, "trials", 100))
    seed = int(require(merged_value(args, config, "seed"), "seed"))
    prior = parse_prior(args, config)
    model = ModelSpec.with_lambda_hat(n, prior, lam_hat)
    report = detect.error_rates(
        lambda obs: detect.pca_test(obs, lam_hat), model, trials, seed, test_id="pca"
    )
    payload = {"command": "pca-test", "n": n, "lambda_hat": lam_hat, "trials": trials,
               "prior": prior.kind, "threshold": detect.pca_threshold(lam_hat)}
    out = report.to_json_dict()
    out["provenance"] = provenance(payload, seed)
    out["threshold"] = detect.pca_threshold(lam_hat)
    write_json(args.out, out)
    return EXIT_OK


def cmd_error_rates(args, config: dict) -> int:
    test_name = require(merged_value(args, config, "test"), "test")
    model = _build_model(args, config)
    trials = int(merged_value(args, config, "trials", 100))
    seed = int(require(merged_value(args, config, "seed"), "seed"))
    caps = config.get("caps", {})
    if test_name == "pca":
        if model.p != 2:
            raise ConfigError("pca test requires p = 2")
        lam_hat = model.lambda_hat
        test = lambda obs: detect.pca_test(obs, lam_hat)  # noqa: E731
    elif test_name == "poly":
        D = int(require(merged_value(args, config, "D"), "D"))
        alpha = float(merged_value(args, config, "alpha", 0.05))
        cal_trials = int(merged_value(args, config, "calibration_trials", 2000))
        eta = detect.calibrate_eta(model, D, alpha, cal_trials, seed)
        cap = caps.get("multi_index")
        test = lambda obs: detect.poly_threshold_test(model, D, obs, eta, cap=cap)  # noqa: E731
    elif test_name == "lr":
        eta = float(merged_value(args, config, "eta", 1.0))
        cap = caps.get("support")
        test = lambda obs: detect.lr_test(model, obs, eta, cap=cap)  # noqa: E731
    else:
        raise ConfigError(f"unknown test {test_name!r} (pca, poly or lr)")
    report = detect.error_rates(test, model, trials, seed, test_id=test_name)
    payload = {"command": "error-rates", "test": test_name, "p": model.p, "n": model.n,
               "lambda": repr(model.lam), "trials": trials}
    out = report.to_json_dict()
    out["provenance"] = provenance(payload, seed)
    write_json(args.out, out)
    return EXIT_OK


def cmd_hermite_check(args, config: dict) -> int:
    x, w = hermite.gauss_hermite_rule()
    ortho = 0.0
    hv = hermite.hermite_values(12, x)
    for j in range(13):
        for k in range(13):
            nrm = math.sqrt(hermite.hermite_coeffs(j).factorial * hermite.hermite_coeffs(k).factorial)
            val = float(w @ (hv[j] * hv[k])) / nrm
            ortho = max(ortho, abs(val - (1.0 if j == k else 0.0)))
    translation = [
        {"k": k, "mu": mu, "residual": hermite.check_translation_identity(k, mu)}
        for k in range(11)
        for mu in (0.0, 0.5, 1.0, 2.0)
    ]
    ibp = [
        {"k": k, "f": tag, "residual": hermite.check_ibp_identity(k, tag)}
        for k, tag in [(1, "poly:2"), (2, "poly:2"), (3, "poly:4"), (1, "exp:1"), (2, "exp:1"), (2, "cos"), (4, "cos")]
    ]
    genfun = [
        {"x": xx, "y": yy, "K": 60, "residual": hermite.check_generating_function(xx, yy, 60)}
        for xx in (-2.0, -1.0, 0.5, 1.0, 2.0)
        for yy in (-1.0, 0.0, 2.0)
    ]
    payload = {
        "command": "hermite-check",
        "orthonormality_max_residual": ortho,
        "translation": translation,
        "integration_by_parts": ibp,
        "generating_function": genfun,
        "max_residual": max(
            [ortho]
            + [r["residual"] for r in translation]
            + [r["residual"] for r in ibp]
            + [r["residual"] for r in genfun]
        ),
    }
    payload["provenance"] = provenance({"command": "hermite-check"}, None)
    write_json(args.out, payload)
    return EXIT_OK


def cmd_bounds_check(args, config: dict) -> int:
    seed = int(merged_value(args, config, "seed", 0))
    reports: list[bounds.BoundReport] = []
    for k in (2, 4, 10, 20):
        for n in (4, 20, 100):
            if k % 2 == 0:
                lhs = oracles.log_moments_rademacher_binomial(n, k)[k]
            else:
                lhs = oracles_abs_moment_log(n, k)
            rhs = bounds.log_subgaussian_moment_bound(float(n), k)
            reports.append(
                bounds.BoundReport(
                    "subgaussian_moment", {"n": n, "k": k}, float(lhs), rhs,
                    lhs <= rhs + 1e-12, rhs - float(lhs),
                )
            )
    for x, a in [(1.0, 1.0), (2.0, 0.5), (0.5, 3.0)]:
        lhs, rhs = bounds.gamma_ratio_bound(x, a)
        reports.append(
            bounds.BoundReport("gamma_ratio", {"x": x, "a": a}, math.log(lhs), math.log(rhs),
                               True, math.log(rhs) - math.log(lhs))
        )
    for kind, spec in [("rademacher", PriorSpec.rademacher()), ("gaussian_iid", PriorSpec.gaussian_iid())]:
        reports.append(
            bounds.local_chernoff_check(make_prior(spec), n=400, eta=0.1, trials=100_000, seed=seed)
        )
    for k in (1, 2, 4):
        reports.append(bounds.bonami_check(k, 30, "gaussian", poly_seed=seed, trials=8192))
        reports.append(bounds.bonami_check(k, 30, "rademacher", poly_seed=seed + 1, trials=8192))
    model = ModelSpec.with_lambda_hat(4, PriorSpec.rademacher(), 5)
    perf = bounds.measure_poly_test_performance(model, 2, 1, 120_000, 2000, seed)
    reports.append(bounds.consistency_crosscheck(model, 2 * perf.k * perf.d, perf))
    perf_s = bounds.measure_spectral_performance(model, 1, 5000, 500, seed)
    reports.append(bounds.consistency_crosscheck(model, 2 * perf_s.k * perf_s.d, perf_s))
    payload = [r.to_json_dict() for r in reports]
    write_json(args.out, {"command": "bounds-check", "reports": payload,
                          "all_satisfied": all(r.satisfied for r in reports),
                          "provenance": provenance({"command": "bounds-check"}, seed)})
    return EXIT_OK if all(r.satisfied for r in reports) else EXIT_PARTIAL


def oracles_abs_moment_log(n: int, k: int) -> float:
    """log E|S|^k for Rademacher overlaps, exact binomial sum."""
    total = Fraction(0)
    for m in range(n + 1):
        val = abs(2 * m - n)
        total += Fraction(math.comb(n, m), 2**n) * Fraction(val) ** k
    from .signedlog import slog_from_fraction

    return slog_from_fraction(total)[1]


def cmd_oracle_verify(args, config: dict) -> int:
    seed = int(merged_value(args, config, "seed", 0))
    checks = oracles.run_oracle_checks(seed)
    for c in checks:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}" + (f": {c['detail']}" if c["detail"] and not c["passed"] else ""))
    payload = {
        "command": "oracle-verify",
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks),
        "provenance": provenance({"command": "oracle-verify"}, seed),
    }
    if args.out:
        write_json(args.out, payload)
    return EXIT_OK if payload["all_passed"] else EXIT_PARTIAL


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lowdeg",
        description="Low-degree likelihood ratio norms and threshold predictions "
        "for spiked matrix/tensor models.",
    )
    parser.add_argument("--config", help="TOML configuration file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, model=False, grid=False):
        sp.add_argument("--out", "-o", help="output artifact path (default: stdout)")
        sp.add_argument("--seed", type=int, default=None)
        if model:
            sp.add_argument("--p", type=int, default=None)
            sp.add_argument("--n", type=int, default=None)
            sp.add_argument("--prior", default=None,
                            choices=["rademacher", "sparse_rademacher", "gaussian_iid", "discrete_custom"],
                            help="spike prior (default: rademacher)")
            sp.add_argument("--rho", default=None, help="sparse_rademacher density, e.g. 1/4")
            sp.add_argument("--lambda", dest="lam", default=None, help="signal strength")
            sp.add_argument("--lambda-hat", dest="lam_hat", default=None,
                            help="normalized signal strength (p = 2 only)")
        if grid:
            sp.add_argument("--n-grid", dest="n_grid", default=None, help="comma list of n")
            sp.add_argument("--lambda-grid", dest="lambda_grid", default=None)
            sp.add_argument("--lambda-hat-grid", dest="lambda_hat_grid", default=None)
            sp.add_argument("--schedule", default=None,
                            help="degree schedule: const:c | log | polylog:eps | power:delta")
        sp.add_argument("--mode", choices=["exact", "log_space"], default=None)
        return sp

    sp = common(sub.add_parser("ldlr-norm", help="norm of the degree-D LDLR"), model=True)
    sp.add_argument("--D", type=int, default=None)

    common(sub.add_parser("scan", help="grid scan with divergence classification"),
           model=True, grid=True)

    sp = common(sub.add_parser("simulate", help="sample and dump an observation tensor"), model=True)
    sp.add_argument("--null", action="store_true", default=None)

    sp = common(sub.add_parser("pca-test", help="PCA test error rates"), model=True)
    sp.add_argument("--trials", type=int, default=None)

    sp = common(sub.add_parser("error-rates", help="type I/II error estimation"), model=True)
    sp.add_argument("--test", choices=["pca", "poly", "lr"], default=None)
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--D", type=int, default=None)
    sp.add_argument("--eta", type=float, default=None)
    sp.add_argument("--alpha", type=float, default=None)

    common(sub.add_parser("hermite-check", help="Hermite identity residual report"))
    common(sub.add_parser("bounds-check", help="run the full inequality suite"))
    common(sub.add_parser("oracle-verify", help="compare main paths against brute-force oracles"))
    return parser


_COMMANDS = {
    "ldlr-norm": cmd_ldlr_norm,
    "scan": cmd_scan,
    "simulate": cmd_simulate,
    "pca-test": cmd_pca_test,
    "error-rates": cmd_error_rates,
    "hermite-check": cmd_hermite_check,
    "bounds-check": cmd_bounds_check,
    "oracle-verify": cmd_oracle_verify,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

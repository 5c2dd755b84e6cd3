"""Command-line surface: fit, tune, simulate and influence subcommands.

Exit codes: 0 success, 1 numerical failure under --strict, 2 usage or
input errors. All randomness flows from --seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .errors import NormalErrorModel
from .influence import GridSpec, sensitivity_scan
from .model import Dataset, DpdConfig, ModelParams
from .objective import ObjectiveContext
from .penalties import PENALTY_FAMILIES, make_penalty
from .simulate import (
    CONTAMINATION_MODES,
    X_OUTLIER_MODES,
    MethodConfig,
    SimSpec,
    generate_replicate,
    run_experiment,
)
from .solver import INIT_MODES, SolverConfig, fit
from .tuning import TuningGrid, alpha_sweep, default_lambda_grid, lambda_path

SCHEMA_VERSION = 1


class InputError(Exception):
    """Bad file or flag combination; maps to exit code 2."""


class NumericalFailure(Exception):
    """Non-convergence under --strict; maps to exit code 1."""


def read_dataset_csv(path: str) -> Dataset:
    """Strict CSV: header row, first column named 'y', numeric cells."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if not header or header[0].strip() != "y":
            raise InputError(f"{path}: first column must be named 'y'")
        width = len(header)
        if width < 2:
            raise InputError(f"{path}: need at least one covariate column")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise InputError(
                    f"{path}:{lineno}: expected {width} columns, got {len(row)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise InputError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr))[0][0]) + 2
        raise InputError(f"{path}:{bad}: non-finite cell (NaN or infinity)")
    return Dataset(arr[:, 0], arr[:, 1:], column_names=tuple(header[1:]))


def write_dataset_csv(path: str, y: np.ndarray, X: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y"] + [f"x{j + 1}" for j in range(X.shape[1])])
        for i in range(len(y)):
            writer.writerow([repr(float(y[i]))] + [repr(float(v)) for v in X[i]])


def _out_stream(path: str | None):
    return open(path, "w", encoding="utf-8") if path else sys.stdout


def _write_text(path: str | None, text: str) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fit_payload(result) -> dict:
    beta = result.params.beta
    nz = np.nonzero(beta)[0]
    return {
        "schema_version": SCHEMA_VERSION,
        "beta": [[int(j), float(beta[j])] for j in nz],
        "p": int(beta.shape[0]),
        "sigma": float(result.params.sigma),
        "objective": float(result.objective),
        "outer_iters": int(result.outer_iters),
        "converged": bool(result.converged),
        "degenerate_scale": bool(result.degenerate_scale),
        "kkt": {
            "stationarity_S_norm": float(result.kkt.stationarity_S_norm),
            "dual_feasibility_margin": float(result.kkt.dual_feasibility_margin),
            "sigma_eq_residual": float(result.kkt.sigma_eq_residual),
            "second_order_margin": float(result.kkt.second_order_margin),
            "satisfied": bool(result.kkt.satisfied),
        },
    }


def _solver_config(args, seed: int) -> SolverConfig:
    return SolverConfig(init=args.init, seed=seed)


def _make_ctx(data: Dataset, alpha: float) -> ObjectiveContext:
    return ObjectiveContext(data, NormalErrorModel(), DpdConfig(alpha))


def cmd_fit(args) -> int:
    data = read_dataset_csv(args.data)
    ctx = _make_ctx(data, args.alpha)
    pen = make_penalty(args.penalty, args.lam, _shape_a(args))
    result = fit(ctx, pen, _solver_config(args, args.seed))
    _write_text(args.out, json.dumps(_fit_payload(result), sort_keys=True, indent=2) + "\n")
    if args.strict and not result.converged:
        raise NumericalFailure("fit did not converge")
    return 0


def _parse_float_list(text: str, what: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise InputError(f"cannot parse {what} list: {text!r}") from None


def cmd_tune(args) -> int:
    data = read_dataset_csv(args.data)
    alphas = _parse_float_list(args.alpha_grid, "--alpha-grid") if args.alpha_grid else None
    base_alpha = alphas[0] if alphas else args.alpha
    ctx = _make_ctx(data, base_alpha)
    cfg = _solver_config(args, args.seed)

    if args.lambda_grid:
        lams = np.asarray(_parse_float_list(args.lambda_grid, "--lambda-grid"))
        grid = TuningGrid(lams, alphas=alphas, warm_start=args.warm_start)
    else:
        grid = default_lambda_grid(
            ctx,
            cfg,
            n_lambdas=args.n_lambda,
            min_ratio=args.lambda_min_ratio,
            alphas=alphas,
            warm_start=args.warm_start,
        )

    if alphas:
        tuned = alpha_sweep(ctx, args.penalty, grid, cfg, _shape_a(args))
    else:
        tuned = lambda_path(ctx, args.penalty, grid, cfg, _shape_a(args))

    payload = {
        "schema_version": SCHEMA_VERSION,
        "best_lambda": float(tuned.best_lambda),
        "best_alpha": float(tuned.best_alpha),
        "n_points": len(tuned.records),
        "fit": _fit_payload(tuned.best_fit),
    }
    _write_text(args.out, json.dumps(payload, sort_keys=True, indent=2) + "\n")

    if args.trace_out:
        with open(args.trace_out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda", "alpha", "hbic", "model_size", "sigma2", "converged"])
            for rec in tuned.records:
                writer.writerow(
                    [
                        repr(rec.lam),
                        repr(rec.alpha),
                        repr(rec.hbic),
                        rec.model_size,
                        repr(rec.sigma2),
                        int(rec.converged),
                    ]
                )
    if args.strict and not tuned.best_fit.converged:
        raise NumericalFailure("selected fit did not converge")
    return 0


def cmd_simulate(args) -> int:
    spec = SimSpec(
        n=args.n,
        p=args.p,
        setting=args.setting,
        contamination=args.contamination,
        contamination_rate=args.rate,
        outlier_shift=args.shift,
        noise_sd=args.noise_sd,
        replicates=args.replicates,
        seed=args.seed,
        x_outlier_mode=args.x_outlier_mode,
    )
    method = MethodConfig(
        alphas=tuple(_parse_float_list(args.alphas, "--alphas")),
        penalty=args.penalty,
        a=_shape_a(args),
        n_lambdas=args.n_lambda,
        lambda_min_ratio=args.lambda_min_ratio,
        init=args.init,
        warm_start=args.warm_start,
        threads=args.threads,
    )
    if args.emit_data:
        y2, X2, _, _, _, _ = generate_replicate(spec, 0)
        write_dataset_csv(args.emit_data, y2, X2)

    result = run_experiment(spec, method)
    _write_text(args.out, result.to_csv())
    if args.json_out:
        _write_text(args.json_out, result.to_json())
    if args.strict and result.failures:
        raise NumericalFailure(f"{len(result.failures)} replicate fits failed")
    return 0


def _load_fit_params(path: str, p: int) -> ModelParams:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    beta = np.zeros(payload.get("p", p))
    pairs = payload.get("beta", [])
    if not pairs:
        raise InputError(f"{path}: fit has no active set")
    for j, v in pairs:
        beta[int(j)] = float(v)
    return ModelParams(beta, float(payload["sigma"]))


def _parse_grid_axis(text: str, what: str) -> np.ndarray:
    parts = _parse_float_list(text, what)
    if len(parts) != 3 or int(parts[2]) < 1:
        raise InputError(f"{what} must be 'min,max,count', got {text!r}")
    return np.linspace(parts[0], parts[1], int(parts[2]))


def cmd_influence(args) -> int:
    data = read_dataset_csv(args.data)
    ctx = _make_ctx(data, args.alpha)
    pen = make_penalty(args.penalty, args.lam, _shape_a(args))

    if args.fit_json:
        params = _load_fit_params(args.fit_json, data.p)
    else:
        result = fit(ctx, pen, _solver_config(args, args.seed))
        if result.active_set.size == 0:
            raise InputError("fit has no active set; nothing to scan")
        params = result.params

    active = np.nonzero(params.beta)[0]
    if active.size == 0:
        raise InputError("fit has no active set; nothing to scan")
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=args.seed, spawn_key=(0x1F,)))
    )
    direction = np.zeros(data.p)
    direction[active] = rng.standard_normal(active.size)

    grid = GridSpec(
        y_values=_parse_grid_axis(args.y_grid, "--y-grid"),
        x_scales=_parse_grid_axis(args.x_scale_grid, "--x-scale-grid"),
        x_direction=direction,
    )
    scan = sensitivity_scan(ctx, params, pen, grid)
    out = _out_stream(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow(scan.CSV_HEADER)
        for row in scan.rows:
            writer.writerow([repr(float(v)) for v in row])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _shape_a(args):
    if args.penalty == "scad":
        return args.scad_a
    if args.penalty == "mcp":
        return args.mcp_a
    return None


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=0.3, help="robustness level (>= 0)")
    parser.add_argument("--penalty", choices=PENALTY_FAMILIES, default="scad")
    parser.add_argument("--lambda", dest="lam", type=float, default=0.1)
    parser.add_argument("--scad-a", type=float, default=None)
    parser.add_argument("--mcp-a", type=float, default=None)
    parser.add_argument(
        "--init", choices=INIT_MODES[:1] + INIT_MODES[2:], default="ransac_lasso"
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", default=None, help="output path (default stdout)")
    parser.add_argument("--strict", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpdncv",
        description="Robust sparse regression with a density power divergence loss",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit at a fixed regularization strength")
    p_fit.add_argument("--data", required=True, help="CSV with y in the first column")
    _add_common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_tune = sub.add_parser("tune", help="select lambda (and optionally alpha)")
    p_tune.add_argument("--data", required=True)
    _add_common(p_tune)
    p_tune.add_argument("--n-lambda", type=int, default=50)
    p_tune.add_argument("--lambda-min-ratio", type=float, default=1e-3)
    p_tune.add_argument("--lambda-grid", default=None, help="comma-separated values")
    p_tune.add_argument("--alpha-grid", default=None, help="comma-separated values")
    p_tune.add_argument("--warm-start", action=argparse.BooleanOptionalAction, default=True)
    p_tune.add_argument("--trace-out", default=None, help="per-point CSV path")
    p_tune.set_defaults(func=cmd_tune)

    p_sim = sub.add_parser("simulate", help="replicated benchmark tables")
    _add_common(p_sim)
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--p", type=int, default=500)
    p_sim.add_argument("--setting", choices=("A", "B"), default="A")
    p_sim.add_argument(
        "--contamination",
        choices=("none", "y", "x"),
        default="none",
        help="outlier scheme (y: response shifts, x: covariate shifts)",
    )
    p_sim.add_argument("--rate", type=float, default=0.10)
    p_sim.add_argument("--shift", type=float, default=20.0)
    p_sim.add_argument("--noise-sd", type=float, default=0.5)
    p_sim.add_argument("--replicates", type=int, default=20)
    p_sim.add_argument("--alphas", default="0.2", help="comma-separated alphas")
    p_sim.add_argument("--n-lambda", type=int, default=50)
    p_sim.add_argument("--lambda-min-ratio", type=float, default=1e-3)
    p_sim.add_argument("--x-outlier-mode", choices=X_OUTLIER_MODES, default="coords")
    p_sim.add_argument("--warm-start", action=argparse.BooleanOptionalAction, default=False)
    p_sim.add_argument("--emit-data", default=None, help="write replicate-0 CSV here")
    p_sim.add_argument("--json-out", default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_inf = sub.add_parser("influence", help="influence surface over a grid")
    p_inf.add_argument("--data", required=True)
    _add_common(p_inf)
    p_inf.add_argument("--fit-json", default=None, help="reuse a saved fit")
    p_inf.add_argument("--y-grid", default="-10,10,21", help="min,max,count")
    p_inf.add_argument("--x-scale-grid", default="0,3,7", help="min,max,count")
    p_inf.set_defaults(func=cmd_influence)

    return parser


_MODE_MAP = {"none": "none", "y": "y_outliers", "x": "x_outliers"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "contamination", None) in _MODE_MAP:
        args.contamination = _MODE_MAP[args.contamination]
    try:
        return args.func(args)
    except NumericalFailure as exc:
        print(f"dpdncv: numerical failure: {exc}", file=sys.stderr)
        return 1
    except InputError as exc:
        print(f"dpdncv: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"dpdncv: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

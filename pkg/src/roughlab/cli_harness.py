"""Experiment configuration, orchestration, and CSV persistence.

One experiment per invocation; results are written as CSV rows with the
fixed header ``experiment,level,component,statistic,value,std_error,
n_paths,seed,wall_time_ms``.  Exit codes: 0 when the experiment's built-in
statistical thresholds pass, 1 on a statistical failure, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .correction_lab import (
    compensated_level2_decay,
    correction_residual_study,
    isometry_check,
    level3_decay,
    u_term_two_ways,
    verify_ito_formula,
)
from .gaussian_model import (
    CovarianceModel,
    brownian_kernel,
    brownian_motion,
    dyadic_grid,
    fbm,
    riemann_liouville,
    riemann_liouville_kernel,
)
from .rde_engine import get_field
from .volterra_ops import HolderGridFunction, step_approx_l2_error, k_star_batch

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "CSV_HEADER",
    "validate",
    "run",
    "write_rows",
    "read_rows",
    "main",
]

CSV_HEADER = "experiment,level,component,statistic,value,std_error,n_paths,seed,wall_time_ms"

EXPERIMENTS = (
    "verify-correction",
    "verify-ito",
    "decay2",
    "decay3",
    "isometry",
    "kstar-convergence",
)


@dataclass
class ExperimentConfig:
    experiment: str = ""
    model: str = "bm"  # bm | fbm | rl
    H: float = 0.5
    field_key: str = "sincos"
    f: str = "square"  # scalar map for verify-ito
    d: int = 1
    m: int = 1
    levels: tuple = (4, 8)
    n_paths: int = 1000
    seed: int = 0
    T: float = 1.0
    p: float | None = None  # optional override, recorded only
    u_check: bool = False  # two-way U comparison (rl model, slow)
    out_dir: str = "."


@dataclass
class ResultRow:
    experiment: str
    level: int
    component: int
    statistic: str
    value: float
    std_error: float
    n_paths: int
    seed: int
    wall_time_ms: int


def validate(config: ExperimentConfig) -> list[str]:
    """All constraint violations, without running anything."""
    bad = []
    if config.experiment not in EXPERIMENTS:
        bad.append("experiment must be one of %s" % (", ".join(EXPERIMENTS)))
    if config.model not in ("bm", "fbm", "rl"):
        bad.append("model must be bm, fbm, or rl")
    if config.model in ("fbm", "rl") and not 0.25 < config.H < 1.0:
        bad.append("H must exceed 0.25 and be below 1")
    lv = list(config.levels)
    if len(lv) != 2 or lv[0] > lv[1]:
        bad.append("levels must be [n_min, n_max] with n_min <= n_max")
    elif not (2 <= lv[0] and lv[1] <= 12):
        bad.append("levels must lie within [2, 12]")
    if config.n_paths < 100:
        bad.append("n_paths must be at least 100")
    if config.d < 1 or config.m < 1:
        bad.append("dimensions d and m must be positive")
    if config.T <= 0:
        bad.append("T must be positive")
    return bad


def _model_of(config: ExperimentConfig) -> CovarianceModel:
    if config.model == "bm":
        return brownian_motion(config.T)
    if config.model == "fbm":
        return fbm(config.H, config.T)
    return riemann_liouville(config.H, config.T)


def _kernel_of(config: ExperimentConfig):
    if config.model == "bm":
        return brownian_kernel(config.T)
    if config.model == "rl":
        return riemann_liouville_kernel(config.H, config.T)
    raise ValueError(
        "kernel-based experiments need a Volterra model (bm or rl), not fbm"
    )


def _now_ms(t0: float) -> int:
    return int(round(1000.0 * (time.time() - t0)))


def run(config: ExperimentConfig) -> tuple[int, str | None]:
    """Run one experiment; returns (exit_code, csv_path)."""
    violations = validate(config)
    if violations:
        for v in violations:
            print("config error:", v, file=sys.stderr)
        return 2, None

    rows: list[ResultRow] = []
    passed = True
    lv = list(range(config.levels[0], config.levels[1] + 1))
    t0 = time.time()

    def row(level, component, statistic, value, std_error=0.0):
        rows.append(
            ResultRow(
                experiment=config.experiment,
                level=int(level),
                component=int(component),
                statistic=statistic,
                value=float(value),
                std_error=float(std_error),
                n_paths=config.n_paths,
                seed=config.seed,
                wall_time_ms=_now_ms(t0),
            )
        )

    model = _model_of(config)

    if config.experiment == "verify-correction":
        vf = get_field(config.field_key, config.d, config.m)
        out = correction_residual_study(vf, model, lv, config.n_paths, config.seed)
        m_out = out["residual_l2"].shape[1]
        for i, level in enumerate(out["levels"]):
            for j in range(m_out):
                row(level, j, "residual_mean", out["residual_mean"][i, j],
                    out["residual_mean_se"][i, j])
                row(level, j, "residual_l2", out["residual_l2"][i, j],
                    out["residual_l2_se"][i, j])
                if abs(out["residual_mean"][i, j]) > 3.0 * out["residual_mean_se"][i, j]:
                    passed = False
        for j in range(m_out):
            row(out["levels"][-1], j, "residual_l2_slope", out["slope"][j])
        if np.any(out["residual_l2"][-1] > out["residual_l2"][0]):
            passed = False
        if config.u_check:
            kernel = _kernel_of(config)
            cmp_ = u_term_two_ways(
                vf, kernel, lv[0], min(config.n_paths, 200), config.seed
            )
            for j in range(m_out):
                row(lv[0], j, "u_direct_mean", cmp_.direct_mean[j])
                row(lv[0], j, "u_kstar_mean", cmp_.kstar_mean[j])
                row(lv[0], j, "u_diff_mean", cmp_.diff_mean[j], cmp_.diff_se[j])
            if not cmp_.within(3.0):
                passed = False

    elif config.experiment == "verify-ito":
        study = verify_ito_formula(
            config.f, model, lv, config.n_paths, config.seed, d=config.d
        )
        for i, level in enumerate(study.levels):
            row(level, 0, "residual_mean", study.residual_mean[i], study.residual_mean_se[i])
            row(level, 0, "residual_l2", study.residual_l2[i], study.residual_l2_se[i])
        passed = study.means_within(3.0)

    elif config.experiment in ("decay2", "decay3"):
        vf = get_field(config.field_key, config.d, config.m)
        fn = compensated_level2_decay if config.experiment == "decay2" else level3_decay
        study = fn(vf, model, lv, config.n_paths, config.seed)
        m_out = study.values.shape[1]
        for i, level in enumerate(study.levels):
            for j in range(m_out):
                row(level, j, study.statistic, study.values[i, j], study.std_errors[i, j])
        for j in range(m_out):
            row(study.levels[-1], j, study.statistic + "_slope", study.slope[j])
        passed = study.monotone_within(2.0)

    elif config.experiment == "isometry":
        kernel = _kernel_of(config)
        grid = dyadic_grid(config.levels[1], config.T)
        vals = np.stack(
            [np.sin((k + 2) * grid) + 0.3 + 0.2 * k for k in range(config.d)],
            axis=-1,
        )
        Y = HolderGridFunction(grid, vals)
        res = isometry_check(model, kernel, Y, config.n_paths, config.seed)
        row(config.levels[1], 0, "isometry_mc_variance", res.mc_variance, res.mc_se)
        row(config.levels[1], 0, "isometry_formula", res.formula_value)
        row(config.levels[1], 0, "isometry_gap", res.mc_variance - res.formula_value, res.mc_se)
        passed = res.within(3.0)

    elif config.experiment == "kstar-convergence":
        kernel = _kernel_of(config)
        fine = np.linspace(0.0, config.T, 2**11 + 1)
        evals = 0.5 * (fine[:-1] + fine[1:])
        phi = lambda r: r  # Lipschitz test function
        cached = k_star_batch(kernel, phi, evals)
        errs = []
        for level in lv:
            err = step_approx_l2_error(
                kernel, phi, dyadic_grid(level, config.T),
                eval_points=evals, k_star_phi=cached,
            )
            errs.append(err)
            row(level, 0, "kstar_step_l2_error", err)
        passed = all(b < a for a, b in zip(errs, errs[1:]))

    path = _write_csv(config, rows)
    print("wrote", path)
    print("PASS" if passed else "FAIL (statistical thresholds)")
    return (0 if passed else 1), path


def _write_csv(config: ExperimentConfig, rows: list[ResultRow]) -> str:
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = out_dir / ("%s_%s.csv" % (config.experiment, stamp))
    write_rows(path, rows)
    return str(path)


def write_rows(path, rows: list[ResultRow]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        writer = csv.writer(fh)
        for r in rows:
            writer.writerow(
                [
                    r.experiment,
                    r.level,
                    r.component,
                    r.statistic,
                    repr(r.value),
                    repr(r.std_error),
                    r.n_paths,
                    r.seed,
                    r.wall_time_ms,
                ]
            )


def read_rows(path) -> list[ResultRow]:
    out = []
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError("unexpected CSV header: %r" % header)
        for rec in csv.reader(fh):
            out.append(
                ResultRow(
                    experiment=rec[0],
                    level=int(rec[1]),
                    component=int(rec[2]),
                    statistic=rec[3],
                    value=float(rec[4]),
                    std_error=float(rec[5]),
                    n_paths=int(rec[6]),
                    seed=int(rec[7]),
                    wall_time_ms=int(rec[8]),
                )
            )
    return out


def _load_config_file(path: str) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError("config lines must be key=value, got %r" % raw)
        key, val = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughlab",
        description="Monte Carlo experiments for rough-path integral corrections",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value config file; flags win")
        sp.add_argument("--model", choices=["bm", "fbm", "rl"])
        sp.add_argument("--H", type=float, dest="H")
        sp.add_argument("--field", dest="field_key",
                        help="catalog key: constant, linear, sincos, commuting, ito:<f>")
        sp.add_argument("--f", help="scalar map for verify-ito: square, sin, quadratic")
        sp.add_argument("--d", type=int)
        sp.add_argument("--m", type=int)
        sp.add_argument("--levels", type=int, nargs=2, metavar=("N_MIN", "N_MAX"))
        sp.add_argument("--n-paths", type=int, dest="n_paths")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--T", type=float, dest="T")
        sp.add_argument("--p", type=float)
        sp.add_argument("--u-check", action="store_true", dest="u_check", default=None)
        sp.add_argument("--out-dir", dest="out_dir")
    return parser


_COERCE = {
    "H": float, "T": float, "p": float,
    "d": int, "m": int, "n_paths": int, "seed": int,
    "u_check": lambda s: s.lower() in ("1", "true", "yes"),
    "levels": lambda s: tuple(int(x) for x in s.split()),
}


def parse_config(argv) -> ExperimentConfig:
    args = _build_parser().parse_args(argv)
    config = ExperimentConfig(experiment=args.experiment)
    if getattr(args, "config", None):
        for key, val in _load_config_file(args.config).items():
            if key == "experiment":
                continue
            if not hasattr(config, key):
                raise ValueError("unknown config key %r" % key)
            setattr(config, key, _COERCE.get(key, str)(val))
    for key in vars(config):
        flag = getattr(args, key, None)
        if flag is not None and key != "experiment":
            setattr(config, key, tuple(flag) if key == "levels" else flag)
    return config


def main(argv=None) -> int:
    try:
        config = parse_config(argv if argv is not None else sys.argv[1:])
    except (ValueError, OSError) as exc:
        print("config error:", exc, file=sys.stderr)
        return 2
    code, _ = run(config)
    return code


if __name__ == "__main__":
    sys.exit(main())

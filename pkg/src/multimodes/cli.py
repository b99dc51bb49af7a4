"""Configuration-driven command line front end.

Commands: run, table1, converge, compare, kl.  Experiment configs are flat
key-value text files with dotted section keys (grammar documented in the
README); unknown keys are rejected.  All artifacts are CSV files whose first
line is a comment recording config hash, seed and version, so re-running a
config reproduces the files byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical/solver error.
"""

import argparse
import hashlib
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    NormKind,
    convergence_orders,
    discrete_norm,
    error_vs_exact,
    exact_expectation_1d,
    quadrature_expectation_1d,
)
from .assembly import FieldVector
from .errors import ConfigError, MultimodesError
from .mesh import Interval1D, Rect2D
from .random_fields import (
    Deterministic,
    ExpAbs,
    ScalarUniform,
    TrigSeriesEta2D,
    TrigSeriesF2D,
    kl_decompose,
    kl_to_weak_form,
)
from .solver import (
    SolverConfig,
    run_bruteforce_mc,
    run_mode_sweep,
    run_multimode_mc,
)

__all__ = [
    "parse_config_text",
    "ExperimentConfig",
    "load_experiment_config",
    "table1_grid",
    "converge_table",
    "compare_grid",
    "main",
    "console_main",
]

TABLE1_EPSILONS = (0.2, 0.4, 0.6, 0.8)
TABLE1_MODES = (2, 3, 4, 5, 6)

_KNOWN_KEYS = {
    "experiment",
    "solver.variant", "solver.epsilon", "solver.modes", "solver.samples",
    "solver.seed", "solver.workers", "solver.a0",
    "mesh.kind", "mesh.x_lo", "mesh.x_hi", "mesh.y_lo", "mesh.y_hi",
    "mesh.cells",
    "field.eta.kind", "field.eta.lo", "field.eta.hi", "field.eta.m_max",
    "field.eta.n_max", "field.eta.value",
    "field.f.kind", "field.f.lo", "field.f.hi", "field.f.m_max",
    "field.f.n_max", "field.f.value",
    "output.dir",
    "compare.modes_max", "compare.epsilons",
}


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines; '#' comments and blank lines are ignored."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value': {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    unknown = sorted(set(out) - _KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return out


def _get(cfg: dict, key: str, conv, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return conv(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"key {key!r}: {exc}") from exc


def _field_spec(cfg: dict, name: str, eta_spec=None):
    kind = _get(cfg, f"field.{name}.kind", str)
    p = f"field.{name}"
    if kind == "uniform":
        return ScalarUniform(_get(cfg, f"{p}.lo", float, 0.0),
                             _get(cfg, f"{p}.hi", float, 1.0))
    if kind == "trig_eta":
        return TrigSeriesEta2D(_get(cfg, f"{p}.m_max", int, 10),
                               _get(cfg, f"{p}.n_max", int, 10))
    if kind == "trig_f":
        return TrigSeriesF2D(_get(cfg, f"{p}.m_max", int, 5),
                             _get(cfg, f"{p}.n_max", int, 5))
    if kind == "const":
        return Deterministic(_get(cfg, f"{p}.value", float))
    if kind == "shared_with_eta":
        if name != "f" or eta_spec is None:
            raise ConfigError("shared_with_eta is only valid for field.f")
        return eta_spec
    raise ConfigError(f"field.{name}.kind={kind!r}: unknown field kind")


@dataclass(eq=False)
class ExperimentConfig:
    experiment: str
    solver: SolverConfig
    eta_spec: object
    f_spec: object
    out_dir: Path
    compare_modes_max: int
    compare_epsilons: tuple
    config_hash: str


def load_experiment_config(path, seed=None, workers=None, out=None
                           ) -> ExperimentConfig:
    """Read and validate a config file; CLI flags override file values."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config_text(text)

    experiment = _get(cfg, "experiment", str, "run")
    if experiment not in ("run", "compare"):
        raise ConfigError(f"experiment={experiment!r}: expected run or compare")

    kind = _get(cfg, "mesh.kind", str)
    if kind == "interval":
        domain = Interval1D(_get(cfg, "mesh.x_lo", float, 0.0),
                            _get(cfg, "mesh.x_hi", float, 1.0))
    elif kind == "rect":
        domain = Rect2D(_get(cfg, "mesh.x_lo", float, 0.0),
                        _get(cfg, "mesh.x_hi", float, 2.0),
                        _get(cfg, "mesh.y_lo", float, 0.0),
                        _get(cfg, "mesh.y_hi", float, 2.0))
    else:
        raise ConfigError(f"mesh.kind={kind!r}: expected interval or rect")

    try:
        solver = SolverConfig(
            domain=domain,
            n_cells=_get(cfg, "mesh.cells", int),
            epsilon=_get(cfg, "solver.epsilon", float),
            n_modes=_get(cfg, "solver.modes", int, 4),
            n_samples=_get(cfg, "solver.samples", int, 100),
            seed=seed if seed is not None else _get(cfg, "solver.seed", int, 0),
            a0=_get(cfg, "solver.a0", float, 1.0),
            workers=(workers if workers is not None
                     else _get(cfg, "solver.workers", int, 1)),
            variant=_get(cfg, "solver.variant", str, "multimodes"),
        )
    except MultimodesError as exc:
        raise ConfigError(str(exc)) from exc

    eta_spec = _field_spec(cfg, "eta")
    f_spec = _field_spec(cfg, "f", eta_spec)
    out_dir = Path(out if out is not None else _get(cfg, "output.dir", str, "out"))

    eps_text = cfg.get("compare.epsilons", "0.2,0.4,0.6,0.8")
    try:
        compare_eps = tuple(float(tok) for tok in eps_text.split(",") if tok)
    except ValueError as exc:
        raise ConfigError(f"compare.epsilons: {exc}") from exc

    canon = "\n".join(f"{k} = {v}" for k, v in sorted(cfg.items()))
    canon += f"\nseed = {solver.seed}\nworkers = {solver.workers}"
    return ExperimentConfig(
        experiment, solver, eta_spec, f_spec, out_dir,
        _get(cfg, "compare.modes_max", int, 5), compare_eps,
        hashlib.sha256(canon.encode()).hexdigest()[:12],
    )


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path, columns, rows, meta: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    comment = " ".join(f"{k}={v}" for k, v in meta.items())
    lines = [f"# {comment}", ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _meta(config_hash: str, seed) -> dict:
    return {
        "config_hash": config_hash,
        "seed": seed,
        "version": f"multimodes-{__version__}",
    }


def _params_hash(*parts) -> str:
    canon = "|".join(str(p) for p in parts)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _write_run_artifacts(out_dir: Path, result, meta: dict) -> None:
    mesh = result.mesh
    pts = mesh.interior_points()
    coord_cols = ["x"] if mesh.dim == 1 else ["x", "y"]
    write_csv(
        out_dir / "psi.csv", ["node_id"] + coord_cols + ["psi"],
        [(i, *pts[i], result.psi.values[i]) for i in range(mesh.n_interior)],
        meta,
    )
    scale = 1.0
    mode_rows = []
    for n, h1 in enumerate(result.mode_h1):
        mode_rows.append((n, scale * h1))
        scale *= result.epsilon
    write_csv(out_dir / "modes.csv", ["n", "weighted_h1_norm"], mode_rows, meta)
    counts = result.counters.as_dict()
    write_csv(
        out_dir / "counters.csv",
        ["factorizations", "solve_pairs", "matvecs", "assemblies"],
        [(counts["factorizations"], counts["solve_pairs"], counts["matvecs"],
          counts["assemblies"])],
        meta,
    )
    write_csv(
        out_dir / "timings.csv", ["stage", "seconds"],
        [(stage, seconds) for stage, seconds in result.timings.items()],
        meta,
    )


def cmd_run(exp: ExperimentConfig) -> int:
    if exp.solver.epsilon_warning:
        print(
            f"warning: epsilon outside proven regime (epsilon="
            f"{exp.solver.epsilon})", file=sys.stderr,
        )
    runner = (run_bruteforce_mc if exp.solver.variant == "bruteforce"
              else run_multimode_mc)
    result = runner(exp.solver, exp.eta_spec, exp.f_spec)
    if result.diverged:
        print(
            f"warning: {result.diverged} samples outside the convergence "
            "regime (last weighted mode exceeded mode 0)", file=sys.stderr,
        )
    _write_run_artifacts(exp.out_dir, result,
                         _meta(exp.config_hash, exp.solver.seed))
    return 0


def table1_grid(h: float = 0.01, n_samples: int = 100_000, seed: int = 0,
                workers: int = 1):
    """Relative L2 errors and their MC standard errors on the (eps, N) grid.

    The mode systems contain no epsilon, so one sweep of N_max modes over one
    sample set serves every cell by reweighting the partial sums.
    """
    n_cells = round(1.0 / h)
    if abs(n_cells * h - 1.0) > 1e-9:
        raise ConfigError(f"h={h} does not divide the unit interval")
    spec = ScalarUniform(0.0, 1.0)
    config = SolverConfig(
        domain=Interval1D(0.0, 1.0), n_cells=n_cells, epsilon=0.0,
        n_modes=max(TABLE1_MODES), n_samples=n_samples, seed=seed,
        workers=workers,
    )
    sweep = run_mode_sweep(config, spec, spec)
    mesh = sweep.mesh
    zero = FieldVector(np.zeros(mesh.n_interior), mesh)
    errors = np.zeros((len(TABLE1_EPSILONS), len(TABLE1_MODES)))
    ses = np.zeros_like(errors)
    for i, eps in enumerate(TABLE1_EPSILONS):
        exact = exact_expectation_1d(eps)
        ref_norm = error_vs_exact(mesh, zero, exact, NormKind.L2)
        for k, n in enumerate(TABLE1_MODES):
            psi = sweep.psi_for(eps, n)
            errors[i, k] = error_vs_exact(mesh, psi, exact, NormKind.RELATIVE_L2)
            se = FieldVector(sweep.se_for(eps, n), mesh)
            ses[i, k] = discrete_norm(mesh, se, NormKind.L2) / ref_norm
    return TABLE1_EPSILONS, TABLE1_MODES, errors, ses, sweep


def cmd_table1(out_dir: Path, n_samples: int, h: float, seed: int,
               workers: int) -> int:
    eps_list, n_list, errors, ses, _ = table1_grid(h, n_samples, seed, workers)
    meta = _meta(_params_hash("table1", h, n_samples), seed)
    cols = ["epsilon"] + [f"err_n{n}" for n in n_list]
    write_csv(out_dir / "table1.csv", cols,
              [(eps, *errors[i]) for i, eps in enumerate(eps_list)], meta)
    write_csv(out_dir / "table1_se.csv",
              ["epsilon"] + [f"se_n{n}" for n in n_list],
              [(eps, *ses[i]) for i, eps in enumerate(eps_list)], meta)
    return 0


def converge_table(h_list, n_modes: int = 10, mode: str = "quadrature",
                   epsilon: float = 0.5, n_samples: int = 100_000,
                   seed: int = 0, workers: int = 1):
    """Per-h H1/L2 errors of the estimator against the closed form, with orders."""
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ConfigError("h list must be strictly decreasing")
    exact = exact_expectation_1d(epsilon)
    spec = ScalarUniform(0.0, 1.0)
    errs_h1, errs_l2 = [], []
    for h in h_list:
        n_cells = round(1.0 / h)
        if abs(n_cells * h - 1.0) > 1e-9:
            raise ConfigError(f"h={h} does not divide the unit interval")
        config = SolverConfig(
            domain=Interval1D(0.0, 1.0), n_cells=n_cells, epsilon=epsilon,
            n_modes=n_modes, n_samples=n_samples, seed=seed, workers=workers,
        )
        if mode == "quadrature":
            psi = quadrature_expectation_1d(config)
        elif mode == "mc":
            psi = run_multimode_mc(config, spec, spec).psi
        else:
            raise ConfigError(f"mode={mode!r}: expected quadrature or mc")
        errs_h1.append(error_vs_exact(psi.mesh, psi, exact, NormKind.H1))
        errs_l2.append(error_vs_exact(psi.mesh, psi, exact, NormKind.L2))
    t_h1 = convergence_orders(list(zip(h_list, errs_h1)))
    t_l2 = convergence_orders(list(zip(h_list, errs_l2)))
    return t_h1, t_l2


def cmd_converge(out_dir: Path, dim: int, h_list, n_modes: int, mode: str,
                 epsilon: float, n_samples: int, seed: int, workers: int) -> int:
    if dim != 1:
        raise ConfigError(
            "converge supports dimension 1 only (the 1D model problem is the "
            "one with a closed-form expectation; use compare for 2D)"
        )
    t_h1, t_l2 = converge_table(h_list, n_modes, mode, epsilon, n_samples,
                                seed, workers)
    meta = _meta(_params_hash("converge", h_list, n_modes, mode, epsilon), seed)
    rows = [
        (r1.parameter, r1.error, r1.order, r2.error, r2.order)
        for r1, r2 in zip(t_h1.rows, t_l2.rows)
    ]
    write_csv(out_dir / "converge.csv",
              ["h", "err_h1", "order_h1", "err_l2", "order_l2"], rows, meta)
    return 0


def compare_grid(exp: ExperimentConfig):
    """Shared-sample comparison of the multi-modes and brute-force estimators.

    One unweighted mode sweep serves every (epsilon, N) cell; each epsilon
    needs its own brute-force run (the full coefficient depends on epsilon).
    Also times a dedicated N=3 multi-modes run against the first brute-force
    run for the wall-clock ratio.
    """
    if not isinstance(exp.solver.domain, Rect2D):
        raise ConfigError("compare needs a 2D (rect) mesh")
    base = exp.solver
    n_max = exp.compare_modes_max
    sweep_cfg = SolverConfig(
        domain=base.domain, n_cells=base.n_cells, epsilon=0.0, n_modes=n_max,
        n_samples=base.n_samples, seed=base.seed, a0=base.a0,
        workers=base.workers,
    )
    sweep = run_mode_sweep(sweep_cfg, exp.eta_spec, exp.f_spec)
    mesh = sweep.mesh

    rows = []
    brute_results = {}
    for eps in exp.compare_epsilons:
        cfg = SolverConfig(
            domain=base.domain, n_cells=base.n_cells, epsilon=eps,
            n_modes=n_max, n_samples=base.n_samples, seed=base.seed,
            a0=base.a0, workers=base.workers,
        )
        brute = run_bruteforce_mc(cfg, exp.eta_spec, exp.f_spec)
        brute_results[eps] = brute
        for n in range(2, n_max + 1):
            dist = discrete_norm(mesh, sweep.psi_for(eps, n),
                                 NormKind.RELATIVE_L2, reference=brute.psi)
            rows.append((eps, n, dist))

    eps0 = exp.compare_epsilons[0]
    timed_cfg = SolverConfig(
        domain=base.domain, n_cells=base.n_cells, epsilon=eps0, n_modes=3,
        n_samples=base.n_samples, seed=base.seed, a0=base.a0,
        workers=base.workers,
    )
    t0 = time.perf_counter()
    multi = run_multimode_mc(timed_cfg, exp.eta_spec, exp.f_spec)
    multi_time = time.perf_counter() - t0
    brute_time = brute_results[eps0].timings["total"]
    return rows, brute_results, multi, brute_time / multi_time, multi_time


def cmd_compare(exp: ExperimentConfig) -> int:
    rows, brute_results, multi, ratio, multi_time = compare_grid(exp)
    meta = _meta(exp.config_hash, exp.solver.seed)
    write_csv(exp.out_dir / "compare.csv",
              ["epsilon", "N", "rel_l2_distance"], rows, meta)
    timing_rows = [
        (f"bruteforce_total_eps{eps}", res.timings["total"])
        for eps, res in brute_results.items()
    ]
    timing_rows.append(("multimodes_n3_total", multi_time))
    timing_rows.append(("ratio_brute_over_multimodes", ratio))
    write_csv(exp.out_dir / "timings.csv", ["stage", "seconds"], timing_rows,
              meta)
    counts = multi.counters.as_dict()
    write_csv(
        exp.out_dir / "counters.csv",
        ["factorizations", "solve_pairs", "matvecs", "assemblies"],
        [(counts["factorizations"], counts["solve_pairs"], counts["matvecs"],
          counts["assemblies"])],
        meta,
    )
    print(f"wall-time ratio brute/multimodes (N=3): {ratio:.2f}")
    return 0


def cmd_kl(out_dir: Path, kernel_m: int, ell: float, lo: float, hi: float,
           n_nodes: int, k_max: int, mean: float, seed: int, workers: int,
           run_solver: bool, run_cells: int, run_modes: int,
           run_samples: int) -> int:
    kernel = ExpAbs(kernel_m, ell)
    domain = Interval1D(lo, hi)
    dec = kl_decompose(kernel, domain, n_nodes, k_max)
    weak = kl_to_weak_form(mean, dec)
    meta = _meta(_params_hash("kl", kernel_m, ell, lo, hi, n_nodes, k_max), seed)
    write_csv(out_dir / "kl.csv", ["k", "lambda_k"],
              [(k + 1, dec.lambdas[k]) for k in range(k_max)], meta)
    print(f"kernel: exp(-|x-y|^{kernel_m}/{ell}) on ({lo}, {hi})")
    print(f"a0: constant {mean}")
    print(f"epsilon = sqrt(lambda_1) = {weak.epsilon!r}")
    print(f"zeta: {k_max} retained modes, law={weak.eta_spec.law}")
    print(f"spectrum sum (all {len(dec.spectrum)} computed) = "
          f"{float(dec.spectrum.sum())!r}")
    if run_solver:
        config = SolverConfig(
            domain=domain, n_cells=run_cells, epsilon=weak.epsilon,
            n_modes=run_modes, n_samples=run_samples, seed=seed, a0=weak.a0,
            workers=workers,
        )
        result = run_multimode_mc(config, weak.eta_spec, Deterministic(1.0))
        _write_run_artifacts(out_dir, result, meta)
    return 0


def _parse_h_list(text: str):
    try:
        return tuple(float(tok) for tok in text.split(",") if tok)
    except ValueError as exc:
        raise ConfigError(f"--h-list: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multimodes",
        description="Multi-modes Monte Carlo finite element experiments",
    )
    parser.add_argument("--seed", type=int, default=None,
                        help="override the sampling seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="sample-loop worker count (default 1)")
    parser.add_argument("--out", default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a config file")
    p.add_argument("config")

    p = sub.add_parser("table1", help="1D relative-error grid over (epsilon, N)")
    p.add_argument("--h", type=float, default=0.01)
    p.add_argument("--samples", type=int, default=100_000)

    p = sub.add_parser("converge", help="1D mesh-refinement error table")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--h-list", default="0.2,0.1,0.05,0.025")
    p.add_argument("--modes", type=int, default=10)
    p.add_argument("--mode", choices=("quadrature", "mc"), default="quadrature")
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--samples", type=int, default=100_000)

    p = sub.add_parser("compare", help="2D multi-modes vs brute-force comparison")
    p.add_argument("config")

    p = sub.add_parser("kl", help="KL spectrum and weak-form summary")
    p.add_argument("--kernel-m", type=int, choices=(1, 2), default=1)
    p.add_argument("--ell", type=float, default=0.5)
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--nodes", type=int, default=400)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--mean", type=float, default=1.0)
    p.add_argument("--run", action="store_true",
                   help="also run the solver on the constructed weak form")
    p.add_argument("--cells", type=int, default=50)
    p.add_argument("--modes", type=int, default=4)
    p.add_argument("--samples", type=int, default=200)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    seed = args.seed if args.seed is not None else 0
    workers = args.workers if args.workers is not None else 1
    out_dir = Path(args.out) if args.out is not None else Path("out")
    try:
        if args.command == "run":
            exp = load_experiment_config(args.config, args.seed, args.workers,
                                         args.out)
            return cmd_run(exp)
        if args.command == "table1":
            return cmd_table1(out_dir, args.samples, args.h, seed, workers)
        if args.command == "converge":
            return cmd_converge(out_dir, args.dim, _parse_h_list(args.h_list),
                                args.modes, args.mode, args.epsilon,
                                args.samples, seed, workers)
        if args.command == "compare":
            exp = load_experiment_config(args.config, args.seed, args.workers,
                                         args.out)
            return cmd_compare(exp)
        if args.command == "kl":
            return cmd_kl(out_dir, args.kernel_m, args.ell, args.lo, args.hi,
                          args.nodes, args.k_max, args.mean, seed, workers,
                          args.run, args.cells, args.modes, args.samples)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MultimodesError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


def console_main() -> None:
    sys.exit(main())

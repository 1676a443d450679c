"""Command-line interface: synth, unmix, eval, sweep, bench and replay."""

from __future__ import annotations

import argparse
import logging
import multiprocessing
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from .bench import run_bench, write_bench_csv
from .config import (
    DEFAULT_LOG_DIR,
    DEFAULT_WORKERS,
    USER_CONFIG_PATH,
    SolverConfig,
    config_defaults_table,
    load_user_config,
    solver_overrides_from_user_config,
)
from .core import Matrix, RejectedInputError, column_sum_to_one
from .io import (
    SpectralCube,
    read_cube,
    read_guidance_csv,
    read_matrix_csv,
    write_abundance_ppm,
    write_cube,
    write_error_ppm,
    write_guidance_csv,
    write_guidance_ppm,
    write_matrix_csv,
    write_report,
    write_trace_csv,
)
from .manifest import MANIFEST_NAME, RunManifest, manifest_path_for, write_manifest
from .metrics import evaluate
from .progress import ProgressReporter
from .solver import SolverError, solve
from .synth import SceneSpec, generate_scene
from .utils import atomic_write_text, format_real, geometric_grid, parse_int_list

CUBE_FILE = "cube.hsc"
M_FILE = "M.csv"
A_FILE = "A.csv"
H_FILE = "h.csv"
TRACE_FILE = "trace.csv"
ABUNDANCE_PPM = "abundance.ppm"
GUIDANCE_PPM = "guidance.ppm"
SWEEP_HEADER = "lambda,mean_sad,mean_rmse"

_LOSS_FLAGS = {"fro": "frobenius", "l21": "l21", "l2p": "l2p"}
_NORM_FLAGS = {"l1": "l1_rows", "l2": "l2_rows"}
_INIT_FLAGS = {"random": "random", "pixel": "pixel_sample"}


class UsageError(Exception):
    """Bad command-line usage; exits with status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


@dataclass
class RunContext:
    argv: list[str]
    user_cfg: dict[str, str]
    logger: logging.Logger


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("solver")
    group.add_argument("--k", type=int, default=None, help="Number of endmembers")
    group.add_argument("--lambda", dest="lam", type=float, default=None, help="Sparsity weight")
    group.add_argument("--loss", choices=sorted(_LOSS_FLAGS), default=None)
    group.add_argument("--p", type=float, default=None, help="Exponent of the l2p loss")
    group.add_argument("--sparsity", choices=["none", "fixed", "learned"], default=None)
    group.add_argument("--fixed-p", type=float, default=None, help="lp exponent for --sparsity fixed")
    group.add_argument("--sigma", type=float, default=None, help="Heuristic guidance bandwidth")
    group.add_argument("--xi", type=float, default=None)
    group.add_argument("--eps-guard", type=float, default=None)
    group.add_argument("--phi", type=float, default=None)
    group.add_argument("--q", type=int, default=None, help="Guidance refresh cadence")
    group.add_argument("--inner-tol", type=float, default=None)
    group.add_argument("--outer-tol", type=float, default=None)
    group.add_argument("--max-inner", type=int, default=None)
    group.add_argument("--max-outer", type=int, default=None)
    group.add_argument("--seed", type=int, default=None)
    group.add_argument("--norm", choices=sorted(_NORM_FLAGS), default=None)
    group.add_argument("--init", choices=sorted(_INIT_FLAGS), default=None)
    group.add_argument("--inner-stop", choices=["cadence", "tolerance"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rrlbs-unmix",
        description="Robust guidance-weighted NMF for hyperspectral unmixing",
        epilog=config_defaults_table(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--log-dir", default=None, help="Log directory")
    parser.add_argument("--verbose", action="store_true", help="Log every inner iteration")
    parser.add_argument("--config", default=None, help=f"Config file (default {USER_CONFIG_PATH})")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="Generate a synthetic scene with ground truth")
    synth.add_argument("--width", type=int, default=20)
    synth.add_argument("--height", type=int, default=20)
    synth.add_argument("--channels", type=int, default=30)
    synth.add_argument("--endmembers", type=int, default=3)
    synth.add_argument("--noise-sigma", type=float, default=0.01)
    synth.add_argument("--outlier-fraction", type=float, default=0.0)
    synth.add_argument("--outlier-kind", choices=["blank", "heavy_noise"], default="blank")
    synth.add_argument("--blur-radius", type=int, default=1)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="Output directory")
    synth.set_defaults(handler=cmd_synth)

    unmix = sub.add_parser("unmix", help="Unmix a cube")
    unmix.add_argument("--input", required=True, help="HSC1 cube file")
    unmix.add_argument("--out", required=True, help="Output directory")
    _add_solver_flags(unmix)
    unmix.set_defaults(handler=cmd_unmix)

    ev = sub.add_parser("eval", help="Score an estimate against ground truth")
    ev.add_argument("--truth", required=True, help="Directory holding M.csv and A.csv")
    ev.add_argument("--est", required=True, help="Directory holding M.csv and A.csv")
    ev.add_argument("--out", required=True, help="Report file")
    ev.add_argument("--error-ppm", default=None, help="Also write a per-pixel error image")
    ev.add_argument(
        "--raw-abundance",
        action="store_true",
        help="Score A as stored instead of column-normalized to sum 1",
    )
    ev.set_defaults(handler=cmd_eval)

    sweep = sub.add_parser("sweep", help="Bracket lambda on a geometric grid")
    sweep.add_argument("--input", required=True, help="HSC1 cube file")
    sweep.add_argument("--truth", required=True, help="Ground-truth directory")
    sweep.add_argument("--lambda-min", type=float, required=True)
    sweep.add_argument("--lambda-max", type=float, required=True)
    sweep.add_argument("--steps", type=int, default=5)
    sweep.add_argument(
        "--refine", type=int, default=0, help="Extra points between the best point's neighbours"
    )
    sweep.add_argument("--workers", type=int, default=None)
    sweep.add_argument("--out", required=True, help="Summary CSV")
    _add_solver_flags(sweep)
    sweep.set_defaults(handler=cmd_sweep)

    bench = sub.add_parser("bench", help="Time l21 against Frobenius iterations")
    bench.add_argument("--sizes", default="625,2500,10000", help="Pixel counts (squares)")
    bench.add_argument("--channels", type=int, default=100)
    bench.add_argument("--endmembers", type=int, default=4)
    bench.add_argument("--iterations", type=int, default=20)
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--out", required=True, help="Timing CSV")
    _add_solver_flags(bench)
    bench.set_defaults(handler=cmd_bench)

    replay = sub.add_parser("replay", help="Re-run a command from its manifest")
    replay.add_argument("manifest", help="manifest.txt written by an earlier run")
    replay.set_defaults(handler=cmd_replay)
    return parser


def configure_logging(log_dir: Path, verbose: bool = False) -> logging.Logger:
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / "rrlbs_unmix.log"
    logger = logging.getLogger("rrlbs_unmix")
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    formatter = logging.Formatter("%(asctime)s %(levelname)s %(message)s")
    file_handler = logging.FileHandler(log_file)
    file_handler.setFormatter(formatter)
    # ProgressReporter swaps this handler for a RichHandler while a bar is live.
    stream_handler = logging.StreamHandler(sys.stdout)
    stream_handler.setFormatter(formatter)
    stream_handler.set_name("stream")
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()
    logger.addHandler(file_handler)
    logger.addHandler(stream_handler)
    return logger


# ----------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------


def resolve_solver_config(args: argparse.Namespace, user_cfg: dict[str, str]) -> SolverConfig:
    """CLI flags > config file > dataclass defaults."""
    config = SolverConfig().with_overrides(**solver_overrides_from_user_config(user_cfg))
    config = config.with_overrides(
        k=args.k,
        lam=args.lam,
        loss=_LOSS_FLAGS.get(args.loss) if args.loss else None,
        p=args.p,
        sparsity=args.sparsity,
        fixed_p=args.fixed_p,
        sigma=args.sigma,
        xi=args.xi,
        eps_guard=args.eps_guard,
        phi=args.phi,
        q=args.q,
        inner_tol=args.inner_tol,
        outer_tol=args.outer_tol,
        max_inner=args.max_inner,
        max_outer=args.max_outer,
        seed=args.seed,
        norm_mode=_NORM_FLAGS.get(args.norm) if args.norm else None,
        init=_INIT_FLAGS.get(args.init) if args.init else None,
        inner_stop=args.inner_stop,
    )
    return config.validate()


def _config_strings(values: dict[str, object]) -> dict[str, str]:
    return {
        key: format_real(value) if isinstance(value, float) else str(value)
        for key, value in values.items()
    }


def _read_factors(directory: Path) -> tuple[Matrix, Matrix]:
    return read_matrix_csv(directory / M_FILE), read_matrix_csv(directory / A_FILE)


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace, run: RunContext) -> int:
    spec = SceneSpec(
        width=args.width,
        height=args.height,
        channels=args.channels,
        endmembers=args.endmembers,
        noise_sigma=args.noise_sigma,
        outlier_fraction=args.outlier_fraction,
        outlier_kind=args.outlier_kind,
        blur_radius=args.blur_radius,
        seed=args.seed,
    ).validate()
    cube, truth = generate_scene(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = [
        write_cube(cube, out / CUBE_FILE),
        write_matrix_csv(truth.m_true, out / M_FILE),
        write_matrix_csv(truth.a_true, out / A_FILE),
        write_guidance_csv(truth.h_true, out / H_FILE),
    ]
    manifest = RunManifest(
        subcommand="synth",
        argv=run.argv,
        seed=spec.seed,
        config=_config_strings(asdict(spec)),
        results={"outlier_channels": ",".join(str(c) for c in truth.outlier_channels)},
    )
    write_manifest(manifest, out / MANIFEST_NAME, artifacts, run.logger)
    run.logger.info("Scene written to %s", out)
    return 0


def cmd_unmix(args: argparse.Namespace, run: RunContext) -> int:
    config = resolve_solver_config(args, run.user_cfg)
    cube = read_cube(args.input)
    run.logger.info(
        "Unmixing %s (L=%d, %dx%d) with K=%d, loss=%s, sparsity=%s, lambda=%s",
        args.input,
        cube.channels,
        cube.width,
        cube.height,
        config.k,
        config.loss,
        config.sparsity,
        config.lam,
    )
    result = solve(cube, config, logger=run.logger)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = [
        write_matrix_csv(result.m, out / M_FILE),
        write_matrix_csv(result.a, out / A_FILE),
        write_guidance_csv(result.h, out / H_FILE),
        write_trace_csv(result.trace, out / TRACE_FILE),
        write_abundance_ppm(result.a, cube.width, cube.height, out / ABUNDANCE_PPM),
        write_guidance_ppm(result.h, cube.width, cube.height, out / GUIDANCE_PPM),
    ]
    final = result.trace.records[-1].objective if len(result.trace) else float("nan")
    manifest = RunManifest(
        subcommand="unmix",
        argv=run.argv,
        seed=config.seed,
        config=_config_strings(config.as_dict()),
        inputs={"cube": str(args.input)},
        results={"iterations": str(len(result.trace)), "final_objective": format_real(final)},
    )
    write_manifest(manifest, out / MANIFEST_NAME, artifacts, run.logger)
    run.logger.info("Done: %d iterations, objective %s", len(result.trace), format_real(final))
    return 0


def cmd_eval(args: argparse.Namespace, run: RunContext) -> int:
    truth_dir, est_dir = Path(args.truth), Path(args.est)
    truth = _read_factors(truth_dir)
    est = _read_factors(est_dir)
    h_true = h_est = None
    if (truth_dir / H_FILE).exists() and (est_dir / H_FILE).exists():
        h_true = read_guidance_csv(truth_dir / H_FILE)
        h_est = read_guidance_csv(est_dir / H_FILE)
    report = evaluate(
        truth, est, sum_to_one=not args.raw_abundance, h_est=h_est, h_true=h_true
    )
    out = Path(args.out)
    artifacts = [write_report(report, out)]
    if args.error_ppm:
        cube_path = truth_dir / CUBE_FILE
        if not cube_path.exists():
            raise UsageError(f"--error-ppm needs {cube_path} for the image size")
        cube = read_cube(cube_path)
        a_true, a_est = truth[1], est[1][list(report.assignment)]
        if not args.raw_abundance:
            a_true, a_est = column_sum_to_one(a_true), column_sum_to_one(a_est)
        artifacts.append(
            write_error_ppm(a_true, a_est, cube.width, cube.height, Path(args.error_ppm))
        )
    manifest = RunManifest(
        subcommand="eval",
        argv=run.argv,
        config={"sum_to_one": str(not args.raw_abundance).lower()},
        inputs={"truth": str(truth_dir), "est": str(est_dir)},
    )
    write_manifest(manifest, manifest_path_for(out, is_dir=False), artifacts, run.logger)
    run.logger.info(
        "mean SAD %.6f rad (%.3f deg), mean RMSE %.6f",
        report.mean_sad,
        report.mean_sad_degrees,
        report.mean_rmse,
    )
    return 0


SweepTask = tuple[float, SolverConfig, SpectralCube, Matrix, Matrix]


def _sweep_point(task: SweepTask) -> tuple[float, float, float]:
    lam, config, cube, m_true, a_true = task
    result = solve(cube, config.with_overrides(lam=lam))
    report = evaluate((m_true, a_true), (result.m, result.a))
    return lam, report.mean_sad, report.mean_rmse


def _run_sweep_points(
    lams: list[float],
    config: SolverConfig,
    cube: SpectralCube,
    truth: tuple[Matrix, Matrix],
    workers: int,
    logger: logging.Logger,
) -> list[tuple[float, float, float]]:
    tasks = [(lam, config, cube, truth[0], truth[1]) for lam in lams]
    rows: list[tuple[float, float, float]] = []
    with ProgressReporter(len(tasks), logger, "Sweep", "points") as progress:
        for lam in lams:
            progress.add_task(repr(lam), f"lambda={format_real(lam)}")
        if workers <= 1:
            results = map(_sweep_point, tasks)
            for row in results:
                rows.append(row)
                progress.complete(repr(row[0]), f"mean SAD {row[1]:.6f}")
        else:
            with multiprocessing.Pool(processes=workers) as pool:
                for row in pool.imap_unordered(_sweep_point, tasks):
                    rows.append(row)
                    progress.complete(repr(row[0]), f"mean SAD {row[1]:.6f}")
    return rows


def cmd_sweep(args: argparse.Namespace, run: RunContext) -> int:
    if args.lambda_min >= args.lambda_max:
        raise UsageError(
            f"--lambda-min ({args.lambda_min}) must be below --lambda-max ({args.lambda_max})"
        )
    if args.lambda_min <= 0:
        raise UsageError("--lambda-min must be positive for a geometric grid")
    if args.steps < 1 or args.refine < 0:
        raise UsageError("--steps must be >= 1 and --refine >= 0")
    config = resolve_solver_config(args, run.user_cfg)
    workers = args.workers or int(run.user_cfg.get("workers", DEFAULT_WORKERS))
    cube = read_cube(args.input)
    truth = _read_factors(Path(args.truth))

    grid = geometric_grid(args.lambda_min, args.lambda_max, args.steps)
    rows = _run_sweep_points(grid, config, cube, truth, workers, run.logger)
    if args.refine > 0 and len(grid) > 1:
        extra = _refinement_grid(grid, rows, args.refine)
        rows.extend(_run_sweep_points(extra, config, cube, truth, workers, run.logger))
    rows.sort(key=lambda row: row[0])

    out = Path(args.out)
    lines = [SWEEP_HEADER]
    lines.extend(",".join(format_real(v) for v in row) for row in rows)
    atomic_write_text(out, "\n".join(lines) + "\n")
    best = min(rows, key=lambda row: (row[1], row[0]))
    manifest = RunManifest(
        subcommand="sweep",
        argv=run.argv,
        seed=config.seed,
        config=_config_strings(config.as_dict()),
        inputs={"cube": str(args.input), "truth": str(args.truth)},
        results={"best_lambda": format_real(best[0])},
    )
    write_manifest(manifest, manifest_path_for(out, is_dir=False), [out], run.logger)
    run.logger.info("Best lambda %s (mean SAD %.6f)", format_real(best[0]), best[1])
    return 0


def _refinement_grid(
    grid: list[float], rows: list[tuple[float, float, float]], refine: int
) -> list[float]:
    """*refine* geometric points strictly between the neighbours of the best λ."""
    by_lam = {row[0]: row[1] for row in rows}
    best = min(range(len(grid)), key=lambda i: (by_lam[grid[i]], i))
    low = grid[max(best - 1, 0)]
    high = grid[min(best + 1, len(grid) - 1)]
    inner = geometric_grid(low, high, refine + 2)[1:-1]
    return [lam for lam in inner if lam not in by_lam]


def cmd_bench(args: argparse.Namespace, run: RunContext) -> int:
    try:
        sizes = parse_int_list(args.sizes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    config = resolve_solver_config(args, run.user_cfg)
    rows = run_bench(
        sizes,
        channels=args.channels,
        endmembers=args.endmembers,
        iterations=args.iterations,
        repeats=args.repeats,
        config=config,
        seed=config.seed,
        logger=run.logger,
    )
    out = write_bench_csv(rows, Path(args.out))
    for row in rows:
        run.logger.info(
            "N=%d %s: %.3f ms/iteration (x%.2f of frobenius)",
            row.n_pixels,
            row.loss,
            row.seconds_per_iteration * 1e3,
            row.ratio_to_fro,
        )
    manifest = RunManifest(
        subcommand="bench",
        argv=run.argv,
        seed=config.seed,
        config=_config_strings(config.as_dict()),
        reproducible=False,
    )
    write_manifest(manifest, manifest_path_for(out, is_dir=False), [out], run.logger)
    return 0


def cmd_replay(args: argparse.Namespace, run: RunContext) -> int:
    path = Path(args.manifest)
    manifest = RunManifest.load(path)
    if manifest.subcommand == "replay":
        raise RejectedInputError("a replay manifest cannot be replayed")
    run.logger.info("Replaying: %s", " ".join(manifest.argv))
    code = main(manifest.argv)
    if code != 0:
        return code
    if not manifest.reproducible:
        run.logger.info("%s output is timing data; checksums not compared", manifest.subcommand)
        return 0
    mismatched = manifest.verify(path, run.logger)
    if mismatched:
        run.logger.error("Replay differs from the recorded run: %s", ", ".join(mismatched))
        return 2
    run.logger.info("Replay reproduced %d artifact(s)", len(manifest.checksums))
    return 0


# ----------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1

    # Priority (highest to lowest): CLI args > config file > hardcoded defaults.
    user_cfg = load_user_config(Path(args.config).expanduser() if args.config else USER_CONFIG_PATH)
    log_dir = Path(args.log_dir or user_cfg.get("log_dir") or DEFAULT_LOG_DIR).expanduser()
    logger = configure_logging(log_dir, args.verbose)
    run = RunContext(argv=argv, user_cfg=user_cfg, logger=logger)

    try:
        return args.handler(args, run)
    except UsageError as exc:
        logger.error("Usage error: %s", exc)
        return 1
    except RejectedInputError as exc:
        logger.error("Error: %s", exc)
        return 1
    except SolverError as exc:
        logger.error("Solver failed: %s (%d trace records kept)", exc, len(exc.trace))
        return 2
    except OSError as exc:
        logger.error("I/O error: %s", exc)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.exception("Unhandled error: %s", exc)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""
Main entry point for the coefficient inversion pipeline
"""
import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

# Handle imports for both direct execution and packaged execution
if __package__ is None or __package__ == "":
    # Add parent directory to Python path for direct script execution
    package_root = str(Path(__file__).resolve().parent.parent)
    sys.path.insert(0, package_root)
    from src.utils.config import Config
    from src.utils.definitions import Definitions
    from src.utils.errors import ConfigError, InversionError
    from src.utils.logger import Logger
else:
    # Use relative imports when running as a package
    from .utils.config import Config
    from .utils.definitions import Definitions
    from .utils.errors import ConfigError, InversionError
    from .utils.logger import Logger

try:
    from src.version import __version__ as build_version
except ImportError:
    build_version = "1.0.0"

THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def limit_threads(threads):
    """Bound BLAS/OpenMP pools; effective only before numpy is first imported"""
    if threads is None:
        return
    if threads < 1:
        raise ConfigError("--threads must be at least 1", keys=["--threads"])
    for name in THREAD_VARIABLES:
        os.environ[name] = str(threads)


@dataclass
class RunContext:
    """Everything the stage commands share"""
    config: object
    geometry: object
    src: object
    grid: object
    axis: object
    mesh: object
    scenario: object
    store: object
    logger: object
    seed: int
    dump_fields: bool = False
    plots: bool = False


def build_context(config, out_dir, seed, logger, dump_fields=False, plots=False):
    """Geometry, inversion grid, time axis and coarse mesh from a validated config"""
    from src.geometry.domain import SurveyGeometry
    from src.geometry.grid import TimeAxis, build_grid
    from src.geometry.quadtree import QuadtreeCoeffMesh
    from src.scenarios.scenario import Scenario
    from src.solvers.source import SourceSpec
    from src.storage.result_store import ResultStore

    geometry = SurveyGeometry.from_config(config)
    grid = build_grid(geometry.G, config.get("grid.spacing"))
    axis = TimeAxis.for_grid(config.get("time.final_time"), grid, config.get("time.cfl_safety"),
                             config.get("time.time_step"))
    mesh = QuadtreeCoeffMesh.uniform(geometry.omega, config.get("grid.coarse_cells"), 1.0,
                                     config.get("grid.max_level"))
    scenario = Scenario.from_config(config, seed=seed)
    return RunContext(config=config, geometry=geometry, src=SourceSpec(geometry.z0, config.get("source.omega")),
                      grid=grid, axis=axis, mesh=mesh, scenario=scenario,
                      store=ResultStore(out_dir, logger=logger), logger=logger, seed=scenario.seed,
                      dump_fields=dump_fields, plots=plots)


def report_row(ctx, stage, mesh, label=""):
    """One row of a report table: computed figures next to the scenario's"""
    from src.inversion.imaging import report_metrics

    metrics = report_metrics(mesh, ctx.geometry, ctx.scenario.background)
    inclusions = ctx.scenario.placed_inclusions(ctx.geometry)
    true_eps = max((ctx.scenario.relative_epsilon(inc) for inc in inclusions), default=1.0)
    measured = [inc.measured_n for inc in inclusions if inc.measured_n is not None]
    row = {"stage": stage, "label": label or ctx.scenario.name}
    row.update(metrics.as_row())
    row["eps_true"] = true_eps
    row["true_depth"] = min((inc.depth for inc in inclusions if inc.depth is not None), default="")
    row["measured_n"] = measured[0] if measured else ""
    return row


def cmd_synth(ctx):
    """Total and reference traces on Gamma from a grid finer than the inversion grid, plus the truth"""
    from src.geometry.grid import TimeAxis
    from src.geometry.quadtree import QuadtreeCoeffMesh
    from src.scenarios.scenario import build_truth, synthesize_measurements
    from src.solvers.snapshots import SnapshotWriter

    config = ctx.config
    fine = ctx.grid.refined(config.get("grid.synthesis_refinement"))
    axis = TimeAxis.for_grid(config.get("time.final_time"), fine, config.get("time.cfl_safety"),
                             config.get("time.time_step"))
    snapshot = None
    if ctx.dump_fields:
        writer = SnapshotWriter(ctx.store.path("fields"), fine, every=max(axis.steps // 20, 1), logger=ctx.logger)
        snapshot = writer.hook()

    eps_max = config.get("stage1.eps_max")
    result = synthesize_measurements(ctx.scenario, ctx.geometry, fine, axis, ctx.src, eps_max=eps_max,
                                     snapshot=snapshot)
    levels = 2 ** config.get("grid.max_level")
    finest = QuadtreeCoeffMesh.uniform(ctx.geometry.omega, [n * levels for n in config.get("grid.coarse_cells")],
                                       1.0, config.get("grid.max_level"))
    truth = build_truth(ctx.scenario, ctx.geometry, finest, eps_max)

    store = ctx.store
    store.save_traces("traces_total.csv", result.total)
    store.save_traces("traces_reference.csv", result.reference)
    store.save_cells("truth_cells.csv", truth)
    sub, slices = fine.subgrid(ctx.geometry.omega)
    store.save_grid_vtk("truth.vtk", sub, result.truth[slices], field="eps")
    if ctx.dump_fields:
        for path in writer.paths:
            store.register(path)
    if ctx.plots:
        store.save_figure("figures/truth.png", truth, "truth")
    return result


def cmd_stage1(ctx, total, reference):
    """Preprocess the Gamma traces and run the globally convergent stage"""
    import numpy as np

    from src.inversion.globally_convergent import GcaConfig, GloballyConvergentSolver
    from src.preprocessing.pipeline import PreprocessConfig, preprocess_measurements
    from src.solvers.wave import WaveSolver

    config = ctx.config
    wave = WaveSolver(cfl_safety=config.get("time.cfl_safety"), logger=ctx.logger)
    gamma = ctx.geometry.region(Definitions.GAMMA)
    incident = wave.simulate_forward(np.ones(ctx.grid.shape), ctx.grid, ctx.axis, ctx.src,
                                     record=[gamma]).traces[Definitions.GAMMA]
    g = preprocess_measurements(total, reference, incident, PreprocessConfig.from_config(config))

    solver = GloballyConvergentSolver(ctx.geometry, ctx.grid, ctx.axis, ctx.src, ctx.mesh,
                                      GcaConfig.from_config(config), wave=wave, logger=ctx.logger)
    result = solver.run_stage1(g)

    store = ctx.store
    store.save_traces("traces_gamma.csv", g)
    store.save_cells("eps_glob_cells.csv", result.epsilon)
    store.save_mesh_vtk("eps_glob.vtk", result.epsilon)
    store.save_rows("stage1_history.csv", result.history, ["n", "i", "eps_norm", "eps_max", "residual"])
    store.save_rows("report_stage1.csv", [report_row(ctx, "1", result.epsilon)])
    if ctx.plots:
        store.save_figure("figures/eps_glob.png", result.epsilon, "stage 1")
    return g, result


def cmd_stage2(ctx, g, eps_glob):
    """Adaptive Tikhonov refinement starting from eps_glob"""
    from src.inversion.adaptive import AdaptiveSolver
    from src.inversion.imaging import threshold_image
    from src.inversion.tikhonov import TikhonovConfig
    from src.solvers.wave import WaveSolver

    config = ctx.config
    safety = config.get("time.cfl_safety")
    solver = AdaptiveSolver(ctx.geometry, ctx.grid, config.get("time.final_time"), ctx.src,
                            TikhonovConfig.from_config(config), cfl_safety=safety,
                            max_step=config.get("time.time_step"),
                            wave=WaveSolver(cfl_safety=safety, logger=ctx.logger), logger=ctx.logger)
    result = solver.run_stage2(eps_glob, g)

    store = ctx.store
    rows = [record.as_row() for record in result.records]
    store.save_rows("stage2_history.csv", rows)
    store.save_rows("stage2_iterations.csv", result.iterations)
    for record in result.records:
        store.save_mesh_vtk(f"mesh_{record.index}.vtk", record.mesh)
        if ctx.plots:
            store.save_figure(f"figures/mesh_{record.index}.png", record.mesh, f"mesh {record.index}")
    store.save_mesh_vtk("eps_final.vtk", result.epsilon)
    store.save_cells("eps_final_cells.csv", result.epsilon)
    store.save_rows("report_stage2.csv",
                    [report_row(ctx, "2", record.mesh, f"mesh {record.index}") for record in result.records])
    if ctx.plots:
        store.save_figure("figures/eps_final_threshold.png", threshold_image(result.epsilon), "thresholded")
    return result


def cmd_full(ctx):
    """Synthesis, stage 1 and stage 2 in one process"""
    synth = timed(ctx, "synth", cmd_synth, ctx)
    g, stage1 = timed(ctx, "stage1", cmd_stage1, ctx, synth.total, synth.reference)
    return timed(ctx, "stage2", cmd_stage2, ctx, g, stage1.epsilon)


def timed(ctx, stage, func, *args):
    start = time.perf_counter()
    result = func(*args)
    ctx.store.record_timing(stage, time.perf_counter() - start)
    return result


def parse_args(argv=None):
    parser = argparse.ArgumentParser(prog="coeffinv",
                                     description="Two-stage dielectric coefficient reconstruction from "
                                                 "time-domain boundary traces")
    parser.add_argument("--config", help="JSON configuration file (defaults apply when omitted)")
    parser.add_argument("--out", default="results", help="Output directory")
    parser.add_argument("--seed", type=int, help="Noise seed (overrides scenario.seed)")
    parser.add_argument("--threads", type=int, help="Upper bound on BLAS/OpenMP threads")
    parser.add_argument("--stage", default=Definitions.STAGE_FULL, choices=Definitions.get_supported_stages())
    parser.add_argument("--dump-fields", action="store_true", help="Write field snapshots during synthesis")
    parser.add_argument("--plots", action="store_true", help="Write PNG figures")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    parser.add_argument("--traces", help="Directory holding the trace files of an earlier stage (default --out)")
    parser.add_argument("--glob", help="Stage-1 cell file for --stage two (default <traces>/eps_glob_cells.csv)")
    return parser.parse_args(argv)


def run(args, logger):
    """Execute the selected stage; returns the stage result"""
    from src.storage.result_store import read_cells_csv, read_traces_csv

    config = Config(args.config)
    ctx = build_context(config, args.out, args.seed, logger.get_logger(), args.dump_fields, args.plots)
    logger.info(f"coeffinv {build_version}: stage {args.stage}, config digest {config.digest()[:12]}")
    source = Path(args.traces or args.out)
    dim = ctx.geometry.dim

    if args.stage == Definitions.STAGE_SYNTH:
        result = timed(ctx, "synth", cmd_synth, ctx)
    elif args.stage == Definitions.STAGE_ONE:
        total = read_traces_csv(source / "traces_total.csv", dim)
        reference = read_traces_csv(source / "traces_reference.csv", dim)
        result = timed(ctx, "stage1", cmd_stage1, ctx, total, reference)
    elif args.stage == Definitions.STAGE_TWO:
        g = read_traces_csv(source / "traces_gamma.csv", dim)
        glob_path = Path(args.glob) if args.glob else source / "eps_glob_cells.csv"
        eps_glob = read_cells_csv(glob_path, ctx.geometry.omega, config.get("grid.max_level"))
        result = timed(ctx, "stage2", cmd_stage2, ctx, g, eps_glob)
    else:
        result = cmd_full(ctx)

    ctx.store.write_manifest(config, ctx.seed, notes={
        "stage": args.stage,
        "gradient": "scalar model: the vector-model xi term of the derivative is zero",
    })
    return result


def error_payload(error):
    details = getattr(error, "details", {}) or {}
    return json.dumps({"error": str(error), "type": type(error).__name__, "details": details}, default=str)


def main(argv=None):
    """Command-line entry point; returns the process exit code"""
    args = parse_args(argv)
    logger = None
    try:
        limit_threads(args.threads)
        logger = Logger(name="coeffinv", log_level=logging.DEBUG if args.verbose else logging.INFO,
                        log_dir=Path(args.out) / "logs")
        run(args, logger)
        return 0
    except ConfigError as e:
        print(error_payload(e), file=sys.stderr)
        return 2
    except InversionError as e:
        if logger:
            logger.error(f"Run failed: {e}")
        print(error_payload(e), file=sys.stderr)
        return 1
    except Exception as e:
        if logger:
            logger.error(f"Unexpected error: {e}")
        print(error_payload(e), file=sys.stderr)
        return 1
    finally:
        if logger:
            logger.close()


if __name__ == "__main__":
    sys.exit(main())

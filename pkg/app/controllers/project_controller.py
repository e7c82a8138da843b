"""
Project Controller - CLI Layer for Markovian projection
Writes the local-volatility surface of an MGD and optionally checks it by
simulation
"""

import logging
import sys

import numpy as np

from ..config import MixvolSettings, RunConfig
from ..errors import ExitCode, PreconditionError
from ..mappers.report_mapper import ReportMapper
from ..mappers.table_mapper import TableMapper
from ..repositories.table_repository import TableRepository
from .dependencies import emit, get_projection_service, load_descriptor, parse_grid
from .router import INPUT, OUTPUT, CommandRouter, argument

logger = logging.getLogger(__name__)

router = CommandRouter()


@router.command(
    "project",
    summary="Project an MGD onto local volatility",
    description="Local variance as the density-weighted average of component variance rates on a (t, x) grid",
    arguments=(
        argument("--model", role=INPUT, required=True, help="MGD JSON"),
        argument("--out", role=OUTPUT, help="Surface CSV, rows t and columns x (default: stdout)"),
        argument("--times", help="Surface times start:stop:step (default: 20 steps after t0)"),
        argument("--x-min", type=float, help="Lowest price (default: forward at 6 sd below)"),
        argument("--x-max", type=float, help="Highest price (default: forward at 6 sd above)"),
        argument("--x-points", type=int, default=101, help="Prices on the log-spaced x grid"),
        argument("--as-variance", action="store_true", help="Write local variance instead of local vol"),
        argument("--verify", action="store_true", help="Check the surface against exact mixture draws"),
        argument("--report", role=OUTPUT, help="KS report JSON of --verify (default: stdout)"),
    ),
)
def project(run: RunConfig, config: MixvolSettings) -> ExitCode:
    """Project and optionally verify"""
    projection_service = get_projection_service(config)
    desc = load_descriptor(run.inputs["model"])

    x_grid, t_grid = projection_service.default_grids(desc, run.options.get("x_points") or 101)
    if run.options.get("times"):
        t_grid = parse_grid(run.options["times"])
    low, high = run.options.get("x_min"), run.options.get("x_max")
    if low is not None or high is not None:
        low = x_grid[0] if low is None else low
        high = x_grid[-1] if high is None else high
        if not 0 < low < high:
            raise PreconditionError(f"x range ({low}, {high}) must be positive and ordered")
        x_grid = np.geomspace(low, high, x_grid.size)

    surface = projection_service.project(desc, x_grid, t_grid)
    frame = TableMapper.to_surface_frame(surface, as_variance=bool(run.options.get("as_variance")))
    repository = TableRepository("surface")
    if "out" in run.outputs:
        repository.save(frame, run.outputs["out"])
    else:
        sys.stdout.write(repository.serialize(frame))

    if not run.options.get("verify"):
        return ExitCode.OK
    report = projection_service.verify_projection(desc, surface, paths=config.mc_paths, seed=config.seed)
    emit(ReportMapper.to_ks_report_dto(report, surface), run.outputs.get("report"))
    if report.max_statistic >= config.oracle_ks_tolerance:
        logger.warning(f"Projection check failed: max KS {report.max_statistic:.4f} >= {config.oracle_ks_tolerance}")
        return ExitCode.VERIFICATION
    return ExitCode.OK

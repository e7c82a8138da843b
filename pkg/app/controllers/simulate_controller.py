"""
Simulate Controller - CLI Layer for path generation
Simulates an MGD or a layered model and writes paths or summary statistics
"""

import logging
import sys

from ..config import MixvolSettings, RunConfig
from ..errors import ExitCode
from ..mappers.table_mapper import TableMapper
from ..models.mgp import MgpDescriptor
from ..repositories.table_repository import TableRepository
from .dependencies import get_mc_service, load_model, parse_grid
from .router import INPUT, OUTPUT, CommandRouter, argument

logger = logging.getLogger(__name__)

router = CommandRouter()


@router.command(
    "simulate",
    summary="Simulate model paths",
    description="Exact lognormal paths given the drawn variance state; output is bit-identical for a given "
                "seed whatever the thread count",
    arguments=(
        argument("--model", role=INPUT, required=True, help="MGD or layered model JSON"),
        argument("--grid", required=True, help="Time grid start:stop:step"),
        argument("--out", role=OUTPUT, help="CSV to write (default: stdout)"),
        argument("--no-paths", action="store_true", help="Write per-time summary statistics instead of paths"),
        argument("--antithetic", action="store_true", help="Antithetic pairs"),
    ),
)
def simulate(run: RunConfig, config: MixvolSettings) -> ExitCode:
    """Simulate paths"""
    mc_service = get_mc_service(config)
    model = load_model(run.inputs["model"])
    grid = parse_grid(run.options["grid"])
    antithetic = bool(run.options.get("antithetic"))

    if isinstance(model, MgpDescriptor):
        batch = mc_service.simulate_mgd(model, grid, antithetic=antithetic)
    else:
        batch = mc_service.simulate_hier(model, grid, antithetic=antithetic)

    frame = mc_service.summarize(batch) if run.options.get("no_paths") else TableMapper.to_paths_frame(batch)
    repository = TableRepository("paths")
    if "out" in run.outputs:
        repository.save(frame, run.outputs["out"])
    else:
        sys.stdout.write(repository.serialize(frame))
    return ExitCode.OK

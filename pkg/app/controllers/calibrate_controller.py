"""
Calibrate Controller - CLI Layer for MGD calibration
Reads option chains, calibrates an MGD and writes it with its diagnostics
sidecar
"""

import logging
from pathlib import Path

from ..config import MixvolSettings, RunConfig
from ..errors import ExitCode
from ..mappers.market_mapper import MarketMapper
from ..mappers.model_mapper import ModelMapper
from ..mappers.report_mapper import ReportMapper
from ..repositories.json_repository import ModelRepository, chain_repository
from .dependencies import emit, get_market_service, get_recovery_service
from .router import INPUT, OUTPUT, CommandRouter, argument

logger = logging.getLogger(__name__)

router = CommandRouter()


def sidecar_path(model_path: str) -> str:
    path = Path(model_path)
    return str(path.with_name(f"{path.stem}.diagnostics.json"))


@router.command(
    "calibrate",
    summary="Calibrate an MGD to option chains",
    description="Extract risk-neutral densities from call chains, recover the mixing law at every maturity "
                "and write the calendar-consistent uniform-mixing MGD",
    arguments=(
        argument("--chains", role=INPUT, required=True, help="Chain set JSON"),
        argument("--out", role=OUTPUT, required=True, help="Model JSON to write"),
        argument("--diagnostics", role=OUTPUT, help="Diagnostics sidecar (default: <out>.diagnostics.json)"),
        argument("--residue-tolerance", type=float, default=None,
                 help="Imaginary-residue tolerance of chain-derived transforms (default: settings value)"),
        argument("--force", action="store_true", help="Invert even when the monotonicity screen fails"),
    ),
)
def calibrate(run: RunConfig, config: MixvolSettings) -> ExitCode:
    """Calibrate an MGD"""
    market_service = get_market_service(config)
    recovery_service = get_recovery_service(config)

    chain_set = chain_repository().load(run.inputs["chains"])
    chains = [MarketMapper.to_chain(dto) for dto in chain_set.chains]
    slices = [market_service.chain_to_density(chain) for chain in chains]

    tolerance = run.options.get("residue_tolerance") or config.chain_residue_tolerance
    result = recovery_service.calibrate_mgd(slices, chain_set.spot, residue_tolerance=tolerance,
                                            force=bool(run.options.get("force")))

    model_path = run.outputs["out"]
    ModelRepository().save(ModelMapper.to_mgd_dto(result.descriptor), model_path)
    emit(ReportMapper.to_calibration_report_dto(result, slices),
         run.outputs.get("diagnostics") or sidecar_path(model_path))
    logger.info(f"Calibrated {len(slices)} maturities into {model_path}")
    return ExitCode.OK

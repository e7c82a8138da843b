"""
Selftest Controller - CLI Layer for the built-in sanity suite
"""

import logging

from ..config import MixvolSettings, RunConfig
from ..dto.report_dto import SelftestCaseDTO
from ..errors import ExitCode
from ..mappers.report_mapper import ReportMapper
from ..services.selftest_service import SelftestService
from .dependencies import emit
from .router import OUTPUT, CommandRouter, argument

logger = logging.getLogger(__name__)

router = CommandRouter()


def get_selftest_service(config: MixvolSettings) -> SelftestService:
    return SelftestService(config)


@router.command(
    "selftest",
    summary="Run the closed-form sanity cases",
    description="Degenerate models whose answers are known exactly: single atoms, Dirac mixing laws, "
                "deterministic couplings and flat layers",
    arguments=(
        argument("--report", role=OUTPUT, help="Selftest report JSON (default: stdout)"),
    ),
)
def selftest(run: RunConfig, config: MixvolSettings) -> ExitCode:
    """Run every case"""
    cases = [SelftestCaseDTO.model_validate(case) for case in get_selftest_service(config).run()]
    report = ReportMapper.to_selftest_report_dto(cases)
    emit(report, run.outputs.get("report"))
    if not report.passed:
        logger.warning(f"{sum(not case.passed for case in cases)} selftest cases failed")
        return ExitCode.VERIFICATION
    return ExitCode.OK

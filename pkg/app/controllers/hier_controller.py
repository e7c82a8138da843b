"""
Hierarchical Controller - CLI Layer for layered models
Build from spot and ratio slices, verify by simulation, and run the
uncorrelated Heston oracle
"""

import logging

from ..config import MixvolSettings, RunConfig
from ..errors import ExitCode
from ..mappers.model_mapper import ModelMapper
from ..mappers.report_mapper import ReportMapper
from ..mappers.table_mapper import TableMapper
from ..models.hierarchical import CirParams
from ..repositories.json_repository import ModelRepository
from ..repositories.table_repository import TableRepository
from .dependencies import (
    emit, get_heston_service, get_hierarchical_service, load_hierarchical, load_slice_set, parse_floats
)
from .router import INPUT, OUTPUT, CommandRouter, argument

logger = logging.getLogger(__name__)

router = CommandRouter(prefix="hier", help="Layered (hierarchical) models")


@router.command(
    "build",
    summary="Build a layered model from spot and ratio slices",
    arguments=(
        argument("--spot", role=INPUT, required=True, help="Spot slices or chains JSON, one per maturity"),
        argument("--ratios", role=INPUT, required=True,
                 help="Laws of X_{T_k} / X_{T_{k-1}} for k >= 2, as slices or forward-start chains"),
        argument("--out", role=OUTPUT, required=True, help="Layered model JSON to write"),
        argument("--slices", role=OUTPUT,
                 help="CSV of the spot and forward-start slices the built couplings imply, per layer"),
        argument("--residue-tolerance", type=float, default=None,
                 help="Imaginary-residue tolerance of the transforms (default: settings value, looser for chains)"),
    ),
)
def build(run: RunConfig, config: MixvolSettings) -> ExitCode:
    """Build a layered model"""
    hierarchical_service = get_hierarchical_service(config)
    market_service = hierarchical_service.market_service

    spot_slices, spot, spot_chains = load_slice_set(run.inputs["spot"], market_service)
    ratio_slices, _, ratio_chains = load_slice_set(run.inputs["ratios"], market_service)
    tolerance = run.options.get("residue_tolerance")
    if tolerance is None and (spot_chains or ratio_chains):
        tolerance = config.chain_residue_tolerance

    model = hierarchical_service.build_model(spot_slices, ratio_slices, spot=spot, residue_tolerance=tolerance)
    ModelRepository().save(ModelMapper.to_hierarchical_dto(model), run.outputs["out"])
    if "slices" in run.outputs:
        slicers = (("spot", hierarchical_service.spot_slice), ("ratio", hierarchical_service.ratio_slice))
        rows = [(k, kind, slicer(model, k)) for k in range(1, model.layers + 1) for kind, slicer in slicers]
        TableRepository("slices").save(TableMapper.to_slice_frame(rows), run.outputs["slices"])
    return ExitCode.OK


@router.command(
    "verify",
    summary="Check a layered model's simulated marginals",
    description="KS tests of simulated spot and ratio marginals against the model's slices",
    arguments=(
        argument("--model", role=INPUT, required=True, help="Layered model JSON"),
        argument("--report", role=OUTPUT, help="Verification report JSON (default: stdout)"),
    ),
)
def verify(run: RunConfig, config: MixvolSettings) -> ExitCode:
    """Verify a layered model"""
    hierarchical_service = get_hierarchical_service(config)
    model = load_hierarchical(run.inputs["model"])
    report = hierarchical_service.verify_model(model, paths=config.mc_paths, seed=config.seed)
    emit(ReportMapper.to_verification_dto(report), run.outputs.get("report"))
    if not report.passed:
        logger.warning(f"{len(report.failures())} marginal checks failed")
        return ExitCode.VERIFICATION
    return ExitCode.OK


@router.command(
    "heston",
    summary="Uncorrelated Heston oracle",
    description="Sample integrated CIR variance, build the empirical layered model and compare its marginals "
                "with Heston asset draws",
    arguments=(
        argument("--kappa", type=float, required=True, help="Mean-reversion speed"),
        argument("--theta", type=float, required=True, help="Long-run variance"),
        argument("--xi", type=float, required=True, help="Volatility of variance"),
        argument("--v0", type=float, required=True, help="Initial variance"),
        argument("--maturities", required=True, help="Comma-separated maturities"),
        argument("--x0", type=float, default=100.0, help="Spot"),
        argument("--draws", type=int, default=None, help="Integrated-variance draws (default: settings value)"),
        argument("--out", role=OUTPUT, help="Empirical layered model JSON"),
        argument("--report", role=OUTPUT, help="Oracle report JSON (default: stdout)"),
    ),
)
def heston(run: RunConfig, config: MixvolSettings) -> ExitCode:
    """Run the Heston oracle"""
    heston_service = get_heston_service(config)
    hierarchical_service = get_hierarchical_service(config)
    params = CirParams(kappa=run.options["kappa"], theta=run.options["theta"], xi=run.options["xi"],
                       v0=run.options["v0"])
    maturities = parse_floats(run.options["maturities"])
    x0 = run.options.get("x0") or 100.0

    sample = heston_service.heston_variance_law(params, maturities, draws=run.options.get("draws"), seed=config.seed)
    model = heston_service.model_from_variance_samples(sample.integrated, maturities, x0)
    assets = heston_service.heston_asset_samples(sample, x0, seed=config.seed)
    comparison = hierarchical_service.compare_with_samples(model, assets, paths=config.mc_paths, seed=config.seed)

    if "out" in run.outputs:
        ModelRepository().save(ModelMapper.to_hierarchical_dto(model), run.outputs["out"])
    emit(ReportMapper.to_heston_report_dto(params, sample, config.seed, comparison), run.outputs.get("report"))
    if not comparison.passed:
        logger.warning(f"{len(comparison.failures())} oracle comparisons failed")
        return ExitCode.VERIFICATION
    return ExitCode.OK

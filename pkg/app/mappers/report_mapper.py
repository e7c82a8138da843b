from typing import List, Sequence

import numpy as np

from ..dto.payoff_dto import OptionKindDTO, PayoffDTO, PayoffKindDTO, PriceReportDTO, PricingMethodDTO
from ..dto.report_dto import (
    CalendarRepairDTO, CalibrationReportDTO, CirParamsDTO, HestonReportDTO, InversionDiagnosticsDTO,
    KsReportDTO, MaturityDiagnosticsDTO, ModelVerificationDTO, SelftestCaseDTO, SelftestReportDTO,
    SliceCheckDTO
)
from ..models.hierarchical import CirParams, HestonVarianceSample, ModelVerification
from ..models.market import RiskNeutralSlice
from ..models.mgp import OptionKind
from ..models.paths import PayoffKind, PayoffSpec, PriceQuote
from ..models.projection import KsReport, LocalVolSurface
from ..models.recovery import CalibrationResult


class ReportMapper:

    @staticmethod
    def to_payoff(dto: PayoffDTO) -> PayoffSpec:
        """Convert PayoffDTO to a PayoffSpec entity"""
        return PayoffSpec(
            kind=PayoffKind(dto.kind.value),
            maturity=dto.maturity,
            strike=dto.strike,
            option=OptionKind(dto.option.value),
            start=dto.start,
        )

    @staticmethod
    def to_payoff_dto(payoff: PayoffSpec) -> PayoffDTO:
        return PayoffDTO(
            kind=PayoffKindDTO(payoff.kind.value),
            option=OptionKindDTO(payoff.option.value),
            strike=payoff.strike,
            maturity=payoff.maturity,
            start=payoff.start,
        )

    @staticmethod
    def to_calibration_report_dto(result: CalibrationResult,
                                  slices: Sequence[RiskNeutralSlice]) -> CalibrationReportDTO:
        """Sidecar of a calibration: per-maturity inversion diagnostics and the calendar repair"""
        return CalibrationReportDTO(
            maturities=[
                MaturityDiagnosticsDTO(
                    maturity=entry.maturity,
                    l1_error=entry.l1_error,
                    repaired_strikes=list(rn_slice.repaired_strikes),
                    inversion=InversionDiagnosticsDTO.model_validate(entry.inversion),
                )
                for entry, rn_slice in zip(result.maturities, slices)
            ],
            calendar=CalendarRepairDTO.model_validate(result.calendar),
        )

    @staticmethod
    def to_ks_report_dto(report: KsReport, surface: LocalVolSurface) -> KsReportDTO:
        return KsReportDTO(
            times=report.times.tolist(),
            statistics=report.statistics.tolist(),
            p_values=report.p_values.tolist(),
            max_statistic=report.max_statistic,
            escaped_fraction=report.escaped_fraction,
            masked_cells=surface.masked_cells,
            paths=report.paths,
        )

    @staticmethod
    def to_verification_dto(report: ModelVerification) -> ModelVerificationDTO:
        return ModelVerificationDTO(
            paths=report.paths,
            seed=report.seed,
            passed=report.passed,
            checks=[SliceCheckDTO.model_validate(check) for check in report.checks],
        )

    @staticmethod
    def to_heston_report_dto(params: CirParams, sample: HestonVarianceSample, seed: int,
                             comparison: ModelVerification, t0: float = 0.0) -> HestonReportDTO:
        return HestonReportDTO(
            params=CirParamsDTO.model_validate(params),
            maturities=sample.maturities.tolist(),
            draws=int(sample.integrated.shape[0]),
            seed=seed,
            feller_ratio=params.feller_ratio,
            truncation_rate=sample.truncation_rate,
            sample_mean=sample.integrated.mean(axis=0).tolist(),
            expected_mean=np.atleast_1d(params.integrated_mean(sample.maturities - t0)).tolist(),
            comparison=ReportMapper.to_verification_dto(comparison),
        )

    @staticmethod
    def to_selftest_report_dto(cases: List[SelftestCaseDTO]) -> SelftestReportDTO:
        return SelftestReportDTO(passed=all(case.passed for case in cases), cases=cases)

    @staticmethod
    def to_price_report_dto(quote: PriceQuote, payoff: PayoffDTO) -> PriceReportDTO:
        return PriceReportDTO(
            payoff=payoff,
            method=PricingMethodDTO(quote.method.value),
            price=quote.price,
            standard_error=quote.standard_error,
            implied_vol=quote.implied_vol,
            delta=quote.delta,
            gamma=quote.gamma,
            paths=quote.paths,
            seed=quote.seed,
        )

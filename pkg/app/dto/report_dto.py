"""
Report DTOs - Data Transfer Objects
Diagnostics sidecars and verification reports written by the CLI
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from .artifact_dto import ArtifactDTO


class InversionDiagnosticsDTO(BaseModel):
    model_config = ConfigDict(from_attributes=True, extra="forbid")

    method_used: str
    clipped_mass: float = Field(..., ge=0)
    renormalization: float
    talbot_nodes: int = 0
    stehfest_terms: int = 0
    unstable_nodes: int = 0
    atoms_detected: int = 0
    fallback_reason: Optional[str] = None
    contour_truncation: Optional[float] = None
    stehfest_change: Optional[float] = None
    transform_residual: Optional[float] = None


class MaturityDiagnosticsDTO(BaseModel):
    model_config = ConfigDict(extra="forbid")

    maturity: float
    l1_error: Optional[float] = None
    repaired_strikes: List[float] = Field(default_factory=list)
    inversion: InversionDiagnosticsDTO


class CalendarRepairDTO(BaseModel):
    model_config = ConfigDict(from_attributes=True, extra="forbid")

    violations: int = Field(..., ge=0)
    max_relative_change: float = Field(..., ge=0)
    repaired_quantiles: List[float] = Field(default_factory=list)


class CalibrationReportDTO(ArtifactDTO):
    """Sidecar of the calibrate command"""
    maturities: List[MaturityDiagnosticsDTO]
    calendar: CalendarRepairDTO


class KsReportDTO(ArtifactDTO):
    """Projection check: KS distance per surface time"""
    times: List[float]
    statistics: List[float]
    p_values: List[float]
    max_statistic: float
    escaped_fraction: float
    masked_cells: int = 0
    paths: int


class SliceCheckDTO(BaseModel):
    model_config = ConfigDict(from_attributes=True, extra="forbid")

    layer: int
    kind: str
    statistic: float
    p_value: float
    passed: bool


class ModelVerificationDTO(ArtifactDTO):
    paths: int
    seed: int
    passed: bool
    checks: List[SliceCheckDTO]


class CirParamsDTO(BaseModel):
    model_config = ConfigDict(from_attributes=True, extra="forbid")

    kappa: float
    theta: float
    xi: float
    v0: float


class HestonReportDTO(ArtifactDTO):
    """Heston oracle run: integrated-variance moments and the layered-model comparison"""
    params: CirParamsDTO
    maturities: List[float]
    draws: int
    seed: int
    feller_ratio: float
    truncation_rate: float
    sample_mean: List[float]
    expected_mean: List[float]
    comparison: ModelVerificationDTO


class SelftestCaseDTO(BaseModel):
    model_config = ConfigDict(from_attributes=True, extra="forbid")

    name: str
    passed: bool
    detail: str = ""


class SelftestReportDTO(ArtifactDTO):
    passed: bool
    cases: List[SelftestCaseDTO]

"""
Payoff DTOs - Data Transfer Objects
Payoff requests for the price command and the prices it reports
"""

from enum import Enum
from typing import Optional

from pydantic import ConfigDict, Field, model_validator

from .artifact_dto import ArtifactDTO


class PayoffKindDTO(str, Enum):
    EUROPEAN = "european"
    FORWARD_START = "forward_start"


class OptionKindDTO(str, Enum):
    CALL = "call"
    PUT = "put"


class PricingMethodDTO(str, Enum):
    ANALYTIC = "analytic"
    MONTE_CARLO = "monte_carlo"


class PayoffDTO(ArtifactDTO):
    """European or forward-start (ratio) option"""
    model_config = ConfigDict(
        populate_by_name=True,
        extra="forbid",
        json_schema_extra={
            "example": {
                "schema": "mixvol/1",
                "kind": "forward_start",
                "option": "call",
                "strike": 1.0,
                "start": 0.5,
                "maturity": 1.0,
            }
        },
    )

    kind: PayoffKindDTO = PayoffKindDTO.EUROPEAN
    option: OptionKindDTO = OptionKindDTO.CALL
    strike: float = Field(..., ge=0, description="Strike; on X_T / X_start for forward-start payoffs")
    maturity: float = Field(..., gt=0)
    start: Optional[float] = Field(None, ge=0, description="Strike-fixing date of a forward-start payoff")

    @model_validator(mode="after")
    def start_precedes_maturity(self) -> "PayoffDTO":
        if self.kind == PayoffKindDTO.FORWARD_START and (self.start is None or self.start >= self.maturity):
            raise ValueError("forward-start payoffs need start < maturity")
        return self


class PriceReportDTO(ArtifactDTO):
    """Price of one payoff; Monte Carlo prices carry a standard error"""
    payoff: PayoffDTO
    method: PricingMethodDTO
    price: float
    standard_error: Optional[float] = None
    implied_vol: Optional[float] = None
    delta: Optional[float] = None
    gamma: Optional[float] = None
    paths: Optional[int] = None
    seed: Optional[int] = None

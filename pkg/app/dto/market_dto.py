"""
Market DTOs - Data Transfer Objects
Option chains and risk-neutral slices as exchanged on disk
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .artifact_dto import ArtifactDTO


class ChainDTO(BaseModel):
    """Call quotes at one maturity"""
    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "maturity": 1.0,
                "forward": 100.0,
                "discount": 1.0,
                "strikes": [80.0, 90.0, 100.0, 110.0, 120.0],
                "calls": [20.4, 11.9, 5.6, 2.1, 0.6],
            }
        },
    )

    maturity: float = Field(..., gt=0, description="Option maturity in years")
    forward: float = Field(..., gt=0, description="Forward price to the maturity")
    discount: float = Field(1.0, gt=0, description="Discount factor to the maturity")
    strikes: List[float] = Field(..., min_length=2)
    calls: List[float] = Field(..., min_length=2, description="Discounted call prices")
    start: Optional[float] = Field(None, ge=0, description="Strike-fixing date of a forward-start chain")

    @model_validator(mode="after")
    def same_length(self) -> "ChainDTO":
        if len(self.strikes) != len(self.calls):
            raise ValueError("strikes and calls must have the same length")
        return self


class ChainSetDTO(ArtifactDTO):
    """Chains at increasing maturities, optionally with today's spot"""
    spot: Optional[float] = Field(None, gt=0)
    chains: List[ChainDTO] = Field(..., min_length=1)


class SliceDTO(BaseModel):
    """Risk-neutral density and CDF on an asset-price grid"""
    model_config = ConfigDict(extra="forbid")

    maturity: float = Field(..., gt=0)
    forward: float = Field(..., gt=0)
    x: List[float] = Field(..., min_length=3)
    pdf: List[float] = Field(..., min_length=3)
    cdf: List[float] = Field(..., min_length=3)
    repaired_strikes: List[float] = Field(default_factory=list)


class SliceSetDTO(ArtifactDTO):
    """
    Either densities or chains; chains are turned into densities on load.
    Ratio sets hold the laws of X_{T_k} / X_{T_{k-1}}.
    """
    spot: Optional[float] = Field(None, gt=0)
    slices: List[SliceDTO] = Field(default_factory=list)
    chains: List[ChainDTO] = Field(default_factory=list)

    @model_validator(mode="after")
    def one_source(self) -> "SliceSetDTO":
        if bool(self.slices) == bool(self.chains):
            raise ValueError("provide exactly one of 'slices' or 'chains'")
        return self

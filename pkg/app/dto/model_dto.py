"""
Model DTOs - Data Transfer Objects
MGD descriptors and layered models as exchanged on disk
"""

from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator

from .artifact_dto import ArtifactDTO, RateCurveDTO
from .market_dto import SliceDTO


class GridMixingDTO(BaseModel):
    """Gridded mixing law with its quadrature masses and CDF table"""
    model_config = ConfigDict(extra="forbid")

    theta: List[float] = Field(..., min_length=1)
    density: List[float] = Field(..., min_length=1)
    masses: List[float] = Field(..., min_length=1)
    cdf_theta: List[float] = Field(..., min_length=2)
    cdf: List[float] = Field(..., min_length=2)


class MixingDTO(BaseModel):
    """Exactly one of atoms [[theta, weight], ...] or grid"""
    model_config = ConfigDict(extra="forbid")

    atoms: Optional[List[Tuple[float, float]]] = None
    grid: Optional[GridMixingDTO] = None

    @model_validator(mode="after")
    def one_form(self) -> "MixingDTO":
        if (self.atoms is None) == (self.grid is None):
            raise ValueError("mixing needs exactly one of 'atoms' or 'grid'")
        return self


class MgdModelDTO(ArtifactDTO):
    """MGD descriptor; variance[i][j] is the increment of component i over the j-th maturity interval"""
    model_config = ConfigDict(
        populate_by_name=True,
        extra="forbid",
        json_schema_extra={
            "example": {
                "schema": "mixvol/1",
                "kind": "mgd",
                "t0": 0.0,
                "x0": 100.0,
                "maturities": [1.0],
                "mixing": {"atoms": [[0.0, 0.5], [1.0, 0.5]]},
                "variance": [[0.01], [0.09]],
                "rates": {"times": [0.0], "rates": [0.0]},
            }
        },
    )

    kind: Literal["mgd"] = "mgd"
    t0: float = Field(0.0, ge=0)
    x0: float = Field(..., gt=0)
    maturities: List[float] = Field(..., min_length=1)
    mixing: MixingDTO
    variance: List[List[float]] = Field(..., min_length=1)
    rates: RateCurveDTO = Field(default_factory=RateCurveDTO)
    theta_domain: Optional[Tuple[float, float]] = None


class CouplingDTO(BaseModel):
    """Nonzero cells of a coupling table"""
    model_config = ConfigDict(extra="forbid")

    rows: List[int]
    cols: List[int]
    mass: List[float]
    residuals: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    sweeps: int = Field(0, ge=0)

    @model_validator(mode="after")
    def same_length(self) -> "CouplingDTO":
        if not len(self.rows) == len(self.cols) == len(self.mass):
            raise ValueError("coupling rows, cols and mass must have the same length")
        return self


class HierarchicalModelDTO(ArtifactDTO):
    """Layered model on maturities T_0 < ... < T_n with a shared variance grid"""
    kind: Literal["hierarchical"] = "hierarchical"
    maturities: List[float] = Field(..., min_length=2)
    x0: float = Field(..., gt=0)
    v0: float = Field(0.0, ge=0)
    nodes: List[float] = Field(..., min_length=2)
    couplings: List[CouplingDTO] = Field(..., min_length=1)
    rates: RateCurveDTO = Field(default_factory=RateCurveDTO)
    spot_slices: List[SliceDTO] = Field(default_factory=list)
    ratio_slices: List[SliceDTO] = Field(default_factory=list)


ModelArtifact = Annotated[Union[MgdModelDTO, HierarchicalModelDTO], Field(discriminator="kind")]
model_artifact_adapter = TypeAdapter(ModelArtifact)
